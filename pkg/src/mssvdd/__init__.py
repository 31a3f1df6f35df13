"""One-class classification with multi-modal subspace data descriptions."""

__version__ = "0.1.0"

from .datamodel import (
    FeatureMatrix,
    FoldPlan,
    MultiModalDataset,
    load_dataset,
    save_dataset,
    stratified_folds,
    synth_multimodal,
)
from .errors import (
    ConfigError,
    DataError,
    KernelError,
    PersistenceError,
    SolverError,
    ToolkitError,
)
from .kernels import KernelParams, NptState, center_kernel, kernel_matrix, npt_embed_test, npt_fit
from .svdd import (
    DataDescription,
    HyperplaneDescription,
    ocsvm_decision,
    ocsvm_solve,
    svdd_distance_sq,
    svdd_distances_sq,
    svdd_solve,
)
from .subspace import (
    PredictionResult,
    ProjectionMatrix,
    SubspaceModel,
    TrainConfig,
    fuse_labels,
    lagrangian_gradient,
    orthonormalize,
    pca_init,
    predict,
    project,
    train,
    update_projection,
)
from .baselines import BaselineModel, fit_baseline, predict_baseline
from .evaluation import (
    ConfusionMatrix,
    EvalReport,
    GridSpec,
    MetricSet,
    compute_metrics,
    default_grid,
    fit_model,
    grid_search,
    nested_cv,
    predict_model,
    run_cv,
)
from .persistence import dataset_digest, load_model, load_report, save_model, save_report

__all__ = [
    "__version__",
    "FeatureMatrix",
    "FoldPlan",
    "MultiModalDataset",
    "load_dataset",
    "save_dataset",
    "stratified_folds",
    "synth_multimodal",
    "ToolkitError",
    "DataError",
    "KernelError",
    "SolverError",
    "ConfigError",
    "PersistenceError",
    "KernelParams",
    "NptState",
    "kernel_matrix",
    "center_kernel",
    "npt_fit",
    "npt_embed_test",
    "DataDescription",
    "HyperplaneDescription",
    "svdd_solve",
    "svdd_distance_sq",
    "svdd_distances_sq",
    "ocsvm_solve",
    "ocsvm_decision",
    "ProjectionMatrix",
    "TrainConfig",
    "SubspaceModel",
    "PredictionResult",
    "pca_init",
    "project",
    "lagrangian_gradient",
    "update_projection",
    "orthonormalize",
    "train",
    "predict",
    "fuse_labels",
    "BaselineModel",
    "fit_baseline",
    "predict_baseline",
    "ConfusionMatrix",
    "MetricSet",
    "GridSpec",
    "EvalReport",
    "compute_metrics",
    "run_cv",
    "grid_search",
    "nested_cv",
    "default_grid",
    "fit_model",
    "predict_model",
    "save_model",
    "load_model",
    "save_report",
    "load_report",
    "dataset_digest",
]
