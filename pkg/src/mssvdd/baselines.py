"""Non-subspace one-class baselines.

The hypersphere and hyperplane baselines operate on a single feature
representation; multi-modal inputs are early-fused by stacking modality
features. The kernelized variants embed the fused features through the
kernel feature map first and describe the embedded points.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from .datamodel import FeatureMatrix, MultiModalDataset
from .errors import ConfigError
from .kernels import NptState, npt_embed_test, npt_fit, KernelParams
from .subspace import PredictionResult, TrainConfig
from .svdd import (
    DataDescription,
    HyperplaneDescription,
    ocsvm_classify,
    ocsvm_decision,
    ocsvm_solve,
    svdd_classify,
    svdd_distances_sq,
    svdd_solve,
)


@dataclass
class BaselineModel:
    """Trained hypersphere or hyperplane baseline over fused features."""

    kind: str
    description: Union[DataDescription, HyperplaneDescription]
    config: TrainConfig
    npt_state: Optional[NptState] = None
    scaler: Optional[list[tuple[np.ndarray, np.ndarray]]] = None
    n_modalities: int = 1
    warning: Optional[str] = None


def fuse_features(data: MultiModalDataset) -> np.ndarray:
    """Stack modality features into one (sum D_v) x N matrix."""
    return np.vstack([m.values for m in data.modalities])


def _resolve_baseline_kernel(config: TrainConfig, feature_dim: int) -> KernelParams:
    kp = config.kernel_params
    if kp.kappa is None:
        # No projected dimensionality here; fall back to 1/feature-dim.
        kp = replace(kp, kappa=1.0 / feature_dim)
    return kp


def fit_baseline(data: MultiModalDataset, config: TrainConfig) -> BaselineModel:
    """Fit an svdd or ocsvm baseline on the target samples of data."""
    if config.model_kind not in ("svdd", "ocsvm"):
        raise ConfigError(f"not a baseline model kind: {config.model_kind!r}")
    train_data = data.target_subset() if data.labels is not None else data
    fused = fuse_features(train_data)
    npt_state = None
    if config.kernelized:
        kp = _resolve_baseline_kernel(config, fused.shape[0])
        npt_state = npt_fit(FeatureMatrix(fused), kp)
        points = npt_state.embedded
    else:
        points = fused
    if config.model_kind == "svdd":
        description: Union[DataDescription, HyperplaneDescription] = svdd_solve(
            points, config.c_penalty, config.kkt_tol
        )
    else:
        description = ocsvm_solve(points, config.nu, config.kkt_tol)
    return BaselineModel(
        kind=config.model_kind,
        description=description,
        config=config,
        npt_state=npt_state,
        n_modalities=data.n_modalities,
    )


def predict_baseline(model: BaselineModel, data: MultiModalDataset) -> PredictionResult:
    """Classify samples; scores follow the "target iff score <= radius" convention.

    For the hyperplane baseline the score row holds rho minus the decision
    value and the radius is 0, so the same comparison applies.
    """
    if data.n_modalities != model.n_modalities:
        raise ConfigError(
            f"model was fit on {model.n_modalities} modalities, data has "
            f"{data.n_modalities}"
        )
    fused = fuse_features(data)
    if model.npt_state is not None:
        points = npt_embed_test(model.npt_state, fused, model.npt_state.params)
    else:
        expected = model.description.train_points.shape[0]
        if fused.shape[0] != expected:
            raise ConfigError(
                f"fused feature dim {fused.shape[0]} does not match model ({expected})"
            )
        points = fused
    if model.kind == "svdd":
        labels = svdd_classify(model.description, points)
        scores = svdd_distances_sq(model.description, points)
        radius_sq = model.description.radius_sq
    else:
        labels = ocsvm_classify(model.description, points)
        scores = -ocsvm_decision(model.description, points)
        radius_sq = 0.0
    return PredictionResult(
        fused=labels,
        per_modality=labels[None, :].copy(),
        distances=scores[None, :].copy(),
        radius_sq=radius_sq,
    )
