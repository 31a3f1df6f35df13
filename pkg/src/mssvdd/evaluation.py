"""Metrics, cross-validation, and grid search for one-class models.

The evaluation protocol is stratified k-fold cross-validation: models are
fit on the target-class samples of each training split and scored on all
test samples. Hyperparameters are chosen by exhaustive search maximizing
the mean geometric mean over an inner stratified CV; the default protocol
nests that search inside each outer fold so model selection never sees
outer test data. A non-nested "global" mode (select once on the full
dataset, then cross-validate the winner) is available behind a flag.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .baselines import BaselineModel, fit_baseline, predict_baseline
from .datamodel import (
    FeatureMatrix,
    FoldPlan,
    MultiModalDataset,
    stratified_folds,
)
from .errors import ConfigError, DataError, SolverError, ToolkitError
from .subspace import (
    DECISION_STRATEGIES,
    MULTI_REGULARIZERS,
    UNI_REGULARIZERS,
    UPDATE_STRATEGIES,
    PredictionResult,
    SubspaceModel,
    TrainConfig,
    predict as subspace_predict,
    train as subspace_train,
)

Model = Union[SubspaceModel, BaselineModel]

# Hyperparameter grids used for the reference experimental protocol.
DEFAULT_SIGMA_GRID = (1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3)
DEFAULT_ETA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_BETA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 1e2, 1e3, 1e4)
DEFAULT_C_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
DEFAULT_D_GRID = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with the target class as positive."""

    tp: int
    fn: int
    fp: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fn", "fp", "tn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise DataError(f"{name} must be a non-negative integer, got {v}")

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp,
            self.fn + other.fn,
            self.fp + other.fp,
            self.tn + other.tn,
        )


@dataclass(frozen=True)
class MetricSet:
    """Sensitivity, specificity, precision, F1, accuracy, geometric mean."""

    sen: float
    spe: float
    pre: float
    f1: float
    acc: float
    gm: float

    def as_dict(self) -> dict[str, float]:
        return {
            "sen": self.sen,
            "spe": self.spe,
            "pre": self.pre,
            "f1": self.f1,
            "acc": self.acc,
            "gm": self.gm,
        }


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    """The six standard metrics; 0/0 denominators yield 0."""
    if cm.total == 0:
        raise DataError("cannot compute metrics of an empty confusion matrix")
    sen = _ratio(cm.tp, cm.tp + cm.fn)
    spe = _ratio(cm.tn, cm.tn + cm.fp)
    pre = _ratio(cm.tp, cm.tp + cm.fp)
    f1 = _ratio(2.0 * pre * sen, pre + sen)
    acc = (cm.tp + cm.tn) / cm.total
    gm = math.sqrt(sen * spe)
    return MetricSet(sen=sen, spe=spe, pre=pre, f1=f1, acc=acc, gm=gm)


def mean_metrics(metric_sets: Sequence[MetricSet]) -> MetricSet:
    """Arithmetic mean of each metric across folds."""
    if not metric_sets:
        raise DataError("no metric sets to average")
    return MetricSet(
        sen=float(np.mean([m.sen for m in metric_sets])),
        spe=float(np.mean([m.spe for m in metric_sets])),
        pre=float(np.mean([m.pre for m in metric_sets])),
        f1=float(np.mean([m.f1 for m in metric_sets])),
        acc=float(np.mean([m.acc for m in metric_sets])),
        gm=float(np.mean([m.gm for m in metric_sets])),
    )


def confusion_from_labels(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError("label vectors must have the same length")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
    )


# ---------------------------------------------------------------------------
# Model fitting with optional feature normalization
# ---------------------------------------------------------------------------

def _fit_scaler(data: MultiModalDataset) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-feature mean/std per modality, fit on target samples only."""
    fit_on = data.target_subset() if data.labels is not None else data
    scaler = []
    for mod in fit_on.modalities:
        mean = mod.values.mean(axis=1)
        std = mod.values.std(axis=1)
        std = np.where(std < 1e-12, 1.0, std)
        scaler.append((mean, std))
    return scaler


def _apply_scaler(
    data: MultiModalDataset, scaler: list[tuple[np.ndarray, np.ndarray]]
) -> MultiModalDataset:
    mods = tuple(
        FeatureMatrix((m.values - mean[:, None]) / std[:, None])
        for m, (mean, std) in zip(data.modalities, scaler)
    )
    return MultiModalDataset(mods, data.labels, data.sample_ids)


def fit_model(
    data: MultiModalDataset, config: TrainConfig, normalize: bool = False
) -> Model:
    """Fit whichever model kind the config names, with optional z-scoring.

    The scaler, when enabled, is fit on the target-class training samples
    and stored on the model so prediction applies it consistently.
    """
    scaler = None
    if normalize:
        scaler = _fit_scaler(data)
        data = _apply_scaler(data, scaler)
    if config.model_kind == "subspace":
        model: Model = subspace_train(data, config)
    else:
        model = fit_baseline(data, config)
    model.scaler = scaler
    return model


def predict_model(model: Model, data: MultiModalDataset) -> PredictionResult:
    if model.scaler is not None:
        data = _apply_scaler(data, model.scaler)
    if isinstance(model, SubspaceModel):
        return subspace_predict(model, data)
    return predict_baseline(model, data)


def _model_max_ortho(model: Model) -> Optional[float]:
    if isinstance(model, SubspaceModel) and model.ortho_errors:
        return max(model.ortho_errors)
    return None


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Per-fold and aggregate evaluation of one configuration.

    mean_metrics averages the per-fold metrics (the headline convention);
    pooled_metrics recomputes them from the pooled confusion matrix. The
    two need not agree and both are kept.
    """

    k: int
    seed: int
    config: TrainConfig
    fold_metrics: list[MetricSet]
    fold_confusions: list[ConfusionMatrix]
    mean_metrics: MetricSet
    pooled_confusion: ConfusionMatrix
    pooled_metrics: MetricSet
    fold_plan: FoldPlan
    normalize: bool = False
    max_ortho_error: Optional[float] = None
    fold_configs: Optional[list[TrainConfig]] = None
    selection: Optional[str] = None


def run_cv(
    data: MultiModalDataset,
    config: TrainConfig,
    k: int = 5,
    seed: int = 0,
    normalize: bool = False,
) -> EvalReport:
    """Stratified k-fold evaluation of a fixed configuration.

    Each fold trains on the target-class samples of its training split and
    predicts every test sample, both classes included.
    """
    if data.labels is None:
        raise DataError("cross-validation requires labels")
    if not (np.any(data.labels == 1) and np.any(data.labels == 0)):
        raise DataError("cross-validation requires both classes to be present")
    plan = stratified_folds(data.labels, k, seed)
    fold_metrics: list[MetricSet] = []
    fold_confusions: list[ConfusionMatrix] = []
    ortho: list[float] = []
    for fold in range(k):
        train_set = data.subset(plan.train_indices(fold))
        test_set = data.subset(plan.test_indices(fold))
        model = fit_model(train_set, config, normalize=normalize)
        result = predict_model(model, test_set)
        cm = confusion_from_labels(test_set.labels, result.fused)
        fold_confusions.append(cm)
        fold_metrics.append(compute_metrics(cm))
        err = _model_max_ortho(model)
        if err is not None:
            ortho.append(err)
    pooled = fold_confusions[0]
    for cm in fold_confusions[1:]:
        pooled = pooled + cm
    return EvalReport(
        k=k,
        seed=seed,
        config=config,
        fold_metrics=fold_metrics,
        fold_confusions=fold_confusions,
        mean_metrics=mean_metrics(fold_metrics),
        pooled_confusion=pooled,
        pooled_metrics=compute_metrics(pooled),
        fold_plan=plan,
        normalize=normalize,
        max_ortho_error=max(ortho) if ortho else None,
    )


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter value lists and strategy sets to search over."""

    sigma_grid: tuple[float, ...] = DEFAULT_SIGMA_GRID
    eta_grid: tuple[float, ...] = DEFAULT_ETA_GRID
    beta_grid: tuple[float, ...] = DEFAULT_BETA_GRID
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    d_grid: tuple[int, ...] = DEFAULT_D_GRID
    update_strategies: tuple[str, ...] = UPDATE_STRATEGIES
    regularizers: tuple[str, ...] = MULTI_REGULARIZERS
    decision_strategies: tuple[str, ...] = DECISION_STRATEGIES

    def __post_init__(self):
        for name in (
            "sigma_grid",
            "eta_grid",
            "beta_grid",
            "c_grid",
            "d_grid",
            "update_strategies",
            "regularizers",
            "decision_strategies",
        ):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"grid axis {name} must be non-empty")
            object.__setattr__(self, name, values)


def default_grid(
    n_modalities: int, kernelized: bool, model_kind: str = "subspace"
) -> GridSpec:
    """Reference grids adapted to the modality count and model family."""
    if model_kind != "subspace":
        return GridSpec(
            sigma_grid=DEFAULT_SIGMA_GRID if kernelized else (1.0,),
            eta_grid=(0.0,),
            beta_grid=(0.0,),
            d_grid=(1,),
            update_strategies=("SD-",),
            regularizers=("w0",),
            decision_strategies=("ds1",),
        )
    return GridSpec(
        sigma_grid=DEFAULT_SIGMA_GRID if kernelized else (1.0,),
        update_strategies=UPDATE_STRATEGIES if n_modalities == 2 else ("SD-", "SD+"),
        regularizers=MULTI_REGULARIZERS if n_modalities >= 2 else UNI_REGULARIZERS,
        decision_strategies=(
            DECISION_STRATEGIES if n_modalities >= 2 else ("ds1",)
        ),
    )


@dataclass(frozen=True)
class GridCell:
    """One scored grid configuration."""

    index: int
    config: TrainConfig
    status: str
    message: str
    mean_gm: float
    fold_gms: tuple[float, ...]
    max_ortho_error: Optional[float]


@dataclass
class GridSearchResult:
    best_config: TrainConfig
    best_index: int
    cells: list[GridCell]
    inner_k: int
    seed: int


def expand_grid(grid: GridSpec, base: TrainConfig) -> list[TrainConfig]:
    """Materialize grid cells in a fixed, documented order.

    Axis nesting (outermost first): d, C, eta, beta, sigma, update
    strategy, regularizer, decision strategy. Axes that cannot influence
    the base model family (sigma for linear kernels; subspace axes for
    baselines) are collapsed to a single placeholder value. The sigmoid
    slope kappa is derived as 1/d per cell, never searched.
    """
    kernel_kind = base.kernel_params.kind
    sigma_axis = (
        tuple(grid.sigma_grid)
        if (base.kernelized and kernel_kind != "linear")
        else (base.kernel_params.sigma,)
    )
    if base.model_kind != "subspace":
        d_axis: tuple = (base.d,)
        eta_axis: tuple = (base.eta,)
        beta_axis: tuple = (base.beta,)
        update_axis: tuple = (base.update_strategy,)
        reg_axis: tuple = (base.regularizer,)
        ds_axis: tuple = (base.decision_strategy,)
    else:
        d_axis = tuple(grid.d_grid)
        eta_axis = tuple(grid.eta_grid)
        beta_axis = tuple(grid.beta_grid)
        update_axis = tuple(grid.update_strategies)
        reg_axis = tuple(grid.regularizers)
        ds_axis = tuple(grid.decision_strategies)
    subspace = base.model_kind == "subspace"
    configs = []
    for d in d_axis:
        for c in grid.c_grid:
            for eta in eta_axis:
                for beta in beta_axis:
                    for sigma in sigma_axis:
                        for upd in update_axis:
                            for reg in reg_axis:
                                for ds in ds_axis:
                                    kp = replace(
                                        base.kernel_params,
                                        sigma=float(sigma),
                                        kappa=(
                                            1.0 / int(d)
                                            if subspace
                                            else base.kernel_params.kappa
                                        ),
                                    )
                                    configs.append(
                                        replace(
                                            base,
                                            d=int(d),
                                            c_penalty=float(c),
                                            eta=float(eta),
                                            beta=float(beta),
                                            update_strategy=upd,
                                            regularizer=reg,
                                            decision_strategy=ds,
                                            kernel_params=kp,
                                            nu=_nu_from_c(float(c)),
                                        )
                                    )
    return configs


def _nu_from_c(c: float) -> float:
    """Reuse the C axis as the hyperplane baseline's nu, clipped to (0, 1]."""
    return min(max(c, 1e-4), 1.0)


def _score_cell(
    args: tuple[MultiModalDataset, TrainConfig, int, int, int, bool]
) -> tuple[int, str, str, float, tuple[float, ...], Optional[float]]:
    data, config, index, inner_k, seed, normalize = args
    try:
        report = run_cv(data, config, k=inner_k, seed=seed, normalize=normalize)
    except ToolkitError as exc:
        return index, "failed", str(exc), float("-inf"), (), None
    return (
        index,
        "ok",
        "",
        report.mean_metrics.gm,
        tuple(m.gm for m in report.fold_metrics),
        report.max_ortho_error,
    )


def _pmap(fn: Callable, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def grid_search(
    data: MultiModalDataset,
    grid: GridSpec,
    base: TrainConfig,
    inner_k: int = 10,
    seed: int = 0,
    normalize: bool = False,
    workers: int = 1,
) -> GridSearchResult:
    """Exhaustive search maximizing mean inner-CV geometric mean.

    Every cell is scored with the same stratified inner folds. Ties are
    broken by smaller d, then smaller C, then smaller eta, then cell
    order, so the result is deterministic.
    """
    configs = expand_grid(grid, base)
    tasks = [
        (data, cfg, i, inner_k, seed, normalize) for i, cfg in enumerate(configs)
    ]
    rows = _pmap(_score_cell, tasks, workers)
    cells = [
        GridCell(
            index=i,
            config=configs[i],
            status=status,
            message=message,
            mean_gm=gm,
            fold_gms=fold_gms,
            max_ortho_error=ortho,
        )
        for i, status, message, gm, fold_gms, ortho in rows
    ]
    ok = [c for c in cells if c.status == "ok"]
    if not ok:
        details = "; ".join(
            f"cell {c.index} ({_cell_label(c.config)}): {c.message}" for c in cells[:20]
        )
        raise SolverError(f"every grid cell failed: {details}")
    best = min(
        ok,
        key=lambda c: (
            -c.mean_gm,
            c.config.d,
            c.config.c_penalty,
            c.config.eta,
            c.index,
        ),
    )
    return GridSearchResult(
        best_config=best.config,
        best_index=best.index,
        cells=cells,
        inner_k=inner_k,
        seed=seed,
    )


def _cell_label(config: TrainConfig) -> str:
    return (
        f"d={config.d} C={config.c_penalty} eta={config.eta} beta={config.beta} "
        f"sigma={config.kernel_params.sigma} {config.update_strategy} "
        f"{config.regularizer} {config.decision_strategy}"
    )


# ---------------------------------------------------------------------------
# Nested protocol
# ---------------------------------------------------------------------------

def _nested_fold_task(
    args: tuple[MultiModalDataset, FoldPlan, int, GridSpec, TrainConfig, int, int, bool]
) -> tuple[int, TrainConfig, ConfusionMatrix, Optional[float], list[GridCell]]:
    data, plan, fold, grid, base, inner_k, seed, normalize = args
    train_set = data.subset(plan.train_indices(fold))
    test_set = data.subset(plan.test_indices(fold))
    search = grid_search(
        train_set, grid, base, inner_k=inner_k, seed=seed, normalize=normalize
    )
    model = fit_model(train_set, search.best_config, normalize=normalize)
    result = predict_model(model, test_set)
    cm = confusion_from_labels(test_set.labels, result.fused)
    orthos = [
        c.max_ortho_error for c in search.cells if c.max_ortho_error is not None
    ]
    fit_ortho = _model_max_ortho(model)
    if fit_ortho is not None:
        orthos.append(fit_ortho)
    return fold, search.best_config, cm, (max(orthos) if orthos else None), search.cells


def nested_cv(
    data: MultiModalDataset,
    grid: GridSpec,
    base: TrainConfig,
    outer_k: int = 5,
    inner_k: int = 10,
    seed: int = 0,
    normalize: bool = False,
    selection: str = "nested",
    workers: int = 1,
) -> EvalReport:
    """Full evaluation protocol: outer CV with per-fold or global selection.

    selection="nested" re-runs the grid search inside every outer training
    split; selection="global" selects once on the whole dataset and then
    cross-validates the winning configuration.
    """
    if selection not in ("nested", "global"):
        raise ConfigError(f"selection must be 'nested' or 'global', got {selection!r}")
    if data.labels is None:
        raise DataError("cross-validation requires labels")
    if selection == "global":
        search = grid_search(
            data, grid, base, inner_k=inner_k, seed=seed,
            normalize=normalize, workers=workers,
        )
        report = run_cv(data, search.best_config, k=outer_k, seed=seed,
                        normalize=normalize)
        orthos = [
            c.max_ortho_error for c in search.cells if c.max_ortho_error is not None
        ]
        if report.max_ortho_error is not None:
            orthos.append(report.max_ortho_error)
        report.max_ortho_error = max(orthos) if orthos else None
        report.fold_configs = [search.best_config] * outer_k
        report.selection = "global"
        return report
    plan = stratified_folds(data.labels, outer_k, seed)
    tasks = [
        (data, plan, fold, grid, base, inner_k, seed, normalize)
        for fold in range(outer_k)
    ]
    rows = _pmap(_nested_fold_task, tasks, workers)
    rows.sort(key=lambda r: r[0])
    fold_configs = [r[1] for r in rows]
    fold_confusions = [r[2] for r in rows]
    fold_metrics = [compute_metrics(cm) for cm in fold_confusions]
    orthos = [r[3] for r in rows if r[3] is not None]
    pooled = fold_confusions[0]
    for cm in fold_confusions[1:]:
        pooled = pooled + cm
    return EvalReport(
        k=outer_k,
        seed=seed,
        config=base,
        fold_metrics=fold_metrics,
        fold_confusions=fold_confusions,
        mean_metrics=mean_metrics(fold_metrics),
        pooled_confusion=pooled,
        pooled_metrics=compute_metrics(pooled),
        fold_plan=plan,
        normalize=normalize,
        max_ortho_error=max(orthos) if orthos else None,
        fold_configs=fold_configs,
        selection="nested",
    )


# ---------------------------------------------------------------------------
# Report rendering
# ---------------------------------------------------------------------------

_STRATEGY_SYMBOLS = {"SD-": "--", "SD+": "++", "AD-+": "-+", "AD+-": "+-"}


def report_to_csv(report: EvalReport) -> str:
    """One row per fold plus mean and pooled rows; 6-decimal fixed floats."""
    lines = ["row,fold,tp,fn,fp,tn,sen,spe,pre,f1,acc,gm"]

    def metric_cells(m: MetricSet) -> str:
        return ",".join(
            f"{x:.6f}" for x in (m.sen, m.spe, m.pre, m.f1, m.acc, m.gm)
        )

    for fold, (cm, m) in enumerate(zip(report.fold_confusions, report.fold_metrics)):
        lines.append(
            f"fold,{fold},{cm.tp},{cm.fn},{cm.fp},{cm.tn},{metric_cells(m)}"
        )
    mm = report.mean_metrics
    lines.append(f"mean,,,,,,{metric_cells(mm)}")
    pc = report.pooled_confusion
    lines.append(
        f"pooled,,{pc.tp},{pc.fn},{pc.fp},{pc.tn},{metric_cells(report.pooled_metrics)}"
    )
    return "\n".join(lines) + "\n"


def report_to_text(report: EvalReport) -> str:
    """Human-readable table with the conventional column layout."""
    cfg = report.config
    if cfg.model_kind == "subspace":
        os_sym = _STRATEGY_SYMBOLS.get(cfg.update_strategy, cfg.update_strategy)
        reg = cfg.regularizer
        name = f"subspace[{cfg.decision_strategy}]"
        if cfg.kernelized:
            name += f"+{cfg.kernel_params.kind}"
    else:
        os_sym, reg = "NA", "NA"
        name = cfg.model_kind + ("+npt" if cfg.kernelized else "")
    header = (
        f"{'model':<24}{'OS':>4}{'r':>6}{'Sen':>8}{'Spe':>8}{'Pre':>8}"
        f"{'F1':>8}{'Acc':>8}{'GM':>8}"
    )
    m = report.mean_metrics
    row = (
        f"{name:<24}{os_sym:>4}{reg:>6}"
        + "".join(f"{100 * x:>8.2f}" for x in (m.sen, m.spe, m.pre, m.f1, m.acc, m.gm))
    )
    p = report.pooled_metrics
    pooled_row = (
        f"{'(pooled)':<24}{'':>4}{'':>6}"
        + "".join(f"{100 * x:>8.2f}" for x in (p.sen, p.spe, p.pre, p.f1, p.acc, p.gm))
    )
    pc = report.pooled_confusion
    lines = [
        header,
        row,
        pooled_row,
        "",
        f"pooled confusion (target positive): tp={pc.tp} fn={pc.fn} "
        f"fp={pc.fp} tn={pc.tn} total={pc.total}",
        f"folds={report.k} seed={report.seed} "
        f"selection={report.selection or 'fixed-config'}",
    ]
    if report.max_ortho_error is not None:
        lines.append(f"max projection orthonormality error: {report.max_ortho_error:.3e}")
    return "\n".join(lines) + "\n"


def grid_table_to_csv(result: GridSearchResult) -> str:
    """Score table: one row per cell per inner fold plus a mean row per cell."""
    lines = [
        "cell,fold,d,c,eta,beta,sigma,update,regularizer,decision,status,gm"
    ]
    for cell in result.cells:
        cfg = cell.config
        prefix = (
            f"{cell.index},{{fold}},{cfg.d},{cfg.c_penalty:.6f},{cfg.eta:.6f},"
            f"{cfg.beta:.6f},{cfg.kernel_params.sigma:.6f},{cfg.update_strategy},"
            f"{cfg.regularizer},{cfg.decision_strategy},{cell.status},{{gm}}"
        )
        for fold, gm in enumerate(cell.fold_gms):
            lines.append(prefix.format(fold=fold, gm=f"{gm:.6f}"))
        mean_cell = "" if cell.mean_gm == float("-inf") else f"{cell.mean_gm:.6f}"
        lines.append(prefix.format(fold="mean", gm=mean_cell))
    return "\n".join(lines) + "\n"
