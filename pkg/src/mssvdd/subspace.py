"""Subspace learning for one-class description of multi-modal data.

Each modality v gets a projection matrix Q_v (d x D_v, orthonormal rows)
mapping its features into a shared d-dimensional space. Training
alternates between solving the hypersphere dual on the pooled projected
samples and taking gradient steps on each Q_v, re-orthonormalizing after
every step. With one modality this is the uni-modal subspace variant; with
a kernel embedding in front it is the kernelized (composite-kernel)
variant. Prediction classifies each modality against the shared sphere and
fuses the per-modality labels with one of four decision strategies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .datamodel import FeatureMatrix, MultiModalDataset
from .errors import ConfigError, SolverError
from .kernels import KernelParams, NptState, npt_embed_test, npt_fit
from .svdd import (
    ALPHA_TOL,
    DEFAULT_KKT_TOL,
    DataDescription,
    svdd_classify,
    svdd_distances_sq,
    svdd_solve,
)

UPDATE_STRATEGIES = ("SD-", "SD+", "AD-+", "AD+-")
DECISION_STRATEGIES = ("ds1", "ds2", "ds3", "ds4")
MULTI_REGULARIZERS = ("w0", "w1", "w2", "w3", "w4", "w5", "w6")
UNI_REGULARIZERS = ("psi0", "psi1", "psi2", "psi3")
MODEL_KINDS = ("subspace", "svdd", "ocsvm")

ORTHO_TOL = 1e-10
RANK_PIVOT_TOL = 1e-12

ArrayLike = Union[FeatureMatrix, np.ndarray]


def _values(x: ArrayLike) -> np.ndarray:
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class ProjectionMatrix:
    """d x D matrix with orthonormal rows."""

    q: np.ndarray

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.float64)
        if q.ndim != 2:
            raise ConfigError(f"projection must be 2-D, got shape {q.shape}")
        d, big_d = q.shape
        if d > big_d:
            raise ConfigError(f"subspace dim {d} exceeds feature dim {big_d}")
        err = np.max(np.abs(q @ q.T - np.eye(d)))
        if err > 1e-8:
            raise ConfigError(f"rows are not orthonormal (deviation {err:.3e})")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def d(self) -> int:
        return self.q.shape[0]

    @property
    def input_dim(self) -> int:
        return self.q.shape[1]

    def ortho_error(self) -> float:
        d = self.q.shape[0]
        return float(np.max(np.abs(self.q @ self.q.T - np.eye(d))))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and strategy switches for one model fit."""

    d: int = 2
    eta: float = 0.1
    beta: float = 0.0
    c_penalty: float = 0.3
    max_iter: int = 20
    update_strategy: str = "SD-"
    regularizer: str = "w0"
    kernelized: bool = False
    kernel_params: KernelParams = field(default_factory=KernelParams)
    decision_strategy: str = "ds1"
    model_kind: str = "subspace"
    nu: float = 0.5
    kkt_tol: float = DEFAULT_KKT_TOL

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.model_kind!r}")
        if self.d < 1:
            raise ConfigError(f"subspace dimensionality must be >= 1, got {self.d}")
        if self.eta < 0.0:
            raise ConfigError(f"learning rate must be non-negative, got {self.eta}")
        if self.beta < 0.0:
            raise ConfigError(f"regularization weight must be >= 0, got {self.beta}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.update_strategy not in UPDATE_STRATEGIES:
            raise ConfigError(f"unknown update strategy {self.update_strategy!r}")
        if self.decision_strategy not in DECISION_STRATEGIES:
            raise ConfigError(f"unknown decision strategy {self.decision_strategy!r}")
        if self.regularizer not in MULTI_REGULARIZERS + UNI_REGULARIZERS:
            raise ConfigError(f"unknown regularizer {self.regularizer!r}")

    def resolved_kernel_params(self) -> KernelParams:
        """Kernel params with the sigmoid slope defaulted to 1/d."""
        kp = self.kernel_params
        if kp.kappa is None:
            kp = replace(kp, kappa=1.0 / self.d)
        return kp


@dataclass
class SubspaceModel:
    """Trained subspace one-class model.

    modality_index_map holds the (start, stop) column ranges of each
    modality inside the pooled training matrix; ortho_errors records the
    largest row-orthonormality deviation observed after each update cycle.
    """

    projections: list[ProjectionMatrix]
    description: DataDescription
    config: TrainConfig
    modality_index_map: list[tuple[int, int]]
    npt_states: Optional[list[NptState]] = None
    scaler: Optional[list[tuple[np.ndarray, np.ndarray]]] = None
    ortho_errors: list[float] = field(default_factory=list)
    warning: Optional[str] = None

    @property
    def n_modalities(self) -> int:
        return len(self.projections)


@dataclass(frozen=True)
class PredictionResult:
    """Per-sample fused labels plus per-modality labels and distances."""

    fused: np.ndarray
    per_modality: np.ndarray
    distances: np.ndarray
    radius_sq: float


# ---------------------------------------------------------------------------
# Projection construction and maintenance
# ---------------------------------------------------------------------------

def pca_init(f: ArrayLike, d: int) -> ProjectionMatrix:
    """Top-d principal directions of the columns of f, as projection rows.

    Rows are ordered by descending eigenvalue of the column-centered
    sample covariance; each row's largest-magnitude entry is made positive
    so the result is deterministic.
    """
    x = _values(f)
    big_d, n = x.shape
    if d > min(big_d, n):
        raise ConfigError(
            f"subspace dim {d} exceeds min(feature dim {big_d}, samples {n})"
        )
    centered = x - x.mean(axis=1, keepdims=True)
    denom = max(n - 1, 1)
    cov = (centered @ centered.T) / denom
    w, u = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1][:d]
    rows = u[:, order].T
    return ProjectionMatrix(_fix_row_signs(rows))


def _fix_row_signs(rows: np.ndarray) -> np.ndarray:
    rows = np.array(rows, dtype=np.float64)
    for i in range(rows.shape[0]):
        pivot = int(np.argmax(np.abs(rows[i])))
        if rows[i, pivot] < 0:
            rows[i] = -rows[i]
    return rows


def project(q: ProjectionMatrix, f: ArrayLike) -> np.ndarray:
    """Map the columns of f into the subspace: returns d x N."""
    x = _values(f)
    if x.shape[0] != q.input_dim:
        raise ConfigError(
            f"projection expects {q.input_dim}-d inputs, got {x.shape[0]}-d"
        )
    return q.q @ x


def orthonormalize(q_raw: np.ndarray) -> ProjectionMatrix:
    """Orthonormalize the rows of q_raw via QR of its transpose.

    Raises when the rows are (numerically) rank deficient. Row signs
    follow the same convention as pca_init for determinism.
    """
    q_raw = np.asarray(q_raw, dtype=np.float64)
    if q_raw.ndim != 2:
        raise ConfigError(f"expected a matrix, got shape {q_raw.shape}")
    if not np.all(np.isfinite(q_raw)):
        raise SolverError("cannot orthonormalize a non-finite matrix")
    q_factor, r_factor = np.linalg.qr(q_raw.T)
    pivots = np.abs(np.diag(r_factor))
    if np.any(pivots < RANK_PIVOT_TOL):
        raise SolverError(
            f"rank-deficient projection update (smallest pivot {pivots.min():.3e})"
        )
    return ProjectionMatrix(_fix_row_signs(q_factor.T))


def update_projection(
    q: ProjectionMatrix, grad: np.ndarray, eta: float, sign: int
) -> ProjectionMatrix:
    """One gradient step on a projection followed by re-orthonormalization.

    sign = -1 descends (subtracts eta * grad), sign = +1 ascends. A zero
    step returns the input unchanged.
    """
    if sign not in (1, -1):
        raise ConfigError(f"sign must be +1 or -1, got {sign}")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != q.q.shape:
        raise ConfigError(
            f"gradient shape {grad.shape} does not match projection {q.q.shape}"
        )
    if eta == 0.0 or not np.any(grad):
        return q
    return orthonormalize(q.q + (sign * eta) * grad)


def strategy_signs(update_strategy: str, n_modalities: int) -> list[int]:
    """Per-modality gradient step signs for an update strategy."""
    if update_strategy == "SD-":
        return [-1] * n_modalities
    if update_strategy == "SD+":
        return [1] * n_modalities
    if n_modalities != 2:
        raise ConfigError(
            f"{update_strategy} requires exactly 2 modalities, got {n_modalities}"
        )
    return [-1, 1] if update_strategy == "AD-+" else [1, -1]


# ---------------------------------------------------------------------------
# Gradient of the pooled hypersphere objective with regularization
# ---------------------------------------------------------------------------

def _pooled_weights(
    regularizer: str,
    alphas: np.ndarray,
    c_penalty: Optional[float],
) -> Optional[np.ndarray]:
    """Sample weight vector lambda used by the regularizer, or None."""
    if regularizer in ("w0", "psi0"):
        return None
    if regularizer in ("w1", "w4", "psi1"):
        return np.ones_like(alphas)
    if regularizer in ("w2", "w5"):
        return (alphas > ALPHA_TOL).astype(np.float64)
    if regularizer in ("w3", "w6"):
        return alphas.astype(np.float64)
    if regularizer == "psi2":
        if c_penalty is None:
            raise ConfigError("psi2 needs c_penalty to identify boundary vectors")
        mask = (alphas > ALPHA_TOL) & (alphas < c_penalty - ALPHA_TOL)
        return np.where(mask, alphas, 0.0)
    if regularizer == "psi3":
        return np.where(alphas > ALPHA_TOL, alphas, 0.0)
    raise ConfigError(f"unknown regularizer {regularizer!r}")


def regularizer_gradient(
    v: int,
    projections: Sequence[ProjectionMatrix],
    data: Sequence[ArrayLike],
    alphas: np.ndarray,
    regularizer: str,
    modality_index_map: Sequence[tuple[int, int]],
    c_penalty: Optional[float] = None,
) -> np.ndarray:
    """Gradient of the regularization term with respect to Q_v."""
    q_v = projections[v]
    f_v = _values(data[v])
    lam = _pooled_weights(regularizer, alphas, c_penalty)
    if lam is None:
        return np.zeros_like(q_v.q)
    lo, hi = modality_index_map[v]
    lam_v = lam[lo:hi]
    if regularizer in ("w1", "w2", "w3"):
        weighted = f_v * (lam_v**2)[None, :]
        return 2.0 * q_v.q @ (weighted @ f_v.T)
    if regularizer in ("w4", "w5", "w6"):
        total = np.zeros((q_v.d, f_v.shape[1]))
        for n, (q_n, f_n) in enumerate(zip(projections, data)):
            lo_n, hi_n = modality_index_map[n]
            total += q_n.q @ (_values(f_n) * lam[lo_n:hi_n][None, :])
        return 2.0 * total @ (f_v * lam_v[None, :]).T
    # psi family: rank-one weighting through the lambda outer product.
    z = f_v @ lam_v
    return 2.0 * np.outer(q_v.q @ z, z)


def lagrangian_gradient(
    v: int,
    projections: Sequence[ProjectionMatrix],
    data: Sequence[ArrayLike],
    alphas: np.ndarray,
    beta: float,
    regularizer: str,
    modality_index_map: Sequence[tuple[int, int]],
    c_penalty: Optional[float] = None,
) -> np.ndarray:
    """Gradient of the pooled dual objective with respect to Q_v.

    alphas is the pooled dual weight vector from the most recent
    hypersphere solve on the projected, pooled samples; its layout must
    match modality_index_map.
    """
    expected = modality_index_map[-1][1]
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.shape != (expected,):
        raise ConfigError(
            f"alphas must have length {expected}, got {alphas.shape}"
        )
    q_v = projections[v]
    f_v = _values(data[v])
    lo, hi = modality_index_map[v]
    a_v = alphas[lo:hi]
    term1 = 2.0 * q_v.q @ ((f_v * a_v[None, :]) @ f_v.T)
    center = np.zeros(q_v.d)
    for n, (q_n, f_n) in enumerate(zip(projections, data)):
        lo_n, hi_n = modality_index_map[n]
        center += q_n.q @ (_values(f_n) @ alphas[lo_n:hi_n])
    term2 = 2.0 * np.outer(center, f_v @ a_v)
    grad = term1 - term2
    if beta != 0.0 and regularizer not in ("w0", "psi0"):
        grad = grad + beta * regularizer_gradient(
            v, projections, data, alphas, regularizer, modality_index_map, c_penalty
        )
    return grad


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------

def _validate_train_config(config: TrainConfig, n_modalities: int) -> None:
    if config.model_kind != "subspace":
        raise ConfigError(
            f"train() handles subspace models only, got {config.model_kind!r}"
        )
    if config.update_strategy in ("AD-+", "AD+-") and n_modalities != 2:
        raise ConfigError(
            f"{config.update_strategy} requires exactly 2 modalities, "
            f"got {n_modalities}"
        )
    if config.decision_strategy == "ds4" and n_modalities < 2:
        raise ConfigError("ds4 needs a second modality")
    if n_modalities == 1 and config.regularizer in MULTI_REGULARIZERS[1:]:
        raise ConfigError(
            f"regularizer {config.regularizer} is for multi-modal models; "
            "use psi0..psi3 with one modality"
        )
    if n_modalities > 1 and config.regularizer in UNI_REGULARIZERS:
        raise ConfigError(
            f"regularizer {config.regularizer} is for uni-modal models; "
            "use w0..w6 with several modalities"
        )


def train(data: MultiModalDataset, config: TrainConfig) -> SubspaceModel:
    """Fit a subspace one-class model on the target-class samples of data.

    When labels are present only target samples are used; unlabelled data
    is assumed to be all-target. The kernelized variant first embeds every
    modality through its fitted kernel feature map.
    """
    _validate_train_config(config, data.n_modalities)
    train_data = data.target_subset() if data.labels is not None else data
    n = train_data.n_samples
    v_count = train_data.n_modalities

    npt_states: Optional[list[NptState]] = None
    if config.kernelized:
        kp = config.resolved_kernel_params()
        npt_states = [npt_fit(mod, kp) for mod in train_data.modalities]
        inputs: list[np.ndarray] = [s.embedded for s in npt_states]
    else:
        inputs = [mod.values for mod in train_data.modalities]

    for v, x in enumerate(inputs):
        if config.d > min(x.shape[0], n):
            raise ConfigError(
                f"subspace dim {config.d} too large for modality {v} "
                f"({x.shape[0]} dims, {n} samples)"
            )

    index_map = [(v * n, (v + 1) * n) for v in range(v_count)]
    projections = [pca_init(x, config.d) for x in inputs]
    signs = strategy_signs(config.update_strategy, v_count)

    ortho_errors: list[float] = []
    warning: Optional[str] = None

    def pooled(projs: list[ProjectionMatrix]) -> np.ndarray:
        return np.hstack([p.q @ x for p, x in zip(projs, inputs)])

    last_valid: Optional[tuple[list[ProjectionMatrix], DataDescription]] = None
    for _ in range(config.max_iter):
        try:
            desc = svdd_solve(pooled(projections), config.c_penalty, config.kkt_tol)
        except SolverError as exc:
            warning = f"stopped early: {exc}"
            break
        last_valid = (projections, desc)
        stepped = list(projections)
        failed = None
        for v in range(v_count):
            grad = lagrangian_gradient(
                v,
                stepped,
                inputs,
                desc.alphas,
                config.beta,
                config.regularizer,
                index_map,
                config.c_penalty,
            )
            if not np.all(np.isfinite(grad)):
                failed = f"non-finite gradient on modality {v}"
                break
            try:
                stepped[v] = update_projection(
                    stepped[v], grad, config.eta, signs[v]
                )
            except SolverError as exc:
                failed = str(exc)
                break
        if failed is not None:
            warning = f"stopped early: {failed}"
            break
        projections = stepped
        ortho_errors.append(max(p.ortho_error() for p in projections))

    if warning is None:
        try:
            description = svdd_solve(
                pooled(projections), config.c_penalty, config.kkt_tol
            )
        except SolverError as exc:
            warning = f"final solve failed, keeping last iterate: {exc}"
            if last_valid is None:
                raise
            projections, description = last_valid
    else:
        if last_valid is None:
            raise SolverError(f"training never reached a valid state: {warning}")
        projections, description = last_valid

    return SubspaceModel(
        projections=projections,
        description=description,
        config=config,
        modality_index_map=index_map,
        npt_states=npt_states,
        ortho_errors=ortho_errors,
        warning=warning,
    )


def fuse_labels(per_modality: np.ndarray, decision_strategy: str) -> np.ndarray:
    """Combine per-modality 0/1 labels (V x N) into fused labels.

    ds1 requires every modality to accept (AND); ds2 any (OR); ds3 and ds4
    defer to the first and second modality respectively.
    """
    labels = np.asarray(per_modality, dtype=np.int64)
    if labels.ndim != 2:
        raise ConfigError(f"per-modality labels must be V x N, got {labels.shape}")
    if decision_strategy == "ds1":
        return labels.min(axis=0)
    if decision_strategy == "ds2":
        return labels.max(axis=0)
    if decision_strategy == "ds3":
        return labels[0].copy()
    if decision_strategy == "ds4":
        if labels.shape[0] < 2:
            raise ConfigError("ds4 needs a second modality")
        return labels[1].copy()
    raise ConfigError(f"unknown decision strategy {decision_strategy!r}")


def predict(model: SubspaceModel, data: MultiModalDataset) -> PredictionResult:
    """Classify every sample of data with a trained subspace model."""
    if data.n_modalities != model.n_modalities:
        raise ConfigError(
            f"model has {model.n_modalities} modalities, data has "
            f"{data.n_modalities}"
        )
    n = data.n_samples
    v_count = model.n_modalities
    per_modality = np.zeros((v_count, n), dtype=np.int64)
    distances = np.zeros((v_count, n))
    radius_sq = model.description.radius_sq
    for v in range(v_count):
        feats = data.modalities[v]
        if model.npt_states is not None:
            x = npt_embed_test(model.npt_states[v], feats, model.npt_states[v].params)
        else:
            if feats.dim != model.projections[v].input_dim:
                raise ConfigError(
                    f"modality {v} has {feats.dim} dims, model expects "
                    f"{model.projections[v].input_dim}"
                )
            x = feats.values
        y = model.projections[v].q @ x
        distances[v] = svdd_distances_sq(model.description, y)
        per_modality[v] = svdd_classify(model.description, y)
    fused = fuse_labels(per_modality, model.config.decision_strategy)
    return PredictionResult(
        fused=fused,
        per_modality=per_modality,
        distances=distances,
        radius_sq=radius_sq,
    )
