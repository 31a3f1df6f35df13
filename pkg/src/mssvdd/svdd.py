"""Hypersphere data description and one-class hyperplane dual solvers.

Both problems are concave quadratic programs over the simplex intersected
with a box:

    maximize  c'a - (1/2) a'Ha   subject to   sum(a) = 1,  0 <= a <= u.

They are solved with pairwise coordinate updates: repeatedly pick the pair
of coordinates that most violates the optimality conditions and move mass
between them along the equality constraint, which keeps the simplex
constraint satisfied at every step. For the hypersphere, H = 2G and
c = diag(G); for the hyperplane, H = G and c = 0, where G is the linear
Gram matrix of the training columns. Kernelization, when wanted, happens
upstream by embedding the data before calling these solvers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

ALPHA_TOL = 1e-8
DEFAULT_KKT_TOL = 1e-6
MAX_SWEEPS = 10_000


def _gram(points: np.ndarray) -> np.ndarray:
    g = points.T @ points
    upper = np.triu(g)
    return upper + np.triu(g, 1).T


def _solve_pairwise(
    h: np.ndarray,
    c: np.ndarray,
    upper: float,
    kkt_tol: float,
    max_sweeps: int = MAX_SWEEPS,
) -> np.ndarray:
    """Maximize c'a - 0.5 a'Ha over {sum(a)=1, 0<=a<=upper}.

    Pair selection is second order: i is the steepest increasable
    coordinate and j the decreasable one with the largest exact gain of
    the pair subproblem, which avoids the zig-zagging a purely
    steepest-pair rule suffers on rank-deficient Hessians.
    """
    m = h.shape[0]
    diag = np.diag(h).copy()
    alpha = np.full(m, 1.0 / m)
    grad = c - h @ alpha
    violation = np.inf
    for _ in range(max_sweeps):
        can_up = alpha < upper
        can_dn = alpha > 0.0
        i = int(np.argmax(np.where(can_up, grad, -np.inf)))
        violation = grad[i] - np.min(np.where(can_dn, grad, np.inf))
        if violation <= kkt_tol:
            break
        h_i = h[:, i]
        diffs = grad[i] - grad
        denoms = np.maximum(diag[i] + diag - 2.0 * h_i, 1e-12)
        gains = np.where(can_dn & (diffs > 0.0), diffs**2 / denoms, -np.inf)
        j = int(np.argmax(gains))
        t_max = min(upper - alpha[i], alpha[j])
        denom = diag[i] + diag[j] - 2.0 * h_i[j]
        if denom > 1e-300:
            t = min(diffs[j] / denom, t_max)
        else:
            # Flat direction (e.g. duplicate points): take the full step.
            t = t_max
        if t <= 0.0:
            break
        if t == t_max and upper - alpha[i] <= alpha[j]:
            alpha[j] -= upper - alpha[i]
            alpha[i] = upper
        elif t == t_max:
            alpha[i] += alpha[j]
            alpha[j] = 0.0
        else:
            alpha[i] += t
            alpha[j] -= t
        grad = grad - t * (h_i - h[:, j])
    else:
        warnings.warn(
            f"dual solver hit the sweep limit with violation {violation:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
    # Tidy accumulated drift; changes are O(machine eps) and KKT-neutral.
    alpha = np.clip(alpha, 0.0, upper)
    total = alpha.sum()
    if total > 0.0:
        alpha = np.clip(alpha / total, 0.0, upper)
    return alpha


@dataclass(frozen=True)
class DataDescription:
    """Solved hypersphere description of a point cloud.

    alphas are the dual weights over the training columns, c_penalty the
    box bound, radius_sq the squared decision radius. train_points is the
    d x M matrix the description was fit on, retained so distances to new
    points can be evaluated. center and center_sq are derived caches.
    """

    alphas: np.ndarray
    c_penalty: float
    radius_sq: float
    train_points: np.ndarray
    support_indices: np.ndarray = field(init=False)
    boundary_indices: np.ndarray = field(init=False)
    center: np.ndarray = field(init=False)
    center_sq: float = field(init=False)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64).copy()
        pts = np.ascontiguousarray(self.train_points, dtype=np.float64)
        if alphas.shape != (pts.shape[1],):
            raise SolverError("alphas length must match the training columns")
        alphas.setflags(write=False)
        pts.setflags(write=False)
        support = np.flatnonzero(alphas > ALPHA_TOL)
        boundary = np.flatnonzero(
            (alphas > ALPHA_TOL) & (alphas < self.c_penalty - ALPHA_TOL)
        )
        center = pts @ alphas
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "train_points", pts)
        object.__setattr__(self, "support_indices", support)
        object.__setattr__(self, "boundary_indices", boundary)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "center_sq", float(center @ center))


def svdd_solve(
    points: np.ndarray, c_penalty: float, kkt_tol: float = DEFAULT_KKT_TOL
) -> DataDescription:
    """Fit the minimal enclosing soft hypersphere of the columns of points.

    Maximizes sum_i a_i G_ii - a'Ga over the box-bounded simplex. Requires
    c_penalty * M >= 1, otherwise the constraint set is empty.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise SolverError(f"points must be a d x M matrix, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise SolverError("points contain NaN or Inf")
    if kkt_tol <= 0.0:
        raise SolverError("kkt_tol must be positive")
    m = points.shape[1]
    if c_penalty * m < 1.0:
        raise SolverError(
            f"infeasible penalty: C*M = {c_penalty * m:.4g} < 1 (C={c_penalty}, M={m})"
        )
    if m == 1:
        return DataDescription(
            alphas=np.array([1.0]),
            c_penalty=c_penalty,
            radius_sq=0.0,
            train_points=points,
        )
    g = _gram(points)
    alphas = _solve_pairwise(2.0 * g, np.diag(g).copy(), c_penalty, kkt_tol)
    dist_sq = np.diag(g) - 2.0 * (g @ alphas) + float(alphas @ g @ alphas)
    boundary = (alphas > ALPHA_TOL) & (alphas < c_penalty - ALPHA_TOL)
    if np.any(boundary):
        radius_sq = float(np.mean(dist_sq[boundary]))
    else:
        support = alphas > ALPHA_TOL
        radius_sq = float(np.max(dist_sq[support]))
    return DataDescription(
        alphas=alphas,
        c_penalty=c_penalty,
        radius_sq=max(radius_sq, 0.0),
        train_points=points,
    )


def svdd_distances_sq(desc: DataDescription, y: np.ndarray) -> np.ndarray:
    """Squared distances of the columns of y (d x M) to the sphere center."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != desc.train_points.shape[0]:
        raise SolverError(
            f"dimension mismatch: description is {desc.train_points.shape[0]}-d, "
            f"query shape {y.shape}"
        )
    y_sq = np.sum(y * y, axis=0)
    return y_sq - 2.0 * (desc.center @ y) + desc.center_sq


def svdd_distance_sq(desc: DataDescription, y: np.ndarray) -> float:
    """Squared distance of a single d-vector to the sphere center."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise SolverError(f"expected a vector, got shape {y.shape}")
    return float(svdd_distances_sq(desc, y[:, None])[0])


def svdd_classify(desc: DataDescription, y: np.ndarray) -> np.ndarray:
    """1 for columns inside or on the sphere, 0 outside (boundary counts in)."""
    return (svdd_distances_sq(desc, y) <= desc.radius_sq).astype(np.int64)


@dataclass(frozen=True)
class HyperplaneDescription:
    """Solved one-class hyperplane: dual weights and offset rho.

    A point y is classified target when sum_j a_j <x_j, y> - rho >= 0.
    """

    alphas: np.ndarray
    rho: float
    nu: float
    train_points: np.ndarray
    support_indices: np.ndarray = field(init=False)
    boundary_indices: np.ndarray = field(init=False)
    weight: np.ndarray = field(init=False)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64).copy()
        pts = np.ascontiguousarray(self.train_points, dtype=np.float64)
        if alphas.shape != (pts.shape[1],):
            raise SolverError("alphas length must match the training columns")
        alphas.setflags(write=False)
        pts.setflags(write=False)
        bound = 1.0 / (self.nu * pts.shape[1])
        support = np.flatnonzero(alphas > ALPHA_TOL)
        boundary = np.flatnonzero(
            (alphas > ALPHA_TOL) & (alphas < bound - ALPHA_TOL)
        )
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "train_points", pts)
        object.__setattr__(self, "support_indices", support)
        object.__setattr__(self, "boundary_indices", boundary)
        object.__setattr__(self, "weight", pts @ alphas)


def ocsvm_solve(
    points: np.ndarray, nu: float, kkt_tol: float = DEFAULT_KKT_TOL
) -> HyperplaneDescription:
    """Fit the one-class hyperplane over the columns of points.

    Maximizes -0.5 a'Ga over {sum(a)=1, 0 <= a <= 1/(nu*M)}; rho is the
    mean decision value over boundary support vectors (all support vectors
    when none sit strictly inside the box).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] < 1:
        raise SolverError(f"points must be a d x M matrix, got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise SolverError("points contain NaN or Inf")
    if not 0.0 < nu <= 1.0:
        raise SolverError(f"nu must lie in (0, 1], got {nu}")
    m = points.shape[1]
    if nu * m < 1.0:
        raise SolverError(f"infeasible nu: nu*M = {nu * m:.4g} < 1")
    bound = 1.0 / (nu * m)
    g = _gram(points)
    if m == 1:
        alphas = np.array([1.0])
    else:
        alphas = _solve_pairwise(g, np.zeros(m), bound, kkt_tol)
    decision = g @ alphas
    boundary = (alphas > ALPHA_TOL) & (alphas < bound - ALPHA_TOL)
    if not np.any(boundary):
        boundary = alphas > ALPHA_TOL
    rho = float(np.mean(decision[boundary]))
    return HyperplaneDescription(alphas=alphas, rho=rho, nu=nu, train_points=points)


def ocsvm_decision(desc: HyperplaneDescription, y: np.ndarray) -> np.ndarray:
    """Decision values for the columns of y; >= 0 means target."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != desc.train_points.shape[0]:
        raise SolverError(
            f"dimension mismatch: description is {desc.train_points.shape[0]}-d, "
            f"query shape {y.shape}"
        )
    return desc.weight @ y - desc.rho


def ocsvm_classify(desc: HyperplaneDescription, y: np.ndarray) -> np.ndarray:
    return (ocsvm_decision(desc, y) >= 0.0).astype(np.int64)
