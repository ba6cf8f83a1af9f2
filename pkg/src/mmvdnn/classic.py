"""Classical greedy and convex baselines for (jointly) sparse recovery.

All solvers take an :class:`MmvProblem` and return a :class:`RecoveryResult`.
Single-vector problems are just ``K = 1`` MMV problems.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    NumericsError,
    RankDeficientError,
    argmax_excluding,
    frobenius_norm,
    lstsq,
    make_rng,
    top_k,
)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class MmvProblem:
    """Recover a row-sparse ``X`` (n x K) with ``k`` nonzero rows from ``y = a @ X``."""

    a: np.ndarray
    y: np.ndarray
    k: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if a.ndim != 2 or y.ndim != 2:
            raise NumericsError(f"a and y must be 2-D, got {a.shape} and {y.shape}")
        if a.shape[0] != y.shape[0]:
            raise NumericsError(f"a has {a.shape[0]} rows but y has {y.shape[0]}")
        if not 1 <= self.k <= min(a.shape):
            raise NumericsError(f"sparsity k={self.k} must lie in [1, {min(a.shape)}]")
        if np.any(np.linalg.norm(a, axis=0) == 0.0):
            raise NumericsError("sensing matrix has an all-zero column")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def num_vectors(self) -> int:
        return self.y.shape[1]


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    support: list[np.ndarray]
    residual_norm_history: list[float]
    iterations: int
    converged: bool
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StoppingRule:
    """Loop guard ``while ||R||_F > gamma and iteration < max_iterations``."""

    residual_threshold: float = 0.0
    max_iterations: int = 100

    def __post_init__(self):
        if self.residual_threshold < 0:
            raise ValueError("residual_threshold must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


def default_stop(y: np.ndarray, noise_std: float | None = None, max_iterations: int = 100) -> StoppingRule:
    """Threshold policy used when no explicit gamma is configured.

    Noiseless: ``1e-6 * ||y||_F``. With a known per-entry noise standard
    deviation ``sigma``: ``sqrt(m * K) * sigma``, the expected noise norm.
    """
    y = np.atleast_2d(np.asarray(y).T).T
    if noise_std is None or noise_std == 0:
        gamma = 1e-6 * frobenius_norm(y)
    else:
        gamma = float(np.sqrt(y.size) * noise_std)
    return StoppingRule(gamma, max_iterations)


def _zero_result(n: int, num_vectors: int) -> RecoveryResult:
    return RecoveryResult(
        x_hat=np.zeros((n, num_vectors)),
        support=[np.zeros(0, dtype=np.intp) for _ in range(num_vectors)],
        residual_norm_history=[0.0],
        iterations=0,
        converged=True,
    )


def _refit(a: np.ndarray, y: np.ndarray, support: np.ndarray, what: str) -> np.ndarray:
    try:
        return lstsq(a[:, support], y)
    except RankDeficientError as exc:
        raise SolverError(f"{what}: least squares on support {support.tolist()} failed: {exc}") from exc


def somp(problem: MmvProblem, stop: StoppingRule) -> RecoveryResult:
    """Simultaneous OMP: one shared support, atoms picked by ``||a_i^T R||_2 / ||a_i||``."""
    a, y, k = problem.a, problem.y, problem.k
    n, nv = problem.n, problem.num_vectors
    y_norm = frobenius_norm(y)
    if y_norm == 0.0:
        return _zero_result(n, nv)

    col_norms = np.linalg.norm(a, axis=0)
    support: list[int] = []
    coef = np.zeros((0, nv))
    r = y.copy()
    history = [y_norm]
    while history[-1] > stop.residual_threshold and len(support) < min(k, stop.max_iterations):
        score = np.linalg.norm(a.T @ r, axis=1) / col_norms
        if score.max() == 0.0:
            break
        support.append(argmax_excluding(score, support))
        idx = np.asarray(support, dtype=np.intp)
        coef = _refit(a, y, idx, "somp")
        r = y - a[:, idx] @ coef
        history.append(frobenius_norm(r))

    order = np.argsort(support)
    idx = np.asarray(support, dtype=np.intp)[order]
    x_hat = np.zeros((n, nv))
    x_hat[idx] = coef[order]
    history[-1] = frobenius_norm(y - a @ x_hat)
    return RecoveryResult(
        x_hat=x_hat,
        support=[idx.copy() for _ in range(nv)],
        residual_norm_history=history,
        iterations=len(support),
        converged=history[-1] <= stop.residual_threshold,
    )


def omp(problem: MmvProblem, stop: StoppingRule) -> RecoveryResult:
    """Orthogonal matching pursuit on a single measurement vector."""
    if problem.num_vectors != 1:
        raise ValueError(f"omp needs K = 1, got K = {problem.num_vectors}; use somp")
    return somp(problem, stop)


# A proposal maps the residual matrix (m x K) to per-column candidate scores (n x K).
Proposal = Callable[[np.ndarray], np.ndarray]


def pursuit_sweeps(problem: MmvProblem, stop: StoppingRule, propose: Proposal, what: str = "sp") -> RecoveryResult:
    """Column-wise subspace pursuit with a pluggable candidate proposal.

    Every column keeps its own size-``k`` support. A sweep asks ``propose``
    for scores on the current residuals, merges the ``k`` highest-magnitude
    candidates into each column's support, refits on the union, prunes back
    to the ``k`` largest coefficients and refits again. A column stops as
    soon as its residual fails to shrink; it then keeps its previous support.

    With ``propose = lambda R: a.T @ R`` this is the classical algorithm.
    """
    a, y, k = problem.a, problem.y, problem.k
    m, n = a.shape
    nv = problem.num_vectors
    if 2 * k > m:
        raise SolverError(f"{what}: union of two supports (2k = {2 * k}) exceeds m = {m}")
    if frobenius_norm(y) == 0.0:
        return _zero_result(n, nv)

    corr = a.T @ y
    supports, coefs = [], []
    r = np.empty_like(y)
    for j in range(nv):
        t = top_k(np.abs(corr[:, j]), k)
        c = _refit(a, y[:, j], t, what)
        supports.append(t)
        coefs.append(c)
        r[:, j] = y[:, j] - a[:, t] @ c
    col_res = np.linalg.norm(r, axis=0)
    history = [frobenius_norm(r)]
    active = col_res > 0.0
    it = 0
    while history[-1] > stop.residual_threshold and it < stop.max_iterations and active.any():
        scores = np.asarray(propose(r), dtype=float)
        if scores.shape != (n, nv):
            raise SolverError(f"{what}: proposal returned shape {scores.shape}, expected {(n, nv)}")
        for j in np.flatnonzero(active):
            cand = top_k(np.abs(scores[:, j]), k)
            union = np.union1d(supports[j], cand)
            c_union = _refit(a, y[:, j], union, what)
            t_new = union[top_k(np.abs(c_union), k)]
            c_new = _refit(a, y[:, j], t_new, what)
            r_new = y[:, j] - a[:, t_new] @ c_new
            norm_new = np.linalg.norm(r_new)
            if norm_new < col_res[j]:
                supports[j], coefs[j] = t_new, c_new
                r[:, j] = r_new
                col_res[j] = norm_new
            else:
                active[j] = False
        it += 1
        history.append(frobenius_norm(r))

    x_hat = np.zeros((n, nv))
    for j in range(nv):
        x_hat[supports[j], j] = coefs[j]
    history[-1] = frobenius_norm(y - a @ x_hat)
    return RecoveryResult(
        x_hat=x_hat,
        support=[s.copy() for s in supports],
        residual_norm_history=history,
        iterations=it,
        converged=history[-1] <= stop.residual_threshold,
    )


def subspace_pursuit(problem: MmvProblem, stop: StoppingRule) -> RecoveryResult:
    """Classical subspace pursuit on one measurement vector."""
    if problem.num_vectors != 1:
        raise ValueError(f"subspace_pursuit needs K = 1, got K = {problem.num_vectors}")
    a = problem.a
    return pursuit_sweeps(problem, stop, lambda r: a.T @ r, "subspace_pursuit")


def columnwise_subspace_pursuit(problem: MmvProblem, stop: StoppingRule) -> RecoveryResult:
    """Subspace pursuit applied independently to every column."""
    a = problem.a
    return pursuit_sweeps(problem, stop, lambda r: a.T @ r, "subspace_pursuit")


def power_iteration_lipschitz(a: np.ndarray, iters: int = 500, tol: float = 1e-10) -> float:
    """Largest eigenvalue of ``a.T @ a``."""
    gram = a.T @ a
    v = make_rng(0).standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = gram @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return lam


def row_soft_threshold(x: np.ndarray, thresh: float) -> np.ndarray:
    """Proximal map of ``thresh * sum_i ||x^i||_2`` (block soft-thresholding of rows)."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thresh, 1.0 - thresh / norms, 0.0)
    return x * scale


def group_lasso_objective(a: np.ndarray, y: np.ndarray, x: np.ndarray, lam: float) -> float:
    return 0.5 * frobenius_norm(y - a @ x) ** 2 + lam * float(np.linalg.norm(x, axis=1).sum())


def group_lasso(problem: MmvProblem, lam: float, fista_iters: int = 500, tol: float = 0.0) -> RecoveryResult:
    """Row-sparse group LASSO ``min 1/2 ||Y - AX||_F^2 + lam * sum_i ||x^i||_2``.

    FISTA with step ``1/L``. Whenever a step would raise the objective the
    momentum is reset and the step is retaken from the last accepted point,
    so the objective never increases between restarts. ``tol > 0`` stops
    early once the relative change of ``X`` drops below it.
    """
    if not lam > 0:
        raise ValueError(f"group_lasso needs lam > 0, got {lam}")
    a, y = problem.a, problem.y
    n, nv = problem.n, problem.num_vectors
    lip = power_iteration_lipschitz(a) * (1.0 + 1e-9)
    gram = a.T @ a
    aty = a.T @ y

    x = np.zeros((n, nv))
    z = x.copy()
    t = 1.0
    obj = group_lasso_objective(a, y, x, lam)
    history = [frobenius_norm(y)]
    restart_objectives = [obj]
    converged = False
    it = 0
    for it in range(1, fista_iters + 1):
        x_new = row_soft_threshold(z - (gram @ z - aty) / lip, lam / lip)
        obj_new = group_lasso_objective(a, y, x_new, lam)
        if obj_new > obj:
            # restart from the last accepted iterate
            t = 1.0
            z = x
            restart_objectives.append(obj)
            history.append(history[-1])
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        step = frobenius_norm(x_new - x)
        scale = max(frobenius_norm(x_new), np.finfo(float).tiny)
        x, t, obj = x_new, t_new, obj_new
        history.append(frobenius_norm(y - a @ x))
        if tol > 0 and step <= tol * scale:
            converged = True
            break

    row_norms = np.linalg.norm(x, axis=1)
    keep = row_norms > 1e-6 * row_norms.max() if row_norms.max() > 0 else np.zeros(n, dtype=bool)
    x_hat = np.where(keep[:, None], x, 0.0)
    support = np.flatnonzero(keep)
    history[-1] = frobenius_norm(y - a @ x_hat)
    return RecoveryResult(
        x_hat=x_hat,
        support=[support.copy() for _ in range(nv)],
        residual_norm_history=history,
        iterations=it,
        converged=converged or tol == 0,
        info={"objective": group_lasso_objective(a, y, x_hat, lam), "restart_objectives": restart_objectives,
              "lipschitz": lip},
    )
