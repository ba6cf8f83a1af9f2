"""Dense linear algebra helpers shared by every solver.

Real matrices are plain ``float64`` numpy arrays and complex matrices are
``complex128`` arrays. Randomness always flows through an explicit
``numpy.random.Generator`` so results are a pure function of the seed.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.linalg import solve_triangular

EPS = np.finfo(np.float64).eps


class NumericsError(ValueError):
    """Raised on shape mismatches, rank deficiency or non-finite results."""


class RankDeficientError(NumericsError):
    pass


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for ``seed``, optionally forked along integer ``keys``.

    ``make_rng(s, i, j)`` gives an independent stream per ``(i, j)`` that does
    not depend on how many other streams were drawn before it.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def _as_2d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim != 2:
        raise NumericsError(f"{name} must be 1-D or 2-D, got shape {x.shape}")
    return x


def _check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericsError(f"non-finite values produced by {what}")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise NumericsError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise NumericsError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return _check_finite(a @ b, "matmul")


def lstsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares solution of ``a @ x ~= b`` through a Householder QR.

    ``b`` may be a vector or a matrix; the result has the matching rank.
    Raises :class:`RankDeficientError` when some ``|R_ii|`` falls below
    ``max(rows, cols) * eps * max|R_jj|``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2:
        raise NumericsError(f"lstsq expects a 2-D matrix, got shape {a.shape}")
    m, n = a.shape
    if b.shape[0] != m:
        raise NumericsError(f"dimension mismatch: a is {a.shape}, b is {b.shape}")
    if m < n:
        raise RankDeficientError(f"underdetermined system ({m} rows < {n} columns)")
    if n == 0:
        return np.zeros((0,) + b.shape[1:])
    # LAPACK geqrf: Householder reflections
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = max(m, n) * EPS * diag.max()
    if diag.max() == 0.0 or diag.min() <= tol:
        raise RankDeficientError(
            f"rank-deficient matrix: min |R_ii| = {diag.min():.3e} <= tol = {tol:.3e} "
            f"(max(rows, cols) * eps * max|R_ii|)"
        )
    x = solve_triangular(r, q.T @ b, lower=False, check_finite=False)
    return _check_finite(x, "lstsq")


def projection_residual(a_sub: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``y`` minus its orthogonal projection onto ``range(a_sub)``."""
    if a_sub.shape[0] != y.shape[0]:
        raise NumericsError(f"dimension mismatch: a_sub is {a_sub.shape}, y is {y.shape}")
    if a_sub.shape[1] == 0:
        return np.array(y, dtype=float, copy=True)
    return y - a_sub @ lstsq(a_sub, y)


def kron_block_apply(a: np.ndarray, k: int, x_stacked: np.ndarray) -> np.ndarray:
    """Compute ``(a kron I_k) @ x_stacked`` without forming the Kronecker matrix.

    With ``X = x_stacked.reshape(n, k)`` (rows of X laid end to end) the
    product is simply ``(a @ X).ravel()``.
    """
    if k < 1:
        raise NumericsError(f"block length must be positive, got {k}")
    x = np.asarray(x_stacked)
    vec_in = x.ndim == 1
    if not vec_in:
        if x.ndim != 2 or x.shape[1] != 1:
            raise NumericsError(f"x_stacked must be a column vector, got shape {x.shape}")
        x = x[:, 0]
    n = a.shape[1]
    if x.shape[0] != n * k:
        raise NumericsError(f"length mismatch: expected {n * k}, got {x.shape[0]}")
    out = (a @ x.reshape(n, k)).reshape(-1)
    return out if vec_in else out[:, None]


def kron_block_adjoint(a: np.ndarray, k: int, r_stacked: np.ndarray) -> np.ndarray:
    """Compute ``(a kron I_k).T @ r_stacked``; the transpose of :func:`kron_block_apply`."""
    r = np.asarray(r_stacked).reshape(-1)
    m = a.shape[0]
    if r.shape[0] != m * k:
        raise NumericsError(f"length mismatch: expected {m * k}, got {r.shape[0]}")
    return (a.T @ r.reshape(m, k)).reshape(-1)


def stack_rows(x: np.ndarray) -> np.ndarray:
    """Column vector ``vec(x.T)``: row i of ``x`` fills entries ``i*K .. i*K+K-1``."""
    x = _as_2d(np.asarray(x), "x")
    return x.reshape(-1, 1).copy()


def unstack_rows(x_stacked: np.ndarray, k: int) -> np.ndarray:
    """Inverse of :func:`stack_rows` for a block length ``k``."""
    x = np.asarray(x_stacked).reshape(-1)
    if x.shape[0] % k:
        raise NumericsError(f"length {x.shape[0]} is not a multiple of {k}")
    return x.reshape(-1, k).copy()


def complex_to_real_stacked(a: np.ndarray) -> np.ndarray:
    """Real embedding of a complex operator or vector.

    A matrix maps to ``[[Re, -Im], [Im, Re]]``; a 1-D vector maps to
    ``[Re; Im]``. The matrix map is multiplicative and the vector map is
    isometric, so ``real(A @ v) == real(A) @ real(v)``.
    """
    a = np.asarray(a)
    if a.ndim == 1:
        return np.concatenate([a.real, a.imag]).astype(float)
    if a.ndim != 2:
        raise NumericsError(f"expected 1-D or 2-D input, got shape {a.shape}")
    re, im = a.real.astype(float), a.imag.astype(float)
    return np.block([[re, -im], [im, re]])


def complex_columns_to_real(y: np.ndarray) -> np.ndarray:
    """Stack every column of a complex matrix as ``[Re; Im]`` (``m x K -> 2m x K``)."""
    y = _as_2d(np.asarray(y), "y")
    return np.vstack([y.real, y.imag]).astype(float)


def real_to_complex_columns(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_columns_to_real`."""
    y = _as_2d(np.asarray(y, dtype=float), "y")
    if y.shape[0] % 2:
        raise NumericsError(f"row count {y.shape[0]} is odd; not a stacked complex matrix")
    half = y.shape[0] // 2
    return y[:half] + 1j * y[half:]


def frobenius_norm(x: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(np.asarray(x)) ** 2)))


def gaussian(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """i.i.d. N(0, 1) entries."""
    return rng.standard_normal((rows, cols))


def complex_gaussian(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """i.i.d. circular complex normal entries with unit variance (N(0, 1/2) per part)."""
    z = rng.standard_normal((2, rows, cols)) * np.sqrt(0.5)
    return z[0] + 1j * z[1]


def top_k(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries of a 1-D array, sorted ascending.

    Ties are broken toward the lower index.
    """
    scores = np.asarray(scores).reshape(-1)
    if k <= 0:
        return np.zeros(0, dtype=np.intp)
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


def argmax_excluding(scores: np.ndarray, excluded: Sequence[int] = ()) -> int:
    """Lowest index among the maximal entries, skipping ``excluded``."""
    s = np.array(scores, dtype=float).reshape(-1)
    if len(excluded):
        s[np.asarray(excluded, dtype=np.intp)] = -np.inf
    return int(np.argmax(s))
