"""Supervised training sets for the two learned pursuits.

Block pairs (feed-forward network): each planted problem ``Y = A X`` is
written in stacked form ``vec(Y^T) = (A kron I_K) vec(X^T)`` and block-OMP
is run on it. Every iteration emits the current stacked residual together
with a 0/1 indicator of the block that block-OMP picks next.

Residual sequences (recurrent network): every column of ``Y`` is run through
subspace pursuit. Step 0 emits the raw column, later steps emit the
projection residual seen at the start of each sweep. The per-column
trajectories of a problem are cut to a common length (latest pairs are
dropped) and zipped into length-K sequences, one step per column.

All inputs are stored already scaled by :func:`scale_input`, the same map
the solvers apply before calling a network.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classic import MmvProblem, StoppingRule, pursuit_sweeps
from .numerics import (
    argmax_excluding,
    frobenius_norm,
    kron_block_adjoint,
    kron_block_apply,
    lstsq,
    make_rng,
    stack_rows,
    top_k,
    unstack_rows,
)

DATASET_MAGIC = b"MMVDS1\0"
BLOCK_KIND = 1
RESIDUAL_KIND = 2
TARGET_RULES = ("correlation", "true_support", "true_hits")


class DatasetError(ValueError):
    pass


def scale_input(v: np.ndarray) -> np.ndarray:
    """Rescale a vector (or each row of a batch) to RMS 1; zero stays zero."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scale = np.divide(np.sqrt(v.shape[-1]), norm, out=np.zeros_like(norm), where=norm > 0)
    return v * scale


@dataclass(frozen=True)
class PlantedProblem:
    a: np.ndarray
    x: np.ndarray
    y: np.ndarray
    support: np.ndarray  # active rows of x (real rows)
    noise_std: float


def plant_problem(
    a: np.ndarray,
    k: int,
    num_vectors: int,
    rng: np.random.Generator,
    complex_pairs: bool = False,
    snr_db: float | None = None,
) -> PlantedProblem:
    """Jointly sparse ``X`` with ``k`` active rows and ``Y = A X`` (+ noise).

    With ``complex_pairs`` the operator is a real-stacked complex matrix: the
    support is drawn over ``n/2`` complex atoms, ``k/2`` of them, and each
    atom activates rows ``j`` and ``j + n/2`` with complex-normal gains.
    """
    m, n = a.shape
    x = np.zeros((n, num_vectors))
    if complex_pairs:
        if n % 2 or k % 2:
            raise DatasetError("complex_pairs needs an even column count and an even k")
        half = n // 2
        atoms = np.sort(rng.choice(half, size=k // 2, replace=False))
        g = rng.standard_normal((2, k // 2, num_vectors)) * np.sqrt(0.5)
        x[atoms] = g[0]
        x[atoms + half] = g[1]
        support = np.concatenate([atoms, atoms + half])
    else:
        support = np.sort(rng.choice(n, size=k, replace=False))
        x[support] = rng.standard_normal((k, num_vectors))
    y = a @ x
    noise_std = 0.0
    if snr_db is not None and np.isfinite(snr_db):
        noise_std = frobenius_norm(y) / np.sqrt(y.size * 10.0 ** (snr_db / 10.0))
        y = y + noise_std * rng.standard_normal(y.shape)
    return PlantedProblem(a, x, y, support, noise_std)


def _gamma(y: np.ndarray, noise_std: float) -> float:
    if noise_std > 0:
        return float(np.sqrt(y.size) * noise_std)
    return 1e-6 * frobenius_norm(y)


# ---------------------------------------------------------------- block pairs


@dataclass
class BlockPairSet:
    inputs: np.ndarray   # (count, m*K)
    targets: np.ndarray  # (count, n*K)
    m: int
    n: int
    num_vectors: int
    k: int
    seed: int
    problem_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    step_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    options: dict = field(default_factory=dict)

    kind = BLOCK_KIND

    def __len__(self) -> int:
        return len(self.inputs)

    def pairs(self):
        from .neural import TrainingPair

        for i in range(len(self)):
            yield TrainingPair(self.inputs[i], self.targets[i])


def block_omp_trace(a: np.ndarray, y: np.ndarray, k: int, gamma: float = 0.0, refit: str = "accumulated"):
    """Run block-OMP on ``vec(Y^T) = (A kron I_K) vec(X^T)``.

    Yields ``(stacked_residual, block)`` before every selection, at most ``k``
    times, stopping once the residual norm drops to ``gamma``. ``refit`` is
    ``"accumulated"`` (refit all chosen blocks) or ``"single"`` (fit the new
    block to the current residual only).
    """
    if refit not in ("accumulated", "single"):
        raise ValueError(f"unknown refit mode {refit!r}")
    n = a.shape[1]
    num_vectors = y.shape[1]
    y_stacked = stack_rows(y)[:, 0]
    x_stacked = np.zeros(n * num_vectors)
    r = y_stacked.copy()
    chosen: list[int] = []
    while len(chosen) < k and np.linalg.norm(r) > gamma:
        corr = kron_block_adjoint(a, num_vectors, r).reshape(n, num_vectors)
        score = np.linalg.norm(corr, axis=1)
        if score.max() == 0.0:
            break
        block = argmax_excluding(score, chosen)
        yield r, block
        chosen.append(block)
        if refit == "accumulated":
            idx = np.asarray(chosen)
            coef = lstsq(a[:, idx], y)
            x = np.zeros((n, num_vectors))
            x[idx] = coef
            x_stacked = stack_rows(x)[:, 0]
        else:
            res = unstack_rows(r, num_vectors)
            coef = lstsq(a[:, [block]], res)
            x = unstack_rows(x_stacked, num_vectors)
            x[block] += coef[0]
            x_stacked = stack_rows(x)[:, 0]
        r = y_stacked - kron_block_apply(a, num_vectors, x_stacked)


def block_indicator(block: int, n: int, num_vectors: int) -> np.ndarray:
    t = np.zeros(n * num_vectors)
    t[block * num_vectors:(block + 1) * num_vectors] = 1.0
    return t


def _block_pairs_for(problem: PlantedProblem, k: int, refit: str):
    n = problem.a.shape[1]
    num_vectors = problem.y.shape[1]
    gamma = _gamma(problem.y, problem.noise_std)
    for step, (r, block) in enumerate(block_omp_trace(problem.a, problem.y, k, gamma, refit)):
        yield step, scale_input(r), block_indicator(block, n, num_vectors)


def generate_block_pairs(
    a: np.ndarray,
    k: int,
    num_problems: int,
    seed: int,
    num_vectors: int = 4,
    complex_pairs: bool = False,
    snr_db: float | None = None,
    refit: str = "accumulated",
    max_pairs: int | None = None,
) -> BlockPairSet:
    """Training pairs for the feed-forward network (up to ``k`` per problem).

    Problem ``i`` is drawn from ``make_rng(seed, i)``. Generation stops after
    ``num_problems`` problems or once ``max_pairs`` pairs exist.
    """
    m, n = a.shape
    if not k * num_vectors <= m * num_vectors <= n * num_vectors:
        raise DatasetError(f"need k <= m <= n, got k={k}, m={m}, n={n}")
    if np.any(np.linalg.norm(a, axis=0) == 0.0):
        raise DatasetError("sensing matrix has a zero block")
    inputs, targets, probs, steps = [], [], [], []
    for i in range(num_problems):
        problem = plant_problem(a, k, num_vectors, make_rng(seed, i), complex_pairs, snr_db)
        for step, r, t in _block_pairs_for(problem, k, refit):
            inputs.append(r)
            targets.append(t)
            probs.append(i)
            steps.append(step)
            if max_pairs is not None and len(inputs) >= max_pairs:
                break
        if max_pairs is not None and len(inputs) >= max_pairs:
            break
    return BlockPairSet(
        inputs=np.array(inputs).reshape(-1, m * num_vectors),
        targets=np.array(targets).reshape(-1, n * num_vectors),
        m=m, n=n, num_vectors=num_vectors, k=k, seed=seed,
        problem_index=np.array(probs, dtype=np.int64),
        step_index=np.array(steps, dtype=np.int64),
        options={"complex_pairs": complex_pairs, "snr_db": snr_db, "refit": refit},
    )


# ---------------------------------------------------------------- residual sequences


@dataclass
class ResidualPairSet:
    inputs: np.ndarray   # (count, K, m)
    targets: np.ndarray  # (count, K, n)
    m: int
    n: int
    num_vectors: int
    k: int
    seed: int
    problem_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    step_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    options: dict = field(default_factory=dict)

    kind = RESIDUAL_KIND

    def __len__(self) -> int:
        return len(self.inputs)

    def part(self, column: int) -> tuple[np.ndarray, np.ndarray]:
        """All pairs belonging to one measurement column (one receive antenna)."""
        return self.inputs[:, column], self.targets[:, column]


def residual_target(a: np.ndarray, v: np.ndarray, k: int, support: np.ndarray, rule: str) -> np.ndarray:
    """0/1 target for residual ``v``.

    ``correlation``: the ``k`` largest ``|a^T v|``. ``true_support``: the
    planted support. ``true_hits``: planted support entries among the ``k``
    largest ``|a^T v|``.
    """
    n = a.shape[1]
    t = np.zeros(n)
    if rule == "correlation":
        t[top_k(np.abs(a.T @ v), k)] = 1.0
    elif rule == "true_support":
        t[support] = 1.0
    elif rule == "true_hits":
        cand = top_k(np.abs(a.T @ v), k)
        t[np.intersect1d(cand, support)] = 1.0
    else:
        raise ValueError(f"unknown target rule {rule!r}; choose from {TARGET_RULES}")
    return t


def sp_residual_trace(a: np.ndarray, y: np.ndarray, k: int, gamma: float, iters: int) -> list[np.ndarray]:
    """Inputs a subspace-pursuit run on one column would feed to a network.

    The raw column comes first, then the residual at the start of each sweep.
    At most ``iters`` vectors are returned; the trace ends once the residual
    reaches ``gamma`` or stops shrinking.
    """
    if frobenius_norm(y) <= gamma or iters < 1:
        return []
    trace = [y[:, 0].copy()]
    seen: list[np.ndarray] = []

    def propose(r: np.ndarray) -> np.ndarray:
        seen.append(r[:, 0].copy())
        return a.T @ r

    if iters > 1:
        pursuit_sweeps(MmvProblem(a, y, k), StoppingRule(gamma, iters - 1), propose, "data_gen")
    trace.extend(seen)
    return trace[:iters]


def _residual_sequences_for(problem: PlantedProblem, k: int, iters: int, rule: str):
    a = problem.a
    num_vectors = problem.y.shape[1]
    traces = []
    for j in range(num_vectors):
        col = problem.y[:, j:j + 1]
        traces.append(sp_residual_trace(a, col, k, _gamma(col, problem.noise_std), iters))
    # equalize the parts: drop the latest steps of the longer trajectories
    length = min(len(t) for t in traces)
    for step in range(length):
        raw = np.stack([traces[j][step] for j in range(num_vectors)])
        target = np.stack([residual_target(a, v, k, problem.support, rule) for v in raw])
        yield step, scale_input(raw), target


def generate_residual_pairs(
    a: np.ndarray,
    k: int,
    num_problems: int,
    iters: int,
    seed: int,
    num_vectors: int = 4,
    complex_pairs: bool = False,
    snr_db: float | None = None,
    target_rule: str = "correlation",
    max_sequences: int | None = None,
) -> ResidualPairSet:
    """Length-K residual/indicator sequences for the recurrent network."""
    m, n = a.shape
    if not k <= m <= n:
        raise DatasetError(f"need k <= m <= n, got k={k}, m={m}, n={n}")
    if target_rule not in TARGET_RULES:
        raise ValueError(f"unknown target rule {target_rule!r}; choose from {TARGET_RULES}")
    inputs, targets, probs, steps = [], [], [], []
    for i in range(num_problems):
        if max_sequences is not None and len(inputs) >= max_sequences:
            break
        problem = plant_problem(a, k, num_vectors, make_rng(seed, i), complex_pairs, snr_db)
        for step, seq_in, seq_t in _residual_sequences_for(problem, k, iters, target_rule):
            if max_sequences is not None and len(inputs) >= max_sequences:
                break
            inputs.append(seq_in)
            targets.append(seq_t)
            probs.append(i)
            steps.append(step)
    return ResidualPairSet(
        inputs=np.array(inputs).reshape(-1, num_vectors, m),
        targets=np.array(targets).reshape(-1, num_vectors, n),
        m=m, n=n, num_vectors=num_vectors, k=k, seed=seed,
        problem_index=np.array(probs, dtype=np.int64),
        step_index=np.array(steps, dtype=np.int64),
        options={"complex_pairs": complex_pairs, "snr_db": snr_db, "target_rule": target_rule,
                 "iters": iters},
    )


def replay_problem(dataset: BlockPairSet | ResidualPairSet, a: np.ndarray, problem: int):
    """Regenerate ``(inputs, targets)`` of one planted problem from the dataset's seed."""
    opts = dataset.options
    planted = plant_problem(a, dataset.k, dataset.num_vectors, make_rng(dataset.seed, problem),
                            opts.get("complex_pairs", False), opts.get("snr_db"))
    if dataset.kind == BLOCK_KIND:
        pairs = list(_block_pairs_for(planted, dataset.k, opts.get("refit", "accumulated")))
    else:
        pairs = list(_residual_sequences_for(planted, dataset.k, opts["iters"], opts["target_rule"]))
    return np.array([p[1] for p in pairs]), np.array([p[2] for p in pairs])


# ---------------------------------------------------------------- files

_HEADER = struct.Struct("<BIIIIQ")


def dataset_to_bytes(ds: BlockPairSet | ResidualPairSet) -> bytes:
    """Binary layout: magic, u8 kind, u32 m, n, K, k, u64 record count, then
    little-endian float64 records. A block record is ``input (m*K)`` followed
    by ``target (n*K)``; a residual record is the K inputs (``K*m``) followed
    by the K targets (``K*n``)."""
    count = len(ds)
    body = np.concatenate(
        [ds.inputs.reshape(count, -1), ds.targets.reshape(count, -1)], axis=1
    ) if count else np.zeros((0, 0))
    return DATASET_MAGIC + _HEADER.pack(ds.kind, ds.m, ds.n, ds.num_vectors, ds.k, count) + \
        np.ascontiguousarray(body, dtype="<f8").tobytes()


def dataset_from_bytes(buf: bytes) -> BlockPairSet | ResidualPairSet:
    head = len(DATASET_MAGIC)
    if buf[:head] != DATASET_MAGIC:
        raise DatasetError(f"bad magic: expected {DATASET_MAGIC!r}, found {bytes(buf[:head])!r}")
    if len(buf) < head + _HEADER.size:
        raise DatasetError(f"truncated header at byte offset {len(buf)}")
    kind, m, n, nv, k, count = _HEADER.unpack_from(buf, head)
    if kind not in (BLOCK_KIND, RESIDUAL_KIND):
        raise DatasetError(f"unknown dataset kind {kind}")
    width = (m + n) * nv
    start = head + _HEADER.size
    need = start + 8 * width * count
    if len(buf) != need:
        raise DatasetError(f"expected {need} bytes for {count} records, file has {len(buf)}")
    body = np.frombuffer(buf, dtype="<f8", offset=start).astype(float).reshape(count, width)
    ins, outs = body[:, :m * nv], body[:, m * nv:]
    if kind == BLOCK_KIND:
        return BlockPairSet(ins.copy(), outs.copy(), m, n, nv, k, seed=0)
    return ResidualPairSet(ins.reshape(count, nv, m).copy(), outs.reshape(count, nv, n).copy(),
                           m, n, nv, k, seed=0)


def save_dataset(ds: BlockPairSet | ResidualPairSet, path: str | Path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path: str | Path) -> BlockPairSet | ResidualPairSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return dataset_from_bytes(path.read_bytes())


def export_csv(ds: BlockPairSet | ResidualPairSet, path: str | Path) -> None:
    """One row per (record, part, role) with space-separated values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record", "problem", "step", "part", "role", "values"])
        probs = ds.problem_index if len(ds.problem_index) == len(ds) else np.full(len(ds), -1)
        steps = ds.step_index if len(ds.step_index) == len(ds) else np.full(len(ds), -1)
        for i in range(len(ds)):
            parts = [(0, ds.inputs[i], ds.targets[i])] if ds.kind == BLOCK_KIND else \
                [(j, ds.inputs[i, j], ds.targets[i, j]) for j in range(ds.num_vectors)]
            for j, x, t in parts:
                w.writerow([i, probs[i], steps[i], j, "input", " ".join(repr(float(v)) for v in x)])
                w.writerow([i, probs[i], steps[i], j, "target", " ".join(repr(float(v)) for v in t)])
