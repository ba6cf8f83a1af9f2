"""Small tanh networks trained from scratch with numpy.

Two architectures are supported:

* a four-layer fully connected network ``x -> tanh(W4 tanh(W3 tanh(W2 tanh(W1 x + b1) + b2) + b3) + b4)``
* a single-layer Elman RNN ``h_t = tanh(W_ih x_t + W_hh h_{t-1} + b_h)``,
  ``y_t = tanh(W_ho h_t + b_o)``

Batches are row-major: an MLP batch is ``(B, d_in)`` and an RNN batch is
``(B, T, d_in)``. Both losses are the mean, over samples (and time steps),
of the squared Euclidean error.
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Callable
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .numerics import make_rng

log = logging.getLogger(__name__)


class WeightFileError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss = {loss})")
        self.epoch = epoch
        self.loss = loss


class TrainingPair(NamedTuple):
    input: np.ndarray
    target: np.ndarray


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray

    KIND = 1

    def __post_init__(self):
        ws = [self.w1, self.w2, self.w3, self.w4]
        bs = [self.b1, self.b2, self.b3, self.b4]
        for i, (w, b) in enumerate(zip(ws, bs), start=1):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i > 1 and w.shape[1] != ws[i - 2].shape[0]:
                raise ValueError(f"layer {i} expects {w.shape[1]} inputs, previous layer gives {ws[i - 2].shape[0]}")

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w4.shape[0]


@dataclass
class RnnParams:
    w_ih: np.ndarray
    w_hh: np.ndarray
    w_ho: np.ndarray
    b_h: np.ndarray
    b_o: np.ndarray

    KIND = 2

    def __post_init__(self):
        n_h = self.w_ih.shape[0]
        if (
            self.w_ih.ndim != 2
            or self.w_hh.shape != (n_h, n_h)
            or self.w_ho.ndim != 2
            or self.w_ho.shape[1] != n_h
            or self.b_h.shape != (n_h,)
            or self.b_o.shape != (self.w_ho.shape[0],)
        ):
            raise ValueError(
                "inconsistent RNN shapes: "
                + ", ".join(f"{f.name}={getattr(self, f.name).shape}" for f in fields(self))
            )

    @property
    def d_in(self) -> int:
        return self.w_ih.shape[1]

    @property
    def n_h(self) -> int:
        return self.w_ih.shape[0]

    @property
    def d_out(self) -> int:
        return self.w_ho.shape[0]


Params = Union[MlpParams, RnnParams]


def param_arrays(p: Params) -> list[np.ndarray]:
    return [getattr(p, f.name) for f in fields(p)]


def map_params(fn: Callable[..., np.ndarray], *ps: Params) -> Params:
    """Apply ``fn`` field by field across parameter sets of the same type."""
    return replace(ps[0], **{f.name: fn(*(getattr(p, f.name) for p in ps)) for f in fields(ps[0])})


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(d_in: int, widths: tuple[int, int, int], d_out: int, seed: int) -> MlpParams:
    """Glorot-uniform weights and zero biases."""
    rng = make_rng(seed)
    sizes = [d_in, *widths, d_out]
    kw = {}
    for i in range(4):
        kw[f"w{i + 1}"] = _glorot(rng, sizes[i + 1], sizes[i])
        kw[f"b{i + 1}"] = np.zeros(sizes[i + 1])
    return MlpParams(**kw)


def init_rnn(d_in: int, n_h: int, d_out: int, seed: int) -> RnnParams:
    rng = make_rng(seed)
    return RnnParams(
        w_ih=_glorot(rng, n_h, d_in),
        w_hh=_glorot(rng, n_h, n_h),
        w_ho=_glorot(rng, d_out, n_h),
        b_h=np.zeros(n_h),
        b_o=np.zeros(d_out),
    )


# ---------------------------------------------------------------- MLP


def mlp_forward(p: MlpParams, r: np.ndarray, return_cache: bool = False):
    """Network output for one input vector or a ``(B, d_in)`` batch."""
    r = np.asarray(r, dtype=float)
    if r.shape[-1] != p.d_in:
        raise ValueError(f"input length {r.shape[-1]} does not match d_in = {p.d_in}")
    a1 = np.tanh(r @ p.w1.T + p.b1)
    a2 = np.tanh(a1 @ p.w2.T + p.b2)
    a3 = np.tanh(a2 @ p.w3.T + p.b3)
    out = np.tanh(a3 @ p.w4.T + p.b4)
    if return_cache:
        return out, (r, a1, a2, a3)
    return out


def mlp_loss_and_grad(p: MlpParams, inputs: np.ndarray, targets: np.ndarray) -> tuple[float, MlpParams]:
    """Mean squared error over the batch and its exact gradient."""
    inputs = np.atleast_2d(inputs)
    targets = np.atleast_2d(targets)
    if len(inputs) == 0:
        raise ValueError("empty batch")
    if targets.shape != (len(inputs), p.d_out):
        raise ValueError(f"targets have shape {targets.shape}, expected {(len(inputs), p.d_out)}")
    out, (a0, a1, a2, a3) = mlp_forward(p, inputs, return_cache=True)
    batch = len(inputs)
    err = out - targets
    loss = float(np.sum(err * err) / batch)

    d4 = (2.0 / batch) * err * (1.0 - out * out)
    d3 = (d4 @ p.w4) * (1.0 - a3 * a3)
    d2 = (d3 @ p.w3) * (1.0 - a2 * a2)
    d1 = (d2 @ p.w2) * (1.0 - a1 * a1)
    grads = MlpParams(
        w1=d1.T @ a0, b1=d1.sum(axis=0),
        w2=d2.T @ a1, b2=d2.sum(axis=0),
        w3=d3.T @ a2, b3=d3.sum(axis=0),
        w4=d4.T @ a3, b4=d4.sum(axis=0),
    )
    return loss, grads


# ---------------------------------------------------------------- RNN


def rnn_forward(p: RnnParams, sequence: np.ndarray, h0: np.ndarray | None = None):
    """Run the recurrence over a ``(T, d_in)`` sequence or a ``(B, T, d_in)`` batch.

    Returns ``(outputs, hidden)`` where ``hidden[..., t, :]`` is the state
    after step ``t``; ``h0`` defaults to zeros.
    """
    seq = np.asarray(sequence, dtype=float)
    single = seq.ndim == 2
    if single:
        seq = seq[None]
    if seq.ndim != 3 or seq.shape[2] != p.d_in:
        raise ValueError(f"sequence shape {np.shape(sequence)} does not match d_in = {p.d_in}")
    batch, steps, _ = seq.shape
    h = np.zeros((batch, p.n_h)) if h0 is None else np.broadcast_to(np.asarray(h0, dtype=float), (batch, p.n_h))
    hidden = np.empty((batch, steps, p.n_h))
    # input projections for all steps at once
    xin = seq @ p.w_ih.T + p.b_h
    for t in range(steps):
        h = np.tanh(xin[:, t] + h @ p.w_hh.T)
        hidden[:, t] = h
    outputs = np.tanh(hidden @ p.w_ho.T + p.b_o)
    if single:
        return outputs[0], hidden[0]
    return outputs, hidden


def rnn_loss_and_grad(p: RnnParams, inputs: np.ndarray, targets: np.ndarray) -> tuple[float, RnnParams]:
    """Mean over sequences and steps of ``||target_t - y_t||^2``; gradients by BPTT."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim == 2:
        inputs, targets = inputs[None], targets[None]
    if inputs.shape[:2] != targets.shape[:2] or targets.shape[2] != p.d_out:
        raise ValueError(f"input {inputs.shape} and target {targets.shape} sequences are not aligned")
    batch, steps, _ = inputs.shape
    if batch * steps == 0:
        raise ValueError("empty batch")
    out, hidden = rnn_forward(p, inputs)
    err = out - targets
    scale = 1.0 / (batch * steps)
    loss = float(np.sum(err * err) * scale)

    d_o = 2.0 * scale * err * (1.0 - out * out)          # (B, T, d_out)
    g_who = np.einsum("bto,bth->oh", d_o, hidden)
    g_bo = d_o.sum(axis=(0, 1))
    dh_out = d_o @ p.w_ho                                  # (B, T, n_h)

    g_wih = np.zeros_like(p.w_ih)
    g_whh = np.zeros_like(p.w_hh)
    g_bh = np.zeros_like(p.b_h)
    carry = np.zeros((batch, p.n_h))
    for t in range(steps - 1, -1, -1):
        h_t = hidden[:, t]
        dz = (dh_out[:, t] + carry) * (1.0 - h_t * h_t)
        g_wih += dz.T @ inputs[:, t]
        g_bh += dz.sum(axis=0)
        if t > 0:
            g_whh += dz.T @ hidden[:, t - 1]
        carry = dz @ p.w_hh
    grads = RnnParams(w_ih=g_wih, w_hh=g_whh, w_ho=g_who, b_h=g_bh, b_o=g_bo)
    return loss, grads


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 30
    batch_size: int = 64
    seed: int = 0
    max_steps: int | None = None  # cap on Adam updates, for the "30 steps" reading

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


LossGradFn = Callable[[Params, np.ndarray, np.ndarray], tuple[float, Params]]


def adam_train(
    params: Params,
    data: tuple[np.ndarray, np.ndarray],
    cfg: AdamConfig,
    loss_grad_fn: LossGradFn,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[Params, list[float]]:
    """Minibatch Adam with bias correction.

    ``data`` is ``(inputs, targets)`` indexed by sample along axis 0. The
    sample order of every epoch is drawn from ``cfg.seed``. Returns a trained
    copy of ``params`` and the per-epoch mean training loss.
    """
    inputs, targets = data
    count = len(inputs)
    if count == 0 or len(targets) != count:
        raise ValueError(f"need matching non-empty inputs/targets, got {len(inputs)} and {len(targets)}")
    p = map_params(np.copy, params)
    m = map_params(np.zeros_like, p)
    v = map_params(np.zeros_like, p)
    rng = make_rng(cfg.seed)
    b1, b2 = cfg.beta1, cfg.beta2
    step = 0
    curve: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(count)
        total = 0.0
        seen = 0
        for start in range(0, count, cfg.batch_size):
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
            idx = order[start:start + cfg.batch_size]
            loss, g = loss_grad_fn(p, inputs[idx], targets[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            total += loss * len(idx)
            seen += len(idx)
            step += 1
            corr1 = 1.0 - b1 ** step
            corr2 = 1.0 - b2 ** step
            for name in (f.name for f in fields(p)):
                gi = getattr(g, name)
                mi = getattr(m, name)
                vi = getattr(v, name)
                mi *= b1
                mi += (1.0 - b1) * gi
                vi *= b2
                vi += (1.0 - b2) * gi * gi
                getattr(p, name)[...] -= cfg.learning_rate * (mi / corr1) / (np.sqrt(vi / corr2) + cfg.epsilon)
        if seen == 0:
            break
        mean_loss = total / seen
        if not np.isfinite(mean_loss) or not all(np.all(np.isfinite(w)) for w in param_arrays(p)):
            raise TrainingDivergedError(epoch, mean_loss)
        curve.append(mean_loss)
        log.debug("epoch %d: loss %.6g", epoch, mean_loss)
        if progress is not None:
            progress(epoch, mean_loss)
    return p, curve


# ---------------------------------------------------------------- persistence

WEIGHT_MAGIC = b"MMVNN1\0"
_KINDS = {MlpParams.KIND: MlpParams, RnnParams.KIND: RnnParams}


def params_to_bytes(p: Params) -> bytes:
    arrays = param_arrays(p)
    chunks = [WEIGHT_MAGIC, struct.pack("<BI", p.KIND, len(arrays))]
    for a in arrays:
        mat = a.reshape(a.shape[0], -1) if a.ndim == 2 else a.reshape(-1, 1)
        chunks.append(struct.pack("<II", *mat.shape))
        chunks.append(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    return b"".join(chunks)


def params_from_bytes(buf: bytes) -> Params:
    if len(buf) < len(WEIGHT_MAGIC) or buf[:len(WEIGHT_MAGIC)] != WEIGHT_MAGIC:
        raise WeightFileError(f"bad magic: expected {WEIGHT_MAGIC!r}, found {bytes(buf[:len(WEIGHT_MAGIC)])!r}")
    pos = len(WEIGHT_MAGIC)

    def take(size: int, what: str) -> bytes:
        nonlocal pos
        if pos + size > len(buf):
            raise WeightFileError(f"truncated file: need {size} bytes for {what} at byte offset {pos}, "
                                  f"only {len(buf) - pos} left")
        out = buf[pos:pos + size]
        pos += size
        return out

    kind, count = struct.unpack("<BI", take(5, "header"))
    if kind not in _KINDS:
        raise WeightFileError(f"unknown network kind {kind}")
    cls = _KINDS[kind]
    names = [f.name for f in fields(cls)]
    if count != len(names):
        raise WeightFileError(f"{cls.__name__} has {len(names)} matrices, header says {count}")
    values = {}
    for name in names:
        rows, cols = struct.unpack("<II", take(8, f"shape of {name}"))
        data = np.frombuffer(take(8 * rows * cols, f"values of {name}"), dtype="<f8").astype(float)
        mat = data.reshape(rows, cols)
        if name.startswith("b"):
            if cols != 1:
                raise WeightFileError(f"bias {name} must be a column, got {rows}x{cols}")
            mat = mat[:, 0]
        values[name] = mat.copy()
    if pos != len(buf):
        raise WeightFileError(f"{len(buf) - pos} trailing bytes after byte offset {pos}")
    try:
        return cls(**values)
    except ValueError as exc:
        raise WeightFileError(f"shape header mismatch: {exc}") from exc


def save_params(p: Params, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(p))


def load_params(path: str | Path) -> Params:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weight file not found: {path}")
    return params_from_bytes(path.read_bytes())
