"""Synthetic downlink massive-MIMO scenes and their compressive-sensing form.

The base station has ``m_tx`` antennas and sends ``t_pilots`` pilot symbols;
the user has ``n_rx`` antennas and receives ``Y = H S + N``. In the angular
domain ``H = A_R H_a A_T^H`` with unitary DFT bases, and ``H_a`` is nonzero
only on a handful of transmit-angle columns shared by every receive antenna.
Conjugate-transposing the received block gives the jointly sparse MMV model
``Y_bar = A_bar X_bar + N_bar`` with

    Y_bar = Y^H A_R,   A_bar = S^H A_T,   X_bar = H_a^H,   N_bar = N^H A_R.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .classic import MmvProblem, RecoveryResult
from .numerics import (
    complex_columns_to_real,
    complex_gaussian,
    complex_to_real_stacked,
    frobenius_norm,
    real_to_complex_columns,
)


class ChannelError(ValueError):
    pass


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix ``F[p, q] = exp(-2j pi p q / n) / sqrt(n)``."""
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def make_pilot(m_tx: int, t_pilots: int, power_db: float, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian pilot block scaled so that ``tr(S^H S) = P T``."""
    s = complex_gaussian(rng, m_tx, t_pilots)
    target = db_to_linear(power_db) * t_pilots
    return s * np.sqrt(target / np.real(np.vdot(s, s)))


@dataclass(frozen=True)
class ChannelScene:
    h: np.ndarray          # n_rx x m_tx
    h_angular: np.ndarray  # n_rx x m_tx
    a_r: np.ndarray        # n_rx x n_rx
    a_t: np.ndarray        # m_tx x m_tx
    s: np.ndarray          # m_tx x t_pilots
    noise: np.ndarray      # n_rx x t_pilots
    snr_db: float
    sparsity: int          # nominal (maximum) number of active angle bins
    support: np.ndarray    # transmit-angle bins carrying energy
    noise_std: float       # per complex entry

    @property
    def y(self) -> np.ndarray:
        return self.h @ self.s + self.noise

    @property
    def m_tx(self) -> int:
        return self.h.shape[1]

    @property
    def n_rx(self) -> int:
        return self.h.shape[0]

    @property
    def t_pilots(self) -> int:
        return self.s.shape[1]


@dataclass(frozen=True)
class CsForm:
    y_bar: np.ndarray  # T x n_rx
    a_bar: np.ndarray  # T x m_tx
    x_bar: np.ndarray  # m_tx x n_rx
    n_bar: np.ndarray  # T x n_rx


def generate_scene(
    m_tx: int,
    n_rx: int,
    t_pilots: int,
    sparsity: int,
    snr_db: float,
    power_db: float,
    rng: np.random.Generator,
    pilot: np.ndarray | None = None,
    random_sparsity: bool = False,
) -> ChannelScene:
    """Draw one scene.

    ``snr_db = inf`` gives a noiseless scene. A fixed ``pilot`` may be passed
    (required whenever a learned solver trained on that pilot is used);
    otherwise a fresh one is drawn. With ``random_sparsity`` the number of
    active angle bins is uniform on ``1..sparsity``.
    """
    if min(m_tx, n_rx, t_pilots, sparsity) < 1:
        raise ChannelError("all dimensions and the sparsity must be positive")
    if sparsity > m_tx:
        raise ChannelError(f"sparsity {sparsity} exceeds m_tx = {m_tx}")
    if t_pilots > m_tx:
        raise ChannelError(f"t_pilots {t_pilots} exceeds m_tx = {m_tx}")

    a_r = dft_matrix(n_rx)
    a_t = dft_matrix(m_tx)
    size = int(rng.integers(1, sparsity + 1)) if random_sparsity else sparsity
    support = np.sort(rng.choice(m_tx, size=size, replace=False))
    h_angular = np.zeros((n_rx, m_tx), dtype=complex)
    h_angular[:, support] = complex_gaussian(rng, n_rx, size)
    h = a_r @ h_angular @ a_t.conj().T

    if pilot is None:
        s = make_pilot(m_tx, t_pilots, power_db, rng)
    else:
        s = np.asarray(pilot, dtype=complex)
        if s.shape != (m_tx, t_pilots):
            raise ChannelError(f"pilot has shape {s.shape}, expected {(m_tx, t_pilots)}")

    if math.isinf(snr_db) and snr_db > 0:
        noise = np.zeros((n_rx, t_pilots), dtype=complex)
        noise_std = 0.0
    else:
        signal_power = frobenius_norm(h @ s) ** 2
        noise_std = math.sqrt(signal_power / (n_rx * t_pilots * db_to_linear(snr_db)))
        noise = noise_std * complex_gaussian(rng, n_rx, t_pilots)
    return ChannelScene(h, h_angular, a_r, a_t, s, noise, float(snr_db), sparsity, support, noise_std)


def check_scene(scene: ChannelScene, power_db: float | None = None) -> None:
    """Assert the structural identities every scene must satisfy."""
    for name, u in (("a_r", scene.a_r), ("a_t", scene.a_t)):
        err = frobenius_norm(u.conj().T @ u - np.eye(u.shape[0]))
        if err > 1e-10:
            raise ChannelError(f"{name} is not unitary (||U^H U - I||_F = {err:.2e})")
    h_rebuilt = scene.a_r @ scene.h_angular @ scene.a_t.conj().T
    if frobenius_norm(h_rebuilt - scene.h) > 1e-10 * max(frobenius_norm(scene.h), 1e-300):
        raise ChannelError("H != A_R H_a A_T^H")
    if power_db is not None:
        trace = np.real(np.vdot(scene.s, scene.s))
        want = db_to_linear(power_db) * scene.t_pilots
        if abs(trace - want) > 1e-8 * want:
            raise ChannelError(f"pilot power tr(S^H S) = {trace} differs from P T = {want}")
    active_cols = np.flatnonzero(np.any(scene.h_angular != 0, axis=0))
    if active_cols.size > scene.sparsity or not np.all(np.isin(active_cols, scene.support)):
        raise ChannelError("angular channel columns do not share one support")
    cs = to_cs_form(scene)
    lhs = cs.y_bar
    rhs = cs.a_bar @ cs.x_bar + cs.n_bar
    if frobenius_norm(lhs - rhs) > 1e-10 * max(frobenius_norm(lhs), 1e-300):
        raise ChannelError("Y_bar != A_bar X_bar + N_bar")


def to_cs_form(scene: ChannelScene) -> CsForm:
    return CsForm(
        y_bar=scene.y.conj().T @ scene.a_r,
        a_bar=scene.s.conj().T @ scene.a_t,
        x_bar=scene.h_angular.conj().T,
        n_bar=scene.noise.conj().T @ scene.a_r,
    )


def real_problem(cs: CsForm, sparsity: int) -> MmvProblem:
    """Real-stacked MMV problem: ``2T x 2M`` operator, ``2 * sparsity`` active rows."""
    return MmvProblem(
        a=complex_to_real_stacked(cs.a_bar),
        y=complex_columns_to_real(cs.y_bar),
        k=2 * sparsity,
    )


def channel_from_angular(scene: ChannelScene, x_bar_hat: np.ndarray) -> np.ndarray:
    """Map an estimate of ``X_bar`` back to ``H_hat = A_R X_bar_hat^H A_T^H``."""
    return scene.a_r @ x_bar_hat.conj().T @ scene.a_t.conj().T


def nmse(h_hat: np.ndarray, h_true: np.ndarray) -> float:
    """Normalized error ``||H_hat - H||_F / ||H||_F``."""
    if h_hat.shape != h_true.shape:
        raise ChannelError(f"shape mismatch: {h_hat.shape} vs {h_true.shape}")
    ref = frobenius_norm(h_true)
    if ref == 0.0:
        raise ChannelError("true channel is zero")
    return frobenius_norm(h_hat - h_true) / ref


# A channel solver receives the real-stacked problem and the per-real-entry noise std.
ChannelSolver = Callable[[MmvProblem, float], RecoveryResult]


def estimate_channel(scene: ChannelScene, solver: ChannelSolver) -> tuple[np.ndarray, float, RecoveryResult]:
    """Run ``solver`` on the real-stacked CS form and score the recovered channel."""
    cs = to_cs_form(scene)
    problem = real_problem(cs, scene.sparsity)
    result = solver(problem, scene.noise_std / math.sqrt(2.0))
    x_bar_hat = real_to_complex_columns(result.x_hat)
    h_hat = channel_from_angular(scene, x_bar_hat)
    return h_hat, nmse(h_hat, scene.h), result
