"""Greedy MMV recovery guided by trained networks.

``algorithm_one`` is block-OMP on the stacked system
``vec(Y^T) = (A kron I_K) vec(X^T)`` where a feed-forward network, not the
block correlation, decides which block enters next.

``algorithm_two`` is column-wise subspace pursuit where a recurrent network
reads the K residual columns in order and proposes the candidates merged
into each column's support.

Both accept either trained parameters or any callable with the same
input/output contract, so tests can inject oracle networks.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .classic import MmvProblem, RecoveryResult, SolverError, StoppingRule, _zero_result, pursuit_sweeps
from .data_gen import scale_input
from .neural import MlpParams, RnnParams, mlp_forward, rnn_forward
from .numerics import (
    RankDeficientError,
    argmax_excluding,
    kron_block_apply,
    lstsq,
    stack_rows,
    unstack_rows,
)

# stacked residual (m*K,) -> stacked scores (n*K,)
BlockNetwork = Callable[[np.ndarray], np.ndarray]
# residual matrix (m, K) -> score matrix (n, K)
SequenceNetwork = Callable[[np.ndarray], np.ndarray]


def mlp_network(p: MlpParams) -> BlockNetwork:
    return lambda r: mlp_forward(p, scale_input(r))


def rnn_network(p: RnnParams, carry_hidden: bool = True) -> SequenceNetwork:
    """Score every residual column with the RNN.

    With ``carry_hidden`` the columns form one sequence, so the hidden state
    built on earlier columns informs later ones; otherwise every column is a
    length-1 sequence starting from a zero state.
    """

    def score(r: np.ndarray) -> np.ndarray:
        seq = scale_input(r.T)
        if carry_hidden:
            out, _ = rnn_forward(p, seq)
        else:
            out, _ = rnn_forward(p, seq[:, None, :])
            out = out[:, 0, :]
        return out.T

    return score


def algorithm_one(
    problem: MmvProblem,
    mlp: MlpParams | BlockNetwork,
    stop: StoppingRule,
    refit: str = "accumulated",
) -> RecoveryResult:
    """Network-guided block pursuit on the stacked system.

    Each iteration feeds the stacked residual to the network, takes the
    not-yet-chosen block whose output has the largest l2 norm, then refits.
    ``refit="accumulated"`` refits all chosen blocks jointly;
    ``refit="single"`` fits only the new block against the current residual.
    At most ``problem.k`` blocks are chosen.
    """
    if refit not in ("accumulated", "single"):
        raise ValueError(f"unknown refit mode {refit!r}")
    a, y, k = problem.a, problem.y, problem.k
    m, n = a.shape
    nv = problem.num_vectors
    if isinstance(mlp, MlpParams):
        if mlp.d_in != m * nv or mlp.d_out != n * nv:
            raise SolverError(
                f"network maps {mlp.d_in} -> {mlp.d_out}, problem needs {m * nv} -> {n * nv}"
            )
        net = mlp_network(mlp)
    else:
        net = mlp

    y_stacked = stack_rows(y)[:, 0]
    r = y_stacked.copy()
    history = [float(np.linalg.norm(r))]
    if history[0] == 0.0:
        return _zero_result(n, nv)

    x = np.zeros((n, nv))
    chosen: list[int] = []
    while history[-1] > stop.residual_threshold and len(chosen) < min(k, stop.max_iterations):
        out = np.asarray(net(r), dtype=float).reshape(-1)
        if out.shape[0] != n * nv:
            raise SolverError(f"network returned {out.shape[0]} values, expected {n * nv}")
        block_norms = np.linalg.norm(out.reshape(n, nv), axis=1)
        b = argmax_excluding(block_norms, chosen)
        chosen.append(b)
        try:
            if refit == "accumulated":
                idx = np.asarray(chosen, dtype=np.intp)
                x = np.zeros((n, nv))
                x[idx] = lstsq(a[:, idx], y)
            else:
                x[b] += lstsq(a[:, [b]], unstack_rows(r, nv))[0]
        except RankDeficientError as exc:
            raise SolverError(f"algorithm_one: refit on blocks {chosen} failed: {exc}") from exc
        r = y_stacked - kron_block_apply(a, nv, stack_rows(x)[:, 0])
        history.append(float(np.linalg.norm(r)))

    support = np.sort(np.asarray(chosen, dtype=np.intp))
    return RecoveryResult(
        x_hat=x,
        support=[support.copy() for _ in range(nv)],
        residual_norm_history=history,
        iterations=len(chosen),
        converged=history[-1] <= stop.residual_threshold,
        info={"selection_order": list(chosen)},
    )


def algorithm_two(
    problem: MmvProblem,
    rnn: RnnParams | SequenceNetwork,
    stop: StoppingRule,
    carry_hidden: bool = True,
) -> RecoveryResult:
    """Subspace pursuit whose candidate proposals come from a recurrent network.

    Initial supports are the ``k`` largest ``|A^T Y|`` entries per column.
    Each sweep runs the network over the K residual columns (hidden state
    reset at the start of the sweep), merges each column's ``k`` largest
    ``|V|`` indices into its support, refits on the union, prunes to the
    ``k`` largest coefficients and refits. A column stops once its residual
    no longer shrinks.
    """
    m, n = problem.a.shape
    if isinstance(rnn, RnnParams):
        if rnn.d_in != m or rnn.d_out != n:
            raise SolverError(f"RNN maps {rnn.d_in} -> {rnn.d_out}, problem needs {m} -> {n}")
        net = rnn_network(rnn, carry_hidden)
    else:
        net = rnn
    return pursuit_sweeps(problem, stop, net, "algorithm_two")
