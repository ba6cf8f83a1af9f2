"""Acceptance criteria 1-9. Each test prints one ``CRITERION n: PASS|FAIL`` line."""

import dataclasses
import hashlib
import itertools
import time

import numpy as np
import pytest

from mmvdnn.channel import check_scene, generate_scene
from mmvdnn.classic import (
    MmvProblem,
    StoppingRule,
    default_stop,
    omp,
    somp,
    subspace_pursuit,
)
from mmvdnn.config import SolverConfig, SweepConfig
from mmvdnn.dnn_solvers import algorithm_one, algorithm_two
from mmvdnn.harness import cmd_gen_data, cmd_run, cmd_train, run_sweep
from mmvdnn.neural import (
    init_mlp,
    init_rnn,
    map_params,
    mlp_loss_and_grad,
    rnn_loss_and_grad,
)
from mmvdnn.numerics import frobenius_norm, kron_block_apply, lstsq, make_rng, stack_rows
from test_harness import tiny
from test_neural import max_fd_error

SOLVERS = ("somp", "sp", "glasso", "algorithm_one", "algorithm_two")


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def gaussian_planted(rng, m, n, k, nv):
    a = rng.standard_normal((m, n)) / np.sqrt(m)
    support = np.sort(rng.choice(n, size=k, replace=False))
    x = np.zeros((n, nv))
    x[support] = rng.standard_normal((k, nv))
    return a, x, support


def test_criterion_1_numerics(capsys):
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        rng = make_rng(1, i)
        m = int(rng.integers(5, 40))
        n = int(rng.integers(1, m + 1))
        a, b = rng.standard_normal((m, n)), rng.standard_normal((m, 3))
        ref = np.linalg.inv(a.T @ a) @ (a.T @ b)
        worst = max(worst, frobenius_norm(lstsq(a, b) - ref) / frobenius_norm(ref))
    kron_ok = True
    rng = make_rng(2)
    for m, n, k in itertools.product(range(1, 6), range(1, 65), range(1, 65)):
        if n * k > 64:
            continue
        a, x = rng.standard_normal((m, n)), rng.standard_normal(n * k)
        kron_ok &= bool(np.allclose(kron_block_apply(a, k, x), np.kron(a, np.eye(k)) @ x, rtol=0, atol=1e-12))
    # vec(Y^T) = (A kron I_K) vec(X^T), exact on integer data
    ai = rng.integers(-5, 6, (6, 9)).astype(float)
    xi = rng.integers(-5, 6, (9, 4)).astype(float)
    vec_ok = np.array_equal(kron_block_apply(ai, 4, stack_rows(xi)), stack_rows(ai @ xi))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and kron_ok and vec_ok and elapsed < 10
    report(capsys, 1, ok, f"lstsq max rel err {worst:.2e}, kron exhaustive {kron_ok}, "
                          f"vec identity {vec_ok}, {elapsed:.1f}s")


def test_criterion_2_gradients(capsys):
    start = time.perf_counter()
    worst_mlp = worst_rnn = 0.0
    for seed in range(20):
        rng = make_rng(3, seed)
        p = map_params(lambda w: 0.5 * rng.standard_normal(w.shape), init_mlp(3, (4, 4, 4), 3, seed))
        worst_mlp = max(worst_mlp, max_fd_error(p, mlp_loss_and_grad, rng.standard_normal((4, 3)),
                                                np.clip(rng.standard_normal((4, 3)), -1, 1)))
        q = map_params(lambda w: 0.5 * rng.standard_normal(w.shape), init_rnn(4, 5, 3, seed))
        worst_rnn = max(worst_rnn, max_fd_error(q, rnn_loss_and_grad, rng.standard_normal((2, 4, 4)),
                                                np.clip(rng.standard_normal((2, 4, 3)), -1, 1)))
    elapsed = time.perf_counter() - start
    ok = worst_mlp <= 1e-5 and worst_rnn <= 1e-5 and elapsed < 30
    report(capsys, 2, ok, f"max rel err MLP {worst_mlp:.2e}, RNN {worst_rnn:.2e}, {elapsed:.1f}s")


def test_criterion_3_classical_recovery(capsys):
    start = time.perf_counter()
    hits = {"omp": 0, "sp": 0, "somp": 0}
    for i in range(100):
        a, x, support = gaussian_planted(make_rng(4, i), 72, 144, 10, 1)
        p = MmvProblem(a, a @ x, 10)
        hits["omp"] += np.array_equal(omp(p, default_stop(p.y)).support[0], support)
        hits["sp"] += np.array_equal(subspace_pursuit(p, default_stop(p.y)).support[0], support)
        a, x, support = gaussian_planted(make_rng(5, i), 72, 144, 18, 4)
        p = MmvProblem(a, a @ x, 18)
        hits["somp"] += np.array_equal(somp(p, default_stop(p.y)).support[0], support)
    elapsed = time.perf_counter() - start
    ok = hits["omp"] >= 99 and hits["sp"] >= 99 and hits["somp"] >= 95 and elapsed < 60
    report(capsys, 3, ok, f"exact supports OMP {hits['omp']}/100, SP {hits['sp']}/100, "
                          f"SOMP {hits['somp']}/100, {elapsed:.1f}s")


def test_criterion_4_oracle_networks(capsys):
    start = time.perf_counter()
    good_one = good_two = 0
    for i in range(100):
        rng = make_rng(6, i)
        k = int(rng.integers(1, 25))  # k <= m/3 with m = 72
        a, x, support = gaussian_planted(rng, 72, 144, k, 4)
        p = MmvProblem(a, a @ x, k)
        stop = default_stop(p.y)
        stacked = stack_rows(x)[:, 0]
        r1 = algorithm_one(p, lambda r: stacked, stop)
        good_one += r1.residual_norm_history[-1] <= 1e-8 * frobenius_norm(p.y)
        indicator = np.zeros((144, 4))
        indicator[support] = 1.0
        r2 = algorithm_two(p, lambda r: indicator, stop)
        good_two += r2.residual_norm_history[-1] <= 1e-8 * frobenius_norm(p.y)
    elapsed = time.perf_counter() - start
    ok = good_one == 100 and good_two == 100 and elapsed < 60
    report(capsys, 4, ok, f"algorithm I {good_one}/100, algorithm II {good_two}/100, {elapsed:.1f}s")


def test_criterion_5_sp_reduction(capsys):
    same = 0
    for i in range(50):
        rng = make_rng(7, i)
        a, x, _ = gaussian_planted(rng, 72, 144, 18, 1)
        p = MmvProblem(a, a @ x + 0.01 * rng.standard_normal((72, 1)), 18)
        stop = StoppingRule(1e-6 * frobenius_norm(p.y), 100)
        ours = algorithm_two(p, lambda r: a.T @ r, stop)
        ref = subspace_pursuit(p, stop)
        same += (np.array_equal(ours.x_hat, ref.x_hat) and
                 ours.residual_norm_history == ref.residual_norm_history)
    report(capsys, 5, same == 50, f"bit-identical {same}/50")


def desk_run(cfg, root, axis, values, trials):
    solvers = tuple(
        SolverConfig(name, weights=str(root / f"{'mlp' if name == 'algorithm_one' else 'rnn'}_T{{t_pilots}}.bin"))
        if name.startswith("algorithm") else SolverConfig(name)
        for name in SOLVERS
    )
    cfg = dataclasses.replace(cfg, solvers=solvers,
                              sweep=SweepConfig(axis=axis, values=tuple(values), trials=trials))
    rows = run_sweep(cfg)
    failed = [r for r in rows if r.error]
    assert not failed, failed[0].error
    med = {}
    for name in SOLVERS:
        for v in values:
            med[name, v] = float(np.median([r.nmse for r in rows if r.solver == name and r.value == v]))
    return med


@pytest.mark.slow
def test_criterion_6_trained_ordering(capsys, desk_weights):
    cfg, root, seconds = desk_weights
    start = time.perf_counter()
    med = desk_run(cfg, root, "snr", [30], 100)
    elapsed = time.perf_counter() - start
    a2, sm, gl = med["algorithm_two", 30], med["somp", 30], med["glasso", 30]
    ok = a2 < sm and a2 < gl and seconds[72] <= 30 * 60 and elapsed <= 5 * 60
    report(capsys, 6, ok, f"median NMSE algorithm II {a2:.4f}, SOMP {sm:.4f}, G-LASSO {gl:.4f}, "
                          f"SP {med['sp', 30]:.4f}, algorithm I {med['algorithm_one', 30]:.4f}; "
                          f"training {seconds[72]:.0f}s, evaluation {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_trends(capsys, desk_weights):
    cfg, root, _ = desk_weights
    snr = desk_run(cfg, root, "snr", [5, 30], 50)
    pilots = desk_run(cfg, root, "t_pilots", [36, 96], 50)
    bad = [f"{s} snr" for s in SOLVERS if not snr[s, 30] < snr[s, 5]]
    bad += [f"{s} T" for s in SOLVERS if not pilots[s, 96] < pilots[s, 36]]
    detail = "; ".join(
        f"{s} {snr[s, 5]:.3f}->{snr[s, 30]:.3f} (5->30 dB), {pilots[s, 36]:.3f}->{pilots[s, 96]:.3f} (T 36->96)"
        for s in SOLVERS
    )
    report(capsys, 7, not bad, (f"violations: {', '.join(bad)}; " if bad else "") + detail)


def test_criterion_8_scene_identities(capsys):
    start = time.perf_counter()
    failures = 0
    for i in range(1000):
        rng = make_rng(8, i)
        m_tx = int(rng.choice([16, 32, 64, 144]))
        t = int(rng.integers(1, m_tx + 1))
        n_rx = int(rng.integers(1, 5))
        sparsity = int(rng.integers(1, m_tx + 1))
        snr = float(rng.choice([np.inf, 0.0, 10.0, 30.0]))
        scene = generate_scene(m_tx, n_rx, t, sparsity, snr, 35.0, rng)
        try:
            check_scene(scene, 35.0)
        except ValueError:
            failures += 1
    elapsed = time.perf_counter() - start
    report(capsys, 8, failures == 0 and elapsed < 30, f"{1000 - failures}/1000 scenes pass, {elapsed:.1f}s")


def test_criterion_9_determinism(capsys, tmp_path):
    def digest(path):
        return hashlib.sha256(path.read_bytes()).hexdigest()

    runs = []
    for attempt in range(2):
        cfg = tiny(tmp_path)
        data = cmd_gen_data(cfg)
        weights = [cmd_train(cfg, data[kind]) for kind in ("mlp", "rnn")]
        results, summary = cmd_run(cfg)
        runs.append({
            "gen-data": [digest(p) for p in data.values()],
            "train": [digest(p) for pair in weights for p in pair],
            "run": [digest(results), digest(summary)],
        })
    same = {k: runs[0][k] == runs[1][k] for k in runs[0]}
    report(capsys, 9, all(same.values()), ", ".join(f"{k} identical: {v}" for k, v in same.items()))
