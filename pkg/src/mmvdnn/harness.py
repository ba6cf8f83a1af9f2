"""Data generation, offline training and Monte-Carlo sweeps driven by a config.

Results CSV columns::

    solver,sweep_axis,sweep_value,trial,seed,nmse,iterations,wall_ms,error

The summary CSV has one row per (solver, sweep value) with the median and
mean NMSE over the trials that did not fail. Scenes depend only on the
master seed, the sweep value and the trial index, so every solver sees the
same scene at each point.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import time
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import ChannelScene, check_scene, dft_matrix, estimate_channel, generate_scene, make_pilot
from .classic import (
    MmvProblem,
    StoppingRule,
    columnwise_subspace_pursuit,
    default_stop,
    group_lasso,
    somp,
)
from .config import ExperimentConfig, SolverConfig
from .data_gen import (
    BlockPairSet,
    ResidualPairSet,
    generate_block_pairs,
    generate_residual_pairs,
    load_dataset,
    save_dataset,
)
from .dnn_solvers import algorithm_one, algorithm_two
from .neural import (
    AdamConfig,
    MlpParams,
    Params,
    RnnParams,
    adam_train,
    init_mlp,
    init_rnn,
    load_params,
    mlp_loss_and_grad,
    param_arrays,
    rnn_loss_and_grad,
    save_params,
)
from .numerics import complex_to_real_stacked, make_rng

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("solver", "sweep_axis", "sweep_value", "trial", "seed", "nmse", "iterations", "wall_ms", "error")
SUMMARY_COLUMNS = ("solver", "sweep_axis", "sweep_value", "trials", "failures", "median_nmse", "mean_nmse")


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------- shared setup


def pilot_for(cfg: ExperimentConfig, t_pilots: int) -> np.ndarray:
    s = cfg.scene
    return make_pilot(s.m_tx, t_pilots, s.power_db, make_rng(s.pilot_seed, t_pilots))


def sensing_matrix(cfg: ExperimentConfig, t_pilots: int) -> np.ndarray:
    """Real-stacked ``S^H A_T`` for the configured pilot of length ``t_pilots``."""
    return complex_to_real_stacked(pilot_for(cfg, t_pilots).conj().T @ dft_matrix(cfg.scene.m_tx))


def weights_path(template: str, t_pilots: int) -> Path:
    return Path(template.format(t_pilots=t_pilots))


def scene_seed(master: int, axis: str, value: float, trial: int) -> int:
    key = zlib.crc32(f"{axis}:{float(value)!r}".encode())
    return int(np.random.SeedSequence([master, key, trial]).generate_state(2, np.uint32).view(np.uint64)[0] >> 1)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------- gen-data


def make_datasets(cfg: ExperimentConfig, t_pilots: int | None = None,
                  which: tuple[str, ...] = ("mlp", "rnn")) -> dict[str, BlockPairSet | ResidualPairSet]:
    t = cfg.scene.t_pilots if t_pilots is None else t_pilots
    a = sensing_matrix(cfg, t)
    k = 2 * cfg.scene.sparsity
    nv = cfg.scene.n_rx
    d = cfg.data
    out: dict[str, BlockPairSet | ResidualPairSet] = {}
    if "mlp" in which:
        out["mlp"] = generate_block_pairs(
            a, k, num_problems=d.mlp_pairs, seed=d.seed, num_vectors=nv, complex_pairs=True,
            snr_db=d.snr_db, refit=d.block_refit, max_pairs=d.mlp_pairs,
        )
    if "rnn" in which:
        out["rnn"] = generate_residual_pairs(
            a, k, num_problems=d.rnn_sequences, iters=d.rnn_iters, seed=d.seed + 1, num_vectors=nv,
            complex_pairs=True, snr_db=d.snr_db, target_rule=d.target_rule, max_sequences=d.rnn_sequences,
        )
    return out


def cmd_gen_data(cfg: ExperimentConfig, t_pilots: int | None = None,
                 which: tuple[str, ...] = ("mlp", "rnn")) -> dict[str, Path]:
    t = cfg.scene.t_pilots if t_pilots is None else t_pilots
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for kind, ds in make_datasets(cfg, t, which).items():
        path = outdir / f"{kind}_T{t}.ds"
        save_dataset(ds, path)
        log.info("wrote %d %s records to %s", len(ds), kind, path)
        paths[kind] = path
    return paths


# ---------------------------------------------------------------- train


def train_network(cfg: ExperimentConfig, ds: BlockPairSet | ResidualPairSet,
                  adam: AdamConfig | None = None) -> tuple[Params, list[float]]:
    tc = cfg.train
    if isinstance(ds, BlockPairSet):
        p = init_mlp(ds.inputs.shape[1], tc.mlp_widths, ds.targets.shape[1], tc.init_seed)
        return adam_train(p, (ds.inputs, ds.targets), adam or tc.mlp, mlp_loss_and_grad)
    p = init_rnn(ds.m, tc.rnn_hidden, ds.n, tc.init_seed)
    return adam_train(p, (ds.inputs, ds.targets), adam or tc.rnn, rnn_loss_and_grad)


def cmd_train(cfg: ExperimentConfig, dataset_path: str | Path, out_path: str | Path | None = None) -> tuple[Path, Path]:
    ds = load_dataset(dataset_path)
    params, curve = train_network(cfg, ds)
    out = Path(out_path) if out_path is not None else Path(dataset_path).with_suffix(".bin")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_params(params, out)
    curve_path = out.with_suffix(".loss.csv")
    with curve_path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("epoch", "mean_loss"))
        for epoch, loss in enumerate(curve):
            w.writerow((epoch, _fmt(loss)))
    return out, curve_path


def describe_weights(path: str | Path) -> str:
    p = load_params(path)
    lines = [f"{path}: {'MLP' if isinstance(p, MlpParams) else 'RNN'}, d_in={p.d_in}, d_out={p.d_out}"]
    total = 0
    for name, arr in zip((f for f in p.__dataclass_fields__), param_arrays(p)):
        total += arr.size
        lines.append(f"  {name:5s} {str(arr.shape):14s} |w|_F={np.linalg.norm(arr):.6g}")
    lines.append(f"  parameters: {total}")
    return "\n".join(lines)


# ---------------------------------------------------------------- run


@dataclass
class Row:
    solver: str
    axis: str
    value: float
    trial: int
    seed: int
    nmse: float
    iterations: int
    wall_ms: float
    error: str = ""


def _stop_for(cfg: ExperimentConfig, problem: MmvProblem, noise_std: float) -> StoppingRule:
    if cfg.stop.gamma == "noise":
        return default_stop(problem.y, noise_std, cfg.stop.max_iterations)
    return default_stop(problem.y, None, cfg.stop.max_iterations)


def _solver_fns(cfg: ExperimentConfig, sv: SolverConfig, t_pilots: int, weights: dict):
    """Return ``[(tag, fn)]``; group LASSO yields one entry per penalty on the grid."""
    if sv.name == "somp":
        return [(None, lambda p, s: somp(p, _stop_for(cfg, p, s)))]
    if sv.name == "sp":
        return [(None, lambda p, s: columnwise_subspace_pursuit(p, _stop_for(cfg, p, s)))]
    if sv.name == "glasso":
        def make(frac):
            def run(p, s):
                lam = frac * float(np.linalg.norm(p.a.T @ p.y, axis=1).max())
                if lam <= 0:
                    lam = frac
                return group_lasso(p, lam, sv.fista_iters)
            return run
        return [(frac, make(frac)) for frac in sv.lambdas]
    path = weights_path(sv.weights, t_pilots)
    if path not in weights:
        weights[path] = load_params(path)
    net = weights[path]
    if sv.name == "algorithm_one":
        if not isinstance(net, MlpParams):
            raise HarnessError(f"{path} holds an RNN, {sv.display} needs an MLP")
        return [(None, lambda p, s: algorithm_one(p, net, _stop_for(cfg, p, s), sv.refit))]
    if not isinstance(net, RnnParams):
        raise HarnessError(f"{path} holds an MLP, {sv.display} needs an RNN")
    return [(None, lambda p, s: algorithm_two(p, net, _stop_for(cfg, p, s), sv.carry_hidden))]


def point_scene(cfg: ExperimentConfig, value: float, trial: int) -> tuple[int, ChannelScene]:
    s = cfg.scene
    axis = cfg.sweep.axis
    t = int(value) if axis == "t_pilots" else s.t_pilots
    snr = s.snr_db if axis == "t_pilots" else float(value)
    seed = scene_seed(cfg.seed, axis, value, trial)
    scene = generate_scene(s.m_tx, s.n_rx, t, s.sparsity, snr, s.power_db, make_rng(seed), pilot=pilot_for(cfg, t))
    return seed, scene


def scene_digest(scene: ChannelScene) -> str:
    h = hashlib.sha256()
    for arr in (scene.h, scene.s, scene.noise):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _timed(fn, problem_scene: ChannelScene):
    start = time.perf_counter()
    try:
        _, err, res = estimate_channel(problem_scene, fn)
        if not math.isfinite(err):
            raise HarnessError(f"non-finite NMSE {err}")
        out = (err, res.iterations, "")
    except Exception as exc:  # a failing solver is recorded, not fatal
        out = (math.nan, 0, f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return out + ((time.perf_counter() - start) * 1e3,)


def run_sweep(cfg: ExperimentConfig) -> list[Row]:
    """Every solver on every (sweep value, trial) scene, in deterministic order."""
    axis = cfg.sweep.axis
    weights: dict = {}
    rows: list[Row] = []
    for value in cfg.sweep.values:
        t = int(value) if axis == "t_pilots" else cfg.scene.t_pilots
        fns = {}
        for sv in cfg.solvers:
            try:
                fns[sv.display] = _solver_fns(cfg, sv, t, weights)
            except (OSError, ValueError, HarnessError) as exc:
                fns[sv.display] = exc
        per_point: dict[str, list[list[tuple]]] = {sv.display: [] for sv in cfg.solvers}
        seeds = []
        for trial in range(cfg.sweep.trials):
            seed, scene = point_scene(cfg, value, trial)
            check_scene(scene, cfg.scene.power_db)
            seeds.append(seed)
            for sv in cfg.solvers:
                entry = fns[sv.display]
                if isinstance(entry, Exception):
                    per_point[sv.display].append([(math.nan, 0, f"{type(entry).__name__}: {entry}", 0.0)])
                    continue
                per_point[sv.display].append([_timed(fn, scene) for _, fn in entry])
        for sv in cfg.solvers:
            trials = per_point[sv.display]
            pick = 0
            entry = fns[sv.display]
            if not isinstance(entry, Exception) and len(entry) > 1:
                # oracle tuning: the penalty with the best median NMSE at this point
                medians = []
                for i in range(len(entry)):
                    vals = [tr[i][0] for tr in trials if not tr[i][2]]
                    medians.append(np.median(vals) if vals else math.inf)
                pick = int(np.argmin(medians))
                log.info("%s at %s=%s: lambda fraction %s", sv.display, axis, value, entry[pick][0])
            for trial, tr in enumerate(trials):
                err, iters, msg, ms = tr[pick]
                rows.append(Row(sv.display, axis, float(value), trial, seeds[trial], err, iters,
                                ms if cfg.record_timing else 0.0, msg))
    return rows


def summarize(rows: list[Row]) -> list[dict]:
    groups: dict[tuple, list[Row]] = {}
    for r in rows:
        groups.setdefault((r.solver, r.axis, r.value), []).append(r)
    out = []
    for (solver, axis, value), rs in groups.items():
        ok = [r.nmse for r in rs if not r.error]
        out.append({
            "solver": solver, "sweep_axis": axis, "sweep_value": value, "trials": len(rs),
            "failures": len(rs) - len(ok),
            "median_nmse": float(np.median(ok)) if ok else math.nan,
            "mean_nmse": float(np.mean(ok)) if ok else math.nan,
        })
    return out


def rows_to_csv(rows: list[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow((r.solver, r.axis, _fmt(r.value), r.trial, r.seed, _fmt(r.nmse), r.iterations,
                    f"{r.wall_ms:.3f}", r.error))
    return buf.getvalue()


def summary_to_csv(summary: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for s in summary:
        w.writerow((s["solver"], s["sweep_axis"], _fmt(s["sweep_value"]), s["trials"], s["failures"],
                    _fmt(s["median_nmse"]), _fmt(s["mean_nmse"])))
    return buf.getvalue()


def cmd_run(cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Run the sweep; write ``results.csv`` and ``summary.csv`` into the output directory."""
    rows = run_sweep(cfg)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    results, summary = outdir / "results.csv", outdir / "summary.csv"
    results.write_text(rows_to_csv(rows))
    summary.write_text(summary_to_csv(summarize(rows)))
    return results, summary


def with_trials(cfg: ExperimentConfig, values, trials: int, axis: str = "snr") -> ExperimentConfig:
    return replace(cfg, sweep=replace(cfg.sweep, axis=axis, values=tuple(values), trials=trials))

