import csv
import dataclasses
import hashlib
from pathlib import Path

import numpy as np
import pytest
import yaml

from mmvdnn.cli import main
from mmvdnn.config import ConfigError, ExperimentConfig, config_from_dict, config_to_dict, load_config
from mmvdnn.harness import (
    RESULT_COLUMNS,
    cmd_gen_data,
    cmd_run,
    cmd_train,
    point_scene,
    run_sweep,
    scene_digest,
    scene_seed,
    summarize,
)

ROOT = Path(__file__).resolve().parents[1]

TINY = {
    "seed": 1,
    "record_timing": False,
    "scene": {"m_tx": 32, "n_rx": 2, "t_pilots": 16, "sparsity": 3},
    "sweep": {"axis": "snr", "values": [10, 30], "trials": 3},
    "data": {"mlp_pairs": 60, "rnn_sequences": 40},
    "train": {"mlp_widths": [16, 16, 16], "rnn_hidden": 16, "mlp": {"epochs": 2}, "rnn": {"epochs": 2}},
}


def tiny(tmp_path, **changes):
    raw = {**TINY, "output_dir": str(tmp_path / "out")}
    raw.update(changes)
    raw.setdefault("solvers", [
        {"name": "somp"}, {"name": "sp"}, {"name": "glasso", "fista_iters": 100},
        {"name": "algorithm_one", "weights": str(tmp_path / "out" / "mlp_T{t_pilots}.bin")},
        {"name": "algorithm_two", "weights": str(tmp_path / "out" / "rnn_T{t_pilots}.bin")},
    ])
    return config_from_dict(raw)


def sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------- config


def test_default_config_file_matches_builtin_defaults():
    cfg = load_config(ROOT / "configs" / "default.yaml")
    assert config_to_dict(cfg) == config_to_dict(ExperimentConfig())
    assert cfg.data.mlp_pairs == 15000 and cfg.data.rnn_sequences == 12000
    assert cfg.sweep.values == (0, 5, 10, 15, 20, 25, 30, 35)


def test_t_sweep_example_config_loads():
    cfg = load_config(ROOT / "configs" / "pilot_sweep.yaml")
    assert cfg.sweep.axis == "t_pilots"
    assert cfg.sweep.values == (24, 36, 48, 60, 72, 84, 96)


@pytest.mark.parametrize("raw, match", [
    ({"sweep": {"trials": 0}}, "trials"),
    ({"sweep": {"values": []}}, "empty"),
    ({"sweep": {"axis": "power"}}, "axis"),
    ({"solvers": []}, "solver list"),
    ({"solvers": [{"name": "magic"}]}, "unknown solver"),
    ({"solvers": [{"name": "algorithm_two"}]}, "weights"),
    ({"stop": {"gamma": "whatever"}}, "gamma"),
    ({"data": {"target_rule": "x"}}, "target_rule"),
    ({"scene": {"sparsity": 200}}, "sparsity"),
    ({"bogus": 1}, "unknown keys"),
    ({"scene": {"antennas": 3}}, "unknown keys"),
    ({"train": {"rnn": {"beta1": 2.0}}}, "beta"),
])
def test_config_validation(raw, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(raw)


def test_config_round_trips_through_yaml(tmp_path):
    cfg = tiny(tmp_path)
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(config_to_dict(cfg)))
    assert load_config(path) == cfg


# ---------------------------------------------------------------- seeds and scenes


def test_scene_seed_depends_on_all_coordinates():
    base = scene_seed(0, "snr", 10.0, 0)
    assert base == scene_seed(0, "snr", 10, 0)
    assert len({base, scene_seed(1, "snr", 10.0, 0), scene_seed(0, "snr", 15.0, 0),
                scene_seed(0, "snr", 10.0, 1), scene_seed(0, "t_pilots", 10.0, 0)}) == 5


def test_scene_is_shared_across_solvers(tmp_path):
    cfg = tiny(tmp_path)
    seed1, s1 = point_scene(cfg, 30, 2)
    seed2, s2 = point_scene(cfg, 30, 2)
    assert seed1 == seed2 and scene_digest(s1) == scene_digest(s2)


def test_t_axis_uses_matching_pilot_length(tmp_path):
    cfg = tiny(tmp_path, sweep={"axis": "t_pilots", "values": [8, 16], "trials": 1})
    _, sc = point_scene(cfg, 8, 0)
    assert sc.s.shape == (32, 8) and sc.snr_db == cfg.scene.snr_db


# ---------------------------------------------------------------- run


def test_minimal_run_one_row_one_summary(tmp_path):
    cfg = tiny(tmp_path, sweep={"values": [20], "trials": 1}, solvers=[{"name": "somp"}])
    results, summary = cmd_run(cfg)
    rows = list(csv.DictReader(results.open()))
    assert len(rows) == 1 and tuple(rows[0]) == RESULT_COLUMNS
    assert rows[0]["error"] == ""
    assert len(list(csv.DictReader(summary.open()))) == 1


def test_paired_design_rows_share_seed(tmp_path):
    cfg = tiny(tmp_path, solvers=[{"name": "somp"}, {"name": "sp"}, {"name": "glasso", "fista_iters": 50}])
    rows = run_sweep(cfg)
    by_point = {}
    for r in rows:
        by_point.setdefault((r.value, r.trial), set()).add(r.seed)
    assert all(len(s) == 1 for s in by_point.values())
    assert len(rows) == 2 * 3 * 3


def test_summary_is_recomputable_from_rows(tmp_path):
    cfg = tiny(tmp_path, solvers=[{"name": "somp"}, {"name": "sp"}])
    rows = run_sweep(cfg)
    for s in summarize(rows):
        vals = [r.nmse for r in rows if r.solver == s["solver"] and r.value == s["sweep_value"]]
        assert s["median_nmse"] == float(np.median(vals))
        assert s["mean_nmse"] == float(np.mean(vals))


def test_missing_weights_are_recorded_per_row(tmp_path):
    cfg = tiny(tmp_path, sweep={"values": [20], "trials": 2},
               solvers=[{"name": "somp"}, {"name": "algorithm_two", "weights": str(tmp_path / "none.bin")}])
    rows = run_sweep(cfg)
    bad = [r for r in rows if r.solver == "algorithm_two"]
    assert len(bad) == 2 and all("not found" in r.error for r in bad)
    assert all(not r.error for r in rows if r.solver == "somp")


def test_glasso_lambda_is_tuned_per_point(tmp_path):
    cfg = tiny(tmp_path, sweep={"values": [30], "trials": 3},
               solvers=[{"name": "glasso", "lambdas": [0.9]}, {"name": "glasso", "label": "tuned",
                                                              "lambdas": [0.9, 0.03]}])
    rows = run_sweep(cfg)
    fixed = np.median([r.nmse for r in rows if r.solver == "glasso"])
    tuned = np.median([r.nmse for r in rows if r.solver == "tuned"])
    assert tuned <= fixed


def test_timing_column(tmp_path):
    cfg = dataclasses.replace(tiny(tmp_path, sweep={"values": [20], "trials": 1}, solvers=[{"name": "somp"}]),
                              record_timing=True)
    assert run_sweep(cfg)[0].wall_ms > 0


# ---------------------------------------------------------------- end to end


def test_pipeline_is_byte_deterministic(tmp_path):
    digests = []
    for attempt in range(2):
        cfg = tiny(tmp_path)
        cfg = dataclasses.replace(cfg, output_dir=str(tmp_path / "out"))
        paths = cmd_gen_data(cfg)
        w_mlp, c_mlp = cmd_train(cfg, paths["mlp"])
        w_rnn, c_rnn = cmd_train(cfg, paths["rnn"])
        res, summ = cmd_run(cfg)
        digests.append([sha(p) for p in (paths["mlp"], paths["rnn"], w_mlp, w_rnn, c_mlp, res, summ)])
        rows = list(csv.DictReader(res.open()))
        assert all(r["error"] == "" for r in rows), rows
    assert digests[0] == digests[1]
    curve = list(csv.reader(c_rnn.open()))
    assert curve[0] == ["epoch", "mean_loss"] and len(curve) == 3


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = tmp_path / "c.yaml"
    cfg_path.write_text(yaml.safe_dump({**TINY, "sweep": {"trials": 0}}))
    assert main(["run", "-c", str(cfg_path)]) == 1
    assert main(["run", "-c", str(tmp_path / "missing.yaml")]) == 1
    assert main(["train", "-c", str(cfg_path).replace("c.yaml", "x.yaml"), str(tmp_path / "nope.ds")]) == 1
    ok = tmp_path / "ok.yaml"
    ok.write_text(yaml.safe_dump({**TINY, "solvers": [{"name": "somp"}]}))
    assert main(["train", "-c", str(ok), str(tmp_path / "nope.ds")]) == 2
    assert main(["inspect-weights", str(tmp_path / "nope.bin")]) == 2
    out = tmp_path / "o"
    assert main(["run", "-c", str(ok), "-o", str(out), "--seed", "5"]) == 0
    rows = list(csv.DictReader((out / "results.csv").open()))
    assert rows and all(r["seed"] == str(scene_seed(5, "snr", float(r["sweep_value"]), int(r["trial"])))
                        for r in rows)


def test_cli_gen_train_inspect(tmp_path, capsys):
    ok = tmp_path / "ok.yaml"
    ok.write_text(yaml.safe_dump({**TINY, "solvers": [{"name": "somp"}]}))
    out = tmp_path / "o"
    assert main(["gen-data", "-c", str(ok), "-o", str(out), "--only", "rnn"]) == 0
    assert (out / "rnn_T16.ds").exists() and not (out / "mlp_T16.ds").exists()
    assert main(["train", "-c", str(ok), str(out / "rnn_T16.ds")]) == 0
    capsys.readouterr()
    assert main(["inspect-weights", str(out / "rnn_T16.bin")]) == 0
    text = capsys.readouterr().out
    assert "RNN" in text and "w_hh" in text
