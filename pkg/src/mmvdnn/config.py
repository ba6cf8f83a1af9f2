"""Experiment configuration loaded from YAML.

Every constant the algorithms leave open (stopping threshold policy, Adam
settings, group-LASSO penalty grid, training-target rule, pilot seed) is a
field here. ``configs/default.yaml`` lists all of them with their defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .data_gen import TARGET_RULES
from .neural import AdamConfig

SOLVER_NAMES = ("somp", "sp", "glasso", "algorithm_one", "algorithm_two")
GAMMA_POLICIES = ("noise", "relative")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    m_tx: int = 144
    n_rx: int = 4
    t_pilots: int = 72
    sparsity: int = 18
    power_db: float = 35.0
    snr_db: float = 30.0       # used when the sweep runs over t_pilots
    pilot_seed: int = 7        # one fixed pilot per t_pilots, shared by data, training and runs


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "snr"
    values: tuple[float, ...] = (0, 5, 10, 15, 20, 25, 30, 35)
    trials: int = 100


@dataclass(frozen=True)
class SolverConfig:
    name: str
    label: str = ""
    weights: str = ""                          # learned solvers; may contain {t_pilots}
    lambdas: tuple[float, ...] = (0.003, 0.01, 0.03, 0.1, 0.3)  # glasso, fractions of max row norm of A^T Y
    fista_iters: int = 500
    refit: str = "accumulated"                 # algorithm_one
    carry_hidden: bool = True                  # algorithm_two

    @property
    def display(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class StopConfig:
    gamma: str = "noise"        # "noise": sqrt(#entries) * noise std; "relative": 1e-6 * ||Y||
    max_iterations: int = 100


@dataclass(frozen=True)
class DataConfig:
    mlp_pairs: int = 15000
    rnn_sequences: int = 12000
    rnn_iters: int = 6
    target_rule: str = "correlation"
    snr_db: float | None = 30.0  # None: noiseless training problems
    block_refit: str = "accumulated"
    seed: int = 11


@dataclass(frozen=True)
class TrainConfig:
    mlp_widths: tuple[int, int, int] = (256, 256, 256)
    rnn_hidden: int = 1024
    init_seed: int = 3
    mlp: AdamConfig = AdamConfig()
    rnn: AdamConfig = AdamConfig()


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "results"
    record_timing: bool = True
    scene: SceneConfig = SceneConfig()
    sweep: SweepConfig = SweepConfig()
    stop: StopConfig = StopConfig()
    solvers: tuple[SolverConfig, ...] = (
        SolverConfig("somp"),
        SolverConfig("sp"),
        SolverConfig("glasso"),
        SolverConfig("algorithm_one", weights="weights/mlp_T{t_pilots}.bin"),
        SolverConfig("algorithm_two", weights="weights/rnn_T{t_pilots}.bin"),
    )
    data: DataConfig = DataConfig()
    train: TrainConfig = TrainConfig()

    def validate(self) -> ExperimentConfig:
        s = self.scene
        if min(s.m_tx, s.n_rx, s.t_pilots, s.sparsity) < 1:
            raise ConfigError("scene dimensions and sparsity must be positive")
        if s.sparsity > s.m_tx or s.t_pilots > s.m_tx:
            raise ConfigError("need sparsity <= m_tx and t_pilots <= m_tx")
        if self.sweep.axis not in ("snr", "t_pilots"):
            raise ConfigError(f"sweep.axis must be 'snr' or 't_pilots', got {self.sweep.axis!r}")
        if not self.sweep.values:
            raise ConfigError("sweep.values is empty")
        if self.sweep.trials < 1:
            raise ConfigError(f"sweep.trials must be >= 1, got {self.sweep.trials}")
        if self.sweep.axis == "t_pilots" and any(int(v) != v or not 1 <= v <= s.m_tx for v in self.sweep.values):
            raise ConfigError("t_pilots sweep values must be integers in 1..m_tx")
        if not self.solvers:
            raise ConfigError("solver list is empty")
        labels = [sv.display for sv in self.solvers]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate solver labels in {labels}")
        for sv in self.solvers:
            if sv.name not in SOLVER_NAMES:
                raise ConfigError(f"unknown solver {sv.name!r}; choose from {SOLVER_NAMES}")
            if sv.name.startswith("algorithm_") and not sv.weights:
                raise ConfigError(f"solver {sv.display} needs a weights path")
            if sv.name == "glasso" and (not sv.lambdas or min(sv.lambdas) <= 0):
                raise ConfigError("glasso lambdas must be a non-empty list of positive values")
            if sv.refit not in ("accumulated", "single"):
                raise ConfigError(f"refit must be 'accumulated' or 'single', got {sv.refit!r}")
        if self.stop.gamma not in GAMMA_POLICIES:
            raise ConfigError(f"stop.gamma must be one of {GAMMA_POLICIES}")
        if self.stop.max_iterations < 1:
            raise ConfigError("stop.max_iterations must be >= 1")
        d = self.data
        if d.target_rule not in TARGET_RULES:
            raise ConfigError(f"data.target_rule must be one of {TARGET_RULES}")
        if d.mlp_pairs < 1 or d.rnn_sequences < 1 or d.rnn_iters < 1:
            raise ConfigError("data counts must be positive")
        if d.block_refit not in ("accumulated", "single"):
            raise ConfigError("data.block_refit must be 'accumulated' or 'single'")
        if len(self.train.mlp_widths) != 3 or min(self.train.mlp_widths) < 1 or self.train.rnn_hidden < 1:
            raise ConfigError("train.mlp_widths needs three positive widths and rnn_hidden must be positive")
        return self

    def with_overrides(self, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
        out = self
        if seed is not None:
            out = dataclasses.replace(out, seed=seed)
        if output_dir is not None:
            out = dataclasses.replace(out, output_dir=output_dir)
        return out


def _build(cls, raw: Any, where: str):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(raw).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if isinstance(getattr(cls, key, None), AdamConfig):
            try:
                kwargs[key] = _build(AdamConfig, value, f"{where}.{key}")
            except ValueError as exc:
                raise ConfigError(f"{where}.{key}: {exc}") from exc
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = dict(raw)
    sections = {
        "scene": SceneConfig, "sweep": SweepConfig, "stop": StopConfig,
        "data": DataConfig, "train": TrainConfig,
    }
    kwargs: dict[str, Any] = {}
    for key, cls in sections.items():
        if key in raw:
            kwargs[key] = _build(cls, raw.pop(key), key)
    if "solvers" in raw:
        entries = raw.pop("solvers")
        if not isinstance(entries, list):
            raise ConfigError("solvers must be a list")
        kwargs["solvers"] = tuple(_build(SolverConfig, e, f"solvers[{i}]") for i, e in enumerate(entries))
    top = {"seed", "output_dir", "record_timing"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kwargs.update(raw)
    try:
        return ExperimentConfig(**kwargs).validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(raw or {})


def config_to_dict(cfg: ExperimentConfig) -> dict:
    def plain(x):
        if dataclasses.is_dataclass(x):
            return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, tuple):
            return [plain(v) for v in x]
        return x

    return plain(cfg)
