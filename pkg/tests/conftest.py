import dataclasses
import time

import pytest

from mmvdnn.config import ExperimentConfig
from mmvdnn.harness import make_datasets, train_network
from mmvdnn.neural import save_params

# desk-scale training recipe shared by the trained-model checks
DESK_MLP_PAIRS = 4000
DESK_RNN_SEQUENCES = 3000
DESK_PILOTS = (36, 72, 96)


def desk_config() -> ExperimentConfig:
    cfg = ExperimentConfig()
    data = dataclasses.replace(cfg.data, mlp_pairs=DESK_MLP_PAIRS, rnn_sequences=DESK_RNN_SEQUENCES)
    return dataclasses.replace(cfg, data=data, record_timing=False)


@pytest.fixture(scope="session")
def desk_weights(tmp_path_factory):
    """Train one MLP and one RNN per pilot length; returns (config, weights dir, seconds per T)."""
    cfg = desk_config()
    root = tmp_path_factory.mktemp("weights")
    seconds = {}
    for t in DESK_PILOTS:
        start = time.perf_counter()
        for kind, ds in make_datasets(cfg, t).items():
            params, _ = train_network(cfg, ds)
            save_params(params, root / f"{kind}_T{t}.bin")
        seconds[t] = time.perf_counter() - start
    return cfg, root, seconds
