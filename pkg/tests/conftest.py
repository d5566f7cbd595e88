"""Shared fixtures: a CLI workspace with a simulated dataset and a short
default-architecture training run, built once per session."""

import json
import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from camcolor.cli import main
from camcolor.imgio import write_image_16bit
from camcolor.pipesim import random_canonical_image

TRAIN_CONFIG = {
    "steps": 50,
    "log_every": 10,
    "batch_size": 8,
    "crop_min": 48,
    "crop_out": 64,
    "seed": 0,
    "learning_rate": 1e-3,
}


@dataclass
class CliWorkspace:
    root: Path
    raw_dir: Path
    dataset: Path
    config: Path
    weights: Path
    log: Path
    train_seconds: float


@pytest.fixture(scope="session")
def cli_workspace(tmp_path_factory) -> CliWorkspace:
    root = tmp_path_factory.mktemp("cli")
    raw_dir = root / "raws"
    for s in range(4):
        write_image_16bit(raw_dir / f"{s:04d}.png",
                          random_canonical_image(s, 96, 96))
    dataset = root / "dataset"
    rc = main(["simulate", "--raw-dir", str(raw_dir), "--pipelines", "3",
               "--seed", "0", "--out", str(dataset)])
    assert rc == 0

    config = root / "train_config.json"
    config.write_text(json.dumps(TRAIN_CONFIG))
    weights = root / "weights.ccw"
    log = root / "metrics.csv"
    start = time.monotonic()
    rc = main(["train", "--data", str(dataset), "--config", str(config),
               "--out", str(weights), "--log", str(log)])
    elapsed = time.monotonic() - start
    assert rc == 0
    return CliWorkspace(root=root, raw_dir=raw_dir, dataset=dataset,
                        config=config, weights=weights, log=log,
                        train_seconds=elapsed)
