"""Shared fixtures: one tiny trained pipeline reused by CLI/service tests."""

import pytest

from tis.cli import main

TINY_CFG = """\
extents = 16 16 16
organ_radius = 4 5
lesion_radius = 1.5 2.5
train_cases = 2
eval_cases = 2
feature_width = 8
stem_width = 4
layers = 1
heads = 2
ffn_width = 16
ce_hidden = 8
window = 16 16 16
encoder_epochs = 2
refiner_epochs = 2
clicks_max = 3
disturbance = 2
eval_clicks = 2
"""


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """(config path, artifact dir) with data + trained tiny checkpoints."""
    root = tmp_path_factory.mktemp("tiny")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    out = root / "run"
    base = ["--config", str(cfg), "--seed", "7", "--out-dir", str(out)]
    assert main(["gen-data", *base]) == 0
    assert main(["train-encoder", *base]) == 0
    assert main(["train-refiner", *base]) == 0
    return cfg, out
