from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import torch

DATA = Path(__file__).resolve().parent / "data"
LOL8 = DATA / "lol8" / "train.txt"
CLI4 = DATA / "lol8" / "cli4.txt"
SICE = DATA / "sice_mini"

# 2000 Adam steps per stage on 128px patches, as the overfit check demands.
DESK_ITERATIONS = 2000


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Train ian, ansn, nfm and can on the 8-pair fixture with the desk preset.

    Returns ``(workdir, config)``. Slow: roughly half an hour on one core.
    """
    from importlib.resources import as_file, files

    from bread.pipeline import PRESETS, load_config, train_all

    workdir = tmp_path_factory.mktemp("desk")
    with as_file(files("bread") / "presets" / "desk.cfg") as preset:
        config = load_config(preset)
    config = config.with_(workdir=workdir, train_manifest=LOL8, eval_manifest=LOL8)
    assert config.iterations == DESK_ITERATIONS == PRESETS["desk"]["iterations"]
    train_all(config)
    return workdir, config


@pytest.fixture(scope="session")
def desk_bundle(desk_run):
    from bread.pipeline import load_bundle

    return load_bundle(desk_run[0], variants=("none", "no_dn", "no_nfm"))


# -- acceptance summary ------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
