import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gcpstereo.imageio import normalize  # noqa: E402
from gcpstereo.net import TrainConfig, train  # noqa: E402
from gcpstereo.synthetic import random_dot_dataset  # noqa: E402

# shared desk-scale training run: 200 stereograms of 32x32, 20 epochs
TRAIN_PAIRS = 200
TRAIN_EPOCHS = 20
SYNTH_SHAPE = (32, 32)
SYNTH_MAX_DISP = 8


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _normalized(frames):
    return [(normalize(l), normalize(r), gt) for l, r, gt in frames]


@pytest.fixture(scope="session")
def trained_run():
    """``(params, curve, seconds)`` for the shared training run."""
    import time

    frames = random_dot_dataset(TRAIN_PAIRS, SYNTH_SHAPE, SYNTH_MAX_DISP, seed=0)
    t0 = time.perf_counter()
    params, curve = train(_normalized(frames), TrainConfig(epochs=TRAIN_EPOCHS, seed=0))
    return params, curve, time.perf_counter() - t0


@pytest.fixture(scope="session")
def heldout_frames():
    return random_dot_dataset(10, SYNTH_SHAPE, SYNTH_MAX_DISP, seed=777)


# one summary line per acceptance criterion, whatever the outcome
_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(item.user_properties).get("detail", "")
        if report.skipped and not detail and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _CRITERIA.append((marker.args[0], report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _CRITERIA:
        word = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"{word}  {name}: {detail}")
