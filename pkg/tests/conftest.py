import numpy as np
import pytest

from dynkd.data import synth_blobs
from dynkd.trainer import DistillConfig, train_teacher

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_blobs():
    """4 classes, 8 dims; easy enough for a few epochs."""
    return synth_blobs(0, 4, 60, 8, 0.3), synth_blobs(1, 4, 20, 8, 0.3)


@pytest.fixture(scope="session")
def small_teacher(small_blobs):
    train, test = small_blobs
    cfg = DistillConfig(epochs=6, lr_drop_epochs=(4,), seed=3)
    params, _ = train_teacher(cfg, [8, 32, 4], train, test)
    return params
