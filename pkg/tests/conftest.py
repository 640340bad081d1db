import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rtml.data import Dataset

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = Path(__file__).resolve().parent / "golden"
SNAPSHOTS = Path(__file__).resolve().parent / "snapshots"


def data_dir() -> Path:
    return Path(os.environ.get("RTML_DATA_DIR", ROOT / "data"))


def find_dataset(*names):
    """First existing file among ``names`` in the data directory, else None."""
    for name in names:
        p = data_dir() / name
        if p.exists():
            return p
    return None


def blobs(n, d=2, sep=3.0, seed=0):
    """Two Gaussian blobs, roughly balanced."""
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 2).astype(np.int64)
    x = rng.normal(size=(n, d)) + sep * y[:, None]
    return Dataset(x, y)


@pytest.fixture
def golden():
    return GOLDEN


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
