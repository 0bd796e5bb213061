import sys
from pathlib import Path

import numpy as np
import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

DATA = TESTS / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


@pytest.fixture(scope="session")
def scene_paths():
    return sorted((DATA / "scenes").glob("night_*.png"))


def two_region(seed, size=32):
    """Sharp vertical color boundary with a bright right half and mild noise."""
    r = np.random.default_rng(seed)
    img = np.empty((size, size, 3))
    split = int(r.integers(size // 3, 2 * size // 3))
    img[:, :split] = r.uniform(0.05, 0.35, 3)
    img[:, split:] = r.uniform(0.82, 0.98, 3)
    img += r.normal(0, 0.01, img.shape)
    img = np.clip(img, 0, 1)
    return img, (img.max(axis=2) > 0.8).astype(float)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
