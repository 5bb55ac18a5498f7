import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from sideinfo.dist import make_pmf  # noqa: E402


@st.composite
def pmfs(draw, max_x=3, max_y=3, min_x=1, min_y=1, allow_zeros=True):
    """Random valid pmf; zero cells allowed as long as marginals stay positive."""
    nx = draw(st.integers(min_x, max_x))
    ny = draw(st.integers(min_y, max_y))
    w = draw(st.lists(st.integers(0 if allow_zeros else 1, 20), min_size=nx * ny, max_size=nx * ny))
    p = np.array(w, dtype=float).reshape(nx, ny)
    # keep marginals positive: put a unit on the diagonal-ish cell of empty rows/cols
    for i in range(nx):
        if p[i].sum() == 0:
            p[i, i % ny] = 1
    for j in range(ny):
        if p[:, j].sum() == 0:
            p[j % nx, j] = 1
    return make_pmf(p / p.sum())


epsilons = st.sampled_from([0.0, 0.01, 0.05, 0.1, 0.2, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def report(request):
    """report(number, passed, detail): one summary line per criterion."""
    log = request.config.stash[_ACCEPTANCE]

    def record(number, passed, detail=""):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        log.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(log, key=lambda item: item[0]):
        terminalreporter.write_line(line)
