import numpy as np
import pytest
from scipy.signal import correlate2d

from sysc import gallery


def conv1d(x, w):
    """Out(c) = sum_q x(c + q) w(q)."""
    return np.correlate(np.asarray(x), np.asarray(w), mode="valid")


def conv1d_strided(x, w, stride):
    x, w = np.asarray(x), np.asarray(w)
    n = (len(x) - len(w)) // stride + 1
    return np.array([x[stride * c:stride * c + len(w)] @ w for c in range(n)])


def conv2d(x, w):
    """Out(c, r) = sum_{p,q} x(c + q, r + p) w(q, p)."""
    return correlate2d(np.asarray(x), np.asarray(w), mode="valid")


ORACLES = {
    "sbm1d": conv1d, "bsm1d": conv1d, "fsm1d": conv1d, "bfs1d": conv1d,
    "ffs1d": conv1d, "fbs1d": conv1d,
    "fbs1d_stride2": lambda x, w: conv1d_strided(x, w, 2),
    "sbm2d": conv2d, "fbs2d": conv2d,
}

SMALL = {"CC": 2}       # two threads keep every design fast


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def designs():
    return {k: gallery.instantiate(k, SMALL) for k in gallery.KEYS}


# acceptance outcomes: criterion number -> (title, passed, detail)
RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, ok, detail = RESULTS[n]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}"
                                    + (f" ({detail})" if detail else ""))
