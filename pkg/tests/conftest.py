import numpy as np
import pytest

from banditware.core import HardwareConfig


@pytest.fixture
def ndp_hardware():
    """Three NDP hardware tuples: (cpus, memory GiB)."""
    return (HardwareConfig("H0", 2, 16), HardwareConfig("H1", 3, 24), HardwareConfig("H2", 4, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def ridge_oracle(X, y, lam):
    """Minimizer of |y - Xw - b|^2 + lam |w|^2 computed without an SVD filter.

    The intercept is unpenalized, so the problem is solved on centered data.
    The ridge part is an ordinary least-squares solve of the stacked system
    [Xc; sqrt(lam) I] w = [yc; 0]; the result is then projected onto the row
    space of Xc with the pseudo-inverse projector pinv(Xc) Xc, which removes
    the rounding noise that directions of exact rank deficiency pick up.
    With lam = 0 this is pinv(Xc) yc, the Moore-Penrose minimum-norm answer.
    """
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, m = X.shape
    xm, ym = X.mean(0), y.mean()
    Xc, yc = X - xm, y - ym
    pinv = np.linalg.pinv(Xc, rcond=max(n, m) * np.finfo(float).eps)
    if lam == 0:
        w = pinv @ yc
    else:
        stacked = np.vstack([Xc, np.sqrt(lam) * np.eye(m)])
        w = np.linalg.lstsq(stacked, np.r_[yc, np.zeros(m)], rcond=None)[0]
        w = (pinv @ Xc) @ w
    return w, ym - xm @ w


def brute_force_select(estimates, hardware, t_r, t_s):
    """Selection rule written out longhand: limit, tolerated set, cheapest."""
    fastest = estimates[0]
    for e in estimates[1:]:
        if e < fastest:
            fastest = e
    limit = (1 + t_r) * fastest + t_s
    best = None
    for i, h in enumerate(hardware):
        if not (estimates[i] <= limit or estimates[i] == fastest):
            continue
        if h.cost_weight is not None:
            key = (h.cost_weight, 0.0, estimates[i], h.id)
        else:
            key = (h.cpus, h.memory_gb, estimates[i], h.id)
        if best is None or key < best[0]:
            best = (key, h.id)
    return best[1]


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
