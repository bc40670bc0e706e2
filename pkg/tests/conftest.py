import numpy as np
import pytest

from edgebandit.slot import SlotObservation


def make_obs(owner, weights=None, contexts=None, n_sbs=None, t=1, dims=2):
    """Non-overlapping observation where user m connects to SBS ``owner[m]``."""
    owner = np.asarray(owner, dtype=int)
    M = len(owner)
    N = n_sbs if n_sbs is not None else (int(owner.max()) + 1 if M else 1)
    conn = np.zeros((M, N), dtype=bool)
    conn[np.arange(M), owner] = True
    w = np.zeros((M, N))
    w[np.arange(M), owner] = 1.0 if weights is None else np.asarray(weights, dtype=float)
    ctx = np.full((M, dims), 0.5) if contexts is None else np.asarray(contexts, dtype=float)
    return SlotObservation(t, ctx, conn.astype(float), conn, w)


def random_obs(rng, N, M, dims=2, t=1):
    owner = rng.integers(0, N, size=M)
    return make_obs(owner, rng.uniform(0.05, 0.5, size=M), rng.random((M, dims)), N, t, dims)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance criteria summary ------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {title}" + (f" ({detail})" if detail else ""))
