import numpy as np
import pytest
import scipy.sparse as sp

from ssur.data import cell_index

# Worked example with three responses and four predictors: x1, x2 linked to
# y1, y2 and x3, x4 linked to y3.  Pairs are (predictor, response), 1-based.
TOY_M, TOY_P = 3, 4
TOY_EDGES = [
    ((1, 1), (2, 1)), ((1, 1), (1, 2)), ((1, 1), (2, 2)),
    ((2, 1), (1, 2)), ((2, 1), (2, 2)), ((1, 2), (2, 2)),
    ((3, 3), (4, 3)),
]


def toy_matrix() -> np.ndarray:
    G = np.zeros((TOY_M * TOY_P, TOY_M * TOY_P))
    for (k, j), (k2, j2) in TOY_EDGES:
        a, b = cell_index(k - 1, j - 1, TOY_P), cell_index(k2 - 1, j2 - 1, TOY_P)
        G[a, b] = G[b, a] = 1
    return G


@pytest.fixture
def toy_G():
    return sp.csr_matrix(toy_matrix())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def mc_check(samples, expected, n_se=3.0):
    """Assert sample means lie within ``n_se`` Monte Carlo standard errors of ``expected``."""
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    z = np.abs(mean - expected) / np.where(se > 0, se, np.inf)
    assert np.all(z < n_se), f"max z-score {z.max():.2f}"


# Acceptance reporting: tests marked ``criterion(k)`` add one line each to the terminal summary.
ACCEPTANCE_DETAILS: dict = {}
_acceptance_lines: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    k = mark.args[0]
    status = "PASS" if rep.passed else "FAIL"
    detail = ACCEPTANCE_DETAILS.get(k, "")
    _acceptance_lines[k] = f"criterion {k:>2}: {status}  {mark.args[1]}  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_acceptance_lines):
            terminalreporter.write_line(_acceptance_lines[k])
