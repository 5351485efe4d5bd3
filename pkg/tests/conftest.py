import numpy as np
import pytest

from patchwork_kriging.kernels import KernelSpec

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    prev = _CRITERIA.get(number)
    passed = report.passed and (prev is None or prev[1])
    _CRITERIA[number] = (title, passed, detail if detail else (prev[2] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


def rel_err(a, b):
    """Vector relative error ``|a - b| / |b|`` (absolute when ``b`` is zero)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / scale) if scale > 0 else float(np.linalg.norm(a - b))


def toy_data(n, d=2, seed=0, scale=10.0):
    """Smooth test function plus noise on ``[0, scale]^d``."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, scale, (n, d))
    y = np.sin(X[:, 0]) + np.cos(0.7 * X[:, -1]) + 0.1 * rng.standard_normal(n)
    return X, y


@pytest.fixture
def se_spec():
    return KernelSpec("se", 10.0, 1.0, 1.0)


@pytest.fixture
def exp_spec():
    return KernelSpec("exp", 10.0, 1.0, 1.0)
