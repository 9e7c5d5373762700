import numpy as np
import pytest

from rbfib.membrane import SurfaceOperators
from rbfib.quadrature import sphere_weights
from rbfib.rbf import build_system
from rbfib.sphere import bauer_spiral

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run long experiment tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; enable with --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


class Surface:
    """Operators and weights for one (n_d, n_s) pair, shared across tests."""

    def __init__(self, n_data, n_sample):
        self.data_sites = bauer_spiral(n_data)
        self.sample_sites = bauer_spiral(n_sample)
        self.system = build_system(self.data_sites, 7, 5)
        self.ops_data = SurfaceOperators.build(self.system, self.data_sites)
        self.ops_sample = SurfaceOperators.build(self.system, self.sample_sites)
        self.weights = sphere_weights(self.sample_sites)


@pytest.fixture(scope="session")
def surface625():
    return Surface(625, 2500)


@pytest.fixture(scope="session")
def surface225():
    return Surface(225, 900)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gradient_mismatch(energy, X, dX_data, force, dX_sample, weights, eps):
    """Compare a central difference of ``energy`` along ``dX_data`` with the
    weighted force pairing ``-sum w F . dX``.

    Returns ``(plain, normalized)``: the mismatch relative to the directional
    derivative itself, and relative to ``||F|| ||dX||`` in the weighted L2
    norm.  The first blows up whenever the directional derivative happens to
    nearly cancel; the second is the Cauchy-Schwarz bound of the pairing and
    does not.
    """
    fd = (energy(X + eps * dX_data) - energy(X - eps * dX_data)) / (2 * eps)
    an = -np.dot(weights, np.einsum("ni,ni->n", force, dX_sample))
    scale = np.sqrt(np.dot(weights, (force ** 2).sum(axis=1))
                    * np.dot(weights, (dX_sample ** 2).sum(axis=1)))
    return abs(fd - an) / abs(fd), abs(fd - an) / scale


@pytest.fixture
def report(request, capsys):
    """Print and remember one pass/fail line for an acceptance criterion, then assert it."""
    def _report(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config.stash.setdefault(ACCEPTANCE, {})[number] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
