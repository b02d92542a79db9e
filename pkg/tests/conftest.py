import numpy as np
import pytest

from pitaevskii import SystemParams, TorusGrid
from pitaevskii import spectral as sp


def make_params(**overrides):
    base = dict(lam=0.1, mu=1.0, nu=0.01, alpha=0.1, p=2.0, m_i=1.0, M_i=2.0, m_f=0.5)
    base.update(overrides)
    return SystemParams(**base)


def band_limited(grid, rng, shell=None, real=False):
    """Random spectral scalar supported in |j_i| <= shell (default: the dealias mask)."""
    mask = grid.dealias_mask if shell is None else (
        (np.abs(grid.jx) <= shell) & (np.abs(grid.jy) <= shell))
    f = mask * (rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
    if real:
        f = sp.to_spectral(grid, sp.to_physical(grid, f, real=True))
    return f


@pytest.fixture
def params():
    return make_params()


@pytest.fixture
def grid16():
    return TorusGrid(16, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])


class CriterionLog:
    """Context manager recording one PASS/FAIL line per acceptance criterion."""

    def __init__(self, store):
        self.store = store

    def __call__(self, number, title):
        return _CriterionBlock(self.store, number, title)


class _CriterionBlock:
    def __init__(self, store, number, title):
        self.store, self.number, self.title = store, number, title
        self.measured = {}

    def __enter__(self):
        return self.measured

    def __exit__(self, exc_type, exc, tb):
        mark = "PASS" if exc_type is None else "FAIL"
        detail = ", ".join(f"{k} = {v:.4g}" if isinstance(v, float) else f"{k} = {v}"
                           for k, v in self.measured.items())
        line = f"{mark}  criterion {self.number:>2}: {self.title}"
        self.store[self.number] = line + (f"  [{detail}]" if detail else "")
        print(self.store[self.number])
        return False


@pytest.fixture
def criterion(request):
    return CriterionLog(request.config.stash[_CRITERIA])
