import math

import pytest

from bohmhybrid.ensemble import ClassicalPoint, InitialMixture, MixtureComponent
from bohmhybrid.grid import build_grid, init_gaussian
from bohmhybrid.model import Bilinear, DoubleWell, Harmonic, HybridModel


def harmonic_model(lam=0.0, wq=1.0, wc=1.0, M=1.0, m=1.0, hbar=1.0):
    return HybridModel(m, M, hbar, Harmonic(wq, m), Harmonic(wc, M), Bilinear(lam))


def free_model():
    return HybridModel(1.0, 1.0, 1.0, Harmonic(0.0), Harmonic(1.0), Bilinear(0.0))


def double_well_model(lam=0.25, wc=2.0):
    return HybridModel(1.0, 1.0, 1.0, DoubleWell(1.0, 4.0), Harmonic(wc), Bilinear(lam))


def free_sigma(t, s0, hbar=1.0, m=1.0):
    return s0 * math.sqrt(1.0 + (hbar * t / (2.0 * m * s0**2)) ** 2)


def gaussian_mixture(grid, x0=0.0, sigma=0.5, k0=0.0, X=1.0, K=0.0):
    return InitialMixture((MixtureComponent(1.0, ClassicalPoint(X, K), init_gaussian(grid, x0, sigma, k0)),))


@pytest.fixture
def grid128():
    return build_grid(-8, 8, 128)


ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and return the flag."""
    def record(label: str, ok: bool, detail: str, seconds: float | None = None) -> bool:
        took = "" if seconds is None else f" [{seconds:.1f}s]"
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}{took}"
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
