"""Uniform periodic grid and wavefunctions on it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Harmonic, HybridModel

BOUNDARY_TOL = 1e-6


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float
    x_max: float
    count: int

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max) and self.x_max > self.x_min):
            raise GridError(f"degenerate interval [{self.x_min}, {self.x_max}]")
        n = self.count
        if not isinstance(n, (int, np.integer)) or n < 64 or (n & (n - 1)) != 0:
            raise GridError(f"grid count must be a power of two >= 64, got {n}")

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / self.count

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.spacing * np.arange(self.count)

    @property
    def momentum_values(self) -> np.ndarray:
        """Wavenumbers in discrete-Fourier order (0, dk, 2dk, ..., -dk)."""
        return 2.0 * np.pi * np.fft.fftfreq(self.count, d=self.spacing)

    def contains(self, y) -> np.ndarray:
        return (np.asarray(y) >= self.x_min) & (np.asarray(y) <= self.x_max - self.spacing)

    def describe(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "count": self.count}


def build_grid(x_min: float, x_max: float, count: int) -> SpatialGrid:
    return SpatialGrid(float(x_min), float(x_max), int(count))


def boundary_ratio(amplitudes: np.ndarray) -> np.ndarray:
    """Largest edge magnitude relative to the peak, per row."""
    a = np.abs(amplitudes)
    edge = np.maximum(a[..., 0], a[..., -1])
    return edge / np.max(a, axis=-1)


@dataclass(frozen=True, eq=False)
class WaveFunction:
    grid: SpatialGrid
    amplitudes: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def boundary_ok(self) -> bool:
        return bool(boundary_ratio(self.amplitudes) < BOUNDARY_TOL)

    def distance(self, other: "WaveFunction") -> float:
        diff = self.amplitudes - other.amplitudes
        return float(np.sqrt(np.sum(np.abs(diff) ** 2) * self.grid.spacing))


def normalized(grid: SpatialGrid, amplitudes: np.ndarray) -> WaveFunction:
    amp = np.asarray(amplitudes, dtype=complex)
    amp = amp / np.sqrt(np.sum(np.abs(amp) ** 2) * grid.spacing)
    return WaveFunction(grid, amp)


def init_gaussian(grid: SpatialGrid, x0: float, sigma: float, k0: float = 0.0) -> WaveFunction:
    """Gaussian packet with position spread ``sigma`` and mean wavenumber ``k0``."""
    if not sigma > 2.0 * grid.spacing:
        raise GridError(f"sigma={sigma} under-resolved (spacing {grid.spacing})")
    x = grid.points
    amp = np.exp(-((x - x0) ** 2) / (4.0 * sigma**2) + 1j * k0 * x)
    if not x[0] < x0 < x[-1] or boundary_ratio(amp) >= BOUNDARY_TOL:
        raise GridError(f"packet at {x0} with width {sigma} touches the grid boundary")
    return normalized(grid, amp)


def hermite_functions(x: np.ndarray, alpha: float, nmax: int) -> np.ndarray:
    """Normalized oscillator eigenfunctions phi_0..phi_nmax, alpha = m*omega/hbar."""
    out = np.empty((nmax + 1, x.size))
    out[0] = (alpha / np.pi) ** 0.25 * np.exp(-0.5 * alpha * x**2)
    if nmax >= 1:
        out[1] = np.sqrt(2.0 * alpha) * x * out[0]
    for n in range(2, nmax + 1):
        out[n] = np.sqrt(2.0 / n) * np.sqrt(alpha) * x * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out


def init_eigenstate(grid: SpatialGrid, model: HybridModel, n: int) -> WaveFunction:
    if not isinstance(model.v_q, Harmonic):
        raise GridError("eigenstates are only available for a harmonic quantum well")
    if n not in range(5):
        raise GridError(f"quantum number must be in 0..4, got {n}")
    alpha = model.m * model.v_q.omega / model.hbar
    phi = hermite_functions(grid.points, alpha, n)[n]
    grid_norm = np.sum(phi**2) * grid.spacing
    # a resolved state is already normalized by the grid quadrature
    if abs(grid_norm - 1.0) > 1e-8 or boundary_ratio(phi) >= BOUNDARY_TOL:
        raise GridError(f"eigenstate n={n} is not resolved on this grid")
    return normalized(grid, phi)


def superposition(grid: SpatialGrid, model: HybridModel, coefficients: dict[int, complex]) -> WaveFunction:
    """Normalized linear combination of oscillator eigenstates."""
    amp = np.zeros(grid.count, dtype=complex)
    for level, c in coefficients.items():
        amp = amp + c * init_eigenstate(grid, model, level).amplitudes
    return normalized(grid, amp)
