"""Fully quantum reference: both coordinates on a 2D grid.

The "classical" particle becomes a heavy quantum particle of mass M. Used
as ground truth for short-time comparisons with the hybrid scheme.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .ensemble import ClassicalPoint, ensemble_observables, evolve_steps
from .grid import BOUNDARY_TOL, SpatialGrid, WaveFunction
from .model import Harmonic, HybridModel
from .quantum import NORM_STEP_TOL, PropagationError


class MappingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WaveFunction2D:
    grid_q: SpatialGrid
    grid_c: SpatialGrid
    amplitudes: np.ndarray  # [j, k] <-> (x_j, X_k)

    @property
    def cell(self) -> float:
        return self.grid_q.spacing * self.grid_c.spacing

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.cell)

    @property
    def boundary_ok(self) -> bool:
        a = np.abs(self.amplitudes)
        edges = max(a[0].max(), a[-1].max(), a[:, 0].max(), a[:, -1].max())
        return bool(edges < BOUNDARY_TOL * a.max())


def heavy_ground_width(model: HybridModel) -> float:
    """Position spread of the heavy oscillator ground state, sqrt(hbar / (2 M omega_c))."""
    return float(np.sqrt(model.hbar / (2.0 * model.M * model.v_c.omega)))


def product_state(psi: WaveFunction, grid_c: SpatialGrid, X0: float, K0: float, width: float,
                  hbar: float = 1.0) -> WaveFunction2D:
    """psi(x) times a Gaussian in X centred at X0 with mean momentum K0."""
    X = grid_c.points
    g = np.exp(-((X - X0) ** 2) / (4.0 * width**2) + 1j * (K0 / hbar) * X)
    g /= np.sqrt(np.sum(np.abs(g) ** 2) * grid_c.spacing)
    amp = np.outer(psi.amplitudes, g)
    out = WaveFunction2D(psi.grid, grid_c, amp / np.sqrt(np.sum(np.abs(amp) ** 2) * psi.grid.spacing * grid_c.spacing))
    if not out.boundary_ok:
        raise MappingError("initial 2D state touches the grid boundary")
    return out


def _phases(psi: WaveFunction2D, model: HybridModel, dt: float):
    x = psi.grid_q.points[:, None]
    X = psi.grid_c.points[None, :]
    V = model.v_q.value(x) + model.v_c.value(X) + model.v_int.value(x, X)
    kick = np.exp(-1j * V * (0.5 * dt / model.hbar))
    kq = psi.grid_q.momentum_values[:, None]
    kc = psi.grid_c.momentum_values[None, :]
    kin = np.exp(-1j * model.hbar * dt * (kq**2 / (2.0 * model.m) + kc**2 / (2.0 * model.M)))
    return kick, kin


def propagate_2d(psi: WaveFunction2D, dt: float, model: HybridModel, steps: int = 1) -> WaveFunction2D:
    """``steps`` Strang steps of the full two-particle Hamiltonian."""
    kick, kin = _phases(psi, model, dt)
    amp = psi.amplitudes
    for _ in range(steps):
        before = np.sum(np.abs(amp) ** 2)
        amp = kick * sfft.ifft2(kin * sfft.fft2(kick * amp))
        drift = abs(np.sum(np.abs(amp) ** 2) - before) * psi.cell
        if not drift <= NORM_STEP_TOL:
            raise PropagationError(f"2D norm drift {drift:.3g} in one step")
    return WaveFunction2D(psi.grid_q, psi.grid_c, amp)


def exact_marginals(psi: WaveFunction2D, hbar: float = 1.0) -> dict:
    dens = np.abs(psi.amplitudes) ** 2
    x = psi.grid_q.points
    X = psi.grid_c.points
    px = dens.sum(axis=1) * psi.grid_c.spacing
    pX = dens.sum(axis=0) * psi.grid_q.spacing
    spec = sfft.fft(psi.amplitudes, axis=1)
    pk = (np.abs(spec) ** 2).sum(axis=0) * psi.grid_q.spacing * psi.grid_c.spacing / psi.grid_c.count
    kc = psi.grid_c.momentum_values.copy()
    kc[psi.grid_c.count // 2] = 0.0
    rho_q = psi.amplitudes @ psi.amplitudes.conj().T * psi.grid_c.spacing
    return {
        "x": float(px @ x * psi.grid_q.spacing),
        "x2": float(px @ x**2 * psi.grid_q.spacing),
        "X": float(pX @ X * psi.grid_c.spacing),
        "X2": float(pX @ X**2 * psi.grid_c.spacing),
        "P_X": float(hbar * pk @ kc),
        "rho_q": rho_q,
    }


def reduced_purity(rho_q: np.ndarray, spacing: float) -> float:
    return float(np.sum(np.abs(rho_q) ** 2) * spacing**2)


def normal_mode_solution(model: HybridModel, x0: float, p0: float, X0: float, P0: float, t) -> tuple:
    """Closed-form (x(t), X(t)) for two bilinearly coupled harmonic oscillators.

    In mass-weighted coordinates q = (sqrt(m) x, sqrt(M) X) the equations are
    q'' = -W q with W = [[wq^2, c], [c, wc^2]], c = lambda / sqrt(m M).
    """
    if not (isinstance(model.v_q, Harmonic) and isinstance(model.v_c, Harmonic)):
        raise MappingError("normal modes need harmonic wells on both sides")
    wq2, wc2 = model.v_q.omega**2, model.v_c.omega**2
    c = model.coupling / np.sqrt(model.m * model.M)
    mean, half_gap = 0.5 * (wq2 + wc2), np.hypot(0.5 * (wq2 - wc2), c)
    w2 = np.array([mean - half_gap, mean + half_gap])
    if w2[0] <= 0:
        raise MappingError("coupled system is unstable (negative normal-mode frequency)")
    # eigenvectors of the symmetric 2x2 matrix
    theta = 0.5 * np.arctan2(2.0 * c, wq2 - wc2)
    V = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    V = V[:, ::-1]  # columns ordered as w2 (low, high)
    w = np.sqrt(w2)
    sm, sM = np.sqrt(model.m), np.sqrt(model.M)
    a = V.T @ np.array([sm * x0, sM * X0])
    b = V.T @ np.array([p0 / sm, P0 / sM])
    t = np.asarray(t, dtype=float)[..., None]
    modes = a * np.cos(w * t) + b / w * np.sin(w * t)
    q = modes @ V.T
    return q[..., 0] / sm, q[..., 1] / sM


@dataclass(eq=False)
class HybridExactComparison:
    times: np.ndarray
    hybrid: dict[str, np.ndarray]
    hybrid_stderr: dict[str, np.ndarray]
    exact: dict[str, np.ndarray]
    error: dict[str, np.ndarray]
    tolerance: float
    scale: float
    horizon: float | None
    heavy_width: float

    def summary(self) -> dict:
        return {"horizon": self.horizon, "tolerance": self.tolerance, "scale": self.scale,
                "heavy_width": self.heavy_width,
                "max_error": {k: float(np.max(v)) for k, v in self.error.items()},
                "max_relative_error_X": float(np.max(self.error["X"]) / self.scale)}


def mapping_point(mixture) -> ClassicalPoint:
    """The classical point of a mixture the oracle can represent (one component, point start)."""
    comps = mixture.components
    if len(comps) != 1 or not isinstance(comps[0].classical, ClassicalPoint):
        raise MappingError("exact comparison needs a single component with a classical point")
    return comps[0].classical


def oracle_initial_state(scenario, grid_c: SpatialGrid, width: float | None = None) -> WaveFunction2D:
    """2D counterpart of the scenario's single-component start."""
    point = mapping_point(scenario.mixture)
    width = heavy_ground_width(scenario.model) if width is None else width
    return product_state(scenario.mixture.components[0].psi, grid_c, point.X, point.K, width, scenario.model.hbar)


def compare_hybrid_exact(scenario, grid_c: SpatialGrid, n_steps: int, every: int = 10,
                         rel_tol: float = 0.05, width: float | None = None) -> HybridExactComparison:
    """Run the hybrid ensemble and the 2D oracle side by side.

    The classical point (X0, K0) maps to a Gaussian of the heavy ground-state
    width. ``tolerance`` on <X> is ``rel_tol`` times the classical amplitude
    sqrt(X0^2 + (K0 / (M wc))^2); the horizon is the first recorded time the
    error exceeds it (None if never).
    """
    model = scenario.model
    point = mapping_point(scenario.mixture)
    width = heavy_ground_width(model) if width is None else width
    psi2 = oracle_initial_state(scenario, grid_c, width)
    scale = float(np.hypot(point.X, point.K / (model.M * model.v_c.omega)))

    names = ("x", "X", "x2")
    hyb = {k: [] for k in names}
    hse = {k: [] for k in names}
    ex = {k: [] for k in names}
    times = []
    state = {"psi2": psi2, "step": 0}

    def record(e):
        obs = ensemble_observables(e)
        for k, o in zip(names, ("x_q", "X", "x_q2")):
            hyb[k].append(obs[o].mean)
            hse[k].append(obs[o].stderr)
        lag = e.step - state["step"]
        if lag:
            state["psi2"] = propagate_2d(state["psi2"], e.dt, model, lag)
            state["step"] = e.step
        m = exact_marginals(state["psi2"], model.hbar)
        for k in names:
            ex[k].append(m[k])
        times.append(e.time)

    e0 = scenario.sample()
    record(e0)
    evolve_steps(e0, n_steps, record, every)
    arr = lambda d: {k: np.array(v) for k, v in d.items()}  # noqa: E731
    hyb, hse, ex = arr(hyb), arr(hse), arr(ex)
    err = {k: np.abs(hyb[k] - ex[k]) for k in names}
    tol = rel_tol * scale
    over = np.nonzero(err["X"] > tol)[0]
    horizon = float(np.array(times)[over[0]]) if over.size else None
    return HybridExactComparison(np.array(times), hyb, hse, ex, err, tol, scale, horizon, width)
