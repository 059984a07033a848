"""Replica ensembles for Bohmian back-reaction dynamics.

Each replica carries a classical point (X, K), a wavefunction and a Bohmian
position y. One step of length dt applies, in this order:

    classical half step (velocity Verlet, dt/2) with y(t)
    quantum half step at the new X
    Heun step of y with the velocity fields of psi(t) and psi(t + dt)
    quantum half step at the same X, giving psi(t + dt)
    classical half step with y(t + dt)

The second quantum half step does not depend on y, so it is taken before
the Heun step to provide psi(t + dt).

Wavefunctions live in a bank of rows indexed per replica. When the coupling
vanishes the quantum evolution ignores X, so replicas started from the same
mixture component share one row; otherwise every replica owns its row.
Sharing changes cost, never results.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .bohmian import DEFAULT_EPS_NODE, batch_velocity_field
from .classical import ClassicalState, classical_energy
from .grid import BOUNDARY_TOL, SpatialGrid, WaveFunction, boundary_ratio
from .model import HybridModel
from .quantum import batch_expectations, check_time_step, propagate_batch

RESAMPLE_STREAM = 1


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True)
class ClassicalPoint:
    X: float
    K: float

    def draw(self, rng: np.random.Generator) -> tuple[float, float]:
        return self.X, self.K

    def describe(self) -> dict:
        return {"kind": "point", "X": self.X, "K": self.K}


@dataclass(frozen=True)
class ClassicalGaussian:
    X_mean: float
    K_mean: float
    X_std: float
    K_std: float

    def draw(self, rng: np.random.Generator) -> tuple[float, float]:
        X, K = rng.normal(size=2)
        return self.X_mean + self.X_std * X, self.K_mean + self.K_std * K

    def describe(self) -> dict:
        return {"kind": "gaussian", "X_mean": self.X_mean, "K_mean": self.K_mean,
                "X_std": self.X_std, "K_std": self.K_std}


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    weight: float
    classical: ClassicalPoint | ClassicalGaussian
    psi: WaveFunction
    label: str = ""


@dataclass(frozen=True, eq=False)
class InitialMixture:
    """Finite stand-in for n(u, psi): weighted (classical law, wavefunction) pairs."""

    components: tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise EnsembleError("empty mixture")
        weights = np.array([c.weight for c in self.components])
        if np.any(weights <= 0) or np.any(weights > 1):
            raise EnsembleError("component weights must lie in (0, 1]")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise EnsembleError(f"weights sum to {weights.sum()!r}, not 1")
        grid = self.components[0].psi.grid
        for c in self.components:
            if c.psi.grid != grid:
                raise EnsembleError("all components must share one grid")
            if abs(c.psi.norm - 1.0) > 1e-10:
                raise EnsembleError(f"component {c.label!r} is not normalized")

    @property
    def grid(self) -> SpatialGrid:
        return self.components[0].psi.grid

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def describe(self) -> list[dict]:
        return [{"weight": c.weight, "classical": c.classical.describe(), "psi": c.label}
                for c in self.components]


@dataclass(frozen=True)
class ReplicaFlags:
    node_proximity: bool = False
    boundary: bool = False


@dataclass(frozen=True, eq=False)
class Replica:
    u: ClassicalState
    psi: WaveFunction
    y: float
    flags: ReplicaFlags = field(default_factory=ReplicaFlags)


@dataclass(eq=False)
class Ensemble:
    """Sampled representation of f(u, psi, y; t), stored column-wise."""

    model: HybridModel
    grid: SpatialGrid
    dt: float
    seed: int
    step: int
    X: np.ndarray
    K: np.ndarray
    y: np.ndarray
    psi_bank: np.ndarray
    psi_row: np.ndarray
    component: np.ndarray
    node_flag: np.ndarray
    boundary_flag: np.ndarray
    eps_node: float = DEFAULT_EPS_NODE
    interp_order: int = 3

    def __post_init__(self):
        if self.X.size < 2:
            raise EnsembleError("an ensemble needs at least two replicas")

    @property
    def time(self) -> float:
        return self.step * self.dt

    @property
    def size(self) -> int:
        return self.X.size

    @property
    def shared(self) -> bool:
        return self.psi_bank.shape[0] < self.size

    def psi(self, i: int) -> WaveFunction:
        return WaveFunction(self.grid, self.psi_bank[self.psi_row[i]].copy())

    def replica(self, i: int) -> Replica:
        return Replica(ClassicalState(float(self.X[i]), float(self.K[i])), self.psi(i), float(self.y[i]),
                       ReplicaFlags(bool(self.node_flag[i]), bool(self.boundary_flag[i])))

    def copy(self) -> "Ensemble":
        return replace(self, X=self.X.copy(), K=self.K.copy(), y=self.y.copy(),
                       psi_bank=self.psi_bank.copy(), psi_row=self.psi_row.copy(),
                       component=self.component.copy(), node_flag=self.node_flag.copy(),
                       boundary_flag=self.boundary_flag.copy())

    def subset(self, indices) -> "Ensemble":
        idx = np.asarray(indices)
        used, new_rows = np.unique(self.psi_row[idx], return_inverse=True)
        return replace(self, X=self.X[idx].copy(), K=self.K[idx].copy(), y=self.y[idx].copy(),
                       psi_bank=self.psi_bank[used].copy(), psi_row=new_rows.astype(np.int64),
                       component=self.component[idx].copy(), node_flag=self.node_flag[idx].copy(),
                       boundary_flag=self.boundary_flag[idx].copy())

    def unshared(self) -> "Ensemble":
        """Same ensemble with one wavefunction row per replica."""
        if not self.shared and np.array_equal(self.psi_row, np.arange(self.size)):
            return self
        return replace(self, psi_bank=self.psi_bank[self.psi_row].copy(),
                       psi_row=np.arange(self.size, dtype=np.int64))

    @property
    def flagged(self) -> np.ndarray:
        return self.node_flag | self.boundary_flag

    @property
    def flagged_fraction(self) -> float:
        return float(np.mean(self.flagged))

    def describe(self) -> dict:
        return {"N": self.size, "time": self.time, "step": self.step, "dt": self.dt, "seed": self.seed,
                "flagged_fraction": self.flagged_fraction}


def replica_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one replica; depends only on (seed, index, stream)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index), int(stream)]))


def density_cdf(grid: SpatialGrid, density: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear CDF of a grid density (trapezoid between nodes).

    Returns strictly increasing node values and the matching positions, so
    ``np.interp(u, cdf, x)`` inverts it and ``np.interp(y, x, cdf)`` evaluates it.
    """
    x = grid.points
    incr = 0.5 * (density[1:] + density[:-1]) * grid.spacing
    cdf = np.concatenate([[0.0], np.cumsum(incr)])
    cdf /= cdf[-1]
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return cdf[keep], x[keep]


def sample_positions(grid: SpatialGrid, density: np.ndarray, u) -> np.ndarray:
    cdf, x = density_cdf(grid, density)
    return np.interp(u, cdf, x)


def sample_initial_ensemble(mixture: InitialMixture, N: int, seed: int, model: HybridModel, dt: float,
                            eps_node: float = DEFAULT_EPS_NODE, interp_order: int = 3) -> Ensemble:
    if N < 2:
        raise EnsembleError("N must be at least 2")
    grid = mixture.grid
    check_time_step(grid, model, dt)
    cum = np.cumsum(mixture.weights)
    cum[-1] = 1.0
    bank = np.stack([c.psi.amplitudes for c in mixture.components])
    dens = bank.real**2 + bank.imag**2
    X = np.empty(N)
    K = np.empty(N)
    y = np.empty(N)
    comp = np.empty(N, dtype=np.int64)
    for i in range(N):
        rng = replica_rng(seed, i)
        c = int(np.searchsorted(cum, rng.random(), side="right"))
        c = min(c, len(cum) - 1)
        comp[i] = c
        X[i], K[i] = mixture.components[c].classical.draw(rng)
        y[i] = rng.random()
    for c in range(len(mixture.components)):
        sel = comp == c
        y[sel] = sample_positions(grid, dens[c], y[sel])
    ens = Ensemble(model, grid, float(dt), int(seed), 0, X, K, y, bank.copy(), comp.copy(), comp,
                   np.zeros(N, bool), np.zeros(N, bool), eps_node, interp_order)
    return ens if model.v_int.decoupled else ens.unshared()


def _bank_X(e: Ensemble, X: np.ndarray) -> np.ndarray:
    if e.shared:
        # decoupled: the frozen coordinate does not enter the quantum step
        return np.zeros(e.psi_bank.shape[0])
    out = np.empty(e.psi_bank.shape[0])
    out[e.psi_row] = X
    return out


def _advance(e: Ensemble, n_steps: int, callback=None, every: int = 0) -> Ensemble:
    """Run ``n_steps`` steps on a private copy of ``e``."""
    if not e.model.v_int.decoupled:
        e = e.unshared()
    e = e.copy()
    model, grid, dt = e.model, e.grid, e.dt
    stiffness = model.v_c.mass * model.v_c.omega**2
    lam = float(model.coupling)
    half = 0.5 * dt
    x_min, x_last, dx = float(grid.x_min), float(grid.x_max - grid.spacing), float(grid.spacing)
    field_t = batch_velocity_field(e.psi_bank, grid, model, e.eps_node)
    for n in range(n_steps):
        if e.shared:
            # X does not enter the quantum step, so the first classical half
            # step can run later, inside the kernel, with the same arithmetic
            bank_X = np.zeros(e.psi_bank.shape[0])
        else:
            kernels.verlet_half(e.X, e.K, e.y, half, model.M, stiffness, lam)
            bank_X = _bank_X(e, e.X)
        # both quantum half steps; the Heun step below needs psi(t + dt)
        e.psi_bank = propagate_batch(e.psi_bank, bank_X, half, model, grid, repeat=2)
        v_next, m_next, edge = batch_velocity_field(e.psi_bank, grid, model, e.eps_node, edges=True)
        kernels.heun_step(e.X, e.K, e.y, e.psi_row, field_t[0], field_t[1], v_next, m_next,
                          x_min, x_last, dx, e.interp_order, dt, model.M, stiffness, lam, True, e.shared,
                          e.node_flag, e.boundary_flag)
        field_t = (v_next, m_next)
        bad_rows = edge >= BOUNDARY_TOL
        if np.any(bad_rows):
            e.boundary_flag |= bad_rows[e.psi_row]
        e.step += 1
        if callback is not None and every > 0 and e.step % every == 0:
            callback(e)
    if not (np.all(np.isfinite(e.X)) and np.all(np.isfinite(e.K)) and np.all(np.isfinite(e.y))):
        raise EnsembleError(f"non-finite replica state at step {e.step}")
    return e


def step_replica(r: Replica, dt: float, model: HybridModel, eps_node: float = DEFAULT_EPS_NODE,
                 interp_order: int = 3) -> Replica:
    """Advance one replica by one step; identical arithmetic to the ensemble path."""
    if not dt > 0:
        raise EnsembleError(f"dt must be positive, got {dt}")
    check_time_step(r.psi.grid, model, dt)
    e = Ensemble(model, r.psi.grid, dt, 0, 0, np.array([r.u.X, r.u.X]), np.array([r.u.K, r.u.K]),
                 np.array([r.y, r.y]), r.psi.amplitudes[None, :].copy(), np.zeros(2, dtype=np.int64),
                 np.zeros(2, dtype=np.int64), np.array([r.flags.node_proximity] * 2),
                 np.array([r.flags.boundary] * 2), eps_node, interp_order)
    # two copies of the replica satisfy the ensemble invariant; row 0 is returned
    return _advance(e, 1).replica(0)


def steps_between(e: Ensemble, t_target: float) -> int:
    span = (t_target - e.time) / e.dt
    n = round(span)
    if abs(span - n) > 64 * np.finfo(float).eps * max(1.0, abs(span)):
        raise EnsembleError(f"interval {t_target - e.time} is not a whole number of steps of {e.dt}")
    if n < 0:
        raise EnsembleError(f"target time {t_target} precedes ensemble time {e.time}")
    return int(n)


def evolve(e: Ensemble, t_target: float, callback=None, every: int = 0) -> Ensemble:
    """U(t_target, e.time): advance every replica; ``e`` itself is left untouched."""
    return _advance(e, steps_between(e, t_target), callback, every)


def evolve_steps(e: Ensemble, n_steps: int, callback=None, every: int = 0) -> Ensemble:
    if n_steps < 0:
        raise EnsembleError("negative step count")
    return _advance(e, n_steps, callback, every)


def resample_bohmian(e: Ensemble, seed: int) -> Ensemble:
    """Redraw every y from its own replica's current |psi|^2, keeping (u, psi)."""
    out = e.copy()
    dens = e.psi_bank.real**2 + e.psi_bank.imag**2
    u = np.array([replica_rng(seed, i, RESAMPLE_STREAM).random() for i in range(e.size)])
    for row in np.unique(e.psi_row):
        sel = e.psi_row == row
        out.y[sel] = sample_positions(e.grid, dens[row], u[sel])
    out.node_flag[:] = False
    out.boundary_flag[:] = boundary_ratio(e.psi_bank)[e.psi_row] >= BOUNDARY_TOL
    return out


# ---------------------------------------------------------------- observables

@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float


OBSERVABLE_NAMES = ("x_q", "x_q2", "X", "K", "X2", "K2", "y", "E_qexp", "E_point")


def replica_quantities(e: Ensemble) -> dict[str, np.ndarray]:
    """Per-replica observables, including both total-energy definitions."""
    q = batch_expectations(e.psi_bank, 0.0, e.model, e.grid)
    rows = e.psi_row
    x_mean = q["x"][rows]
    h_q = q["T"][rows] + q["V_q"][rows]
    e_cl = classical_energy(e.X, e.K, e.model)
    v_qexp = e.model.v_int.value(x_mean, e.X)
    v_point = e.model.v_int.value(e.y, e.X)
    return {
        "x_q": x_mean,
        "x_q2": q["x2"][rows],
        "X": e.X.copy(),
        "K": e.K.copy(),
        "X2": e.X**2,
        "K2": e.K**2,
        "y": e.y.copy(),
        "T": q["T"][rows],
        "V_q": q["V_q"][rows],
        "V_int_qexp": v_qexp,
        "V_int_point": v_point,
        "kinetic_c": e.K**2 / (2.0 * e.model.M),
        "V_c": e.model.v_c.value(e.X),
        "E_qexp": h_q + v_qexp + e_cl,
        "E_point": h_q + v_point + e_cl,
    }


def summarize(values: np.ndarray) -> Estimate:
    n = values.size
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean, se)


def ensemble_observables(e: Ensemble) -> dict[str, Estimate]:
    per = replica_quantities(e)
    return {name: summarize(per[name]) for name in OBSERVABLE_NAMES}


@dataclass(frozen=True, eq=False)
class DensityMatrixEstimate:
    grid: SpatialGrid
    reduced_quantum: np.ndarray
    classical_moments: dict
    replica_count: int

    @property
    def operator(self) -> np.ndarray:
        """Matrix of rho acting on grid vectors (kernel times spacing)."""
        return self.reduced_quantum * self.grid.spacing

    def trace(self) -> float:
        return float(np.real(np.trace(self.reduced_quantum)) * self.grid.spacing)

    def purity(self) -> float:
        return float(np.sum(np.abs(self.reduced_quantum) ** 2) * self.grid.spacing**2)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.operator)

    def distance(self, other: "DensityMatrixEstimate") -> float:
        """Trace-norm (L1) distance between the two quantum reductions."""
        return float(np.sum(np.abs(np.linalg.eigvalsh(self.operator - other.operator))))


def density_matrix_estimate(e: Ensemble) -> DensityMatrixEstimate:
    counts = np.bincount(e.psi_row, minlength=e.psi_bank.shape[0]).astype(float) / e.size
    weighted = e.psi_bank * counts[:, None]
    rho = weighted.T @ e.psi_bank.conj()
    rho = 0.5 * (rho + rho.conj().T)
    moments = {
        "X": float(np.mean(e.X)), "K": float(np.mean(e.K)),
        "X2": float(np.mean(e.X**2)), "K2": float(np.mean(e.K**2)), "XK": float(np.mean(e.X * e.K)),
    }
    return DensityMatrixEstimate(e.grid, rho, moments, e.size)
