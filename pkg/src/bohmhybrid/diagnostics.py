"""Numerical experiments probing the consistency of Bohmian back-reaction.

Each experiment runs the coupled scheme next to a decoupled (lambda = 0)
control arm built from the same configuration, and reports raw numbers
alongside the detection thresholds.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .ensemble import (OBSERVABLE_NAMES, Ensemble, Estimate, InitialMixture, density_cdf,
                       density_matrix_estimate, ensemble_observables, evolve_steps, replica_quantities,
                       resample_bohmian, sample_initial_ensemble, step_replica)
from .model import HybridModel

KS_COEF = 1.63
CONTAMINATION_LIMIT = 0.01
ENERGY_TERMS = ("T", "V_q", "V_int_qexp", "V_int_point", "kinetic_c", "V_c")


class DiagnosticError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything needed to sample and run one ensemble."""

    model: HybridModel
    mixture: InitialMixture
    N: int
    seed: int
    dt: float
    eps_node: float = 1e-6
    interp_order: int = 3

    def sample(self, seed: int | None = None, mixture: InitialMixture | None = None) -> Ensemble:
        return sample_initial_ensemble(mixture or self.mixture, self.N, self.seed if seed is None else seed,
                                       self.model, self.dt, self.eps_node, self.interp_order)

    def with_coupling(self, strength: float) -> "Scenario":
        return replace(self, model=self.model.with_coupling(strength))

    def with_dt(self, dt: float) -> "Scenario":
        return replace(self, dt=dt)

    def steps(self, periods: float) -> int:
        """Whole number of steps closest to ``periods`` classical periods."""
        return int(round(periods * self.model.classical_period() / self.dt))


# ---------------------------------------------------------------- energy

@dataclass(eq=False)
class EnergyAudit:
    times: np.ndarray
    E_qexp: np.ndarray
    E_point: np.ndarray
    components: dict[str, np.ndarray]
    drift_qexp: float
    drift_point: float
    flagged_fraction: float
    baseline_drift_qexp: float | None = None
    baseline_drift_point: float | None = None
    final: Ensemble | None = field(default=None, repr=False)

    @property
    def contaminated(self) -> bool:
        return self.flagged_fraction > CONTAMINATION_LIMIT

    def summary(self) -> dict:
        return {"drift_qexp": self.drift_qexp, "drift_point": self.drift_point,
                "baseline_drift_qexp": self.baseline_drift_qexp,
                "baseline_drift_point": self.baseline_drift_point,
                "flagged_fraction": self.flagged_fraction, "contaminated": self.contaminated,
                "E0_qexp": float(self.E_qexp[0]), "E0_point": float(self.E_point[0])}


def relative_drift(series: np.ndarray) -> float:
    return float(np.max(np.abs(series - series[0])) / abs(series[0]))


def _energy_series(e0: Ensemble, n_steps: int, every: int):
    rows = []

    def record(e):
        per = replica_quantities(e)
        rows.append((e.time, {k: float(np.mean(per[k])) for k in ENERGY_TERMS}))

    record(e0)
    final = evolve_steps(e0, n_steps, record, every)
    if n_steps % every:
        record(final)
    times = np.array([t for t, _ in rows])
    comps = {k: np.array([r[k] for _, r in rows]) for k in ENERGY_TERMS}
    return times, comps, final


def energy_audit(scenario: Scenario, n_steps: int, every: int = 10, baseline: bool = True) -> EnergyAudit:
    """Ensemble-mean energies under both coupling conventions, plus a decoupled control."""
    times, comps, final = _energy_series(scenario.sample(), n_steps, every)
    common = comps["T"] + comps["V_q"] + comps["kinetic_c"] + comps["V_c"]
    e_qexp = common + comps["V_int_qexp"]
    e_point = common + comps["V_int_point"]
    audit = EnergyAudit(times, e_qexp, e_point, comps, relative_drift(e_qexp), relative_drift(e_point),
                        final.flagged_fraction, final=final)
    if baseline:
        base = energy_audit(scenario.with_coupling(0.0), n_steps, every, baseline=False)
        audit.baseline_drift_qexp = base.drift_qexp
        audit.baseline_drift_point = base.drift_point
    return audit


# ---------------------------------------------------------------- equivariance

def equivariance_metric(e: Ensemble, coef: float = KS_COEF) -> dict:
    """KS distance between the Bohmian positions and the ensemble-mean |psi|^2.

    The threshold is the one-sample 99% level; it is approximate because the
    reference law is itself an ensemble estimate.
    """
    if e.size < 1000:
        raise DiagnosticError("equivariance metric needs at least 1000 replicas")
    dens = e.psi_bank.real**2 + e.psi_bank.imag**2
    weights = np.bincount(e.psi_row, minlength=dens.shape[0]) / e.size
    mean_density = (weights[:, None] * dens).sum(axis=0)
    cdf, x = density_cdf(e.grid, mean_density)
    ks = stats.kstest(e.y, lambda t: np.interp(t, x, cdf)).statistic
    return {"ks_distance": float(ks), "threshold": coef / np.sqrt(e.size), "N": e.size}


def two_sample_threshold(n: int, m: int, coef: float = KS_COEF) -> float:
    return coef * np.sqrt((n + m) / (n * m))


# ---------------------------------------------------------------- composability

def z_scores(a: dict[str, Estimate], b: dict[str, Estimate]) -> dict[str, float]:
    out = {}
    for name in a:
        diff = a[name].mean - b[name].mean
        se = np.hypot(a[name].stderr, b[name].stderr)
        out[name] = 0.0 if diff == 0.0 else float(diff / max(se, 1e-300))
    return out


def _as_dict(obs: dict[str, Estimate]) -> dict:
    return {k: {"mean": v.mean, "stderr": v.stderr} for k, v in obs.items()}


def bit_identical(a: Ensemble, b: Ensemble) -> bool:
    return (np.array_equal(a.X, b.X) and np.array_equal(a.K, b.K) and np.array_equal(a.y, b.y)
            and np.array_equal(a.psi_bank[a.psi_row], b.psi_bank[b.psi_row]))


@dataclass(eq=False)
class ComposabilityReport:
    observables_one_shot: dict[str, Estimate]
    observables_two_stage: dict[str, Estimate]
    z_scores: dict[str, float]
    identity_arm_bit_identical: bool | None
    flagged_fraction: float
    resampled_ks: float
    resampled_ks_threshold: float

    @property
    def max_abs_z(self) -> float:
        return max(abs(z) for z in self.z_scores.values())

    def summary(self) -> dict:
        return {"one_shot": _as_dict(self.observables_one_shot),
                "two_stage": _as_dict(self.observables_two_stage),
                "z_scores": self.z_scores, "max_abs_z": self.max_abs_z,
                "identity_arm_bit_identical": self.identity_arm_bit_identical,
                "flagged_fraction": self.flagged_fraction,
                "resample_shift_ks": self.resampled_ks, "resample_shift_threshold": self.resampled_ks_threshold}


def composability_test(scenario: Scenario, t1_steps: int, t2_steps: int, resample_seed: int,
                       identity_check: bool = True) -> ComposabilityReport:
    """Compare U(t2, t0) with U(t2, t1) R U(t1, t0), R re-sampling the Bohmian positions.

    Times are step counts from t0 = 0. The identity arm replaces R by nothing
    and must reproduce the one-shot arm bit for bit.
    """
    if not 0 < t1_steps < t2_steps:
        raise DiagnosticError(f"need 0 < t1 < t2, got t1={t1_steps} steps, t2={t2_steps} steps")
    e0 = scenario.sample()
    one_shot = evolve_steps(e0, t2_steps)
    mid = evolve_steps(e0, t1_steps)
    redrawn = resample_bohmian(mid, resample_seed)
    two_stage = evolve_steps(redrawn, t2_steps - t1_steps)
    identical = None
    if identity_check:
        identical = bit_identical(evolve_steps(mid, t2_steps - t1_steps), one_shot)
    a, b = ensemble_observables(one_shot), ensemble_observables(two_stage)
    ks = stats.ks_2samp(mid.y, redrawn.y).statistic
    flagged = max(one_shot.flagged_fraction, two_stage.flagged_fraction)
    return ComposabilityReport(a, b, z_scores(a, b), identical, flagged, float(ks),
                               two_sample_threshold(mid.size, redrawn.size))


# ---------------------------------------------------------------- rho equivalence

@dataclass(eq=False)
class RhoEquivalenceReport:
    initial_rho_distance: float
    final_rho_distance: float
    final_observable_z_scores: dict[str, float]
    N: int
    tolerance: float
    flagged_fraction: float

    @property
    def max_abs_z(self) -> float:
        return max(abs(z) for z in self.final_observable_z_scores.values())

    def summary(self) -> dict:
        return {"initial_rho_distance": self.initial_rho_distance, "final_rho_distance": self.final_rho_distance,
                "tolerance": self.tolerance, "z_scores": self.final_observable_z_scores,
                "max_abs_z": self.max_abs_z, "N": self.N, "flagged_fraction": self.flagged_fraction}


def _classical_marginal(mixture: InitialMixture) -> dict:
    out: dict = {}
    for c in mixture.components:
        key = tuple(sorted(c.classical.describe().items()))
        out[key] = out.get(key, 0.0) + c.weight
    return out


def same_classical_marginal(a: InitialMixture, b: InitialMixture) -> bool:
    ma, mb = _classical_marginal(a), _classical_marginal(b)
    return ma.keys() == mb.keys() and all(abs(ma[k] - mb[k]) <= 1e-12 for k in ma)


def rho_equivalence_test(scenario: Scenario, other: InitialMixture, n_steps: int,
                         seeds: tuple[int, int], coef: float = 5.0) -> RhoEquivalenceReport:
    """Evolve two mixtures realizing the same initial rho and compare the results."""
    if not same_classical_marginal(scenario.mixture, other):
        raise DiagnosticError("the two mixtures have different classical marginals")
    e1 = scenario.sample(seed=seeds[0])
    e2 = scenario.sample(seed=seeds[1], mixture=other)
    tol = coef / np.sqrt(scenario.N)
    d0 = density_matrix_estimate(e1).distance(density_matrix_estimate(e2))
    if d0 > tol:
        raise DiagnosticError(f"initial rho distance {d0:.4g} exceeds {tol:.4g}: mixtures are not equivalent")
    f1, f2 = evolve_steps(e1, n_steps), evolve_steps(e2, n_steps)
    d1 = density_matrix_estimate(f1).distance(density_matrix_estimate(f2))
    z = z_scores(ensemble_observables(f1), ensemble_observables(f2))
    return RhoEquivalenceReport(d0, d1, z, scenario.N, tol, max(f1.flagged_fraction, f2.flagged_fraction))


# ---------------------------------------------------------------- determinism

def _same(a, b) -> bool:
    return (a.u.X == b.u.X and a.u.K == b.u.K and a.y == b.y
            and np.array_equal(a.psi.amplitudes, b.psi.amplitudes))


def determinism_check(replica, model: HybridModel, dt: float, steps: int, **kw) -> bool:
    """Two independently stepped copies of one replica stay bit-identical."""
    a = b = replica
    for _ in range(steps):
        a = step_replica(a, dt, model, **kw)
        b = step_replica(b, dt, model, **kw)
        if not _same(a, b):
            return False
    return True


def divergence_time(replica, model: HybridModel, dt: float, steps: int, delta: float = 1e-12,
                    threshold: float = 1e-6, **kw) -> float | None:
    """First time at which a copy with y shifted by ``delta`` departs by more than ``threshold``."""
    a = replica
    b = replace(replica, y=replica.y + delta)
    for n in range(1, steps + 1):
        a = step_replica(a, dt, model, **kw)
        b = step_replica(b, dt, model, **kw)
        if max(abs(a.y - b.y), abs(a.u.X - b.u.X)) > threshold:
            return n * dt
    return None
