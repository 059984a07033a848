"""Quick end-to-end checks of the module examples, runnable from the CLI."""
from __future__ import annotations

import math
import time

import numpy as np
from scipy import stats

from .bohmian import advance_bohmian, velocity_at, velocity_field
from .classical import ClassicalState, advance_classical, classical_energy, classical_force
from .diagnostics import Scenario, determinism_check, equivariance_metric, relative_drift
from .ensemble import (ClassicalPoint, InitialMixture, MixtureComponent, density_matrix_estimate,
                       ensemble_observables, evolve_steps, resample_bohmian, sample_initial_ensemble,
                       step_replica)
from .exact import normal_mode_solution, product_state, propagate_2d, exact_marginals, heavy_ground_width
from .grid import build_grid, init_eigenstate, init_gaussian, normalized
from .model import Bilinear, DoubleWell, Harmonic, HybridModel
from .quantum import propagate_quantum, quantum_expectations

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _harmonic(lam=0.0, wq=1.0, wc=1.0, M=1.0):
    return HybridModel(1.0, M, 1.0, Harmonic(wq), Harmonic(wc), Bilinear(lam))


def _free_sigma(t, s0):
    return s0 * math.sqrt(1.0 + (t / (2.0 * s0**2)) ** 2)


@check
def grid_spacing():
    g = build_grid(-10, 10, 256)
    return abs(g.spacing - 0.078125) == 0.0, f"spacing={g.spacing}"


@check
def gaussian_moments():
    g = build_grid(-10, 10, 512)
    q = quantum_expectations(init_gaussian(g, 1.0, 0.5, 2.0), 0.0, _harmonic())
    return abs(q.x - 1) < 1e-6 and abs(q.p - 2) < 1e-6, f"<x>={q.x:.10f} <p>={q.p:.10f}"


@check
def ground_state_energy():
    g = build_grid(-10, 10, 512)
    q = quantum_expectations(init_eigenstate(g, _harmonic(), 0), 0.0, _harmonic())
    return abs(q.T + q.V_q - 0.5) < 1e-6 and abs(q.x2 - 0.5) < 1e-6, f"E0={q.T + q.V_q:.12f}"


@check
def free_spreading():
    g = build_grid(-40, 40, 1024)
    model = HybridModel(1.0, 1.0, 1.0, Harmonic(0.0), Harmonic(1.0), Bilinear(0.0))
    psi = init_gaussian(g, 0.0, 1.0, 0.0)
    dt = 2e-3
    for _ in range(1000):
        psi = propagate_quantum(psi, 0.0, dt, model)
    q = quantum_expectations(psi, 0.0, model)
    sig = math.sqrt(q.x2 - q.x**2)
    return abs(sig - _free_sigma(2.0, 1.0)) < 1e-4, f"sigma={sig:.8f}"


@check
def coherent_state_period():
    g = build_grid(-10, 10, 256)
    model = _harmonic()
    psi = init_gaussian(g, 1.0, math.sqrt(0.5), 0.0)
    n = 2000
    dt = 2 * math.pi / n
    worst = 0.0
    for i in range(1, n + 1):
        psi = propagate_quantum(psi, 0.0, dt, model)
        if i % 50 == 0:
            worst = max(worst, abs(quantum_expectations(psi, 0.0, model).x - math.cos(i * dt)))
    return worst < 1e-4, f"max |<x> - cos t| = {worst:.3g}"


@check
def velocity_of_moving_packet():
    g = build_grid(-10, 10, 512)
    f = velocity_field(init_gaussian(g, 0.0, 1.0, 2.0), _harmonic())
    v, _ = velocity_at(f, 0.0)
    return abs(v - 2.0) < 1e-4, f"v={v:.10f}"


@check
def free_bohmian_trajectory():
    g = build_grid(-40, 40, 1024)
    model = HybridModel(1.0, 1.0, 1.0, Harmonic(0.0), Harmonic(1.0), Bilinear(0.0))
    psi = init_gaussian(g, 0.0, 1.0, 0.0)
    y, dt = 1.0, 2e-3
    f0 = velocity_field(psi, model)
    for _ in range(1000):
        psi = propagate_quantum(psi, 0.0, dt, model)
        f1 = velocity_field(psi, model)
        y, _ = advance_bohmian(y, f0, f1, dt)
        f0 = f1
    return abs(y - _free_sigma(2.0, 1.0)) < 1e-3, f"y={y:.8f}"


@check
def classical_force_plugin():
    model = _harmonic(lam=0.1)
    return abs(classical_force(model, 2.0, 0.0) + 0.2) < 1e-15, "F(y=2, X=0)"


@check
def classical_energy_conservation():
    # Verlet's energy error oscillates with relative size ~(omega dt / 2)^2
    model = _harmonic(wc=0.18)
    s = ClassicalState(1.0, 0.0)
    e0 = classical_energy(s.X, s.K, model)
    worst = 0.0
    for _ in range(10_000):
        s = advance_classical(s, 0.0, 1e-3, model)
        worst = max(worst, abs(classical_energy(s.X, s.K, model) - e0) / e0)
    return worst <= 1e-8, f"relative drift {worst:.3g}"


@check
def sampling_matches_ground_state():
    g = build_grid(-10, 10, 256)
    model = _harmonic()
    mix = InitialMixture((MixtureComponent(1.0, ClassicalPoint(1.0, 0.0), init_eigenstate(g, model, 0)),))
    e = sample_initial_ensemble(mix, 4000, 7, model, 1e-3)
    ks = stats.kstest(e.y, stats.norm(scale=math.sqrt(0.5)).cdf).statistic
    return ks <= 1.63 / math.sqrt(4000), f"KS={ks:.4f}"


@check
def decoupled_equivariance_and_energy():
    g = build_grid(-12.8, 12.8, 512)
    model = _harmonic()
    mix = InitialMixture((MixtureComponent(1.0, ClassicalPoint(1.0, 0.0), init_gaussian(g, 1.0, 0.5, 0.0)),))
    sc = Scenario(model, mix, 4000, 11, 1e-3)
    energies = []
    e = evolve_steps(sc.sample(), sc.steps(1.0),
                     lambda e: energies.append(ensemble_observables(e)["E_qexp"].mean), 50)
    m = equivariance_metric(e)
    drift = relative_drift(np.array(energies))
    ok = m["ks_distance"] <= m["threshold"] + 0.01 and drift <= 1e-6
    return ok, f"KS={m['ks_distance']:.4f} thr={m['threshold']:.4f} drift={drift:.3g}"


@check
def fock_mixture_purity():
    g = build_grid(-10, 10, 256)
    model = _harmonic()
    p0, p1 = init_eigenstate(g, model, 0), init_eigenstate(g, model, 1)
    cp = ClassicalPoint(1.0, 0.0)
    m1 = InitialMixture((MixtureComponent(0.5, cp, p0), MixtureComponent(0.5, cp, p1)))
    m2 = InitialMixture((MixtureComponent(0.5, cp, normalized(g, p0.amplitudes + p1.amplitudes)),
                         MixtureComponent(0.5, cp, normalized(g, p0.amplitudes - p1.amplitudes))))
    n = 4000
    r1 = density_matrix_estimate(sample_initial_ensemble(m1, n, 1, model, 1e-3))
    r2 = density_matrix_estimate(sample_initial_ensemble(m2, n, 2, model, 1e-3))
    ok = abs(r1.purity() - 0.5) <= 2 / math.sqrt(n) and r1.distance(r2) <= 5 / math.sqrt(n)
    return ok, f"purity={r1.purity():.4f} L1={r1.distance(r2):.4f}"


@check
def resample_seed_determinism():
    g = build_grid(-10, 10, 256)
    model = _harmonic()
    mix = InitialMixture((MixtureComponent(1.0, ClassicalPoint(1.0, 0.0), init_eigenstate(g, model, 0)),))
    e = sample_initial_ensemble(mix, 500, 3, model, 1e-3)
    a, b = resample_bohmian(e, 9), resample_bohmian(e, 9)
    return bool(np.array_equal(a.y, b.y)), "same seed, same redraw"


@check
def coupled_replica_determinism():
    g = build_grid(-8, 8, 128)
    model = HybridModel(1.0, 1.0, 1.0, DoubleWell(1.0, 4.0), Harmonic(2.0), Bilinear(0.25))
    mix = InitialMixture((MixtureComponent(1.0, ClassicalPoint(1.0, 0.0), init_gaussian(g, 0.0, 0.5, 0.0)),))
    r = sample_initial_ensemble(mix, 2, 5, model, 5e-3).replica(0)
    ok = determinism_check(r, model, 5e-3, 500)
    a = step_replica(r, 5e-3, model)
    return ok and np.isfinite(a.y), "500 coupled steps bit-identical"


@check
def exact_normal_modes():
    model = _harmonic(lam=0.25, wq=1.0, wc=1.0, M=10.0)
    gq, gc = build_grid(-8, 8, 128), build_grid(-4, 4, 256)
    psi = product_state(init_gaussian(gq, 1.0, math.sqrt(0.5), 0.0), gc, 1.0, 0.0, heavy_ground_width(model))
    dt, n = 1e-3, 400
    psi = propagate_2d(psi, dt, model, n)
    m = exact_marginals(psi)
    x, X = normal_mode_solution(model, 1.0, 0.0, 1.0, 0.0, n * dt)
    err = max(abs(m["x"] - x), abs(m["X"] - X))
    return err < 1e-3, f"max error {err:.3g}"


def run_checks(verbose: bool = True) -> list[tuple[str, bool, str, float]]:
    results = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - t0
        results.append((fn.__name__, bool(ok), detail, elapsed))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {fn.__name__}: {detail} ({elapsed:.1f}s)")
    return results
