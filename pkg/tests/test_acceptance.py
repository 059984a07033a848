"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion still reports its measured numbers.
"""
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import scipy.fft as sfft

from bohmhybrid.bohmian import advance_bohmian, velocity_field
from bohmhybrid.classical import ClassicalState, classical_energy
from bohmhybrid.config import load_config
from bohmhybrid.diagnostics import (bit_identical, composability_test, determinism_check, energy_audit,
                                    equivariance_metric, rho_equivalence_test)
from bohmhybrid.ensemble import Replica, evolve_steps, replica_quantities, resample_bohmian, step_replica
from bohmhybrid.exact import compare_hybrid_exact, normal_mode_solution
from bohmhybrid.grid import build_grid, init_gaussian
from bohmhybrid.quantum import propagate_quantum, quantum_expectations

from conftest import free_model, free_sigma, harmonic_model

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _cfg(name):
    return load_config(CONFIGS / name)


def _row_norms(bank, dx):
    return (bank.real**2 + bank.imag**2).sum(axis=-1) * dx


def _ratio_ok(r):
    return abs(r - 4.0) <= 1.0


# ------------------------------------------------------------------ 1

def test_c1_decoupled_limit_controls(verdict):
    cfg = _cfg("decoupled.conf")
    sc = cfg.scenario()
    assert (sc.model.coupling, sc.N, cfg["grid_count"], sc.dt) == (0.0, 4000, 512, 1e-3)
    evolve_steps(sc.sample().subset([0, 1]), 1)  # load the compiled kernels outside the timed run
    n_total, n_period = cfg.steps(10), cfg.steps(1)
    every_energy = cfg["record_every"]

    t0 = time.perf_counter()
    e0 = sc.sample()
    dx = e0.grid.spacing
    norm0 = _row_norms(e0.psi_bank, dx)
    ecl0 = classical_energy(e0.X, e0.K, sc.model)
    track = {"norm": 0.0, "ecl": 0.0, "E": [float(np.mean(replica_quantities(e0)["E_qexp"]))], "ks": None}

    def watch(e):
        s = e.step
        if s <= 10_000:
            track["norm"] = max(track["norm"], float(np.max(np.abs(_row_norms(e.psi_bank, dx) - norm0))))
            ecl = classical_energy(e.X, e.K, sc.model)
            track["ecl"] = max(track["ecl"], float(np.max(np.abs(ecl - ecl0) / ecl0)))
        if s % every_energy == 0 or s == n_total:
            track["E"].append(float(np.mean(replica_quantities(e)["E_qexp"])))
        if s == n_period:
            track["ks"] = equivariance_metric(e)

    evolve_steps(e0, n_total, watch, 1)
    seconds = time.perf_counter() - t0
    E = np.array(track["E"])
    drift = float(np.max(np.abs(E - E[0])) / abs(E[0]))
    ks = track["ks"]
    checks = {
        "norm": track["norm"] <= 1e-8,
        "classical": track["ecl"] <= 1e-8,
        "drift_qexp": drift <= 1e-6,
        "ks": ks["ks_distance"] <= ks["threshold"] + 0.01,
        "runtime": seconds <= 120.0,
    }
    detail = (f"norm drift {track['norm']:.2e} (<=1e-8), classical energy drift {track['ecl']:.2e} (<=1e-8) "
              f"over 1e4 steps; drift_qexp {drift:.2e} (<=1e-6) over {n_total} steps; "
              f"KS {ks['ks_distance']:.4f} vs {ks['threshold'] + 0.01:.4f} at one period; "
              f"runtime {seconds:.1f}s (<=120s); failing: {[k for k, v in checks.items() if not v] or 'none'}")
    assert verdict("C1 decoupled-limit controls", all(checks.values()), detail, seconds)


# ------------------------------------------------------------------ 2

def _free_packet(dt, steps, y0=1.0):
    g = build_grid(-40, 40, 1024)
    psi = init_gaussian(g, 0.0, 1.0, 0.0)
    y, worst = y0, 0.0
    f0 = velocity_field(psi, free_model())
    for n in range(1, steps + 1):
        psi = propagate_quantum(psi, 0.0, dt, free_model())
        f1 = velocity_field(psi, free_model())
        y, _ = advance_bohmian(y, f0, f1, dt)
        f0 = f1
        worst = max(worst, abs(y - y0 * free_sigma(n * dt, 1.0)))
    return y, worst


def test_c2_analytic_trajectories(verdict):
    t0 = time.perf_counter()
    _, traj_err = _free_packet(2e-3, 1000)

    g = build_grid(-10, 10, 256)
    model = harmonic_model()
    psi = init_gaussian(g, 1.0, math.sqrt(0.5), 0.0)
    n = 2000
    dt = 2 * math.pi / n
    mean_err = 0.0
    for i in range(1, n + 1):
        psi = propagate_quantum(psi, 0.0, dt, model)
        mean_err = max(mean_err, abs(quantum_expectations(psi, 0.0, model).x - math.cos(i * dt)))
    ok = traj_err <= 1e-3 and mean_err <= 1e-4
    detail = (f"free-packet max |y - y0 sigma(t)/sigma0| {traj_err:.2e} (<=1e-3); "
              f"coherent max |<x> - x0 cos t| {mean_err:.2e} (<=1e-4) over one period")
    assert verdict("C2 analytic trajectory regression", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 3

def _replica_self_ratio():
    """Fixed-horizon Richardson ratio on a coupled harmonic replica."""
    g = build_grid(-8, 8, 128)
    model = harmonic_model(lam=0.25, wq=1.0, wc=2.0)
    start = Replica(ClassicalState(1.0, 0.0), init_gaussian(g, 0.5, 0.7, 0.5), 0.3)
    horizon = 0.4

    def run(dt):
        r = start
        for _ in range(round(horizon / dt)):
            r = step_replica(r, dt, model)
        return r

    a, b, c = run(8e-3), run(4e-3), run(2e-3)

    def diff(p, q):
        return max(abs(p.y - q.y), abs(p.u.X - q.u.X), abs(p.u.K - q.u.K), p.psi.distance(q.psi))

    return diff(a, b) / diff(b, c)


def test_c3_order_two_convergence(verdict):
    t0 = time.perf_counter()
    r_self = _replica_self_ratio()

    sc = replace(_cfg("decoupled.conf").scenario(), N=500)
    horizon = 4 * math.pi  # two quantum periods
    coarse = energy_audit(sc, round(horizon / 1e-3), 10, baseline=False)
    fine = energy_audit(sc.with_dt(5e-4), round(horizon / 5e-4), 20, baseline=False)
    r_energy = coarse.drift_qexp / fine.drift_qexp

    exact = free_sigma(2.0, 1.0)
    e1 = abs(_free_packet(2e-3, 1000)[0] - exact)
    e2 = abs(_free_packet(1e-3, 2000)[0] - exact)
    r_free = e1 / e2

    ok = _ratio_ok(r_self) and _ratio_ok(r_energy) and _ratio_ok(r_free)
    detail = (f"ratios under dt halving (need 4 +/- 1): replica self-error {r_self:.3f}, "
              f"lambda=0 energy drift {r_energy:.3f} ({coarse.drift_qexp:.2e} -> {fine.drift_qexp:.2e}), "
              f"free-packet endpoint error {r_free:.3f} ({e1:.2e} -> {e2:.2e})")
    assert verdict("C3 order-2 convergence", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 4, 5

@pytest.fixture(scope="module")
def coupled_audits():
    cfg = _cfg("coupled_double_well.conf")
    sc = cfg.scenario()
    evolve_steps(sc.sample().subset([0, 1]), 1)
    n = cfg.steps(cfg["periods"])
    t0 = time.perf_counter()
    coarse = energy_audit(sc, n, cfg["record_every"], baseline=True)
    fine = energy_audit(sc.with_dt(0.5 * sc.dt), 2 * n, 2 * cfg["record_every"], baseline=True)
    return cfg, coarse, fine, time.perf_counter() - t0


def test_c4_energy_not_conserved(verdict, coupled_audits):
    cfg, coarse, fine, seconds = coupled_audits
    assert cfg.model().coupling == 0.25 and cfg["v_q"] == "double_well"
    over_q = coarse.drift_qexp / coarse.baseline_drift_qexp
    over_p = coarse.drift_point / coarse.baseline_drift_point
    halve_q = coarse.drift_qexp / fine.drift_qexp
    halve_p = coarse.drift_point / fine.drift_point
    halve_base = coarse.baseline_drift_qexp / fine.baseline_drift_qexp
    ok = (over_q >= 10 and over_p >= 10 and halve_q < 3.0 and halve_p < 3.0 and seconds <= 300.0)
    detail = (f"drift_qexp {coarse.drift_qexp:.3e} = {over_q:.0f}x baseline, drift_point {coarse.drift_point:.3e} "
              f"= {over_p:.0f}x baseline (need >=10x); dt halving shrinks them by {halve_q:.3f} and {halve_p:.3f} "
              f"(need < 3, i.e. not x4; baseline shrinks {halve_base:.3f}); flagged {coarse.flagged_fraction:.4f}; "
              f"runtime {seconds:.1f}s (<=300s)")
    assert verdict("C4 energy non-conservation", ok, detail, seconds)


def test_c5_equivariance_lost(verdict, coupled_audits):
    cfg, coarse, _, _ = coupled_audits
    t0 = time.perf_counter()
    assert coarse.final.step == cfg.steps(2)
    coupled = equivariance_metric(coarse.final)
    sc0 = cfg.scenario(coupling=0.0)
    control = equivariance_metric(evolve_steps(sc0.sample(), cfg.steps(2)))
    ok = coupled["ks_distance"] > coupled["threshold"] and control["ks_distance"] <= control["threshold"] + 0.01
    detail = (f"coupled KS {coupled['ks_distance']:.4f} > threshold {coupled['threshold']:.4f} at two periods; "
              f"lambda=0 KS {control['ks_distance']:.4f} <= {control['threshold'] + 0.01:.4f}")
    assert verdict("C5 equivariance loss", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 6

def test_c6_non_composability(verdict):
    cfg = _cfg("coupled_double_well.conf")
    t0 = time.perf_counter()
    t1, t2 = cfg.steps(cfg["t1_periods"]), cfg.steps(cfg["t2_periods"])
    assert cfg["N"] == 4000
    coupled = composability_test(cfg.scenario(), t1, t2, cfg["resample_seed"])
    control = composability_test(cfg.scenario(coupling=0.0), t1, t2, cfg["resample_seed"])
    ok = (coupled.max_abs_z >= 5 and coupled.identity_arm_bit_identical
          and control.max_abs_z <= 3 and control.identity_arm_bit_identical)
    top = max(coupled.z_scores, key=lambda k: abs(coupled.z_scores[k]))
    detail = (f"coupled max |z| {coupled.max_abs_z:.1f} ({top}) >= 5; no-resample arm bit-identical: "
              f"{coupled.identity_arm_bit_identical}; lambda=0 max |z| {control.max_abs_z:.2f} <= 3; "
              f"flagged {coupled.flagged_fraction:.4f}")
    assert verdict("C6 non-composability", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 7

def test_c7_rho_representation_dependence(verdict):
    cfg = _cfg("rho_harmonic.conf")
    t0 = time.perf_counter()
    n = cfg.steps(cfg["periods"])
    seeds = (cfg["seed"], cfg["alt_seed"])
    other = cfg.mixture(alternate=True)
    coupled = rho_equivalence_test(cfg.scenario(), other, n, seeds, cfg["rho_coef"])
    control = rho_equivalence_test(cfg.scenario(coupling=0.0), other, n, seeds, cfg["rho_coef"])
    tol = coupled.tolerance
    differs = coupled.final_rho_distance >= 3 * tol or coupled.max_abs_z >= 5
    ok = (coupled.initial_rho_distance <= tol and differs and control.initial_rho_distance <= tol
          and control.final_rho_distance <= tol)
    detail = (f"initial L1 {coupled.initial_rho_distance:.4f} <= {tol:.4f}; coupled final L1 "
              f"{coupled.final_rho_distance:.4f} (3 tol = {3 * tol:.4f}), max |z| {coupled.max_abs_z:.1f}; "
              f"lambda=0 final L1 {control.final_rho_distance:.4f} <= {tol:.4f}")
    assert verdict("C7 rho-representation dependence", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 8

def test_c8_oracle_agreement(verdict):
    cfg = _cfg("oracle_harmonic.conf")
    t0 = time.perf_counter()
    model = cfg.model()
    assert (model.coupling, model.M / model.m) == (0.1, 10.0)
    n = cfg.steps(cfg["compare_periods"])
    rep = compare_hybrid_exact(cfg.scenario(), cfg.exact_grid(), n, every=5, rel_tol=cfg["agreement_rel_tol"])
    comp = cfg.mixture().components[0]
    q = quantum_expectations(comp.psi, comp.classical.X, model)
    x_nm, X_nm = normal_mode_solution(model, q.x, q.p, comp.classical.X, comp.classical.K, rep.times)
    nm_err = max(float(np.max(np.abs(rep.exact["x"] - x_nm))), float(np.max(np.abs(rep.exact["X"] - X_nm))))
    rel = float(np.max(rep.error["X"]) / rep.scale)
    ok = rep.horizon is None and nm_err <= 1e-3
    detail = (f"hybrid <X> max error {rel * 100:.3f}% of the classical amplitude (<=5%) over "
              f"{n} steps = {rep.times[-1]:.4f} (quarter period); exact 2D vs normal modes {nm_err:.2e} (<=1e-3)")
    assert verdict("C8 oracle agreement", ok, detail, time.perf_counter() - t0)


# ------------------------------------------------------------------ 9

@pytest.mark.parametrize("name", ["decoupled.conf", "coupled_double_well.conf", "rho_harmonic.conf",
                                  "oracle_harmonic.conf"])
def test_c9_determinism(verdict, name):
    t0 = time.perf_counter()
    cfg = _cfg(name)
    steps = 300

    def run(workers, order=None):
        sc = replace(load_config(CONFIGS / name).scenario(), N=300)
        e = sc.sample()
        if order is not None:
            e = e.subset(order)
        with sfft.set_workers(workers):
            out = evolve_steps(e, steps)
            return out, resample_bohmian(out, cfg["resample_seed"])

    a, ra = run(1)
    b, rb = run(4)
    order = np.arange(300)[::-1]
    c, _ = run(2, order)
    same_threads = bit_identical(a, b) and np.array_equal(ra.y, rb.y)
    same_order = bit_identical(a.subset(order), c)
    r = replace(cfg.scenario(), N=2).sample().replica(0)
    same_replica = determinism_check(r, cfg.model(), cfg["dt"], 1000)
    ok = same_threads and same_order and same_replica
    detail = (f"{name}: {steps} steps at N=300 bit-identical across 1/4 threads: {same_threads}; "
              f"under reversed replica order: {same_order}; two replica copies over 1000 steps: {same_replica}")
    assert verdict("C9 determinism", ok, detail, time.perf_counter() - t0)
