"""Command-line entry point: ``bohmhybrid <subcommand> --config run.conf``.

Exit status: 0 ok, 2 bad configuration, 3 contaminated run (too many
flagged replicas), 4 a control arm failed its bound.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (CONTAMINATION_LIMIT, composability_test, energy_audit, equivariance_metric,
                          rho_equivalence_test)
from .ensemble import OBSERVABLE_NAMES, EnsembleError, ensemble_observables, evolve_steps
from .exact import MappingError, compare_hybrid_exact, normal_mode_solution, oracle_initial_state
from .model import Harmonic, ModelError
from .output import write_csv, write_json, write_snapshot
from .quantum import PropagationError, check_time_step, quantum_expectations

EXIT_OK, EXIT_CONFIG, EXIT_CONTAMINATED, EXIT_CONTROL = 0, 2, 3, 4
SUBCOMMANDS = ("evolve", "energy-audit", "equivariance", "composability", "rho-test", "exact-compare", "selftest")


class _Run:
    """Collects the summary for one invocation and decides the exit status."""

    def __init__(self, name: str, cfg: RunConfig | None, out: Path):
        self.name = name
        self.cfg = cfg
        self.out = out
        self.metrics: dict = {}
        self.controls: dict[str, dict] = {}
        self.contaminated = False
        self.started = time.perf_counter()

    def control(self, label: str, value: float, bound: float, passed: bool) -> None:
        self.controls[label] = {"value": value, "bound": bound, "passed": bool(passed)}

    def flag(self, fraction: float) -> None:
        self.contaminated |= fraction > CONTAMINATION_LIMIT

    def finish(self) -> int:
        ok = all(c["passed"] for c in self.controls.values())
        status = EXIT_CONTROL if not ok else EXIT_CONTAMINATED if self.contaminated else EXIT_OK
        summary = {
            "subcommand": self.name,
            "version": __version__,
            "config": self.cfg.echo() if self.cfg else None,
            "config_source": self.cfg.source if self.cfg else None,
            "seeds": _seeds(self.cfg) if self.cfg else None,
            "metrics": self.metrics,
            "controls": self.controls,
            "controls_passed": ok,
            "contaminated": self.contaminated,
            "exit_status": status,
            "wall_seconds": time.perf_counter() - self.started,
            "platform": {"python": platform.python_version(), "numpy": np.__version__},
        }
        write_json(self.out / "summary.json", summary)
        return status


def _seeds(cfg: RunConfig) -> dict:
    return {"seed": cfg["seed"], "resample_seed": cfg["resample_seed"], "alt_seed": cfg["alt_seed"]}


def _observable_table(obs) -> dict:
    return {k: {"mean": v.mean, "stderr": v.stderr} for k, v in obs.items()}


def _series_recorder(columns: dict):
    def record(e):
        obs = ensemble_observables(e)
        columns["t"].append(e.time)
        columns["step"].append(e.step)
        for k in OBSERVABLE_NAMES:
            columns[k].append(obs[k].mean)
            columns[k + "_se"].append(obs[k].stderr)
        columns["flagged_fraction"].append(e.flagged_fraction)
    return record


# ---------------------------------------------------------------- subcommands

def cmd_evolve(cfg: RunConfig, run: _Run) -> None:
    sc = cfg.scenario()
    n = cfg.steps(cfg["periods"])
    header = ["t", "step"] + [c for k in OBSERVABLE_NAMES for c in (k, k + "_se")] + ["flagged_fraction"]
    cols = {h: [] for h in header}
    record = _series_recorder(cols)
    e0 = sc.sample()
    record(e0)
    final = evolve_steps(e0, n, record, cfg["record_every"])
    if n % cfg["record_every"]:
        record(final)
    write_csv(run.out / "timeseries.csv", header, [cols[h] for h in header])
    write_snapshot(final, run.out / "final")
    run.metrics = {"steps": n, "time": final.time, "final_observables": _observable_table(ensemble_observables(final)),
                   "flagged_fraction": final.flagged_fraction}
    run.flag(final.flagged_fraction)


def _write_audit(path: Path, audit) -> None:
    header = ["t", "E_qexp", "E_point"] + list(audit.components)
    write_csv(path, header, [audit.times, audit.E_qexp, audit.E_point] + list(audit.components.values()))


def cmd_energy_audit(cfg: RunConfig, run: _Run) -> None:
    sc = cfg.scenario()
    n = cfg.steps(cfg["periods"])
    audit = energy_audit(sc, n, cfg["record_every"], baseline=True)
    _write_audit(run.out / "energy.csv", audit)
    run.metrics = {"steps": n, **audit.summary(),
                   "ratio_qexp_to_baseline": audit.drift_qexp / audit.baseline_drift_qexp,
                   "ratio_point_to_baseline": audit.drift_point / audit.baseline_drift_point}
    run.control("decoupled drift_qexp", audit.baseline_drift_qexp, cfg["energy_control_tol"],
                audit.baseline_drift_qexp <= cfg["energy_control_tol"])
    if cfg["dt_halving"] == "true":
        fine = energy_audit(sc.with_dt(0.5 * sc.dt), 2 * n, 2 * cfg["record_every"], baseline=True)
        _write_audit(run.out / "energy_half_dt.csv", fine)
        run.metrics["half_dt"] = fine.summary()
        run.metrics["halving_ratio_qexp"] = audit.drift_qexp / fine.drift_qexp
        run.metrics["halving_ratio_point"] = audit.drift_point / fine.drift_point
        ratio = audit.baseline_drift_qexp / fine.baseline_drift_qexp
        run.metrics["halving_ratio_baseline_qexp"] = ratio
        # the decoupled drift is integrator error, so it must shrink like dt^2
        run.control("decoupled drift halving ratio", ratio, 4.0, abs(ratio - 4.0) <= 1.0)
        run.flag(fine.flagged_fraction)
    run.flag(audit.flagged_fraction)


def cmd_equivariance(cfg: RunConfig, run: _Run) -> None:
    n = cfg.steps(cfg["periods"])
    every = cfg["record_every"]
    cols: dict[str, list] = {"t": [], "ks_coupled": [], "ks_decoupled": [], "threshold": []}
    arms = {}
    for label, sc in (("coupled", cfg.scenario()), ("decoupled", cfg.scenario(coupling=0.0))):
        series = []

        def record(e, series=series):
            series.append((e.time, equivariance_metric(e, cfg["ks_coef"])))

        e0 = sc.sample()
        record(e0)
        final = evolve_steps(e0, n, record, every)
        if n % every:
            record(final)
        arms[label] = (series, final)
    for (t, a), (_, b) in zip(arms["coupled"][0], arms["decoupled"][0]):
        cols["t"].append(t)
        cols["ks_coupled"].append(a["ks_distance"])
        cols["ks_decoupled"].append(b["ks_distance"])
        cols["threshold"].append(a["threshold"])
    write_csv(run.out / "equivariance.csv", list(cols), list(cols.values()))
    coupled, decoupled = arms["coupled"][0][-1][1], arms["decoupled"][0][-1][1]
    thr = coupled["threshold"]
    run.metrics = {"steps": n, "time": arms["coupled"][1].time, "ks_coupled": coupled["ks_distance"],
                   "ks_decoupled": decoupled["ks_distance"], "threshold": thr,
                   "bias_detected": coupled["ks_distance"] > thr,
                   "flagged_fraction": arms["coupled"][1].flagged_fraction}
    run.control("decoupled KS", decoupled["ks_distance"], thr + 0.01, decoupled["ks_distance"] <= thr + 0.01)
    run.flag(arms["coupled"][1].flagged_fraction)


def _write_z_table(path: Path, report) -> None:
    names = list(report.z_scores)
    write_csv(path, ["observable", "one_shot", "one_shot_se", "two_stage", "two_stage_se", "z"],
              [names,
               [report.observables_one_shot[k].mean for k in names],
               [report.observables_one_shot[k].stderr for k in names],
               [report.observables_two_stage[k].mean for k in names],
               [report.observables_two_stage[k].stderr for k in names],
               [report.z_scores[k] for k in names]])


def cmd_composability(cfg: RunConfig, run: _Run) -> None:
    t1, t2 = cfg.steps(cfg["t1_periods"]), cfg.steps(cfg["t2_periods"])
    coupled = composability_test(cfg.scenario(), t1, t2, cfg["resample_seed"])
    control = composability_test(cfg.scenario(coupling=0.0), t1, t2, cfg["resample_seed"], identity_check=False)
    _write_z_table(run.out / "composability_coupled.csv", coupled)
    _write_z_table(run.out / "composability_decoupled.csv", control)
    run.metrics = {"t1_steps": t1, "t2_steps": t2, "coupled": coupled.summary(), "decoupled": control.summary(),
                   "differs": coupled.max_abs_z >= cfg["z_differs"], "z_differs": cfg["z_differs"]}
    run.control("decoupled max |z|", control.max_abs_z, cfg["z_agree"], control.max_abs_z <= cfg["z_agree"])
    run.control("identity arm bit-identical", float(coupled.identity_arm_bit_identical), 1.0,
                bool(coupled.identity_arm_bit_identical))
    run.flag(coupled.flagged_fraction)


def cmd_rho_test(cfg: RunConfig, run: _Run) -> None:
    n = cfg.steps(cfg["periods"])
    other = cfg.mixture(alternate=True)
    seeds = (cfg["seed"], cfg["alt_seed"])
    coupled = rho_equivalence_test(cfg.scenario(), other, n, seeds, cfg["rho_coef"])
    control = rho_equivalence_test(cfg.scenario(coupling=0.0), other, n, seeds, cfg["rho_coef"])
    names = list(coupled.final_observable_z_scores)
    write_csv(run.out / "rho_z_scores.csv", ["observable", "z_coupled", "z_decoupled"],
              [names, [coupled.final_observable_z_scores[k] for k in names],
               [control.final_observable_z_scores[k] for k in names]])
    tol = coupled.tolerance
    run.metrics = {"steps": n, "coupled": coupled.summary(), "decoupled": control.summary(),
                   "branching_detected": coupled.final_rho_distance >= 3 * tol or coupled.max_abs_z >= cfg["z_differs"]}
    run.control("decoupled final rho distance", control.final_rho_distance, tol, control.final_rho_distance <= tol)
    run.flag(coupled.flagged_fraction)


def cmd_exact_compare(cfg: RunConfig, run: _Run) -> None:
    n = cfg.steps(cfg["compare_periods"])
    grid_c = cfg.exact_grid()
    report = compare_hybrid_exact(cfg.scenario(), grid_c, n, cfg["record_every"], cfg["agreement_rel_tol"])
    control = compare_hybrid_exact(cfg.scenario(coupling=0.0), grid_c, n, cfg["record_every"],
                                   cfg["agreement_rel_tol"])
    header = ["t"] + [f"{src}_{k}" for k in ("x", "X", "x2") for src in ("hybrid", "hybrid_se", "exact", "error")]
    cols = [report.times]
    for k in ("x", "X", "x2"):
        cols += [report.hybrid[k], report.hybrid_stderr[k], report.exact[k], report.error[k]]
    write_csv(run.out / "exact_compare.csv", header, cols)
    run.metrics = {"steps": n, "coupled": report.summary(), "decoupled": control.summary(),
                   "agrees": report.horizon is None}
    model = cfg.model()
    if isinstance(model.v_q, Harmonic):
        comp = cfg.mixture().components[0]
        point = comp.classical
        q = quantum_expectations(comp.psi, point.X, model)
        _, X_nm = normal_mode_solution(model, q.x, q.p, point.X, point.K, report.times)
        run.metrics["normal_mode_max_error_X"] = float(np.max(np.abs(report.exact["X"] - X_nm)))
    run.control("decoupled agreement", control.summary()["max_error"]["X"], control.tolerance,
                control.horizon is None)


def cmd_selftest(cfg: RunConfig | None, run: _Run) -> None:
    from .selftest import run_checks

    results = run_checks(verbose=True)
    run.metrics = {"checks": [{"name": n, "passed": ok, "detail": d, "seconds": s} for n, ok, d, s in results]}
    failed = [n for n, ok, _, _ in results if not ok]
    run.control("selftest checks", float(len(failed)), 0.0, not failed)


COMMANDS = {
    "evolve": cmd_evolve, "energy-audit": cmd_energy_audit, "equivariance": cmd_equivariance,
    "composability": cmd_composability, "rho-test": cmd_rho_test, "exact-compare": cmd_exact_compare,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bohmhybrid", description="Hybrid quantum-classical runs with Bohmian back-reaction.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", type=Path, help="key = value run configuration (optional for selftest)")
    p.add_argument("--seed", type=int, help="master seed, overrides the config")
    p.add_argument("--out", type=Path, help="output directory, overrides output_dir")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads (0 = all cores)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = None
    try:
        if args.config is None:
            if args.subcommand != "selftest":
                raise ConfigError(f"{args.subcommand}: --config is required")
        else:
            cfg = load_config(args.config)
            if args.seed is not None:
                if args.seed < 0:
                    raise ConfigError("--seed: must be non-negative")
                cfg.values["seed"] = args.seed
            if args.subcommand == "rho-test":
                cfg.mixture(alternate=True)
            if args.subcommand == "exact-compare":
                oracle_initial_state(cfg.scenario(), cfg.exact_grid())
            cfg.scenario()  # builds model, grid and mixture: surfaces bad values now
            check_time_step(cfg.grid(), cfg.model(), cfg["dt"])
    except (ConfigError, ModelError, EnsembleError, PropagationError, MappingError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 0:
        print("config error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg["output_dir"] if cfg else "out") / args.subcommand
    workers = args.threads or os.cpu_count() or 1
    run = _Run(args.subcommand, cfg, out)
    with sfft.set_workers(workers):
        COMMANDS[args.subcommand](cfg, run)
    status = run.finish()
    print(f"{args.subcommand}: exit {status}, summary in {out / 'summary.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
