import json

import numpy as np
import pytest

from bohmhybrid.cli import EXIT_CONFIG, EXIT_OK, main
from bohmhybrid.config import ConfigError, load_config, parse_config
from bohmhybrid.output import read_csv, read_snapshot, write_csv, write_snapshot

SMALL = """\
scenario = small
m = 1.0
M = 1.0
hbar = 1.0
v_q = harmonic
omega_q = 1.0
omega_c = 2.0
lambda = {lam}
x_min = -8.0
x_max = 8.0
grid_count = 128
dt = 5e-3
N = {N}
seed = 11
periods = 0.1
t1_periods = 0.05
t2_periods = 0.1
compare_periods = 0.1
record_every = 7
exact_X_count = 128
# omega_c dt / 2 = 5e-3: Verlet energy wobble ~2.5e-5 relative
energy_control_tol = 1e-4
component = 0.5 | point 1.0 0.0 | eigen 0
component = 0.5 | point 1.0 0.0 | eigen 1
alt_component = 0.5 | point 1.0 0.0 | superpose 0:1 1:1
alt_component = 0.5 | point 1.0 0.0 | superpose 0:1 1:-1
"""


def _write(tmp_path, text, name="run.conf"):
    path = tmp_path / name
    path.write_text(text)
    return path


def _small(tmp_path, lam=0.25, N=1000, **replace):
    text = SMALL.format(lam=lam, N=N)
    for key, line in replace.items():
        text = "\n".join(line if ln.startswith(key + " ") else ln for ln in text.splitlines()) + "\n"
    return _write(tmp_path, text)


def test_missing_lambda_names_the_field(tmp_path, capsys):
    text = "\n".join(ln for ln in SMALL.format(lam=0, N=10).splitlines() if not ln.startswith("lambda"))
    assert main(["evolve", "--config", str(_write(tmp_path, text)), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "lambda" in capsys.readouterr().err


def test_composability_with_t1_after_t2(tmp_path, capsys):
    cfg = _small(tmp_path, t1_periods="t1_periods = 0.2")
    assert main(["composability", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "t1_periods" in capsys.readouterr().err


@pytest.mark.parametrize("line,field", [("grid_count = 100", "grid_count"), ("dt = -1", "dt"),
                                         ("v_q = quartic", "v_q"), ("N = x", "N"), ("mystery = 1", "mystery")])
def test_bad_values_report_line_and_field(line, field):
    text = SMALL.format(lam=0, N=10) + line + "\n"
    with pytest.raises(ConfigError, match=f"field '{field}'"):
        parse_config(text, "t.conf")


def test_error_message_has_line_number():
    text = SMALL.format(lam=0, N=10).replace("dt = 5e-3", "dt = -5e-3")
    with pytest.raises(ConfigError, match=r"t\.conf:12: field 'dt'"):
        parse_config(text, "t.conf")


def test_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(SMALL.format(lam=0, N=10) + "seed = 3\n")


def test_cfl_violation_is_a_config_error(tmp_path):
    cfg = _small(tmp_path, dt="dt = 0.1")
    assert main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["evolve", "--config", str(tmp_path / "nope.conf")]) == EXIT_CONFIG


def test_shipped_configs_load():
    from pathlib import Path
    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.conf")):
        cfg = load_config(path)
        cfg.scenario()
        assert cfg.steps(cfg["periods"]) > 0


def _summary(path):
    return json.loads((path / "summary.json").read_text())


def test_evolve_is_reproducible_across_threads(tmp_path):
    cfg = _small(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["evolve", "--config", str(cfg), "--out", str(a), "--threads", "1"]) == EXIT_OK
    assert main(["evolve", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == EXIT_OK
    assert (a / "timeseries.csv").read_bytes() == (b / "timeseries.csv").read_bytes()
    assert (a / "final" / "replicas.csv").read_bytes() == (b / "final" / "replicas.csv").read_bytes()
    sa, sb = _summary(a), _summary(b)
    assert sa["metrics"] == sb["metrics"]
    assert sa["config"]["lambda"] == 0.25
    assert sa["seeds"]["seed"] == 11
    assert len(sa["config"]["component"]) == 2


def test_seed_flag_overrides(tmp_path):
    cfg = _small(tmp_path)
    main(["evolve", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "12"])
    assert _summary(tmp_path / "a")["seeds"]["seed"] == 12


def test_decoupled_subcommands_pass_controls(tmp_path):
    cfg = _small(tmp_path, lam=0.0)
    for sub in ("energy-audit", "equivariance", "composability", "rho-test"):
        out = tmp_path / sub
        status = main([sub, "--config", str(cfg), "--out", str(out)])
        s = _summary(out)
        assert status == EXIT_OK, (sub, s["controls"])
        assert s["controls_passed"]
        assert any(p.suffix == ".csv" for p in out.iterdir())


def test_exact_compare_needs_a_single_point_component(tmp_path):
    cfg = _small(tmp_path, lam=0.1)
    assert main(["exact-compare", "--config", str(cfg), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    text = "\n".join(ln for ln in cfg.read_text().splitlines() if "eigen 1" not in ln)
    text = text.replace("0.5 | point 1.0 0.0 | eigen 0", "1.0 | point 1.0 0.0 | eigen 0")
    # the heavy packet (width 0.5 at X = 1) does not fit on the default [-4, 4]
    assert main(["exact-compare", "--config", str(_write(tmp_path, text, "one.conf")),
                 "--out", str(tmp_path / "y")]) == EXIT_CONFIG
    single = _write(tmp_path, text + "exact_X_min = -6\nexact_X_max = 6\n", "wide.conf")
    out = tmp_path / "ok"
    assert main(["exact-compare", "--config", str(single), "--out", str(out)]) == EXIT_OK
    s = _summary(out)
    assert s["controls_passed"]
    assert (out / "exact_compare.csv").exists()


def test_snapshot_round_trip(tmp_path):
    from bohmhybrid.config import parse_config
    e = parse_config(SMALL.format(lam=0.25, N=5)).scenario().sample()
    write_snapshot(e, tmp_path / "snap")
    back = read_snapshot(tmp_path / "snap")
    assert np.array_equal(back["y"], e.y)
    assert np.array_equal(back["X"], e.X)
    assert np.array_equal(back["psi_bank"], e.psi_bank)


def test_csv_text_and_float_columns(tmp_path):
    vals = np.array([0.1, 1 / 3, -2.5e-300, 1e308])
    write_csv(tmp_path / "t.csv", ["name", "v"], [["a", "b", "c", "d"], vals])
    back = read_csv(tmp_path / "t.csv")
    assert list(back["name"]) == ["a", "b", "c", "d"]
    assert np.array_equal(back["v"], vals)
