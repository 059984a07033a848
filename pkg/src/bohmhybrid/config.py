"""Plain-text ``key = value`` run configuration.

One setting per line, ``#`` starts a comment. Keys and units:

    scenario          free-form label
    m, M              quantum / classical mass [mass]
    hbar              reduced Planck constant [action]
    v_q               quantum well: harmonic | double_well
    omega_q           harmonic frequency of the quantum well [1/time]
    barrier_height    double-well barrier height [energy]
    well_separation   distance between the double-well minima [length]
    omega_c           classical harmonic frequency [1/time]
    lambda            bilinear coupling lambda * x * X [energy/length^2]
    x_min, x_max      quantum grid interval [length]
    grid_count        quantum grid points (power of two >= 64)
    dt                time step [time]
    periods           run length in classical periods (rounded to whole steps)
    t1_periods        composability split time [classical periods]
    t2_periods        composability end time [classical periods]
    compare_periods   exact-comparison length [classical periods]
    N                 replicas
    seed              master seed
    resample_seed     seed for Bohmian re-sampling
    alt_seed          seed for the second arm of the rho test
    record_every      steps between time-series rows
    output_dir        where artifacts go
    eps_node          node threshold relative to max|psi|
    interp_order      1 (linear) or 3 (cubic) velocity interpolation
    ks_coef           KS 99% coefficient (threshold = ks_coef / sqrt(N))
    z_differs         |z| needed to call two arms different
    z_agree           |z| bound for control arms
    rho_coef          rho sampling tolerance = rho_coef / sqrt(N)
    energy_control_tol  bound on the decoupled energy drift
    agreement_rel_tol   hybrid-vs-exact tolerance on <X>, relative to the classical amplitude
    exact_X_min, exact_X_max, exact_X_count   grid of the heavy coordinate in the 2D oracle
    dt_halving        true | false: also audit energy at dt/2

Mixture components (repeatable):

    component     = <weight> | point <X> <K> | gaussian <x0> <sigma> <k0>
    component     = <weight> | gaussian <Xmean> <Kmean> <Xstd> <Kstd> | eigen <n>
    alt_component = <weight> | point <X> <K> | superpose <n>:<c> <n>:<c> ...

``component`` lines form the main mixture, ``alt_component`` lines the
second mixture of the rho test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import Scenario
from .ensemble import ClassicalGaussian, ClassicalPoint, InitialMixture, MixtureComponent
from .grid import SpatialGrid, build_grid, init_eigenstate, init_gaussian, superposition
from .model import Bilinear, DoubleWell, Harmonic, HybridModel


class ConfigError(ValueError):
    pass


_FLOAT = float
_INT = int

# key -> (type, default); default None marks a required key
FIELDS: dict[str, tuple[type, object]] = {
    "scenario": (str, "unnamed"),
    "m": (_FLOAT, None),
    "M": (_FLOAT, None),
    "hbar": (_FLOAT, None),
    "v_q": (str, None),
    "omega_q": (_FLOAT, math.nan),
    "barrier_height": (_FLOAT, math.nan),
    "well_separation": (_FLOAT, math.nan),
    "omega_c": (_FLOAT, None),
    "lambda": (_FLOAT, None),
    "x_min": (_FLOAT, None),
    "x_max": (_FLOAT, None),
    "grid_count": (_INT, None),
    "dt": (_FLOAT, None),
    "periods": (_FLOAT, 2.0),
    "t1_periods": (_FLOAT, 1.0),
    "t2_periods": (_FLOAT, 2.0),
    "compare_periods": (_FLOAT, 0.25),
    "N": (_INT, None),
    "seed": (_INT, None),
    "resample_seed": (_INT, 1_000_003),
    "alt_seed": (_INT, 1_000_033),
    "record_every": (_INT, 10),
    "output_dir": (str, "out"),
    "eps_node": (_FLOAT, 1e-6),
    "interp_order": (_INT, 3),
    "ks_coef": (_FLOAT, 1.63),
    "z_differs": (_FLOAT, 5.0),
    "z_agree": (_FLOAT, 3.0),
    "rho_coef": (_FLOAT, 5.0),
    "energy_control_tol": (_FLOAT, 1e-6),
    "agreement_rel_tol": (_FLOAT, 0.05),
    "exact_X_min": (_FLOAT, -4.0),
    "exact_X_max": (_FLOAT, 4.0),
    "exact_X_count": (_INT, 256),
    "dt_halving": (str, "false"),
}
REPEATED = ("component", "alt_component")


@dataclass
class RunConfig:
    values: dict
    components: list[tuple[int, str]] = field(default_factory=list)
    alt_components: list[tuple[int, str]] = field(default_factory=list)
    source: str = "<string>"

    def __getitem__(self, key):
        return self.values[key]

    def echo(self) -> dict:
        out = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.values.items()}
        out["component"] = [text for _, text in self.components]
        out["alt_component"] = [text for _, text in self.alt_components]
        return out

    # ------------------------------------------------------------ builders
    def model(self, coupling: float | None = None) -> HybridModel:
        v = self.values
        if v["v_q"] == "harmonic":
            v_q = Harmonic(v["omega_q"], v["m"])
        else:
            v_q = DoubleWell(v["barrier_height"], v["well_separation"])
        lam = v["lambda"] if coupling is None else coupling
        return HybridModel(v["m"], v["M"], v["hbar"], v_q, Harmonic(v["omega_c"], v["M"]), Bilinear(lam))

    def grid(self) -> SpatialGrid:
        return build_grid(self["x_min"], self["x_max"], self["grid_count"])

    def exact_grid(self) -> SpatialGrid:
        return build_grid(self["exact_X_min"], self["exact_X_max"], self["exact_X_count"])

    def mixture(self, alternate: bool = False) -> InitialMixture:
        lines = self.alt_components if alternate else self.components
        key = "alt_component" if alternate else "component"
        if not lines:
            raise ConfigError(f"{self.source}: field '{key}': no mixture components given")
        grid, model = self.grid(), self.model()
        comps = []
        for lineno, text in lines:
            try:
                comps.append(_parse_component(text, grid, model))
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{self.source}:{lineno}: field '{key}': {exc}") from None
        try:
            return InitialMixture(tuple(comps))
        except ValueError as exc:
            raise ConfigError(f"{self.source}: field '{key}': {exc}") from None

    def scenario(self, coupling: float | None = None) -> Scenario:
        return Scenario(self.model(coupling), self.mixture(), self["N"], self["seed"], self["dt"],
                        self["eps_node"], self["interp_order"])

    def steps(self, periods: float) -> int:
        return int(round(periods * 2.0 * math.pi / self["omega_c"] / self["dt"]))


def _parse_component(text: str, grid: SpatialGrid, model: HybridModel) -> MixtureComponent:
    parts = [p.strip() for p in text.split("|")]
    if len(parts) != 3:
        raise ValueError("expected '<weight> | <classical> | <psi>'")
    weight = float(parts[0])
    cl = parts[1].split()
    if cl[0] == "point" and len(cl) == 3:
        classical = ClassicalPoint(float(cl[1]), float(cl[2]))
    elif cl[0] == "gaussian" and len(cl) == 5:
        classical = ClassicalGaussian(*map(float, cl[1:]))
    else:
        raise ValueError(f"bad classical spec {parts[1]!r}")
    q = parts[2].split()
    if q[0] == "gaussian" and len(q) == 4:
        psi = init_gaussian(grid, float(q[1]), float(q[2]), float(q[3]))
    elif q[0] == "eigen" and len(q) == 2:
        psi = init_eigenstate(grid, model, int(q[1]))
    elif q[0] == "superpose" and len(q) >= 2:
        coeffs = {}
        for item in q[1:]:
            n, c = item.split(":")
            coeffs[int(n)] = complex(c)
        psi = superposition(grid, model, coeffs)
    else:
        raise ValueError(f"bad wavefunction spec {parts[2]!r}")
    return MixtureComponent(weight, classical, psi, parts[2])


def _convert(key: str, raw: str, lineno: int, source: str):
    kind = FIELDS[key][0]
    try:
        val = kind(raw)
    except ValueError:
        raise ConfigError(f"{source}:{lineno}: field '{key}': cannot read {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(val):
        raise ConfigError(f"{source}:{lineno}: field '{key}': value must be finite")
    return val


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    values: dict = {}
    where: dict = {}
    cfg = RunConfig(values, source=source)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "component":
            cfg.components.append((lineno, raw))
            continue
        if key == "alt_component":
            cfg.alt_components.append((lineno, raw))
            continue
        if key not in FIELDS:
            raise ConfigError(f"{source}:{lineno}: field '{key}': unknown key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: field '{key}': duplicate (first set on line {where[key]})")
        values[key] = _convert(key, raw, lineno, source)
        where[key] = lineno
    for key, (_, default) in FIELDS.items():
        if key not in values:
            if default is None:
                raise ConfigError(f"{source}: missing required field '{key}'")
            values[key] = default
    _validate(cfg, where)
    return cfg


def _validate(cfg: RunConfig, where: dict) -> None:
    v = cfg.values

    def fail(key, msg):
        loc = f"{cfg.source}:{where[key]}" if key in where else cfg.source
        raise ConfigError(f"{loc}: field '{key}': {msg}")

    for key in ("m", "M", "hbar", "dt", "eps_node", "ks_coef", "rho_coef", "z_differs", "z_agree"):
        if not v[key] > 0:
            fail(key, "must be positive")
    if v["v_q"] not in ("harmonic", "double_well"):
        fail("v_q", "must be 'harmonic' or 'double_well'")
    if v["v_q"] == "harmonic" and not v["omega_q"] > 0:
        fail("omega_q", "required (positive) for a harmonic quantum well")
    if v["v_q"] == "double_well":
        for key in ("barrier_height", "well_separation"):
            if not v[key] > 0:
                fail(key, "required (positive) for a double-well quantum potential")
    if not v["omega_c"] > 0:
        fail("omega_c", "must be positive")
    if not v["x_max"] > v["x_min"]:
        fail("x_max", "must exceed x_min")
    n = v["grid_count"]
    if n < 64 or n & (n - 1):
        fail("grid_count", "must be a power of two >= 64")
    if v["N"] < 2:
        fail("N", "must be at least 2")
    if v["record_every"] < 1:
        fail("record_every", "must be at least 1")
    if v["interp_order"] not in (1, 3):
        fail("interp_order", "must be 1 or 3")
    if v["periods"] < 0:
        fail("periods", "must be non-negative")
    if not 0 < v["t1_periods"] < v["t2_periods"]:
        fail("t1_periods", "need 0 < t1_periods < t2_periods")
    if v["dt_halving"] not in ("true", "false"):
        fail("dt_halving", "must be 'true' or 'false'")
    if v["seed"] < 0:
        fail("seed", "must be non-negative")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))
