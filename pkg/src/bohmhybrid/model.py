"""Potentials and the hybrid Hamiltonian container.

The quantum coordinate is ``x`` (mass ``m``), the classical coordinate is
``X`` (mass ``M``). Every potential carries a closed-form value and first
derivative; ``HybridModel`` checks the derivatives against central finite
differences when it is built.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Harmonic:
    """V(x) = mass * omega**2 * x**2 / 2."""

    omega: float
    mass: float = 1.0

    kind = "harmonic"

    def value(self, x):
        return 0.5 * self.mass * self.omega**2 * np.square(x)

    def derivative(self, x):
        return self.mass * self.omega**2 * np.asarray(x)

    def params(self) -> dict:
        return {"kind": self.kind, "omega": self.omega}


@dataclass(frozen=True)
class DoubleWell:
    """Quartic well V(x) = h * ((2x/d)**2 - 1)**2 with minima at +-d/2."""

    barrier_height: float
    separation: float

    kind = "double_well"

    def value(self, x):
        s = np.square(2.0 * np.asarray(x) / self.separation) - 1.0
        return self.barrier_height * s * s

    def derivative(self, x):
        x = np.asarray(x)
        s = np.square(2.0 * x / self.separation) - 1.0
        return self.barrier_height * 16.0 * x * s / self.separation**2

    def params(self) -> dict:
        return {"kind": self.kind, "barrier_height": self.barrier_height,
                "separation": self.separation}


@dataclass(frozen=True)
class Bilinear:
    """V_int(x, X) = strength * x * X."""

    strength: float

    kind = "bilinear"

    def value(self, x, X):
        return self.strength * np.asarray(x) * np.asarray(X)

    def d_dx(self, x, X):
        return self.strength * np.asarray(X) * np.ones_like(np.asarray(x, dtype=float))

    def d_dX(self, x, X):
        return self.strength * np.asarray(x) * np.ones_like(np.asarray(X, dtype=float))

    # slope of the coupling in x at fixed X; enables the cheap kick phase
    def x_slope(self, X):
        return self.strength * np.asarray(X, dtype=float)

    @property
    def decoupled(self) -> bool:
        return self.strength == 0.0

    def params(self) -> dict:
        return {"kind": self.kind, "lambda": self.strength}


def _check_derivative(f, df, points: np.ndarray, name: str) -> None:
    h = 1e-5 * np.maximum(1.0, np.abs(points))
    fd = (f(points + h) - f(points - h)) / (2.0 * h)
    exact = df(points)
    scale = np.maximum(np.abs(exact), 1.0)
    err = np.max(np.abs(fd - exact) / scale)
    if not err < 1e-6:
        raise ModelError(f"{name}: derivative disagrees with finite differences (rel err {err:.3g})")


@dataclass(frozen=True)
class HybridModel:
    m: float
    M: float
    hbar: float
    v_q: Harmonic | DoubleWell
    v_c: Harmonic
    v_int: Bilinear = field(default_factory=lambda: Bilinear(0.0))

    def __post_init__(self):
        for name in ("m", "M", "hbar"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ModelError(f"{name} must be positive and finite, got {val}")
        for pot in (self.v_q, self.v_c, self.v_int):
            for key, val in pot.params().items():
                if key != "kind" and not np.isfinite(val):
                    raise ModelError(f"{pot.kind}.{key} is not finite")
        # the classical well is defined with the classical mass
        if isinstance(self.v_c, Harmonic) and self.v_c.mass != self.M:
            object.__setattr__(self, "v_c", Harmonic(self.v_c.omega, self.M))
        if isinstance(self.v_q, Harmonic) and self.v_q.mass != self.m:
            object.__setattr__(self, "v_q", Harmonic(self.v_q.omega, self.m))
        self._self_test()

    def _self_test(self) -> None:
        rng = np.random.default_rng(12345)
        pts = rng.uniform(-5.0, 5.0, size=100)
        other = rng.uniform(-5.0, 5.0, size=100)
        _check_derivative(self.v_q.value, self.v_q.derivative, pts, "v_q")
        _check_derivative(self.v_c.value, self.v_c.derivative, pts, "v_c")
        _check_derivative(lambda x: self.v_int.value(x, other),
                          lambda x: self.v_int.d_dx(x, other), pts, "v_int/dx")
        _check_derivative(lambda X: self.v_int.value(other, X),
                          lambda X: self.v_int.d_dX(other, X), pts, "v_int/dX")

    @property
    def coupling(self) -> float:
        return self.v_int.strength

    def with_coupling(self, strength: float) -> "HybridModel":
        return HybridModel(self.m, self.M, self.hbar, self.v_q, self.v_c, Bilinear(strength))

    def classical_period(self) -> float:
        return 2.0 * np.pi / self.v_c.omega

    def describe(self) -> dict:
        return {"m": self.m, "M": self.M, "hbar": self.hbar,
                "v_q": self.v_q.params(), "v_c": self.v_c.params(),
                "v_int": self.v_int.params()}
