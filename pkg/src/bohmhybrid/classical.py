"""Hamiltonian motion of the classical particle driven by the Bohmian position."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HybridModel


class ClassicalError(ValueError):
    pass


@dataclass(frozen=True)
class ClassicalState:
    X: float
    K: float

    def __post_init__(self):
        if not (np.isfinite(self.X) and np.isfinite(self.K)):
            raise ClassicalError(f"non-finite classical state ({self.X}, {self.K})")


def classical_force(model: HybridModel, y, X):
    """F = -dV_c/dX - dV_int(y, X)/dX, with the Bohmian position standing in for x."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise ClassicalError("non-finite input to classical_force")
    return -model.v_c.derivative(X) - model.v_int.d_dX(y, X)


def verlet_batch(X: np.ndarray, K: np.ndarray, y: np.ndarray, dt: float, model: HybridModel):
    """Velocity-Verlet step with ``y`` frozen; vectorized over replicas."""
    K = K + 0.5 * dt * classical_force(model, y, X)
    X = X + dt * K / model.M
    K = K + 0.5 * dt * classical_force(model, y, X)
    return X, K


def advance_classical(state: ClassicalState, y_mid: float, dt: float, model: HybridModel) -> ClassicalState:
    if not dt > 0:
        raise ClassicalError(f"dt must be positive, got {dt}")
    X, K = verlet_batch(np.float64(state.X), np.float64(state.K), np.float64(y_mid), dt, model)
    if not (np.isfinite(X) and np.isfinite(K)):
        raise ClassicalError("classical step produced non-finite values")
    return ClassicalState(float(X), float(K))


def classical_energy(X, K, model: HybridModel):
    return np.asarray(K) ** 2 / (2.0 * model.M) + model.v_c.value(X)
