"""Guidance velocity field and Bohmian trajectory steps.

v(x) = (hbar/m) Im(psi'/psi), evaluated on the grid with a spectral
derivative. Points where |psi| falls below ``eps_node * max|psi|`` are
masked and refilled by linear interpolation between the nearest unmasked
neighbours; trajectories that land in such a region get flagged.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from . import kernels
from .grid import SpatialGrid, WaveFunction
from .model import HybridModel
from .quantum import spectral_derivative

DEFAULT_EPS_NODE = 1e-6


class BohmianError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VelocityField:
    grid: SpatialGrid
    values: np.ndarray
    node_mask: np.ndarray


def batch_velocity_field(amp: np.ndarray, grid: SpatialGrid, model: HybridModel,
                         eps_node: float = DEFAULT_EPS_NODE, edges: bool = False):
    """Node-filled velocity rows and their node masks (plus edge ratios if ``edges``)."""
    amp = np.ascontiguousarray(np.atleast_2d(amp), dtype=complex)
    try:
        v, mask, edge = kernels.velocity_rows(amp, spectral_derivative(amp, grid), model.hbar / model.m, eps_node**2)
    except ValueError:
        raise BohmianError("velocity field fully masked (zero wavefunction)") from None
    return (v, mask, edge) if edges else (v, mask)


def velocity_field(psi: WaveFunction, model: HybridModel, eps_node: float = DEFAULT_EPS_NODE) -> VelocityField:
    v, mask = batch_velocity_field(psi.amplitudes, psi.grid, model, eps_node)
    return VelocityField(psi.grid, v[0], mask[0])


def interpolate_batch(values: np.ndarray, mask: np.ndarray, grid: SpatialGrid, rows: np.ndarray,
                      y: np.ndarray, order: int = 3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate field row ``rows[i]`` at ``y[i]`` with a 4-point Lagrange stencil.

    Returns (velocity, near_node, outside). Points outside the grid are
    evaluated at the nearest valid cell and reported in ``outside``.
    ``values`` must already be node-filled.
    """
    if order not in (1, 3):
        raise BohmianError(f"interpolation order must be 1 or 3, got {order}")
    return kernels.interpolate(np.ascontiguousarray(values, dtype=float), np.ascontiguousarray(mask),
                               np.ascontiguousarray(rows, dtype=np.int64),
                               np.ascontiguousarray(y, dtype=float), float(grid.x_min), float(grid.spacing), order)


def velocity_at(field: VelocityField, y: float, order: int = 3) -> tuple[float, bool]:
    """Interpolated velocity at ``y`` and whether ``y`` sits in a masked (node) region."""
    if not field.grid.contains(y):
        raise BohmianError(f"position {y} outside the grid")
    v, near, _ = interpolate_batch(field.values[None, :], field.node_mask[None, :], field.grid,
                                   np.zeros(1, dtype=np.int64), np.array([y]), order)
    return float(v[0]), bool(near[0])


def heun_batch(y: np.ndarray, field_t: tuple[np.ndarray, np.ndarray], field_next: tuple[np.ndarray, np.ndarray],
               grid: SpatialGrid, rows: np.ndarray, dt: float, order: int = 3):
    """Heun step for many trajectories; returns (y_new, near_node, escaped)."""
    if order not in (1, 3):
        raise BohmianError(f"interpolation order must be 1 or 3, got {order}")
    y_new = np.array(y, dtype=float)
    near = np.zeros(y_new.size, dtype=bool)
    escaped = np.zeros(y_new.size, dtype=bool)
    dummy = np.zeros(y_new.size)
    kernels.heun_step(dummy, dummy, y_new, np.ascontiguousarray(rows, dtype=np.int64),
                      np.ascontiguousarray(field_t[0], dtype=float), np.ascontiguousarray(field_t[1]),
                      np.ascontiguousarray(field_next[0], dtype=float), np.ascontiguousarray(field_next[1]),
                      float(grid.x_min), float(grid.x_max - grid.spacing), float(grid.spacing), order, float(dt),
                      1.0, 0.0, 0.0, False, False, near, escaped)
    return y_new, near, escaped


def advance_bohmian(y: float, field_t: VelocityField, field_next: VelocityField, dt: float,
                    order: int = 3) -> tuple[float, dict]:
    """One Heun step of a single trajectory. Returns the new position and its flags."""
    if not dt > 0:
        raise BohmianError(f"dt must be positive, got {dt}")
    rows = np.zeros(1, dtype=np.int64)
    y_new, near, escaped = heun_batch(np.array([float(y)]), (field_t.values[None], field_t.node_mask[None]),
                                      (field_next.values[None], field_next.node_mask[None]),
                                      field_t.grid, rows, dt, order)
    return float(y_new[0]), {"node_proximity": bool(near[0]), "boundary": bool(escaped[0])}
