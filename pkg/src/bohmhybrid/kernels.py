"""Compiled per-replica loops (interpolation, Heun, velocity Verlet).

Plain IEEE arithmetic (no fastmath), one replica at a time, so a replica's
result does not depend on how many others share the call. Array-taking
helpers in the hot loops are inlined; a real call would refcount the arrays
once per replica. Velocity rows reaching these loops are already node-filled.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def fill_masked(values, mask):
    """In place: masked entries of each row become the linear (in index)
    interpolation between the nearest unmasked neighbours, or the nearest
    unmasked value past the ends. Rows must have an unmasked entry."""
    rows, n = values.shape
    for r in range(rows):
        left = -1
        col = 0
        while col < n:
            if not mask[r, col]:
                left = col
                col += 1
                continue
            right = col
            while right < n and mask[r, right]:
                right += 1
            for k in range(col, right):
                if left >= 0 and right < n:
                    lv = values[r, left]
                    w = (k - left) / (right - left)
                    values[r, k] = lv + w * (values[r, right] - lv)
                elif left >= 0:
                    values[r, k] = values[r, left]
                else:
                    values[r, k] = values[r, right]
            col = right


@njit(cache=True)
def velocity_rows(psi, dpsi, scale, eps2):
    """Guidance velocity scale * Im(psi'/psi) per row, with its node mask.

    Masked entries (density below ``eps2`` times the row peak) are filled as
    in ``fill_masked``. Also returns each row's edge-to-peak amplitude ratio.
    """
    rows, n = psi.shape
    v = np.empty((rows, n))
    mask = np.empty((rows, n), dtype=np.bool_)
    edge = np.empty(rows)
    for r in range(rows):
        peak = 0.0
        for k in range(n):
            d = psi[r, k].real * psi[r, k].real + psi[r, k].imag * psi[r, k].imag
            v[r, k] = d
            if d > peak:
                peak = d
        if peak == 0.0:
            raise ValueError("wavefunction row vanishes identically")
        cut = eps2 * peak
        edge[r] = math.sqrt(max(v[r, 0], v[r, n - 1])) / math.sqrt(peak)
        for k in range(n):
            d = v[r, k]
            mask[r, k] = d < cut
            # masked values are placeholders until the fill below
            if d < cut:
                v[r, k] = 0.0
            else:
                a, b = psi[r, k], dpsi[r, k]
                v[r, k] = scale * (a.real * b.imag - a.imag * b.real) / d
    fill_masked(v, mask)
    return v, mask, edge


@njit(inline="always")
def _cell(y, x_min, dx, n):
    """Left stencil node j, offset t in [0, 1] and whether y lies off the grid."""
    s = (y - x_min) / dx
    outside = not (s >= 0.0 and s <= n - 1)
    if not math.isfinite(s):
        s = 0.0
    elif s < 0.0:
        s = 0.0
    elif s > n - 1.0:
        s = n - 1.0
    j = int(s)  # s >= 0 here, so this is floor
    if j > n - 2:
        j = n - 2
    return j, s - j, outside


@njit(inline="always")
def _combine(t, v0, v1, v2, v3, order):
    if order == 1:
        return (1.0 - t) * v1 + t * v2
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) * 0.5
    w2 = -(t + 1.0) * t * (t - 2.0) * 0.5
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0 * v0 + w1 * v1 + w2 * v2 + w3 * v3


@njit(inline="always")
def _force(X, y, stiffness, coupling):
    # harmonic classical well plus bilinear coupling, with x -> y
    return -(stiffness * X) - coupling * y


@njit(inline="always")
def _interp_at(values, mask, r, pos, x_min, dx, order):
    # values must be node-filled; the mask only feeds the proximity flag
    n = values.shape[1]
    j, t, out = _cell(pos, x_min, dx, n)
    # periodic wrap of the outer stencil nodes
    c0 = j - 1 if j > 0 else n - 1
    c3 = j + 2 if j + 2 < n else j + 2 - n
    v = _combine(t, values[r, c0], values[r, j], values[r, j + 1], values[r, c3], order)
    return v, mask[r, j] or mask[r, j + 1], out


@njit(cache=True)
def interpolate(values, mask, rows, y, x_min, dx, order):
    """Field row rows[i] at y[i]; returns (v, near_node, outside)."""
    m = y.shape[0]
    v = np.empty(m)
    near = np.empty(m, dtype=np.bool_)
    outside = np.empty(m, dtype=np.bool_)
    for i in range(m):
        v[i], near[i], outside[i] = _interp_at(values, mask, rows[i], y[i], x_min, dx, order)
    return v, near, outside


@njit(cache=True)
def verlet_half(X, K, y, h, M, stiffness, coupling):
    """In-place velocity-Verlet step of length h for every replica."""
    for i in range(X.shape[0]):
        K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)
        X[i] = X[i] + h * K[i] / M
        K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)


@njit(cache=True)
def heun_step(X, K, y, rows, v0, m0, v1, m1, x_min, x_last, dx, order, dt,
              M, stiffness, coupling, classical, pre_half, near, escaped):
    """In place, per replica: Heun step of y between two velocity fields.

    With ``classical`` set, the step is wrapped by velocity-Verlet half steps
    of (X, K): before it using the old y (only if ``pre_half``), after it
    using the new y. ``near`` and ``escaped`` are OR-ed with this step's flags.
    """
    h = 0.5 * dt
    m = y.shape[0]
    if classical and pre_half:
        for i in range(m):
            K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)
            X[i] = X[i] + h * K[i] / M
            K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)
    # separate passes keep each replica's arithmetic but let replicas overlap
    va = np.empty(m)
    for i in range(m):
        va[i], na, oa = _interp_at(v0, m0, rows[i], y[i], x_min, dx, order)
        near[i] = near[i] or na
        escaped[i] = escaped[i] or oa
    for i in range(m):
        y0 = y[i]
        vb, nb, ob = _interp_at(v1, m1, rows[i], y0 + dt * va[i], x_min, dx, order)
        pos = y0 + 0.5 * dt * (va[i] + vb)
        y[i] = pos
        near[i] = near[i] or nb
        escaped[i] = escaped[i] or ob or not (pos >= x_min and pos <= x_last)
    if classical:
        for i in range(m):
            K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)
            X[i] = X[i] + h * K[i] / M
            K[i] = K[i] + 0.5 * h * _force(X[i], y[i], stiffness, coupling)
