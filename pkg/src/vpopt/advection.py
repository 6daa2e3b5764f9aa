"""Two-cell semi-Lagrangian projection kernels for constant-coefficient 1D advection.

A shift of ``s`` cells is split into ``n = floor(s)`` and ``alpha = s - n``;
the shifted piecewise-constant function is projected back onto the grid as

    out[k] = (1 - alpha) * f[k + n] + alpha * f[k + n + 1]

with periodic index wrapping. The stencil matrix has unit row and column
sums, so every kernel here conserves the total sum and obeys a discrete
maximum principle along the swept direction. The transpose kernels use the
same ``(n, alpha)`` pair, which keeps forward and adjoint sweeps bit-consistent.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .phase_space import PhaseGrid


class ShiftDecomposition(NamedTuple):
    n: int
    alpha: float


def decompose(s: float) -> ShiftDecomposition:
    """Split a shift into its floor and fractional part, ``alpha`` in ``[0, 1)``."""
    if not math.isfinite(s):
        raise ValueError(f"shift must be finite, got {s!r}")
    n = math.floor(s)
    alpha = s - n
    if alpha >= 1.0:  # s just below an integer can round up
        n, alpha = n + 1, 0.0
    return ShiftDecomposition(int(n), float(alpha))


def decompose_array(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`decompose`; returns integer floors and fractions."""
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("shifts must be finite")
    n = np.floor(s)
    alpha = s - n
    wrap = alpha >= 1.0
    if np.any(wrap):
        n = np.where(wrap, n + 1, n)
        alpha = np.where(wrap, 0.0, alpha)
    return n.astype(np.int64), alpha


def interp_lines(F: np.ndarray, n: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Apply the two-cell stencil along the last axis, one shift per line.

    ``out[r, k] = (1 - alpha[r]) F[r, k + n[r]] + alpha[r] F[r, k + n[r] + 1]``
    """
    m, L = F.shape
    idx = (np.arange(L)[None, :] + n[:, None]) % L
    rows = np.arange(m)[:, None]
    a = alpha[:, None]
    return (1.0 - a) * F[rows, idx] + a * F[rows, (idx + 1) % L]


def interp_lines_transpose(G: np.ndarray, n: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Exact transpose of :func:`interp_lines` for the same ``(n, alpha)``.

    ``out[r, k] = (1 - alpha[r]) G[r, k - n[r]] + alpha[r] G[r, k - n[r] - 1]``
    """
    m, L = G.shape
    idx = (np.arange(L)[None, :] - n[:, None]) % L
    rows = np.arange(m)[:, None]
    a = alpha[:, None]
    return (1.0 - a) * G[rows, idx] + a * G[rows, (idx - 1) % L]


def x_shift(grid: PhaseGrid, dt_half: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-velocity-column decomposition of the x-shift ``-v_j * dt_half / dx``."""
    return decompose_array(-grid.v * dt_half / grid.dx)


def v_shift(accel: np.ndarray, grid: PhaseGrid, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-row decomposition of the v-shift ``-accel_i * dt / dv``."""
    return decompose_array(-np.asarray(accel, dtype=float) * dt / grid.dv)


def advect_x(f: np.ndarray, grid: PhaseGrid, dt_half: float) -> np.ndarray:
    """Free streaming ``f(x - v t, v)`` over time ``dt_half``, column by column."""
    grid.check_field(f, "f")
    n, alpha = x_shift(grid, dt_half)
    return interp_lines(f.T, n, alpha).T


def advect_x_transpose(g: np.ndarray, grid: PhaseGrid, dt_half: float) -> np.ndarray:
    """Transpose of :func:`advect_x`; equals streaming with flipped velocities."""
    grid.check_field(g, "g")
    n, alpha = x_shift(grid, dt_half)
    return interp_lines_transpose(g.T, n, alpha).T


def advect_v(f: np.ndarray, accel: np.ndarray, grid: PhaseGrid, dt: float) -> np.ndarray:
    """Velocity transport ``f(x_i, v - accel_i t)`` over time ``dt``, row by row.

    ``accel`` is the velocity drift rate ``dv/dt`` of the characteristics.
    """
    grid.check_field(f, "f")
    grid.check_profile(accel, "accel")
    n, alpha = v_shift(accel, grid, dt)
    return interp_lines(f, n, alpha)


def advect_v_transpose(g: np.ndarray, accel: np.ndarray, grid: PhaseGrid, dt: float) -> np.ndarray:
    """Transpose of :func:`advect_v` for the same acceleration profile."""
    grid.check_field(g, "g")
    grid.check_profile(accel, "accel")
    n, alpha = v_shift(accel, grid, dt)
    return interp_lines_transpose(g, n, alpha)
