"""Discrete adjoint of the Strang semi-Lagrangian solver and the exact gradient in H.

The backward sweep transposes each stage of :func:`vpopt.forward.strang_step`:

    g**  = A(dt/2)^T g^{n+1}
    g*   = B^T g** + dt * K(D)            (K: periodic antiderivative)
    g^n  = A(dt/2)^T g*

where ``D_i = sum_j g**_ij (f*_{i,j+n_i+1} - f*_{i,j+n_i})`` is the derivative
of the velocity stage with respect to the cell shift of row ``i``. The shift is
``(E_i - H_i) dt / dv`` (electrons are pushed by ``-E``; ``H`` is applied as a
force), so the same ``D`` yields both the gradient contribution
``-dx * dt * D`` and, through ``E``'s linear dependence on ``f*``, the
field-coupling term. The floor index has zero derivative, so the
gradient is exact everywhere except on the measure-zero set where a shift
crosses an integer.
"""

from __future__ import annotations

import numpy as np

from .advection import advect_x_transpose, interp_lines_transpose, v_shift
from .field import efield_hom
from .forward import Trajectory, drift, run_fingerprint
from .phase_space import PhaseGrid, ScenarioConfig


class TrajectoryMismatch(ValueError):
    """The trajectory was produced with a different H, grid or time step."""


def terminal_adjoint(fN: np.ndarray, target: np.ndarray) -> np.ndarray:
    """``g^N = fN - target``, the derivative of the objective per unit cell area."""
    fN = np.asarray(fN, dtype=float)
    target = np.asarray(target, dtype=float)
    if fN.shape != target.shape:
        raise ValueError(f"fN shape {fN.shape} does not match target shape {target.shape}")
    return fN - target


def _shift_of(e_star: np.ndarray, H: np.ndarray, grid: PhaseGrid, dt: float):
    # identical call chain to the forward velocity stage, so indices match bit-for-bit
    return v_shift(drift(e_star, H), grid, dt)


def phi_field(f_star: np.ndarray, g_ss: np.ndarray, e_star: np.ndarray, H: np.ndarray,
              grid: PhaseGrid, dt: float) -> np.ndarray:
    """``phi_ij = f*_ij (g**_{i, j-n_i} - g**_{i, j-n_i-1})``.

    Its row sums equal ``-D_i`` (see module docstring).
    """
    grid.check_field(f_star, "f_star")
    grid.check_field(g_ss, "g_ss")
    n, _ = _shift_of(e_star, H, grid, dt)
    L = grid.n_v
    idx = (np.arange(L)[None, :] - n[:, None]) % L
    rows = np.arange(grid.n_x)[:, None]
    return f_star * (g_ss[rows, idx] - g_ss[rows, (idx - 1) % L])


def _velocity_adjoint(g_ss, f_star, e_star, H, grid, dt, self_field):
    n, alpha = _shift_of(e_star, H, grid, dt)
    g_star = interp_lines_transpose(g_ss, n, alpha)
    phi = phi_field(f_star, g_ss, e_star, H, grid, dt)
    shift_sensitivity = -phi.sum(axis=1)
    if self_field:
        coupling = (dt / grid.dv) * efield_hom(grid.dv * phi.sum(axis=1), grid)
        g_star += coupling[:, None]
    return g_star, shift_sensitivity


def adjoint_velocity_step(g_ss: np.ndarray, f_star: np.ndarray, e_star: np.ndarray, H: np.ndarray,
                          grid: PhaseGrid, dt: float, self_field: bool = True) -> np.ndarray:
    """Pull ``g**`` back through the velocity stage, including the field coupling."""
    grid.check_field(g_ss, "g_ss")
    grid.check_field(f_star, "f_star")
    return _velocity_adjoint(g_ss, f_star, e_star, H, grid, dt, self_field)[0]


def adjoint_sweep(traj: Trajectory, target: np.ndarray, H: np.ndarray,
                  scenario: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Backward sweep; returns ``(dJ/dH_i, g^0)``.

    ``traj`` must come from :func:`vpopt.forward.solve_forward` with
    ``record=True`` and the same ``H`` and scenario.
    """
    H = np.asarray(H, dtype=float)
    if traj.fingerprint != run_fingerprint(H, scenario):
        raise TrajectoryMismatch("trajectory was computed with a different H or discretisation")
    if traj.n_steps != scenario.time.n_steps:
        raise TrajectoryMismatch("trajectory has no recorded checkpoints; solve with record=True")
    grid = scenario.grid
    dt = scenario.time.dt

    g = terminal_adjoint(traj.final_state, target)
    sensitivity = np.zeros(grid.n_x)
    for n in range(traj.n_steps - 1, -1, -1):
        g_ss = advect_x_transpose(g, grid, dt / 2)
        g_star, d = _velocity_adjoint(g_ss, traj.f_star[n], traj.e_star[n], H, grid, dt, scenario.self_field)
        sensitivity += d
        g = advect_x_transpose(g_star, grid, dt / 2)
    return -grid.dx * dt * sensitivity, g

