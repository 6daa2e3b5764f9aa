"""Strang-split semi-Lagrangian Vlasov-Poisson stepper and the discrete objective."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .advection import advect_v, advect_x
from .field import density, efield
from .phase_space import PhaseGrid, ScenarioConfig


def self_consistent_field(f_star: np.ndarray, grid: PhaseGrid, self_field: bool = True) -> np.ndarray:
    if not self_field:
        return np.zeros(grid.n_x)
    return efield(density(f_star, grid), grid)


def drift(e_star: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Velocity drift rate ``dv/dt = -E + H``: electrons feel ``-E``, ``H`` is an applied force."""
    return -e_star + H


def strang_step(f: np.ndarray, H: np.ndarray, grid: PhaseGrid, dt: float,
                self_field: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One step of half x-stream, full v-kick with drift ``-E(f*) + H``, half x-stream.

    Returns ``(f_next, f_star, e_star)``; the last two are the checkpoints the
    adjoint sweep needs.
    """
    grid.check_field(f, "f")
    grid.check_profile(H, "H")
    f_star = advect_x(f, grid, dt / 2)
    e_star = self_consistent_field(f_star, grid, self_field)
    f_ss = advect_v(f_star, drift(e_star, H), grid, dt)
    return advect_x(f_ss, grid, dt / 2), f_star, e_star


def run_fingerprint(H: np.ndarray, scenario: ScenarioConfig) -> str:
    """Hash identifying the (H, grid, time step, field mode) a trajectory was computed with."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(H, dtype=float).tobytes())
    h.update(repr((scenario.grid, scenario.time, scenario.self_field)).encode())
    return h.hexdigest()


@dataclass
class Trajectory:
    """Checkpoints ``f_star[n]``, ``e_star[n]`` for every step plus the final state."""

    f_star: np.ndarray
    e_star: np.ndarray
    final_state: np.ndarray
    fingerprint: str
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.e_star)


def solve_forward(f0: np.ndarray, H: np.ndarray, scenario: ScenarioConfig, record: bool = True,
                  snapshot_steps: tuple[int, ...] = (),
                  callback: Callable[[int, np.ndarray], None] | None = None) -> Trajectory:
    """Advance ``f0`` over ``scenario.time.n_steps`` Strang steps with external field ``H``.

    With ``record=False`` the checkpoint arrays are left empty (objective-only
    evaluations). ``callback(n, f_n)`` is invoked for ``n = 0..N`` and
    ``snapshot_steps`` selects step indices whose full state is kept.
    """
    grid = scenario.grid
    dt = scenario.time.dt
    N = scenario.time.n_steps
    H = np.asarray(H, dtype=float)
    grid.check_field(f0, "f0")
    grid.check_profile(H, "H")

    if record:
        f_star = np.empty((N, grid.n_x, grid.n_v))
        e_star = np.empty((N, grid.n_x))
    else:
        f_star = np.empty((0, grid.n_x, grid.n_v))
        e_star = np.empty((0, grid.n_x))
    wanted = set(snapshot_steps)
    snapshots = {}

    f = np.array(f0, dtype=float)
    for n in range(N):
        if callback is not None:
            callback(n, f)
        if n in wanted:
            snapshots[n] = f.copy()
        f, fs, es = strang_step(f, H, grid, dt, scenario.self_field)
        if record:
            f_star[n] = fs
            e_star[n] = es
    if callback is not None:
        callback(N, f)
    if N in wanted:
        snapshots[N] = f.copy()
    return Trajectory(f_star, e_star, f, run_fingerprint(H, scenario), snapshots)


def objective(fN: np.ndarray, target: np.ndarray, grid: PhaseGrid) -> float:
    """Discrete mismatch ``0.5 * sum |fN - target|^2 * dx * dv``."""
    grid.check_field(fN, "fN")
    grid.check_field(target, "target")
    diff = fN - target
    return 0.5 * float(np.sum(diff * diff)) * grid.dx * grid.dv
