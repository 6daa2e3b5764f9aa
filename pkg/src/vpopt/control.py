"""Fourier parametrisation of the external field and objective evaluation in coefficient space."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .adjoint import adjoint_sweep
from .forward import objective, solve_forward
from .phase_space import FOCUSING, PhaseGrid, ScenarioConfig

SINE = "sine"
COSINE = "cosine"


@dataclass(frozen=True)
class ControlBasis:
    """Modes ``b_k(x) = sin(2 pi k x / L)`` or ``cos(2 pi k x / L)`` for ``k`` in ``modes``.

    ``L`` is the periodic length of the grid; on the focusing domain
    ``[0, 4 pi]`` these are ``sin(k x / 2)``.
    """

    modes: tuple[int, ...]
    parity: str = SINE

    def __post_init__(self) -> None:
        modes = tuple(int(k) for k in self.modes)
        if not modes:
            raise ValueError("control basis needs at least one mode")
        if any(k < 1 for k in modes):
            raise ValueError(f"modes must be positive integers, got {modes}")
        if len(set(modes)) != len(modes) or list(modes) != sorted(modes):
            raise ValueError(f"modes must be distinct and ascending, got {modes}")
        if self.parity not in (SINE, COSINE):
            raise ValueError(f"parity must be {SINE!r} or {COSINE!r}, got {self.parity!r}")
        object.__setattr__(self, "modes", modes)

    def __len__(self) -> int:
        return len(self.modes)

    def matrix(self, grid: PhaseGrid) -> np.ndarray:
        """``(n_x, |K|)`` matrix of basis functions sampled at cell centres."""
        phase = 2 * np.pi * np.outer(grid.x - grid.x_min, self.modes) / grid.length_x
        return np.sin(phase) if self.parity == SINE else np.cos(phase)

    @classmethod
    def default_for(cls, scenario: ScenarioConfig, modes) -> "ControlBasis":
        return cls(tuple(modes), SINE if scenario.kind == FOCUSING else COSINE)


def _coeffs(a, basis: ControlBasis) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != len(basis):
        raise ValueError(f"expected {len(basis)} coefficients, got {a.size}")
    return a


def synthesize_H(a, basis: ControlBasis, grid: PhaseGrid) -> np.ndarray:
    """``H_i = sum_k a_k b_k(x_i)``."""
    return basis.matrix(grid) @ _coeffs(a, basis)


def reduce_gradient(grad_H: np.ndarray, basis: ControlBasis, grid: PhaseGrid) -> np.ndarray:
    """Chain rule to coefficient space, ``dJ/da_k = sum_i grad_H_i b_k(x_i)``."""
    grid.check_profile(grad_H, "grad_H")
    return basis.matrix(grid).T @ grad_H


def evaluate(a, basis: ControlBasis, scenario: ScenarioConfig,
             gradient: bool = False) -> tuple[float, np.ndarray | None]:
    """Objective at coefficients ``a``; with ``gradient=True`` also ``dJ/da`` via the adjoint."""
    H = synthesize_H(a, basis, scenario.grid)
    traj = solve_forward(scenario.initial, H, scenario, record=gradient)
    J = objective(traj.final_state, scenario.target, scenario.grid)
    if not gradient:
        return J, None
    grad_H, _ = adjoint_sweep(traj, scenario.target, H, scenario)
    return J, reduce_gradient(grad_H, basis, scenario.grid)


def scan(basis: ControlBasis, scenario: ScenarioConfig, axes, workers: int = 1) -> np.ndarray:
    """Objective over the Cartesian product of per-coefficient value lists.

    Returns an array of shape ``tuple(len(ax) for ax in axes)``.
    """
    axes = [np.asarray(ax, dtype=float).reshape(-1) for ax in axes]
    if len(axes) != len(basis):
        raise ValueError(f"need one axis per coefficient ({len(basis)}), got {len(axes)}")
    if any(ax.size == 0 for ax in axes):
        raise ValueError("scan axes must be non-empty")
    points = [np.array(p) for p in itertools.product(*axes)]
    from .optimizer import ControlProblem, map_values  # local import avoids a cycle

    values = map_values(ControlProblem(basis, scenario), points, workers)
    return np.asarray(values).reshape([ax.size for ax in axes])
