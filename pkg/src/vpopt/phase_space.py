"""Phase-space grids, time specs, scenario presets and initial conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FOCUSING = "focusing"
TWO_STREAM = "two_stream"
CUSTOM = "custom"
SCENARIO_KINDS = (FOCUSING, TWO_STREAM, CUSTOM)


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform cell-centred grid on a periodic-in-x rectangle ``[x_min, x_max) x [v_min, v_max)``.

    Field arrays over this grid have shape ``(n_x, n_v)``; axis 0 is space.
    """

    n_x: int
    n_v: int
    x_min: float
    x_max: float
    v_min: float
    v_max: float

    def __post_init__(self) -> None:
        for name in ("n_x", "n_v"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {n!r}")
        bounds = (self.x_min, self.x_max, self.v_min, self.v_max)
        if not all(math.isfinite(b) for b in bounds):
            raise ValueError("grid bounds must be finite")
        if not self.x_max > self.x_min:
            raise ValueError(f"x_max ({self.x_max}) must exceed x_min ({self.x_min})")
        if not self.v_max > self.v_min:
            raise ValueError(f"v_max ({self.v_max}) must exceed v_min ({self.v_min})")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_v)

    @property
    def length_x(self) -> float:
        return self.x_max - self.x_min

    @property
    def length_v(self) -> float:
        return self.v_max - self.v_min

    @property
    def dx(self) -> float:
        return self.length_x / self.n_x

    @property
    def dv(self) -> float:
        return self.length_v / self.n_v

    @property
    def x(self) -> np.ndarray:
        # x_i = x_min + (i + 1/2) dx, built by multiplication (no accumulated drift)
        return self.x_min + (np.arange(self.n_x) + 0.5) * self.dx

    @property
    def v(self) -> np.ndarray:
        return self.v_min + (np.arange(self.n_v) + 0.5) * self.dv

    def check_field(self, f: np.ndarray, name: str = "field") -> None:
        if np.shape(f) != self.shape:
            raise ValueError(f"{name} has shape {np.shape(f)}, grid expects {self.shape}")

    def check_profile(self, p: np.ndarray, name: str = "profile") -> None:
        if np.shape(p) != (self.n_x,):
            raise ValueError(f"{name} has shape {np.shape(p)}, grid expects ({self.n_x},)")


@dataclass(frozen=True)
class TimeSpec:
    """Uniform time stepping: ``n_steps`` steps of size ``dt`` up to ``T = n_steps * dt``."""

    dt: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be a positive finite number, got {self.dt!r}")
        if not isinstance(self.n_steps, (int, np.integer)) or isinstance(self.n_steps, bool) or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps!r}")

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @classmethod
    def from_horizon(cls, dt: float, T: float) -> "TimeSpec":
        """Build a spec whose ``n_steps * dt`` reproduces ``T`` to one part in 1e12."""
        if not (math.isfinite(dt) and dt > 0):
            raise ValueError(f"dt must be a positive finite number, got {dt!r}")
        if not (math.isfinite(T) and T > 0):
            raise ValueError(f"T must be a positive finite number, got {T!r}")
        n = round(T / dt)
        if n < 1 or abs(n * dt - T) > 1e-12 * T:
            raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
        return cls(dt=dt, n_steps=int(n))


def make_focusing_initial(grid: PhaseGrid, a: float, b: float) -> np.ndarray:
    """Two spatially concentrated Maxwellian beams.

    ``f(x, v) = chi(x) exp(-v^2/2) / (2 pi)`` with
    ``chi(x) = exp(-a (x - b)^2) sin^2(x/2)``, sampled at cell centres.
    """
    x = grid.x
    v = grid.v
    chi = np.exp(-a * (x - b) ** 2) * np.sin(x / 2) ** 2
    maxwell = np.exp(-(v**2) / 2) / (2 * np.pi)
    return np.outer(chi, maxwell)


def two_stream_equilibrium(v: np.ndarray, vbar: float) -> np.ndarray:
    """Symmetric pair of unit-temperature Maxwellians drifting at ``+-vbar`` with unit total density."""
    return (np.exp(-((v - vbar) ** 2) / 2) + np.exp(-((v + vbar) ** 2) / 2)) / (2 * np.sqrt(2 * np.pi))


def make_two_stream_initial(grid: PhaseGrid, alpha: float, beta: float, vbar: float) -> np.ndarray:
    """``f(x, v) = (1 + alpha cos(beta x)) f_eq(v)`` sampled at cell centres."""
    perturbation = 1.0 + alpha * np.cos(beta * grid.x)
    return np.outer(perturbation, two_stream_equilibrium(grid.v, vbar))


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything the forward and adjoint solvers need besides the external field.

    ``params`` carries the scenario parameters: ``a``, ``b`` for focusing;
    ``alpha``, ``beta``, ``vbar`` for two_stream. Custom scenarios supply
    ``initial`` and ``target`` explicitly.
    """

    kind: str
    grid: PhaseGrid
    time: TimeSpec
    params: dict = field(default_factory=dict)
    self_field: bool = True
    initial: np.ndarray | None = None
    target: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")
        if self.kind == CUSTOM and (self.initial is None or self.target is None):
            raise ValueError("custom scenarios must supply both initial and target fields")
        # Sample presets once; frozen dataclass needs object.__setattr__.
        if self.initial is None:
            object.__setattr__(self, "initial", make_initial(self))
        if self.target is None:
            object.__setattr__(self, "target", make_equilibrium_target(self))
        for name in ("initial", "target"):
            arr = np.array(getattr(self, name), dtype=float)
            self.grid.check_field(arr, name)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def with_time(self, time: TimeSpec) -> "ScenarioConfig":
        return ScenarioConfig(self.kind, self.grid, time, dict(self.params), self.self_field, self.initial, self.target)

    def with_self_field(self, self_field: bool) -> "ScenarioConfig":
        return ScenarioConfig(self.kind, self.grid, self.time, dict(self.params), self_field, self.initial, self.target)


def make_initial(scenario: ScenarioConfig) -> np.ndarray:
    p = scenario.params
    if scenario.kind == FOCUSING:
        return make_focusing_initial(scenario.grid, p["a"], p["b"])
    if scenario.kind == TWO_STREAM:
        return make_two_stream_initial(scenario.grid, p["alpha"], p["beta"], p["vbar"])
    if scenario.initial is None:
        raise ValueError("custom scenarios must supply the initial field explicitly")
    return np.asarray(scenario.initial, dtype=float)


def make_equilibrium_target(scenario: ScenarioConfig) -> np.ndarray:
    """Target state of the objective.

    Focusing keeps the initial beams; two-stream aims at the unperturbed,
    x-independent equilibrium.
    """
    p = scenario.params
    if scenario.kind == FOCUSING:
        return make_focusing_initial(scenario.grid, p["a"], p["b"])
    if scenario.kind == TWO_STREAM:
        row = two_stream_equilibrium(scenario.grid.v, p["vbar"])
        return np.tile(row, (scenario.grid.n_x, 1))
    if scenario.target is None:
        raise ValueError("custom scenarios must supply the target field explicitly")
    return np.asarray(scenario.target, dtype=float)


def focusing_scenario(n_x: int = 128, n_v: int = 128, dt: float = 0.5, T: float = 20.0,
                      a: float = 0.2, b: float = 2 * np.pi, self_field: bool = True) -> ScenarioConfig:
    grid = PhaseGrid(n_x, n_v, 0.0, 4 * np.pi, -6.0, 6.0)
    return ScenarioConfig(FOCUSING, grid, TimeSpec.from_horizon(dt, T), {"a": a, "b": b}, self_field)


def two_stream_scenario(n_x: int = 128, n_v: int = 128, dt: float = 0.1, T: float = 40.0,
                        alpha: float = 1e-3, beta: float = 0.2, vbar: float = 2.4,
                        self_field: bool = True) -> ScenarioConfig:
    grid = PhaseGrid(n_x, n_v, 0.0, 2 * np.pi / beta, -6.0, 6.0)
    params = {"alpha": alpha, "beta": beta, "vbar": vbar}
    return ScenarioConfig(TWO_STREAM, grid, TimeSpec.from_horizon(dt, T), params, self_field)
