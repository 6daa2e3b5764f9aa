"""Gradient descent, differential evolution and the gradient-polished hybrid.

All runners work on a *problem* object exposing

* ``dim``: number of coefficients,
* ``forward(a) -> (J, state)``: one forward solve (1 cost unit),
* ``gradient(state) -> grad``: one adjoint sweep for a forward state (1 cost unit),
* ``value(a) -> J``: forward solve without checkpoints (1 cost unit).

:class:`ControlProblem` binds these to the Vlasov-Poisson solver; tests use
cheap analytic doubles with the same interface.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adjoint import adjoint_sweep
from .control import ControlBasis, reduce_gradient, synthesize_H
from .forward import objective, solve_forward
from .phase_space import FOCUSING, ScenarioConfig

logger = logging.getLogger(__name__)


class NonFiniteObjective(FloatingPointError):
    pass


class ControlProblem:
    """Objective ``J(a)`` of the Fourier coefficients for a fixed scenario."""

    def __init__(self, basis: ControlBasis, scenario: ScenarioConfig) -> None:
        self.basis = basis
        self.scenario = scenario

    @property
    def dim(self) -> int:
        return len(self.basis)

    def forward(self, a):
        H = synthesize_H(a, self.basis, self.scenario.grid)
        traj = solve_forward(self.scenario.initial, H, self.scenario, record=True)
        return objective(traj.final_state, self.scenario.target, self.scenario.grid), (H, traj)

    def gradient(self, state) -> np.ndarray:
        H, traj = state
        grad_H, _ = adjoint_sweep(traj, self.scenario.target, H, self.scenario)
        return reduce_gradient(grad_H, self.basis, self.scenario.grid)

    def value(self, a) -> float:
        H = synthesize_H(a, self.basis, self.scenario.grid)
        traj = solve_forward(self.scenario.initial, H, self.scenario, record=False)
        return objective(traj.final_state, self.scenario.target, self.scenario.grid)


def map_values(problem, points, workers: int = 1) -> list[float]:
    """Evaluate ``problem.value`` at every point; results keep input order."""
    points = [np.asarray(p, dtype=float) for p in points]
    if workers <= 1 or len(points) <= 1:
        return [float(problem.value(p)) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [float(v) for v in pool.map(problem.value, points)]


def fd_gradient(problem, a, eps: float) -> np.ndarray:
    """Central differences ``(J(a + eps e_k) - J(a - eps e_k)) / (2 eps)``; costs ``2 dim`` solves."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    a = np.asarray(a, dtype=float)
    grad = np.empty(a.size)
    for k in range(a.size):
        step = np.zeros(a.size)
        step[k] = eps
        grad[k] = (problem.value(a + step) - problem.value(a - step)) / (2 * eps)
    return grad


@dataclass
class RunRow:
    index: int
    J: float
    grad_norm: float | None
    cost: int
    coeffs: np.ndarray


@dataclass
class RunRecord:
    """Per-iteration (GD) or per-generation (DE, hybrid) history of a run."""

    method: str
    rows: list[RunRow] = field(default_factory=list)
    status: str = ""

    @property
    def best_J(self) -> float:
        return min(r.J for r in self.rows)

    @property
    def best_coeffs(self) -> np.ndarray:
        return min(self.rows, key=lambda r: r.J).coeffs

    @property
    def total_cost(self) -> int:
        return self.rows[-1].cost if self.rows else 0

    def cost_to_reach(self, threshold: float) -> int | None:
        """Cumulative cost at the first row whose best J is at or below ``threshold``."""
        for r in self.rows:
            if r.J <= threshold:
                return r.cost
        return None


def _check_finite(J, grad=None):
    if not np.isfinite(J) or (grad is not None and not np.all(np.isfinite(grad))):
        raise NonFiniteObjective(f"non-finite objective or gradient (J={J})")


# --------------------------------------------------------------------------- GD


@dataclass(frozen=True)
class GDConfig:
    max_iters: int = 20
    h0: float = 1.0
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    gtol: float = 1e-12
    tol: float = 0.0

    def __post_init__(self) -> None:
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.max_iters < 0 or self.max_backtracks < 1:
            raise ValueError("max_iters must be >= 0 and max_backtracks >= 1")


def gradient_descent(problem, a0, cfg: GDConfig = GDConfig()) -> RunRecord:
    """Steepest descent with Armijo backtracking.

    Steps are ``a - h * g / |g|``, so ``h`` is a distance in coefficient space
    and the Armijo test reads ``J_trial <= J - c1 * h * |g|``. Row 0 is the
    initial guess; each further row is one accepted step. Trial points cost one
    forward solve each, and the accepted trial's checkpoints are reused for its
    adjoint sweep. Each iteration's first trial step is ``min(h0, 2 * h_prev)``.
    """
    a = np.asarray(a0, dtype=float).copy()
    record = RunRecord("gd")
    J, state = problem.forward(a)
    cost = 1
    _check_finite(J)
    if J <= cfg.tol:
        record.rows.append(RunRow(0, J, None, cost, a.copy()))
        record.status = "tol"
        return record
    g = problem.gradient(state)
    cost += 1
    _check_finite(J, g)
    record.rows.append(RunRow(0, J, float(np.linalg.norm(g)), cost, a.copy()))
    h = cfg.h0
    record.status = "max_iters"
    for k in range(1, cfg.max_iters + 1):
        gnorm = float(np.linalg.norm(g))
        if J <= cfg.tol:
            record.status = "tol"
            break
        if gnorm <= cfg.gtol:
            record.status = "gtol"
            break
        h = min(cfg.h0, 2 * h) if k > 1 else cfg.h0
        for _ in range(cfg.max_backtracks):
            trial = a - (h / gnorm) * g
            J_trial, state = problem.forward(trial)
            cost += 1
            _check_finite(J_trial)
            if J_trial <= J - cfg.c1 * h * gnorm:
                break
            h *= cfg.backtrack
        else:
            record.status = "line_search_failed"
            logger.info("gd: line search failed at iteration %d (J=%g)", k, J)
            break
        a, J = trial, J_trial
        g = problem.gradient(state)
        cost += 1
        _check_finite(J, g)
        record.rows.append(RunRow(k, J, float(np.linalg.norm(g)), cost, a.copy()))
        logger.debug("gd it=%d J=%.6e |g|=%.3e h=%.3e", k, J, np.linalg.norm(g), h)
    return record


def gd_run(a0, basis: ControlBasis, scenario: ScenarioConfig, cfg: GDConfig = GDConfig()) -> RunRecord:
    return gradient_descent(ControlProblem(basis, scenario), a0, cfg)


# --------------------------------------------------------------------------- DE


def default_bounds(scenario: ScenarioConfig) -> tuple[float, float]:
    return (-5.0, 5.0) if scenario.kind == FOCUSING else (-0.05, 0.05)


@dataclass(frozen=True)
class DEConfig:
    """best/1/bin differential evolution with per-generation dithered mutation."""

    bounds: tuple = ((-1.0, 1.0),)
    popsize: int = 50
    mutation: tuple[float, float] = (0.5, 1.0)
    crossover: float = 0.7
    max_generations: int = 100
    seed: int = 0
    target_J: float | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.popsize < 4:
            raise ValueError("popsize must be at least 4")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds must be finite with low < high, got {(lo, hi)}")
        object.__setattr__(self, "bounds", bounds)
        lo, hi = self.mutation
        if not 0 <= lo <= hi <= 2:
            raise ValueError(f"mutation range must satisfy 0 <= lo <= hi <= 2, got {self.mutation}")
        if not 0 <= self.crossover <= 1:
            raise ValueError("crossover must lie in [0, 1]")
        if self.max_generations < 0:
            raise ValueError("max_generations must be >= 0")

    def bounds_for(self, dim: int) -> np.ndarray:
        if len(self.bounds) == 1:
            return np.tile(np.array(self.bounds[0]), (dim, 1))
        if len(self.bounds) != dim:
            raise ValueError(f"need 1 or {dim} (low, high) pairs, got {len(self.bounds)}")
        return np.array(self.bounds)


@dataclass(frozen=True)
class HybridConfig:
    """DE plus ``it`` gradient sub-iterations on ``n_p`` candidates per generation."""

    de: DEConfig
    n_p: int = 1
    it: int = 3
    h0: float = 1.0
    c1: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self) -> None:
        if not 0 <= self.n_p <= self.de.popsize:
            raise ValueError(f"n_p must lie in [0, popsize], got {self.n_p}")
        if self.n_p > 0 and self.it < 1:
            raise ValueError("it must be >= 1")

    @property
    def cost_per_generation(self) -> int:
        return self.de.popsize + 2 * self.n_p * self.it


def _latin_hypercube(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    u = (rng.random((n, dim)) + np.arange(n)[:, None]) / n
    for d in range(dim):
        u[:, d] = u[rng.permutation(n), d]
    return u


class _Population:
    """Population in unit-cube coordinates, scaled to bounds on evaluation."""

    def __init__(self, problem, cfg: DEConfig, rng: np.random.Generator) -> None:
        self.problem = problem
        self.cfg = cfg
        self.rng = rng
        b = cfg.bounds_for(problem.dim)
        self.low, self.span = b[:, 0], b[:, 1] - b[:, 0]
        self.unit = _latin_hypercube(rng, cfg.popsize, problem.dim)
        self.energies = np.array(map_values(problem, self.coeffs(), cfg.workers))
        for J in self.energies:
            _check_finite(J)

    def coeffs(self, unit=None) -> np.ndarray:
        return self.low + (self.unit if unit is None else unit) * self.span

    @property
    def best(self) -> int:
        return int(np.argmin(self.energies))

    def generation(self) -> None:
        """One best/1/bin generation with deferred (synchronous) replacement."""
        P, d = self.unit.shape
        rng = self.rng
        F = rng.uniform(*self.cfg.mutation)
        best = self.unit[self.best]
        trials = np.empty_like(self.unit)
        for i in range(P):
            r1, r2 = rng.choice(np.delete(np.arange(P), i), 2, replace=False)
            mutant = best + F * (self.unit[r1] - self.unit[r2])
            cross = rng.random(d) < self.cfg.crossover
            cross[rng.integers(d)] = True
            trial = np.where(cross, mutant, self.unit[i])
            bad = (trial < 0) | (trial > 1)
            if bad.any():
                trial[bad] = rng.random(int(bad.sum()))
            trials[i] = trial
        energies = np.array(map_values(self.problem, self.coeffs(trials), self.cfg.workers))
        for J in energies:
            _check_finite(J)
        better = energies <= self.energies
        self.unit[better] = trials[better]
        self.energies[better] = energies[better]


def _polish(problem, a0, J0, it: int, h: float, c1: float, backtrack: float):
    """``it`` gradient sub-iterations, each exactly one forward plus one adjoint solve.

    The first sub-iteration supplies the gradient at ``a0``; later ones
    evaluate the normalised trial step ``a - h g / |g|`` and accept it under
    the Armijo condition or shrink ``h``. Returns ``(a, J, h)`` for the best accepted point.
    """
    a_cur, J_cur, g_cur = np.asarray(a0, dtype=float), J0, None
    point = a_cur
    for k in range(it):
        J_p, state = problem.forward(point)
        g_p = problem.gradient(state)
        _check_finite(J_p, g_p)
        if k == 0:
            J_cur, g_cur = J_p, g_p
        elif J_p <= J_cur - c1 * h * float(np.linalg.norm(g_cur)):
            a_cur, J_cur, g_cur = point, J_p, g_p
        else:
            h *= backtrack
        gnorm = float(np.linalg.norm(g_cur))
        if gnorm == 0:
            break
        point = a_cur - (h / gnorm) * g_cur
    return a_cur, J_cur, h


def _evolve(problem, cfg: DEConfig, n_p: int = 0, it: int = 0, h0: float = 1.0,
            c1: float = 1e-4, backtrack: float = 0.5, method: str = "de") -> RunRecord:
    rng = np.random.default_rng(cfg.seed)
    pop = _Population(problem, cfg, rng)
    cost = cfg.popsize
    record = RunRecord(method)

    def log(gen):
        b = pop.best
        record.rows.append(RunRow(gen, float(pop.energies[b]), None, cost, pop.coeffs()[b].copy()))
        logger.debug("%s gen=%d J=%.6e cost=%d", method, gen, pop.energies[b], cost)

    log(0)
    h = h0
    record.status = "max_generations"
    for gen in range(1, cfg.max_generations + 1):
        if cfg.target_J is not None and record.rows[-1].J <= cfg.target_J:
            record.status = "target"
            break
        pop.generation()
        cost += cfg.popsize
        if n_p > 0:
            P = cfg.popsize
            best = pop.best
            others = rng.choice(np.delete(np.arange(P), best), n_p - 1, replace=False)
            chosen = [best, *(int(i) for i in others)]
            coeffs = pop.coeffs()
            h_next = h
            for rank, i in enumerate(chosen):
                a, J, h_i = _polish(problem, coeffs[i], pop.energies[i], it, h, c1, backtrack)
                if rank == 0:
                    h_next = h_i
                if J < pop.energies[i]:
                    pop.unit[i] = (a - pop.low) / pop.span
                    pop.energies[i] = J
            h = h_next
            cost += 2 * n_p * it
        log(gen)
    if cfg.target_J is not None and record.rows[-1].J <= cfg.target_J:
        record.status = "target"
    return record


def differential_evolution(problem, cfg: DEConfig) -> RunRecord:
    return _evolve(problem, cfg, method="de")


def hybrid(problem, cfg: HybridConfig) -> RunRecord:
    return _evolve(problem, cfg.de, cfg.n_p, cfg.it, cfg.h0, cfg.c1, cfg.backtrack, method="hybrid")


def de_run(basis: ControlBasis, scenario: ScenarioConfig, cfg: DEConfig) -> RunRecord:
    return differential_evolution(ControlProblem(basis, scenario), cfg)


def hybrid_run(basis: ControlBasis, scenario: ScenarioConfig, cfg: HybridConfig) -> RunRecord:
    return hybrid(ControlProblem(basis, scenario), cfg)
