"""Batch commands behind the ``vpopt`` CLI. Each writes its outputs through an
:class:`~vpopt.io.OutputSession`, so a failure leaves no partial files behind."""

from __future__ import annotations

import logging

import numpy as np

from .config import RunConfig
from .control import scan, synthesize_H
from .field import density, efield, electric_energy, mode_amplitudes
from .forward import objective, solve_forward
from .gradcheck import GradCheckReport, grad_check
from .io import OutputSession, optimization_log_header, series_header
from .optimizer import RunRecord, de_run, gd_run, hybrid_run
from .phase_space import ScenarioConfig, TimeSpec

logger = logging.getLogger(__name__)

SERIES_FILE = "series.csv"
SUMMARY_FILE = "summary.yaml"
LOG_FILE = "optimization_log.csv"
RESULT_FILE = "result.yaml"
SCAN_FILE = "scan.csv"
GRAD_CHECK_FILE = "grad_check.csv"


def snapshot_name(step: int) -> str:
    return f"snapshot_{step:06d}.vpf"


def _coeff_list(a) -> list[float]:
    return [float(x) for x in np.asarray(a, dtype=float)]


def simulate(cfg: RunConfig, coeffs, scenario: ScenarioConfig, out: OutputSession) -> float:
    """Forward run with diagnostics and snapshots; returns the terminal objective."""
    grid = scenario.grid
    dt = scenario.time.dt
    N = scenario.time.n_steps
    k_max = cfg.output.k_max
    if 2 * k_max >= grid.n_x:
        raise ValueError(f"output.k_max={k_max} needs n_x > {2 * k_max}")
    H = synthesize_H(coeffs, cfg.basis, grid)
    rows = []

    def diagnose(n, f):
        if n % cfg.output.cadence == 0 or n == N:
            E = efield(density(f, grid), grid)
            rows.append([n * dt, electric_energy(E, grid), *mode_amplitudes(E, k_max)])

    steps = cfg.snapshot_steps(scenario.time)
    traj = solve_forward(scenario.initial, H, scenario, record=False, snapshot_steps=steps, callback=diagnose)
    J = objective(traj.final_state, scenario.target, grid)
    if not np.isfinite(J):
        raise FloatingPointError(f"non-finite objective J={J}")
    out.write_csv(SERIES_FILE, series_header(k_max), rows)
    for n in steps:
        out.write_snapshot(snapshot_name(n), traj.snapshots[n], grid, n * dt)
    out.write_result(SUMMARY_FILE, {
        "kind": scenario.kind, "T": scenario.time.T, "n_steps": N, "J": J,
        "modes": list(cfg.basis.modes), "parity": cfg.basis.parity, "coefficients": _coeff_list(coeffs),
    })
    return J


def cmd_forward(cfg: RunConfig) -> float:
    """Run the configured scenario with the configured initial coefficients."""
    with OutputSession(cfg.output.directory) as out:
        return simulate(cfg, cfg.initial, cfg.scenario, out)


def cmd_extend(cfg: RunConfig, coeffs, T_new: float) -> float:
    """Run ``coeffs`` on the configured scenario up to ``T_new >= T``."""
    T = cfg.scenario.time.T
    if not T_new >= T - 1e-12 * T:
        raise ValueError(f"T_new={T_new} must not be shorter than the configured horizon T={T}")
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size != len(cfg.basis):
        raise ValueError(f"expected {len(cfg.basis)} coefficients, got {coeffs.size}")
    scenario = cfg.scenario.with_time(TimeSpec.from_horizon(cfg.scenario.time.dt, T_new))
    with OutputSession(cfg.output.directory) as out:
        return simulate(cfg, coeffs, scenario, out)


def run_optimizer(cfg: RunConfig) -> RunRecord:
    if cfg.method == "gd":
        return gd_run(cfg.initial, cfg.basis, cfg.scenario, cfg.gd)
    if cfg.method == "de":
        return de_run(cfg.basis, cfg.scenario, cfg.de)
    return hybrid_run(cfg.basis, cfg.scenario, cfg.hybrid)


def cmd_optimize(cfg: RunConfig) -> RunRecord:
    """Optimise, then write the log, the best coefficients and the controlled run's outputs."""
    record = run_optimizer(cfg)
    with OutputSession(cfg.output.directory) as out:
        rows = [[r.index, r.J, r.grad_norm, r.cost, *r.coeffs] for r in record.rows]
        out.write_csv(LOG_FILE, optimization_log_header(cfg.basis.modes), rows)
        best = record.best_coeffs
        out.write_result(RESULT_FILE, {
            "method": record.method, "status": record.status, "seed": cfg.seed, "J": record.best_J,
            "cost_units": record.total_cost, "modes": list(cfg.basis.modes), "parity": cfg.basis.parity,
            "coefficients": _coeff_list(best),
        })
        simulate(cfg, best, cfg.scenario, out)
    return record


def cmd_scan(cfg: RunConfig) -> np.ndarray:
    """Objective on the Cartesian product of the configured axes, one CSV row per point."""
    if cfg.scan_axes is None:
        raise ValueError("config has no scan.axes block")
    values = scan(cfg.basis, cfg.scenario, cfg.scan_axes, cfg.scan_workers)
    grids = np.meshgrid(*cfg.scan_axes, indexing="ij")
    points = np.stack([g.reshape(-1) for g in grids], axis=1)
    header = [*(f"a_{k}" for k in cfg.basis.modes), "J"]
    with OutputSession(cfg.output.directory) as out:
        out.write_csv(SCAN_FILE, header, [[*p, J] for p, J in zip(points, values.reshape(-1))])
    return values


def cmd_grad_check(cfg: RunConfig, eps: float | None = None, n_points: int | None = None,
                   n_coords: int | None = None, seed: int | None = None,
                   rtol: float | None = None) -> GradCheckReport:
    """Adjoint-vs-finite-difference comparison at random fields; arguments override the config."""
    gc = cfg.grad_check
    eps = gc.eps if eps is None else eps
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    report = grad_check(cfg.scenario, eps=eps,
                        n_points=gc.n_points if n_points is None else n_points,
                        n_coords=gc.n_coords if n_coords is None else n_coords,
                        sigma=gc.sigma, rtol=gc.rtol if rtol is None else rtol,
                        seed=cfg.seed if seed is None else seed)
    header = ["draw", "index", "adjoint", "fd", "rel_error", "near_kink", "passed"]
    rows = [[c.draw, c.index, c.adjoint, c.fd, c.rel_error, int(c.near_kink), int(c.passed)]
            for c in report.checks]
    with OutputSession(cfg.output.directory) as out:
        out.write_csv(GRAD_CHECK_FILE, header, rows)
    return report
