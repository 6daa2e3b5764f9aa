"""Charge density, spectral field solve and field diagnostics on a periodic x-grid."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .phase_space import PhaseGrid


def density(f: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Midpoint-rule velocity integral ``rho_i = dv * sum_j f_ij``."""
    grid.check_field(f, "f")
    return grid.dv * f.sum(axis=1)


@lru_cache(maxsize=32)
def _inverse_derivative_multiplier(n_x: int, length: float) -> np.ndarray:
    # rfft bins m = 0..n_x//2; 1/(i kappa_m) with the mean and (even n_x) Nyquist bins zeroed
    m = np.arange(n_x // 2 + 1)
    kappa = 2 * np.pi * m / length
    mult = np.zeros(m.size, dtype=complex)
    mult[1:] = 1.0 / (1j * kappa[1:])
    if n_x % 2 == 0:
        mult[-1] = 0.0
    mult.setflags(write=False)
    return mult


def periodic_antiderivative(q: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Zero-mean periodic ``E`` with ``dE/dx = q - mean(q)``, computed spectrally.

    As a matrix this operator is real and antisymmetric.
    """
    q = np.asarray(q, dtype=float)
    grid.check_profile(q, "q")
    mult = _inverse_derivative_multiplier(grid.n_x, grid.length_x)
    return np.fft.irfft(mult * np.fft.rfft(q), n=grid.n_x)


def efield(rho: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Self-consistent field solving ``dE/dx = 1 - rho`` with zero mean."""
    return periodic_antiderivative(1.0 - np.asarray(rho, dtype=float), grid)


def efield_hom(rho: np.ndarray, grid: PhaseGrid) -> np.ndarray:
    """Linear part of :func:`efield` (no neutralising background): ``dE/dx = -rho``."""
    return -periodic_antiderivative(rho, grid)


def electric_energy(E: np.ndarray, grid: PhaseGrid) -> float:
    """``0.5 * dx * sum(E**2)``."""
    grid.check_profile(E, "E")
    return 0.5 * grid.dx * float(np.dot(E, E))


def mode_amplitudes(E: np.ndarray, k_max: int) -> np.ndarray:
    """Magnitudes ``|E_hat_k| / n_x`` of the discrete Fourier coefficients, ``k = 0..k_max``."""
    E = np.asarray(E, dtype=float)
    n_x = E.size
    if not 0 <= k_max < n_x / 2:
        raise ValueError(f"k_max must lie in [0, n_x/2) = [0, {n_x / 2}), got {k_max}")
    return np.abs(np.fft.rfft(E)[: k_max + 1]) / n_x


def fit_growth_rate(t: np.ndarray, amplitude: np.ndarray, window: tuple[float, float]) -> float:
    """Least-squares slope of ``log(amplitude)`` against ``t`` inside ``window``."""
    t = np.asarray(t, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    t_a, t_b = window
    if not t_b > t_a:
        raise ValueError(f"window must satisfy t_b > t_a, got {window}")
    sel = (t >= t_a) & (t <= t_b)
    if sel.sum() < 3:
        raise ValueError(f"need at least 3 samples in window {window}, got {int(sel.sum())}")
    amp = amplitude[sel]
    if np.any(amp <= 0):
        raise ValueError("amplitudes inside the fit window must be positive")
    slope, _ = np.polyfit(t[sel], np.log(amp), 1)
    return float(slope)
