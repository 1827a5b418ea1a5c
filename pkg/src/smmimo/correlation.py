"""
Transmit-side antenna correlation.

The UE antennas form a uniform linear array whose correlation follows the
Jakes model, ``R_t(i, j) = J0(2*pi*d_s*|i - j| / lambda)``. This module
builds that matrix, the two scalars the spectral-efficiency bounds consume
(``eps_s`` and the diagonal of ``R_t^-1``), and a grid search for the
antenna spacing that minimises the correlation energy of antenna 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import DegenerateCorrelationError, DomainError

__all__ = [
    "bessel_j0",
    "TxCorrelation",
    "jakes_matrix",
    "spacing_objective",
    "optimize_spacing",
    "max_spacing",
]

# Switch-over between the ascending series and the Hankel expansion.  Below
# 12 the series loses at most ~4 digits to cancellation, above it the
# asymptotic expansion's smallest term is far below 1e-10.
_SERIES_LIMIT = 12.0
_MAX_TERMS = 80
_PD_TOL = 1e-10


def _j0_series(x):
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, _MAX_TERMS):
        term = term * q / (k * k)
        total = total + term
        if np.all(np.abs(term) < 1e-17 * np.maximum(np.abs(total), 1e-300)):
            break
    return total


def _j0_asymptotic(x):
    # Hankel expansion; each series is truncated at its smallest term.
    p = np.ones_like(x)
    q = np.zeros_like(x)
    coef = 1.0          # b_k = prod_{i<=k} (2i-1)^2 / (k! 8^k)
    power = np.ones_like(x)
    last = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 2 * _MAX_TERMS):
        coef *= (2 * k - 1) ** 2 / (8.0 * k)
        power = power / x
        term = coef * power
        active &= (term < last) & (term > 1e-17)     # negligible terms end the sum too
        if not active.any():
            break
        last = np.where(active, term, last)
        if k % 2 == 0:
            sign = 1.0 if (k // 2) % 2 == 0 else -1.0
            p = p + np.where(active, sign * term, 0.0)
        else:
            sign = -1.0 if ((k - 1) // 2) % 2 == 0 else 1.0
            q = q + np.where(active, sign * term, 0.0)
    phase = x - math.pi / 4.0
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(phase) - q * np.sin(phase))


def bessel_j0(x):
    """
    Zero-order Bessel function of the first kind.

    Parameters
    ----------
    x : float or array_like
        Real argument(s). ``J0`` is even, so negative values are folded.

    Returns
    -------
    float or np.ndarray
        ``J0(x)`` with absolute error below 1e-10 on ``[0, 50]``.
    """
    arr = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(arr)
    small = arr < _SERIES_LIMIT
    if small.any():
        out[small] = _j0_series(arr[small])
    if (~small).any():
        out[~small] = _j0_asymptotic(arr[~small])
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class TxCorrelation:
    """Jakes correlation of an N-antenna uniform linear array."""

    N: int
    d_s: float
    wavelength: float
    R_t: np.ndarray
    eps_s: float
    r_diag: np.ndarray

    @property
    def r_sum(self) -> float:
        """Sum of the diagonal of ``R_t^-1``."""
        return float(np.sum(self.r_diag))

    def sqrtm(self) -> np.ndarray:
        """Symmetric square root of ``R_t``.

        Eigenvalues are clipped at zero when they sit within 1e-12 below it.
        """
        w, v = np.linalg.eigh(self.R_t)
        if w.min() < -1e-12:
            raise DegenerateCorrelationError(
                f"R_t has a negative eigenvalue {w.min():.3e} at d_s={self.d_s} mm"
            )
        w = np.clip(w, 0.0, None)
        return (v * np.sqrt(w)) @ v.T


def jakes_matrix(N: int, d_s: float, wavelength: float) -> TxCorrelation:
    """
    Build the transmit correlation matrix of an N-antenna UE.

    Parameters
    ----------
    N : int
        Number of UE transmit antennas.
    d_s : float
        Spacing between adjacent antennas, in mm.
    wavelength : float
        Carrier wavelength, in mm.

    Returns
    -------
    TxCorrelation

    Raises
    ------
    DegenerateCorrelationError
        If the smallest eigenvalue of ``R_t`` does not exceed 1e-10, which
        happens when the spacing collapses towards zero.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if d_s <= 0 or wavelength <= 0:
        raise DomainError("antenna spacing and wavelength must be positive")
    lags = np.arange(N)
    first_row = bessel_j0(2.0 * math.pi * d_s * lags / wavelength)
    first_row = np.atleast_1d(first_row)
    first_row[0] = 1.0
    R = first_row[np.abs(lags[:, None] - lags[None, :])]
    eps_s = float(np.sum(first_row[1:] ** 2))
    if N == 1:
        return TxCorrelation(1, float(d_s), float(wavelength), R, 0.0, np.ones(1))
    lam_min = np.linalg.eigvalsh(R).min()
    if lam_min <= _PD_TOL:
        raise DegenerateCorrelationError(
            f"R_t is numerically singular at d_s={d_s} mm "
            f"(smallest eigenvalue {lam_min:.3e})"
        )
    r_diag = np.diag(np.linalg.inv(R)).copy()
    return TxCorrelation(N, float(d_s), float(wavelength), R, eps_s, r_diag)


def max_spacing(N: int, device_size: float) -> float:
    """Largest antenna spacing that fits N antennas in a device of ``device_size``."""
    if N < 2:
        raise DomainError("antenna spacing is undefined for a single antenna")
    return device_size / (N - 1)


def spacing_objective(d_s, N: int, wavelength: float):
    """Correlation energy ``sum_{n=2..N} J0(2 pi d_s (n-1) / lambda)^2``."""
    d = np.asarray(d_s, dtype=float)
    lags = np.arange(1, N)
    vals = bessel_j0(2.0 * math.pi * d[..., None] * lags / wavelength)
    return np.sum(np.asarray(vals) ** 2, axis=-1)


def optimize_spacing(N: int, device_size: float, wavelength: float,
                     grid_points: int = 10_000, tie_tol: float = 1e-12) -> tuple[float, float]:
    """
    Find the antenna spacing that minimises the correlation energy.

    A uniform grid ``d_s^m * i / grid_points`` (``i = 1..grid_points``,
    ``d_s^m = device_size / (N - 1)``) locates every local minimum, and each
    one is then polished by a bounded scalar search between its grid
    neighbours. Minima whose objectives agree within ``tie_tol`` are treated
    as equal and the smallest spacing among them wins, so that for N = 2 the
    first zero of J0 is returned rather than a later one.

    Returns
    -------
    (float, float)
        The minimising spacing in mm and the objective value there.
    """
    if N < 2:
        raise DomainError("spacing optimisation needs N >= 2 (the objective is empty for N = 1)")
    if device_size <= 0:
        raise DomainError("device size must be positive")
    d_max = max_spacing(N, device_size)
    grid = d_max * np.arange(1, grid_points + 1) / grid_points
    obj = spacing_objective(grid, N, wavelength)

    left = np.r_[np.inf, obj[:-1]]
    right = np.r_[obj[1:], np.inf]
    local = np.flatnonzero((obj <= left) & (obj <= right))

    def f(d):
        return float(spacing_objective(d, N, wavelength))

    candidates = []
    for i in local:
        lo = grid[i - 1] if i > 0 else 0.5 * grid[0]
        hi = grid[min(i + 1, grid_points - 1)]
        d_best, v_best = float(grid[i]), float(obj[i])
        if hi > lo:
            res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-10 * d_max})
            if res.fun < v_best:
                d_best, v_best = float(res.x), float(res.fun)
        candidates.append((v_best, d_best))
    v_min = min(v for v, _ in candidates)
    ties = [d for v, d in candidates if v <= v_min + tie_tol]
    d_star = min(ties)
    return d_star, f(d_star)
