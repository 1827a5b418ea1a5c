"""
Closed-form spectral-efficiency bounds for the massive SM-MIMO uplink.

Everything here is a deterministic function of the operating point
(:class:`SystemParams`), the interference ratios ``mu`` (or their spatial
moments) and the transmit correlation. The only SNR-like quantity that
enters is the effective SNR ``P_u / sigma_N^2``; absolute powers never do.

Conventions
-----------
``mu`` arrays have shape ``(C, K)``: row ``j`` is cell ``j`` (cell 0 is
the cell of interest) and column ``k`` the UE index. ``pilot_mask`` is a
boolean array of length ``C`` that is ``True`` for cell 0 and for every
cell reusing cell 0's pilots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy import integrate, special

from .exceptions import ConfigurationError, DomainError, InfeasibleError

__all__ = [
    "SystemParams",
    "SinrProfile",
    "SeResult",
    "detection_probability",
    "alternating_binomial_sum",
    "detection_penalty",
    "se_lower_bound_fixed",
    "se_single_antenna",
    "se_from_sigma",
    "inv_sinr_mr_fixed",
    "inv_sinr_zf_fixed",
    "inv_sinr_fixed",
    "inv_sinr_random",
    "se_random_lb",
    "se_fixed_lb",
    "theta_for_reuse",
    "db_to_linear",
    "inv_sinr_limit_fixed",
    "chi_sq_limit",
]

COMBINERS = ("mr", "zf")


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def theta_for_reuse(omega: int) -> float:
    """Heuristic scaling of ZF intra-cell leakage: 0.2 for full reuse, else 0.01."""
    return 0.2 if omega == 1 else 0.01


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SystemParams:
    """
    One operating point of the uplink.

    ``snr`` is the linear effective SNR ``P_u / sigma_N^2``. ``theta``
    overrides the ZF leakage factor; by default it follows the reuse factor.
    """

    M: int = 512
    N: int = 2
    K: int = 10
    T: int = 1000
    omega: int = 3
    snr: float = 10.0
    combiner: str = "zf"
    theta: float | None = None

    @property
    def B(self) -> int:
        """Pilot length ``omega * N * K``."""
        return self.omega * self.N * self.K

    @property
    def time_fraction(self) -> float:
        return (self.T - self.B) / self.T

    @property
    def theta_omega(self) -> float:
        return theta_for_reuse(self.omega) if self.theta is None else self.theta

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def infeasibility(self) -> str | None:
        """Reason code if the point violates a system constraint, else ``None``."""
        if self.B >= self.T:
            return "pilot-overhead"      # B = omega N K >= T
        if self.combiner == "zf" and self.M <= self.N * self.K:
            return "zf-rank"             # M <= N K
        return None

    def validate(self) -> "SystemParams":
        if self.combiner not in COMBINERS:
            raise ConfigurationError(f"unknown combiner {self.combiner!r}; use 'mr' or 'zf'")
        if self.M < 1 or self.K < 1 or self.T < 1:
            raise ConfigurationError("M, K and T must be positive")
        if not _is_power_of_two(self.N):
            raise ConfigurationError(f"N must be 1 or a power of two, got {self.N}")
        if self.snr <= 0:
            raise ConfigurationError("effective SNR must be positive")
        reason = self.infeasibility()
        if reason == "pilot-overhead":
            raise InfeasibleError(f"pilot length B = {self.B} is not below T = {self.T}")
        if reason == "zf-rank":
            raise InfeasibleError(f"ZF needs M > NK, got M = {self.M}, NK = {self.N * self.K}")
        return self


@dataclass(frozen=True)
class SinrProfile:
    """Per-UE, per-antenna SINR reciprocals ``inv_sinr[k, n]``."""

    inv_sinr: np.ndarray
    provenance: str
    stderr: np.ndarray | None = None
    draws: int | None = None

    @property
    def sigma_sq(self) -> np.ndarray:
        """Effective noise variance per UE, the mean reciprocal over antennas."""
        return self.inv_sinr.mean(axis=1)


@dataclass(frozen=True)
class SeResult:
    """Per-UE rates of a bound and the pieces they are built from."""

    rate: np.ndarray
    shannon_term: np.ndarray
    index_term: float
    detection_penalty: np.ndarray
    p_c: np.ndarray
    time_fraction: float

    @property
    def sum_rate(self) -> float:
        return float(np.sum(self.rate))

    @property
    def K(self) -> int:
        return len(self.rate)


# -- detection probability ---------------------------------------------------

def alternating_binomial_sum(m: int, shift: float) -> float:
    """
    ``sum_{r=0..m} C(m, r) (-1)^r / (r + shift)``, summed in exact rational arithmetic.

    The float ``shift`` is converted exactly, so the only rounding is the
    final conversion; the alternating terms would otherwise cancel away
    about ``log10 C(m, m/2)`` digits.
    """
    a = Fraction(shift)
    return float(sum(Fraction(math.comb(m, r) * (-1) ** r) / (r + a) for r in range(m + 1)))


def _pc_series(N: int, s2: float) -> float:
    a = (N + 2.0 * s2) / (N + s2)
    return alternating_binomial_sum(N - 2, a) / alternating_binomial_sum(N - 2, 1.0)


def _pc_integral(N: int, s2: float) -> float:
    # P_c = (N-1) * int_0^inf (1 - e^-t)^(N-2) e^-t e^(-c t) dt,  c = s2/(N+s2)
    c = s2 / (N + s2)

    def f(t):
        return (-math.expm1(-t)) ** (N - 2) * math.exp(-(1.0 + c) * t)

    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-14, epsrel=1e-13, limit=200)
    return (N - 1) * val


def detection_probability(N: int, sigma_sq: float, method: str = "auto") -> float:
    """
    Probability that the largest output magnitude marks the active antenna.

    The received vector is ``s e_a + w`` with ``s ~ CN(0, N)`` and white
    noise of variance ``sigma_sq`` per entry. The closed form is a ratio of
    alternating binomial sums; it is evaluated with compensated summation up
    to N = 16 and by adaptive quadrature of the equivalent order-statistics
    integral beyond, where the alternating sums cancel catastrophically.

    Parameters
    ----------
    N : int
        Number of transmit antennas, at least 2.
    sigma_sq : float
        Noise variance per entry.
    method : {'auto', 'series', 'integral'}

    Returns
    -------
    float
        A probability in ``[1/N, 1]``.
    """
    if N < 2:
        raise DomainError("P_c is undefined for N < 2; use the single-antenna rate")
    if not sigma_sq > 0:
        raise DomainError(f"sigma_sq must be positive, got {sigma_sq}")
    if method == "auto":
        method = "series" if N <= 16 else "integral"
    if method == "series":
        return _pc_series(N, float(sigma_sq))
    if method == "integral":
        return _pc_integral(N, float(sigma_sq))
    raise ValueError(f"unknown method {method!r}")


def detection_penalty(p_c, N: int):
    """``P_c log2 P_c + (1 - P_c) log2((1 - P_c) / (N - 1))``, in ``[-log2 N, 0]``."""
    p = np.asarray(p_c, dtype=float)
    q = 1.0 - p
    return (special.xlogy(p, p) + special.xlogy(q, q / (N - 1))) / math.log(2.0)


# -- rate expressions --------------------------------------------------------

def se_from_sigma(sigma_sq, N: int, time_fraction: float) -> SeResult:
    """Evaluate the SM lower bound (N >= 2) or the SISO rate (N = 1) per UE."""
    s2 = np.atleast_1d(np.asarray(sigma_sq, dtype=float))
    if np.any(~np.isfinite(s2)) or np.any(s2 <= 0):
        raise DomainError("effective noise variances must be positive and finite")
    if N == 1:
        shannon = np.log2(1.0 + 1.0 / s2)
        zeros = np.zeros_like(s2)
        return SeResult(time_fraction * shannon, shannon, 0.0, zeros, np.ones_like(s2), time_fraction)
    shannon = np.log2(1.0 + N / s2)
    p_c = np.array([detection_probability(N, v) for v in s2])
    pen = detection_penalty(p_c, N)
    index = math.log2(N)
    rate = time_fraction * (shannon + index + pen)
    return SeResult(rate, shannon, index, pen, p_c, time_fraction)


def se_lower_bound_fixed(params: SystemParams, sinr: SinrProfile) -> SeResult:
    """Spatial-modulation rate lower bound from per-antenna SINR reciprocals."""
    if params.N == 1:
        raise DomainError("N = 1 has no antenna-index term; use se_single_antenna")
    if sinr.inv_sinr.shape[1] != params.N:
        raise DomainError("SINR profile does not match N")
    return se_from_sigma(sinr.sigma_sq, params.N, params.time_fraction)


def se_single_antenna(params: SystemParams, sinr: SinrProfile) -> SeResult:
    """Single-antenna (SISO Shannon) rate ``(T-B)/T * log2(1 + 1/sigma^2)``."""
    if params.N != 1:
        raise DomainError("se_single_antenna only applies to N = 1")
    return se_from_sigma(sinr.sigma_sq, 1, params.time_fraction)


# -- SINR reciprocals: fixed UE locations ------------------------------------

def _split(mu, pilot_mask):
    mu = np.asarray(mu, dtype=float)
    mask = np.asarray(pilot_mask, dtype=bool)
    if mu.shape[0] != mask.shape[0]:
        raise DomainError("mu and pilot_mask disagree on the number of cells")
    contam = mask.copy()
    contam[0] = False
    return mu, mask, contam


def inv_sinr_mr_fixed(params: SystemParams, mu, eps_s: float, pilot_mask) -> SinrProfile:
    """
    Large-M SINR reciprocal of MR combining for fixed UE positions.

    ``(1+eps) sum_{Phi'} mu_jk^2 + eps + (N/M) (1/(omega K snr) + sum_{Phi'_0} mu_jk)
    (1/snr + sum_{all j', k'} mu_j'k')``; identical for every antenna.
    """
    mu, mask, contam = _split(mu, pilot_mask)
    p = params
    contamination = np.sum(mu[contam] ** 2, axis=0)
    est = 1.0 / (p.omega * p.K * p.snr) + np.sum(mu[mask], axis=0)
    total = 1.0 / p.snr + np.sum(mu)
    inv = (1.0 + eps_s) * contamination + eps_s + (p.N / p.M) * est * total
    return SinrProfile(np.repeat(inv[:, None], p.N, axis=1), "closed-form-fixed")


def inv_sinr_zf_fixed(params: SystemParams, mu, r_diag, pilot_mask) -> SinrProfile:
    """
    Large-M SINR reciprocal of ZF combining for fixed UE positions, per antenna.

    Uses the diagonal ``r_n`` of the inverse transmit correlation and the
    leakage factor ``theta_omega`` for the pilot-sharing UEs with k' != k.
    """
    mu, mask, contam = _split(mu, pilot_mask)
    p = params
    if p.M <= p.N * p.K:
        raise InfeasibleError(f"ZF needs M > NK, got M = {p.M}, NK = {p.N * p.K}")
    r = np.asarray(r_diag, dtype=float)
    contamination = np.sum(mu[contam] ** 2, axis=0)
    same_k = np.sum(mu[mask], axis=0)                     # sum_{j' in Phi'_0} mu_j'k
    pilot_total = np.sum(mu[mask])
    other_k = pilot_total - same_k                        # sum over k' != k
    unshared = np.sum(mu[~mask])
    bracket = same_k + p.theta_omega * other_k + unshared + 1.0 / p.snr
    gain = r[None, :] * p.N / (p.M - p.N * p.K)
    inv = contamination[:, None] + gain * (same_k * bracket)[:, None]
    return SinrProfile(inv, "closed-form-fixed")


def inv_sinr_fixed(params: SystemParams, mu, corr, pilot_mask) -> SinrProfile:
    """Dispatch on ``params.combiner``."""
    if params.combiner == "mr":
        return inv_sinr_mr_fixed(params, mu, corr.eps_s, pilot_mask)
    return inv_sinr_zf_fixed(params, mu, corr.r_diag, pilot_mask)


def se_fixed_lb(params: SystemParams, mu, corr, pilot_mask) -> SeResult:
    """Fixed-location rate bound per UE (SM bound for N >= 2, SISO for N = 1)."""
    sinr = inv_sinr_fixed(params, mu, corr, pilot_mask)
    return se_from_sigma(sinr.sigma_sq, params.N, params.time_fraction)


# -- SINR reciprocals: random UE locations -----------------------------------

def inv_sinr_random(params: SystemParams, moments, corr, pilot_mask,
                    include_variance: bool = False) -> SinrProfile:
    """
    Distribution-averaged SINR reciprocal ``chi^2`` for MR or ZF.

    ``moments`` supplies ``mu_bar1``, ``mu_bar2`` and ``mu_var`` per cell.
    With ``include_variance`` the correlation between the two factors of the
    channel-estimation term is kept, adding ``sum_{Phi'} var(mu)`` scaled by
    the array-gain factor; it vanishes as M grows.

    Returns
    -------
    SinrProfile
        All K rows are equal (the bound does not depend on the UE index);
        for ZF the columns carry the per-antenna ``r_n``.
    """
    p = params
    mask = np.asarray(pilot_mask, dtype=bool)
    contam = mask.copy()
    contam[0] = False
    m1 = np.asarray(moments.mu_bar1, dtype=float)
    m2 = np.asarray(moments.mu_bar2, dtype=float)
    var_sum = float(np.sum(np.asarray(moments.mu_var)[contam]))
    contamination = float(np.sum(m2[contam]))
    est_pilot = float(np.sum(m1[mask]))
    if p.combiner == "mr":
        eps = corr.eps_s
        chi = (1.0 + eps) * contamination + eps + (p.N / p.M) * (
            1.0 / (p.omega * p.K * p.snr) + est_pilot) * (1.0 / p.snr + p.K * float(np.sum(m1)))
        if include_variance:
            chi += (p.N / p.M) * var_sum
        inv = np.full((p.K, p.N), chi)
    elif p.combiner == "zf":
        if p.M <= p.N * p.K:
            raise InfeasibleError(f"ZF needs M > NK, got M = {p.M}, NK = {p.N * p.K}")
        bracket = (est_pilot + (p.K - 1) * p.theta_omega * est_pilot
                   + p.K * float(np.sum(m1[~mask])) + 1.0 / p.snr)
        gain = np.asarray(corr.r_diag, dtype=float) * p.N / (p.M - p.N * p.K)
        kappa = contamination + gain * est_pilot * bracket
        if include_variance:
            kappa = kappa + gain * var_sum
        inv = np.tile(kappa, (p.K, 1))
    else:
        raise ConfigurationError(f"unknown combiner {p.combiner!r}")
    return SinrProfile(inv, "closed-form-random")


def se_random_lb(params: SystemParams, moments, corr, pilot_mask,
                 include_variance: bool = False) -> SeResult:
    """Per-UE rate bound for uniformly random UE positions."""
    sinr = inv_sinr_random(params, moments, corr, pilot_mask, include_variance)
    return se_from_sigma(sinr.sigma_sq, params.N, params.time_fraction)


# -- large-M limits ----------------------------------------------------------

def inv_sinr_limit_fixed(combiner: str, mu, corr, pilot_mask) -> np.ndarray:
    """
    SINR reciprocals as M grows without bound, fixed UE positions.

    MR keeps ``(1+eps) sum_{Phi'} mu_jk^2 + eps``; ZF keeps only the pilot
    contamination ``sum_{Phi'} mu_jk^2``. Returns one value per UE.
    """
    mu, _, contam = _split(mu, pilot_mask)
    contamination = np.sum(mu[contam] ** 2, axis=0)
    if combiner == "mr":
        return (1.0 + corr.eps_s) * contamination + corr.eps_s
    if combiner == "zf":
        return contamination
    raise ConfigurationError(f"unknown combiner {combiner!r}")


def chi_sq_limit(combiner: str, moments, corr, pilot_mask) -> float:
    """Large-M limit of the distribution-averaged reciprocal ``chi^2``."""
    mask = np.asarray(pilot_mask, dtype=bool).copy()
    mask[0] = False
    contamination = float(np.sum(np.asarray(moments.mu_bar2)[mask]))
    if combiner == "mr":
        return (1.0 + corr.eps_s) * contamination + corr.eps_s
    if combiner == "zf":
        return contamination
    raise ConfigurationError(f"unknown combiner {combiner!r}")
