"""
Parameter sweeps over the closed-form bounds and selection of the best N.

A :class:`Scenario` fixes everything that is not a :class:`SystemParams`
field (geometry, correlation model, moment budget). A :class:`SweepGrid`
varies one parameter; :func:`evaluate_grid` fills one row per
(grid point, combiner, N) and records the rate-maximising N at every point.
Infeasible configurations stay in the table with a reason code.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import bounds
from .bounds import SystemParams
from .correlation import TxCorrelation, jakes_matrix, max_spacing, optimize_spacing
from .exceptions import ConfigurationError, DegenerateCorrelationError
from .geometry import (InterferenceMoments, attenuation, build_layout, moments_fingerprint,
                       moments_from_samples, place_ues, sample_mu, spatial_moments)

__all__ = [
    "AXES",
    "Scenario",
    "SweepGrid",
    "SweepRow",
    "NStarRow",
    "SweepResult",
    "MomentCache",
    "correlation_for",
    "evaluate_point",
    "evaluate_grid",
    "optimize_n",
    "tightness_report",
    "TightnessRow",
    "jensen_comparison",
    "random_tightness_report",
    "parse_values",
]

AXES = ("M", "K", "T", "D_m", "omega", "N", "snr_eff")
DEFAULT_CANDIDATES = (1, 2, 4, 8, 16)
SPACING_POLICIES = ("max", "optimized")
PLACEMENTS = ("uniform-random", "fixed-ring")


@dataclass(frozen=True)
class Scenario:
    """Geometry, correlation and Monte-Carlo settings shared by a whole sweep."""

    cell_radius: float = 500.0
    min_distance: float = 50.0
    alpha: float = 3.7
    placement: str = "uniform-random"
    ring_radius: float = 275.0
    wavelength: float = 60.0
    device_size: float = 100.0
    spacing: str = "max"
    moment_samples: int = 50_000
    seed: int = 0
    include_variance: bool = False

    def __post_init__(self):
        if self.spacing not in SPACING_POLICIES:
            raise ConfigurationError(f"spacing policy must be one of {SPACING_POLICIES}")
        if self.placement not in PLACEMENTS:
            raise ConfigurationError(f"placement must be one of {PLACEMENTS}")

    def layout(self, omega: int):
        return _layout(self.cell_radius, int(omega))


@lru_cache(maxsize=None)
def _layout(cell_radius, omega):
    return build_layout(cell_radius, omega)


@lru_cache(maxsize=512)
def correlation_for(N: int, device_size: float, wavelength: float,
                    policy: str = "max") -> TxCorrelation:
    """
    Correlation of an N-antenna UE whose array spans ``device_size``.

    ``policy='max'`` spreads the antennas over the whole device,
    ``'optimized'`` uses the spacing that minimises the correlation energy.
    A single antenna has no spacing; its correlation is the scalar 1.
    """
    if N == 1:
        return jakes_matrix(1, wavelength, wavelength)
    if policy == "max":
        d = max_spacing(N, device_size)
    elif policy == "optimized":
        d, _ = optimize_spacing(N, device_size, wavelength)
    else:
        raise ConfigurationError(f"unknown spacing policy {policy!r}")
    return jakes_matrix(N, d, wavelength)


class MomentCache:
    """
    On-disk store of spatial moments keyed by their content fingerprint.

    Moments do not depend on M, N, K, T, the SNR or the reuse factor, so one
    set serves a whole sweep. Writes go through a temporary file and an
    atomic rename, so concurrent writers of the same key are harmless.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else None

    def get(self, scenario: Scenario, workers: int = 1) -> InterferenceMoments:
        layout = scenario.layout(1)
        fp = moments_fingerprint(layout, scenario.alpha, scenario.min_distance,
                                 scenario.moment_samples, scenario.seed)
        path = self.directory / f"moments-{fp}.npz" if self.directory is not None else None
        if path is not None and path.exists():
            with np.load(path) as z:
                return InterferenceMoments(z["mu_bar"], z["mu_var"], int(z["count"]),
                                           z["stderr"], fp)
        mom = spatial_moments(layout, scenario.alpha, scenario.min_distance,
                              scenario.moment_samples, scenario.seed, workers)
        if path is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".npz")
            with os.fdopen(fd, "wb") as fh:
                np.savez(fh, mu_bar=mom.mu_bar, mu_var=mom.mu_var,
                         count=mom.sample_count, stderr=mom.stderr)
            os.replace(tmp, path)
        return mom


@dataclass(frozen=True)
class SweepGrid:
    """
    One-dimensional sweep.

    Parameters
    ----------
    axis : str
        One of :data:`AXES`; ``D_m`` varies the device size of the scenario.
    values : sequence
        Ordered axis values.
    fixed : SystemParams
        Every other parameter. Its ``N`` and ``combiner`` are ignored
        unless the axis is ``N``.
    candidate_n : tuple of int
        Antenna counts tried at every point (1 or powers of two).
    combiners : tuple of str
    """

    axis: str
    values: tuple
    fixed: SystemParams = field(default_factory=SystemParams)
    candidate_n: tuple = DEFAULT_CANDIDATES
    combiners: tuple = ("mr", "zf")

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigurationError(f"unknown sweep axis {self.axis!r}; choose from {AXES}")
        if len(self.values) == 0:
            raise ConfigurationError("sweep needs at least one value")
        for n in self.candidate_n:
            if n < 1 or (n & (n - 1)):
                raise ConfigurationError(f"candidate N must be 1 or a power of two, got {n}")
        for c in self.combiners:
            if c not in bounds.COMBINERS:
                raise ConfigurationError(f"unknown combiner {c!r}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "candidate_n", tuple(sorted(set(self.candidate_n))))

    def points(self):
        """Yield ``(value, params, device_size_override)`` per grid point."""
        for v in self.values:
            if self.axis == "D_m":
                yield v, self.fixed, float(v)
            elif self.axis == "snr_eff":
                yield v, self.fixed.with_(snr=float(v)), None
            else:
                yield v, self.fixed.with_(**{self.axis: int(v)}), None

    def candidates(self, params):
        return (params.N,) if self.axis == "N" else self.candidate_n


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    combiner: str
    M: int
    N: int
    K: int
    T: int
    omega: int
    snr_eff: float
    D_m: float
    feasible: bool
    reason: str
    sum_rate: float
    per_ue_rate: float
    sigma_sq: float
    p_c: float
    time_fraction: float


@dataclass(frozen=True)
class NStarRow:
    axis_value: float
    combiner: str
    omega: int
    K: int
    n_star: int          # 0 when no candidate is feasible
    sum_rate: float
    baseline_rate: float  # N = 1 (nan if infeasible)


@dataclass
class SweepResult:
    axis: str
    rows: list
    n_star: list
    fingerprint: str = ""

    def n_star_map(self, combiner: str) -> dict:
        return {r.axis_value: r.n_star for r in self.n_star if r.combiner == combiner}


@lru_cache(maxsize=64)
def fixed_ring_mu(scenario: Scenario, K: int):
    """mu ratios of K UEs on the fixed ring in every cell (cached per scenario and K)."""
    layout = scenario.layout(1)
    placement = place_ues(layout, K, "fixed-ring", scenario.ring_radius,
                          scenario.min_distance, scenario.seed)
    return attenuation(layout, placement, scenario.alpha, scenario.min_distance).mu


def evaluate_point(params: SystemParams, scenario: Scenario, moments=None,
                   device_size: float | None = None) -> SweepRow:
    """
    Closed-form per-cell sum rate at one operating point.

    Random placement uses the averaged bound with ``moments``; fixed-ring
    placement uses the per-UE bound and sums the K UE rates. Infeasible
    points come back with ``feasible=False`` and a reason code.
    """
    D = scenario.device_size if device_size is None else float(device_size)
    nan = float("nan")

    def row(feasible, reason):
        return SweepRow(0.0, params.combiner, params.M, params.N, params.K, params.T,
                        params.omega, params.snr, D, feasible, reason,
                        nan, nan, nan, nan, params.time_fraction)

    reason = params.infeasibility()
    if reason is not None:
        return row(False, reason)
    try:
        params.validate()
        corr = correlation_for(params.N, D, scenario.wavelength, scenario.spacing)
    except DegenerateCorrelationError:
        return row(False, "singular-correlation")
    mu_fixed = fixed_ring_mu(scenario, params.K) if scenario.placement == "fixed-ring" else None
    if mu_fixed is None and moments is None:
        raise ConfigurationError("random placement needs spatial moments")
    mask = scenario.layout(params.omega).pilot_mask
    if mu_fixed is not None:
        sinr = bounds.inv_sinr_fixed(params, mu_fixed, corr, mask)
    else:
        sinr = bounds.inv_sinr_random(params, moments, corr, mask, scenario.include_variance)
    res = bounds.se_from_sigma(sinr.sigma_sq, params.N, params.time_fraction)
    out = row(True, "")
    return replace(out, sum_rate=float(res.sum_rate), per_ue_rate=float(np.mean(res.rate)),
                   sigma_sq=float(np.mean(sinr.sigma_sq)), p_c=float(np.mean(res.p_c)))


def evaluate_grid(grid: SweepGrid, scenario: Scenario, moments=None) -> SweepResult:
    """
    Fill every (point, combiner, N) row of ``grid`` and extract N*.

    N* maximises the sum rate over the feasible candidates; ties go to the
    smaller N. A point without any feasible candidate gets ``n_star = 0``.
    """
    rows, stars = [], []
    for value, base, D in grid.points():
        for comb in grid.combiners:
            best = None
            baseline = float("nan")
            for n in grid.candidates(base):
                p = base.with_(N=n, combiner=comb)
                r = replace(evaluate_point(p, scenario, moments, D), axis_value=value)
                rows.append(r)
                if not r.feasible:
                    continue
                if n == 1:
                    baseline = r.sum_rate
                if best is None or r.sum_rate > best.sum_rate:
                    best = r
            if best is None:
                stars.append(NStarRow(value, comb, base.omega, base.K, 0, float("nan"), baseline))
            else:
                stars.append(NStarRow(value, comb, base.omega, base.K, best.N, best.sum_rate,
                                      baseline))
    fp = getattr(moments, "fingerprint", "") if moments is not None else ""
    return SweepResult(grid.axis, rows, stars, fp)


def optimize_n(params: SystemParams, scenario: Scenario, moments=None,
               candidate_n=DEFAULT_CANDIDATES):
    """
    Best antenna count at one operating point.

    Returns
    -------
    (int, list of SweepRow)
        N* (0 if nothing is feasible) and the per-N rows for audit.
    """
    grid = SweepGrid("M", (params.M,), params, tuple(candidate_n), (params.combiner,))
    res = evaluate_grid(grid, scenario, moments)
    return res.n_star[0].n_star, res.rows


def parse_values(text: str) -> tuple:
    """
    Parse axis values: ``"64,128,256"``, ``"20..1000:20"`` or ``"64..1024"``.

    A range without a step uses step 1. Integers stay integers.
    """
    def num(s):
        s = s.strip()
        f = float(s)
        return int(f) if f.is_integer() and "." not in s and "e" not in s.lower() else f

    text = text.strip()
    if ".." in text:
        span, _, step = text.partition(":")
        lo, hi = (num(s) for s in span.split(".."))
        st = num(step) if step else 1
        if st <= 0:
            raise ConfigurationError("range step must be positive")
        count = int(math.floor((hi - lo) / st + 1e-9)) + 1
        if count < 1:
            raise ConfigurationError(f"empty range {text!r}")
        vals = [lo + i * st for i in range(count)]
        if all(isinstance(v, int) for v in (lo, st)):
            return tuple(int(v) for v in vals)
        return tuple(round(v, 12) for v in vals)
    try:
        return tuple(num(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse values {text!r}") from exc


@dataclass(frozen=True)
class TightnessRow:
    M: int
    combiner: str
    N: int
    K: int
    bound: float
    simulated: float
    simulated_stderr: float
    abs_gap: float
    rel_gap: float
    inv_sinr_bound: float
    inv_sinr_simulated: float
    draws: int


def tightness_report(params: SystemParams, scenario: Scenario, M_values, combiners=("mr", "zf"),
                     draws: int = 10_000, mi_samples: int = 100_000, seed: int = 0,
                     workers: int = 1):
    """
    Closed-form fixed-location bound versus the Monte-Carlo rate.

    For every M the Lemma-1 SINR is estimated once from shared channel
    draws for all requested combiners, then passed through the
    mutual-information estimator. Gaps are ``simulated - bound``.
    """
    from .montecarlo import mutual_information, sinr_lemma1

    layout = scenario.layout(params.omega)
    placement = place_ues(layout, params.K, "fixed-ring", scenario.ring_radius,
                          scenario.min_distance, scenario.seed)
    atten = attenuation(layout, placement, scenario.alpha, scenario.min_distance)
    corr = correlation_for(params.N, scenario.device_size, scenario.wavelength, scenario.spacing)
    rows = []
    for M in M_values:
        p = params.with_(M=int(M))
        kinds = tuple(c for c in combiners if c == "mr" or p.M > p.N * p.K)
        if not kinds:
            continue
        sims = sinr_lemma1(p, atten, corr, layout.pilot_mask, draws=draws, seed=seed,
                           combiners=kinds, workers=workers)
        for kind in kinds:
            pk = p.with_(combiner=kind)
            cf_sinr = bounds.inv_sinr_fixed(pk, atten.mu, corr, layout.pilot_mask)
            cf = bounds.se_from_sigma(cf_sinr.sigma_sq, pk.N, pk.time_fraction)
            mi = mutual_information(pk, sims[kind], samples=mi_samples, seed=seed)
            sim = float(np.sum(mi.value))
            se = float(np.sqrt(np.sum(np.asarray(mi.stderr) ** 2)))
            bound = float(cf.sum_rate)
            rows.append(TightnessRow(p.M, kind, p.N, p.K, bound, sim, se, sim - bound,
                                     (sim - bound) / bound,
                                     float(np.mean(cf_sinr.inv_sinr)),
                                     float(np.mean(sims[kind].inv_sinr)), sims[kind].draws))
    return rows


def jensen_comparison(params: SystemParams, scenario: Scenario, draws: int = 20,
                      seed: int = 0, include_variance: bool | None = None):
    """
    Average of fixed-location bounds over random placements versus the averaged bound.

    ``draws`` independent uniform placements of all K UEs in every cell
    are generated. The per-placement fixed-location bound averaged over
    placements and UEs is compared with the closed form evaluated on the
    moments of the same samples.

    Returns
    -------
    (float, float)
        Mean per-UE rate over placements and the averaged-bound per-UE rate.
    """
    rates, mus = _placement_rates(params, scenario, draws, seed, "jensen")
    layout = scenario.layout(params.omega)
    corr = correlation_for(params.N, scenario.device_size, scenario.wavelength, scenario.spacing)
    mom = moments_from_samples(mus)
    iv = scenario.include_variance if include_variance is None else include_variance
    avg = bounds.se_random_lb(params, mom, corr, layout.pilot_mask, iv)
    return float(np.mean(rates)), float(np.mean(avg.rate))


def _placement_rates(params, scenario, draws, seed, tag):
    # mean per-UE fixed-location bound for each of `draws` uniform placements
    layout = scenario.layout(params.omega)
    corr = correlation_for(params.N, scenario.device_size, scenario.wavelength, scenario.spacing)
    mus = sample_mu(layout, params.K, draws, scenario.alpha, scenario.min_distance, seed, tag=tag)
    rates = np.array([np.mean(bounds.se_fixed_lb(params, mu, corr, layout.pilot_mask).rate)
                      for mu in mus])
    return rates, mus


def random_tightness_report(params: SystemParams, scenario: Scenario, moments, M_values,
                            combiners=("mr", "zf"), placements: int = 200, seed: int = 0):
    """
    Averaged closed-form bound versus the placement average of per-UE bounds.

    The reference value averages the fixed-location bound over
    ``placements`` uniform UE drops; its standard error is taken across
    drops. Rows reuse :class:`TightnessRow` with ``draws = placements``.
    """
    layout = scenario.layout(params.omega)
    corr = correlation_for(params.N, scenario.device_size, scenario.wavelength, scenario.spacing)
    rows = []
    for M in M_values:
        for kind in combiners:
            p = params.with_(M=int(M), combiner=kind)
            if p.infeasibility() is not None:
                continue
            rates, _ = _placement_rates(p, scenario, placements, seed, "lemma3")
            sim = float(np.mean(rates)) * p.K
            se = float(np.std(rates, ddof=1) / math.sqrt(placements)) * p.K if placements > 1 \
                else float("nan")
            sinr = bounds.inv_sinr_random(p, moments, corr, layout.pilot_mask,
                                          scenario.include_variance)
            bound = float(bounds.se_from_sigma(sinr.sigma_sq, p.N, p.time_fraction).sum_rate)
            rows.append(TightnessRow(p.M, kind, p.N, p.K, bound, sim, se, sim - bound,
                                     (sim - bound) / bound, float(np.mean(sinr.inv_sinr)),
                                     float("nan"), placements))
    return rows


def row_fields(cls) -> list:
    """Column names of a row dataclass, in declaration order."""
    return [f.name for f in fields(cls)]
