"""
Monte-Carlo ground truth for the closed-form bounds.

Three independent estimators live here:

* :func:`sinr_lemma1` draws correlated Rayleigh channels for the UEs of
  the cells sharing cell 0's pilots, forms the pilot-contaminated
  estimates, builds MR or ZF combiners and averages the three expectation
  families of the worst-case-noise SINR (desired-signal mean, total
  received power through the combiner, combiner norm). The other cells
  are independent of the combiner and contribute their exact conditional
  mean power.
* :func:`mutual_information` measures the mutual information of the
  equivalent channel ``y = x_SM + w`` with diagonal noise covariance, whose
  output is a Gaussian mixture.
* :func:`detection_pc_oracle` simulates the max-magnitude antenna detector
  directly.

All estimators return a value, its standard error and the number of draws.
Random streams are keyed by ``(seed, purpose, shard)`` with fixed shard
sizes, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import logsumexp

from .bounds import SinrProfile, SystemParams
from .exceptions import ConfigurationError, DomainError, InfeasibleError, NumericalError
from .rng import shard_bounds, stream

__all__ = [
    "Estimate",
    "ChannelRealization",
    "ChannelEstimate",
    "Combiner",
    "draw_channels",
    "estimate_channels",
    "build_combiner",
    "pilot_sequences",
    "despread_pilots",
    "sinr_lemma1",
    "mutual_information",
    "detection_pc_oracle",
]

ZF_RESIDUAL_TOL = 1e-8


class Estimate(NamedTuple):
    """Monte-Carlo estimate with its standard error and draw count."""

    value: float | np.ndarray
    stderr: float | np.ndarray
    count: int


def _cn(rng, shape, var=1.0):
    """Circularly symmetric complex Gaussian samples with variance ``var``."""
    z = rng.standard_normal(tuple(shape) + (2,)).view(np.complex128)[..., 0]
    return z * np.sqrt(np.asarray(var) / 2.0)


@dataclass(frozen=True)
class ChannelRealization:
    """
    A block of consecutive channel draws towards BS 0.

    ``H[b, i, k]`` is the M x N matrix of UE k in cell ``cells[i]`` for
    draw ``start + b``; each entry has variance ``beta_0jk``.
    """

    H: np.ndarray
    noise_var: float
    seed: int
    shard: int
    start: int
    cells: tuple = ()

    @property
    def count(self) -> int:
        return self.H.shape[0]

    def cell(self, j: int) -> np.ndarray:
        """Draws of cell j, shape ``(b, K, M, N)``."""
        return self.H[:, self.cells.index(j)]


@dataclass(frozen=True)
class ChannelEstimate:
    """Pilot-based estimates ``H_hat[b, k]`` (M x N) of cell 0's UEs."""

    H_hat: np.ndarray
    contributors: tuple


@dataclass(frozen=True)
class Combiner:
    """Combining vectors ``g[b, :, k*N + n]`` for antenna n of UE k."""

    g: np.ndarray
    kind: str
    residual: float = 0.0


def draw_channels(atten, corr, count: int, seed: int = 0, shard_size: int = 64,
                  M: int | None = None, cells=None) -> Iterator[ChannelRealization]:
    """
    Generate i.i.d. correlated Rayleigh channels ``sqrt(beta) H_tilde R_t^(1/2)``.

    Parameters
    ----------
    atten : AttenuationProfile
        Supplies ``beta[0, j, k]`` for every UE.
    corr : TxCorrelation
        Transmit correlation; its symmetric square root shapes the columns.
    count : int
        Number of draws.
    M : int
        Number of BS antennas.
    cells : sequence of int, optional
        Cells to draw, cell 0 first; all cells by default.

    Yields
    ------
    ChannelRealization
        Blocks of at most ``shard_size`` draws, each from its own stream.
    """
    if M is None:
        raise ConfigurationError("M must be given")
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    root = corr.sqrtm()
    beta0 = np.asarray(atten.beta[0])
    cells = tuple(range(beta0.shape[0])) if cells is None else tuple(int(j) for j in cells)
    if not cells or cells[0] != 0:
        raise ConfigurationError("cells must start with cell 0")
    scale = np.sqrt(beta0[list(cells)])[None, :, :, None, None]
    K, N = beta0.shape[1], corr.N
    for shard, a, b in shard_bounds(count, shard_size):
        rng = stream(seed, "channels", M, shard)
        H = (_cn(rng, (b - a, len(cells), K, M, N)) @ root) * scale
        yield ChannelRealization(H, float("nan"), seed, shard, a, cells)


def estimate_channels(real: ChannelRealization, atten, params: SystemParams, pilot_mask,
                      rng: np.random.Generator, perfect: bool = False) -> ChannelEstimate:
    """
    Contaminated pilot estimates of cell 0's channels.

    ``h_hat_0kn = h_0kn + sum_{j in Phi'} h_jkn sqrt(beta_00k / beta_jjk) + w_kn``
    with ``w_kn ~ CN(0, beta_00k / (omega K snr) I_M)``; the pilot
    despreading is applied analytically (see :func:`despread_pilots`).
    With ``perfect=True`` the true channels are returned.
    """
    if perfect:
        return ChannelEstimate(real.cell(0).copy(), ())
    mask = np.asarray(pilot_mask, dtype=bool)
    contrib = tuple(int(j) for j in np.flatnonzero(mask) if j != 0)
    C = mask.shape[0]
    beta_serv = np.asarray(atten.beta)[np.arange(C), np.arange(C)]      # (C, K)
    beta00 = beta_serv[0]
    H_hat = real.cell(0).copy()
    for j in contrib:
        H_hat += real.cell(j) * np.sqrt(beta00 / beta_serv[j])[None, :, None, None]
    noise_var = beta00 / (params.omega * params.K * params.snr)
    if np.isfinite(params.snr):
        H_hat += _cn(rng, H_hat.shape, noise_var[None, :, None, None])
    return ChannelEstimate(H_hat, contrib)


def build_combiner(est: ChannelEstimate, kind: str) -> Combiner:
    """
    MR (``g = h_hat``) or ZF (columns of ``pinv(H_hat_0)^H``) combining vectors.

    The ZF pseudo-inverse uses the SVD, and every draw is checked for
    ``||pinv(H) H - I||_max < 1e-8``.
    """
    b, K, M, N = est.H_hat.shape
    stacked = np.moveaxis(est.H_hat, 1, 2).reshape(b, M, K * N)  # column k*N + n
    if kind == "mr":
        return Combiner(stacked, "mr")
    if kind != "zf":
        raise ConfigurationError(f"unknown combiner {kind!r}")
    if M <= K * N:
        raise InfeasibleError(f"ZF needs M > NK, got M = {M}, NK = {K * N}")
    pinv = np.linalg.pinv(stacked)
    if not np.all(np.isfinite(pinv)):
        bad = int(np.flatnonzero(~np.isfinite(pinv).all(axis=(1, 2)))[0])
        raise NumericalError(f"non-finite ZF combiner at draw offset {bad}")
    eye = np.eye(K * N)
    residual = float(np.max(np.abs(pinv @ stacked - eye)))
    if residual > ZF_RESIDUAL_TOL:
        raise NumericalError(f"ZF orthogonality residual {residual:.2e} exceeds {ZF_RESIDUAL_TOL}")
    return Combiner(np.conj(np.swapaxes(pinv, 1, 2)), "zf", residual)


def pilot_sequences(layout, K: int) -> np.ndarray:
    """
    Pilot sequences ``v[j, k]`` of length ``omega K`` from a DFT matrix.

    Cells with reuse label ``g`` use DFT columns ``g K .. g K + K - 1``, so
    ``v_0k^H v_jm = omega K`` when cell j shares cell 0's pilots and m = k,
    and 0 otherwise.
    """
    L = layout.reuse_factor * K
    F = np.exp(-2j * np.pi * np.outer(np.arange(L), np.arange(L)) / L)
    cols = layout.reuse_group[:, None] * K + np.arange(K)[None, :]
    return np.moveaxis(F[:, cols], 0, -1)


def despread_pilots(H_cell, pilots, power, noise, k: int) -> np.ndarray:
    """
    Estimate ``h_0kn`` for every antenna n by correlating received pilots.

    This is the explicit pilot phase behind :func:`estimate_channels`: in
    sub-frame n only antenna n of every UE is active and sends its pilot
    ``v_jk`` scaled by ``sqrt(P_jk)``; BS 0 receives ``Y_n`` and computes
    ``Y_n v_0k / (omega K sqrt(P_0k))``.

    Parameters
    ----------
    H_cell : np.ndarray
        ``(C, K, M, N)`` channels towards BS 0.
    pilots : np.ndarray
        ``(C, K, L)`` pilot sequences.
    power : np.ndarray
        ``(C, K)`` transmit powers.
    noise : np.ndarray
        ``(N, M, L)`` receiver noise for each sub-frame.
    """
    C, K, M, N = H_cell.shape
    L = pilots.shape[-1]
    out = np.empty((M, N), dtype=complex)
    for n in range(N):
        Y = np.einsum("jkm,jkl->ml", H_cell[..., n] * np.sqrt(power)[..., None],
                      np.conj(pilots)) + noise[n]
        out[:, n] = Y @ pilots[0, k] / (L * np.sqrt(power[0, k]))
    return out


def _sinr_shard(real, atten, params, pilot_mask, kinds, rng, perfect, spill):
    beta = np.asarray(atten.beta)
    drawn = list(real.cells)
    beta_serv = beta[drawn, drawn]
    b, C, K, M, N = real.H.shape
    est = estimate_channels(real, atten, params, pilot_mask, rng, perfect)
    # every transmit antenna scaled by sqrt(P_jk) = 1 / sqrt(beta_jjk) (P_u = 1)
    H_all = (real.H / np.sqrt(beta_serv)[None, :, :, None, None])
    H_all = np.moveaxis(H_all, 3, 1).reshape(b, M, C * K * N)
    H_own = np.moveaxis(real.cell(0), 1, 2).reshape(b, M, K * N)
    out = {}
    for kind in kinds:
        comb = build_combiner(est, kind)
        g = comb.g
        desired = np.einsum("bmi,bmi->bi", np.conj(g), H_own)
        norm = np.sum(np.abs(g) ** 2, axis=1)
        total = np.sum(np.abs(np.conj(np.swapaxes(g, 1, 2)) @ H_all) ** 2, axis=2) + spill * norm
        out[kind] = (desired.sum(0), total.sum(0), norm.sum(0), comb.residual)
    return out


def _assemble_sinr(sum_a, sum_b, sum_c, n, params, beta00):
    K, N = params.K, params.N
    mean_a = (sum_a / n).reshape(K, N)
    mean_b = (sum_b / n).reshape(K, N)
    mean_c = (sum_c / n).reshape(K, N)
    p0 = (1.0 / beta00)[:, None]
    sig = p0 / N * np.abs(mean_a) ** 2
    denom = mean_b / N - sig + mean_c / params.snr
    return denom / sig


def sinr_lemma1(params: SystemParams, atten, corr, pilot_mask, draws: int = 10_000,
                seed: int = 0, combiners=None, shard_size: int = 64, workers: int = 1,
                min_draws: int = 1000, jackknife_groups: int = 20, perfect_csi: bool = False):
    """
    Monte-Carlo evaluation of the worst-case-noise SINR of every antenna of cell 0.

    Parameters
    ----------
    params : SystemParams
        Operating point; ``params.combiner`` is used unless ``combiners``
        lists several kinds to be evaluated on the same channel draws.
    atten : AttenuationProfile
    corr : TxCorrelation
    pilot_mask : array_like of bool
        Cells sharing cell 0's pilots, cell 0 included.
    draws : int
        Number of channel realisations.
    combiners : sequence of {'mr', 'zf'}, optional
    perfect_csi : bool
        Combine with the true channels instead of the pilot estimates.

    Returns
    -------
    SinrProfile or dict
        A profile with jackknife standard errors over groups of draws; a
        dict keyed by combiner when ``combiners`` is given.
    """
    if draws < min_draws:
        raise ConfigurationError(f"at least {min_draws} draws are required, got {draws}")
    kinds = tuple(combiners) if combiners is not None else (params.combiner,)
    if "zf" in kinds and params.M <= params.N * params.K:
        raise InfeasibleError(f"ZF needs M > NK, got M = {params.M}, NK = {params.N * params.K}")
    beta = np.asarray(atten.beta)
    beta00 = beta[0, 0]
    # Cells outside the pilot group are independent of the estimates, so
    # E|g^H h_jkn|^2 given g is exactly beta_0jk R[n, n] ||g||^2; their
    # interference enters through that conditional mean instead of samples.
    mask = np.asarray(pilot_mask, dtype=bool)
    cells = np.flatnonzero(mask | (np.arange(mask.size) == 0))
    rest = np.flatnonzero(~mask & (np.arange(mask.size) != 0))
    spill = float(np.trace(corr.R_t) * np.sum(beta[0, rest] / beta[rest, rest]))
    realizations = draw_channels(atten, corr, draws, seed, shard_size, params.M, cells)
    if workers > 1:
        realizations = list(realizations)

    def run(real):
        rng = stream(seed, "pilot-noise", params.M, real.shard)
        return real.count, _sinr_shard(real, atten, params, pilot_mask, kinds, rng,
                                       perfect_csi, spill)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, realizations))
    else:
        results = [run(r) for r in realizations]

    profiles = {}
    for kind in kinds:
        counts = np.array([c for c, _ in results], dtype=float)
        A = np.array([r[kind][0] for _, r in results])
        Bs = np.array([r[kind][1] for _, r in results])
        Cs = np.array([r[kind][2] for _, r in results])
        n = counts.sum()
        inv = _assemble_sinr(A.sum(0), Bs.sum(0), Cs.sum(0), n, params, beta00)
        if not np.all(np.isfinite(inv)) or np.any(inv <= 0):
            raise NumericalError("Monte-Carlo SINR estimate is not positive and finite")
        # delete-a-group jackknife over contiguous groups of shards
        groups = np.array_split(np.arange(len(counts)), min(jackknife_groups, len(counts)))
        reps = []
        for gidx in groups:
            keep = np.ones(len(counts), dtype=bool)
            keep[gidx] = False
            reps.append(_assemble_sinr(A[keep].sum(0), Bs[keep].sum(0), Cs[keep].sum(0),
                                       counts[keep].sum(), params, beta00))
        reps = np.array(reps)
        G = len(groups)
        se = np.sqrt((G - 1) / G * np.sum((reps - reps.mean(0)) ** 2, axis=0))
        profiles[kind] = SinrProfile(inv, "monte-carlo", se, int(n))
    if combiners is None:
        return profiles[params.combiner]
    return profiles


def mutual_information(params: SystemParams, sinr: SinrProfile, samples: int = 100_000,
                       seed: int = 0, chunk: int = 50_000) -> Estimate:
    """
    Rate of every UE through the equivalent Gaussian-noise SM channel.

    The output ``y = s e_a + w`` with ``s ~ CN(0, N)``, ``a`` uniform and
    ``w ~ CN(0, diag(1/SINR_kn))`` is an equal-weight mixture of N
    zero-mean Gaussians whose covariance adds N to entry ``a``. The output
    entropy ``-E log2 p(y)`` is estimated by Monte Carlo, the noise entropy
    is exact, and the difference is scaled by ``(T - B) / T``.

    Returns
    -------
    Estimate
        Per-UE rates (bits/s/Hz), their standard errors and the sample count.
    """
    N = params.N
    inv = np.asarray(sinr.inv_sinr, dtype=float)
    if inv.shape[1] != N:
        raise DomainError("SINR profile does not match N")
    tf = params.time_fraction
    values, errors = [], []
    ln2 = math.log(2.0)
    for k, v in enumerate(inv):
        noise_entropy = float(np.sum(np.log(math.pi * math.e * v)))
        logs = []
        for shard, a, b in shard_bounds(samples, chunk):
            rng = stream(seed, "mutual-information", k, shard)
            n = b - a
            act = rng.integers(0, N, n)
            y = _cn(rng, (n, N), v[None, :])
            y[np.arange(n), act] += _cn(rng, (n,), float(N))
            p2 = np.abs(y) ** 2
            # log CN(y; 0, diag(v) + N e_m e_m^T) for every component m
            base = -np.sum(np.log(math.pi * v)) - np.sum(p2 / v, axis=1)
            comp = (base[:, None] + p2 / v[None, :] - p2 / (v + N)[None, :]
                    - np.log((v + N) / v)[None, :])
            logs.append(logsumexp(comp, axis=1) - math.log(N))
        logp = np.concatenate(logs)
        h_out = -logp.mean()
        mi = (h_out - noise_entropy) / ln2
        values.append(tf * mi)
        errors.append(tf * logp.std(ddof=1) / math.sqrt(samples) / ln2)
    return Estimate(np.array(values), np.array(errors), samples)


def detection_pc_oracle(N: int, sigma_sq: float, trials: int = 1_000_000, seed: int = 0,
                        chunk: int = 200_000) -> Estimate:
    """
    Brute-force probability that ``argmax_t |y_t|^2`` recovers the active antenna.

    ``y = s e_a + w`` with ``s ~ CN(0, N)``, ``a`` uniform over the N
    antennas and ``w ~ CN(0, sigma_sq I)``. The standard error is the
    binomial one, ``sqrt(p (1 - p) / trials)``.
    """
    if N < 2:
        raise DomainError("detection needs N >= 2")
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    hits = 0
    for shard, a, b in shard_bounds(trials, chunk):
        rng = stream(seed, "detection", N, shard)
        n = b - a
        act = rng.integers(0, N, n)
        y = _cn(rng, (n, N), sigma_sq)
        y[np.arange(n), act] += _cn(rng, (n,), float(N))
        hits += int(np.count_nonzero(np.argmax(np.abs(y) ** 2, axis=1) == act))
    p = hits / trials
    return Estimate(p, math.sqrt(max(p * (1 - p), 0.0) / trials), trials)
