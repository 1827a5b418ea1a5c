"""
Hexagonal multi-cell network geometry.

The network is the classic 19-cell layout: cell 0 at the origin, six cells
in the first ring and twelve in the second. Hexagons are pointy-top with
circumradius ``r_c``, so adjacent base stations are ``sqrt(3) * r_c`` apart.
Cells are addressed internally by axial coordinates ``(u, v)`` with centre
``(sqrt(3) r_c (u + v/2), 1.5 r_c v)``.

Large-scale attenuation follows ``beta = (d / r_min) ** -alpha``. Every
bound in this package only needs the ratios ``mu_jk = beta_0jk / beta_jjk``
(interfering gain towards BS 0 over the serving gain), or their spatial
moments when UEs are placed at random.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, PlacementError
from .rng import shard_bounds, stream

__all__ = [
    "CellLayout",
    "UePlacement",
    "AttenuationProfile",
    "InterferenceMoments",
    "build_layout",
    "place_ues",
    "attenuation",
    "sample_in_hexagon",
    "sample_mu",
    "moments_from_samples",
    "spatial_moments",
    "point_mass_moments",
]

SUPPORTED_REUSE = (1, 3, 4)
_AXIAL_STEPS = ((1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1))

# Proper 4-colouring of the 19-cell layout in which cell 0 shares its label
# with exactly four cells. No lattice-periodic colouring achieves this (the
# index-4 sublattice holds all six second-ring corners).
_REUSE4_LABELS = {
    (0, 0): 0,
    (1, 0): 1, (0, 1): 3, (-1, 1): 2, (-1, 0): 1, (0, -1): 3, (1, -1): 2,
    (2, 0): 0, (1, 1): 2, (0, 2): 1, (-1, 2): 0, (-2, 2): 1, (-2, 1): 3,
    (-2, 0): 0, (-1, -1): 2, (0, -2): 1, (1, -2): 0, (2, -2): 1, (2, -1): 3,
}


def _hex_distance(u, v):
    return max(abs(u), abs(v), abs(u + v))


def _reuse_label(u: int, v: int, omega: int) -> int:
    if omega == 1:
        return 0
    if omega == 3:
        return (u + 2 * v) % 3
    return _REUSE4_LABELS[(u, v)]


@dataclass(frozen=True)
class CellLayout:
    """Cell centres, radius and pilot-reuse labels of the network."""

    cell_radius: float
    reuse_factor: int
    axial: np.ndarray
    centers: np.ndarray
    reuse_group: np.ndarray

    @property
    def cell_count(self) -> int:
        return len(self.centers)

    @property
    def pilot_mask(self) -> np.ndarray:
        """Boolean mask of the cells reusing cell 0's pilots, cell 0 included."""
        return self.reuse_group == self.reuse_group[0]

    @property
    def pilot_sharing(self) -> np.ndarray:
        """Indices of the neighbour cells that reuse cell 0's pilots."""
        mask = self.pilot_mask.copy()
        mask[0] = False
        return np.flatnonzero(mask)

    @property
    def neighbors(self) -> np.ndarray:
        return np.arange(1, self.cell_count)

    def adjacent(self, i: int, j: int) -> bool:
        du, dv = self.axial[j] - self.axial[i]
        return (int(du), int(dv)) in _AXIAL_STEPS

    def contains(self, points, cell: int) -> np.ndarray:
        """Whether points (absolute coordinates) lie inside hexagon ``cell``."""
        rel = np.asarray(points, dtype=float) - self.centers[cell]
        return _inside_hexagon(rel, self.cell_radius)


def build_layout(cell_radius: float = 500.0, reuse_factor: int = 3) -> CellLayout:
    """
    Build the 19-cell hexagonal layout.

    Parameters
    ----------
    cell_radius : float
        Hexagon circumradius ``r_c`` in metres.
    reuse_factor : int
        Pilot reuse factor, one of 1, 3 or 4.

    Returns
    -------
    CellLayout
        Cells ordered by ring (0, then 6, then 12) and by angle within a ring.
    """
    if reuse_factor not in SUPPORTED_REUSE:
        raise ConfigurationError(
            f"unsupported pilot reuse factor {reuse_factor}; allowed values are {SUPPORTED_REUSE}"
        )
    if cell_radius <= 0:
        raise ConfigurationError("cell radius must be positive")
    cells = [(u, v) for u in range(-2, 3) for v in range(-2, 3) if _hex_distance(u, v) <= 2]

    def center(c):
        u, v = c
        return math.sqrt(3.0) * cell_radius * (u + v / 2.0), 1.5 * cell_radius * v

    def order(c):
        x, y = center(c)
        return _hex_distance(*c), round(math.atan2(y, x) % (2 * math.pi), 9)

    cells.sort(key=order)
    axial = np.array(cells, dtype=int)
    centers = np.array([center(c) for c in cells])
    labels = np.array([_reuse_label(u, v, reuse_factor) for u, v in cells], dtype=int)
    return CellLayout(float(cell_radius), int(reuse_factor), axial, centers, labels)


def _inside_hexagon(rel, r_c):
    x = np.abs(rel[..., 0])
    y = np.abs(rel[..., 1])
    half_width = math.sqrt(3.0) / 2.0 * r_c
    return (x <= half_width) & (y <= r_c - x / math.sqrt(3.0))


def sample_in_hexagon(rng: np.random.Generator, count: int, cell_radius: float,
                      min_distance: float = 0.0) -> np.ndarray:
    """
    Draw points uniformly inside a pointy-top hexagon centred at the origin.

    Points closer than ``min_distance`` to the centre are rejected and
    redrawn, so the result is uniform over the hexagon minus that disc.

    Returns
    -------
    np.ndarray
        Array of shape ``(count, 2)``.
    """
    out = np.empty((count, 2))
    filled = 0
    half_width = math.sqrt(3.0) / 2.0 * cell_radius
    while filled < count:
        need = count - filled
        # acceptance of box sampling is ~0.87; oversample to finish in one pass
        batch = int(need * 1.25) + 16
        pts = np.column_stack([
            rng.uniform(-half_width, half_width, batch),
            rng.uniform(-cell_radius, cell_radius, batch),
        ])
        ok = _inside_hexagon(pts, cell_radius) & (np.hypot(pts[:, 0], pts[:, 1]) >= min_distance)
        pts = pts[ok][:need]
        out[filled:filled + len(pts)] = pts
        filled += len(pts)
    return out


@dataclass(frozen=True)
class UePlacement:
    """Absolute UE positions, ``positions[j, k]`` for UE k of cell j."""

    positions: np.ndarray
    mode: str
    min_distance: float
    ring_radius: float | None = None

    @property
    def K(self) -> int:
        return self.positions.shape[1]


def place_ues(layout: CellLayout, K: int, mode: str = "fixed-ring",
              ring_radius: float = 275.0, min_distance: float = 50.0,
              seed: int = 0) -> UePlacement:
    """
    Place K UEs in every cell.

    ``fixed-ring`` puts the UEs on a circle of ``ring_radius`` around each
    base station, UE k at angle ``2 pi k / K``. ``uniform-random`` draws them
    uniformly over the hexagon, at least ``min_distance`` from the serving
    base station, reproducibly from ``seed``.
    """
    if K < 1:
        raise PlacementError(f"K must be >= 1, got {K}")
    C = layout.cell_count
    if mode == "fixed-ring":
        if not (min_distance < ring_radius < layout.cell_radius):
            raise PlacementError(
                f"ring radius {ring_radius} m must lie strictly between r_min={min_distance} m "
                f"and r_c={layout.cell_radius} m"
            )
        ang = 2.0 * math.pi * np.arange(K) / K
        offsets = ring_radius * np.column_stack([np.cos(ang), np.sin(ang)])
        pos = layout.centers[:, None, :] + offsets[None, :, :]
        return UePlacement(pos, mode, float(min_distance), float(ring_radius))
    if mode == "uniform-random":
        if min_distance >= layout.cell_radius * math.sqrt(3.0) / 2.0:
            raise PlacementError("r_min leaves no admissible area inside the hexagon")
        pos = np.empty((C, K, 2))
        for j in range(C):
            rng = stream(seed, "placement", j)
            pos[j] = layout.centers[j] + sample_in_hexagon(rng, K, layout.cell_radius, min_distance)
        return UePlacement(pos, mode, float(min_distance))
    raise PlacementError(f"unknown placement mode {mode!r}; use 'fixed-ring' or 'uniform-random'")


@dataclass(frozen=True)
class AttenuationProfile:
    """Large-scale gains ``beta[l, j, k]`` and the ratios ``mu[j, k]``."""

    beta: np.ndarray
    mu: np.ndarray
    alpha: float


def attenuation(layout: CellLayout, placement: UePlacement, alpha: float = 3.7,
                min_distance: float = 50.0) -> AttenuationProfile:
    """Evaluate ``beta_ljk = (d_ljk / r_min) ** -alpha`` for every BS-UE pair."""
    if alpha <= 2:
        raise ConfigurationError(f"path-loss exponent must exceed 2, got {alpha}")
    diff = placement.positions[None, :, :, :] - layout.centers[:, None, None, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    C = layout.cell_count
    serving = d[np.arange(C), np.arange(C)]
    if np.any(serving < min_distance * (1 - 1e-12)):
        raise PlacementError("a UE is closer than r_min to its serving base station")
    beta = (d / min_distance) ** (-alpha)
    mu = beta[0] / beta[np.arange(C), np.arange(C)]
    return AttenuationProfile(beta, mu, float(alpha))


@dataclass(frozen=True)
class InterferenceMoments:
    """
    Spatial moments of ``mu_jk`` under a random UE distribution.

    ``mu_bar[j, 0]`` and ``mu_bar[j, 1]`` hold the first and second moments
    for a UE of cell j, ``mu_var[j]`` its variance and ``stderr`` the
    Monte-Carlo standard errors of ``mu_bar``.
    """

    mu_bar: np.ndarray
    mu_var: np.ndarray
    sample_count: int
    stderr: np.ndarray = field(default=None)
    fingerprint: str = ""

    @property
    def mu_bar1(self) -> np.ndarray:
        return self.mu_bar[:, 0]

    @property
    def mu_bar2(self) -> np.ndarray:
        return self.mu_bar[:, 1]


def _mu_from_offsets(layout, cell, offsets, alpha):
    # mu = beta_0 / beta_jj = (d_jj / d_0) ** alpha; cell 0 is identically 1
    if cell == 0:
        return np.ones(offsets.shape[:-1])
    d_serv = np.hypot(offsets[..., 0], offsets[..., 1])
    absolute = offsets + layout.centers[cell]
    d_0 = np.hypot(absolute[..., 0], absolute[..., 1])
    return (d_serv / d_0) ** alpha


def sample_mu(layout: CellLayout, K: int, count: int, alpha: float = 3.7,
              min_distance: float = 50.0, seed: int = 0, tag: str = "mu-samples") -> np.ndarray:
    """
    Draw ``count`` independent uniform placements and return their mu ratios.

    Returns
    -------
    np.ndarray
        Shape ``(count, C, K)``; entry ``[s, j, k]`` is ``mu_jk`` in placement s.
    """
    C = layout.cell_count
    out = np.empty((count, C, K))
    for j in range(C):
        rng = stream(seed, tag, j)
        off = sample_in_hexagon(rng, count * K, layout.cell_radius, min_distance)
        out[:, j, :] = _mu_from_offsets(layout, j, off, alpha).reshape(count, K)
    return out


def moments_from_samples(mu_samples) -> InterferenceMoments:
    """
    Reduce mu samples to spatial moments.

    ``mu_samples`` has shape ``(S, C)`` or ``(S, C, K)``; in the latter case
    the UEs of a cell are pooled, since they are identically distributed.
    """
    x = np.asarray(mu_samples, dtype=float)
    if x.ndim == 3:
        x = np.moveaxis(x, 2, 1).reshape(-1, x.shape[1])
    S = x.shape[0]
    m1 = x.mean(axis=0)
    x2 = x * x
    m2 = x2.mean(axis=0)
    var = x.var(axis=0)
    if S > 1:
        se = np.column_stack([x.std(axis=0, ddof=1), x2.std(axis=0, ddof=1)]) / math.sqrt(S)
    else:
        se = np.full((x.shape[1], 2), np.nan)
    # cell 0 is exact by construction
    m1[0], m2[0], var[0] = 1.0, 1.0, 0.0
    se[0] = 0.0
    return InterferenceMoments(np.column_stack([m1, m2]), var, S, se)


def spatial_moments(layout: CellLayout, alpha: float = 3.7, min_distance: float = 50.0,
                    sample_count: int = 50_000, seed: int = 0, workers: int = 1,
                    shard_size: int = 10_000) -> InterferenceMoments:
    """
    Monte-Carlo estimate of the spatial moments of ``mu_jk``.

    Each cell's UE is drawn uniformly over its hexagon (outside the ``r_min``
    disc) ``sample_count`` times. Work is split into fixed-size shards with
    their own random streams, so ``workers`` changes only the wall time.
    """
    if sample_count < 1:
        raise ConfigurationError("sample_count must be >= 1")
    C = layout.cell_count
    tasks = [(j, i, a, b) for j in range(1, C)
             for i, a, b in shard_bounds(sample_count, shard_size)]

    def run(task):
        j, i, a, b = task
        rng = stream(seed, "moments", j, i)
        off = sample_in_hexagon(rng, b - a, layout.cell_radius, min_distance)
        return _mu_from_offsets(layout, j, off, alpha)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, tasks))
    else:
        parts = [run(t) for t in tasks]
    samples = np.ones((sample_count, C))
    for (j, _, a, b), part in zip(tasks, parts):
        samples[a:b, j] = part
    mom = moments_from_samples(samples)
    fp = moments_fingerprint(layout, alpha, min_distance, sample_count, seed)
    return InterferenceMoments(mom.mu_bar, mom.mu_var, mom.sample_count, mom.stderr, fp)


def moments_fingerprint(layout: CellLayout, alpha: float, min_distance: float,
                        sample_count: int, seed: int) -> str:
    """Content key identifying a moment set; the reuse factor does not enter."""
    key = f"hex19|rc={layout.cell_radius!r}|alpha={alpha!r}|rmin={min_distance!r}|" \
          f"uniform|S={sample_count}|seed={seed}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


def point_mass_moments(mu) -> InterferenceMoments:
    """Moments of a degenerate distribution pinning every UE of cell j at ``mu[j]``."""
    mu = np.asarray(mu, dtype=float)
    return InterferenceMoments(np.column_stack([mu, mu * mu]), np.zeros_like(mu), 1,
                               np.zeros((len(mu), 2)))
