import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smmimo.exceptions import ConfigurationError, PlacementError
from smmimo.geometry import (attenuation, build_layout, moments_from_samples, place_ues,
                             point_mass_moments, sample_in_hexagon, spatial_moments)
from smmimo.rng import stream


@pytest.fixture(scope="module")
def layouts():
    return {w: build_layout(500.0, w) for w in (1, 3, 4)}


def test_nineteen_cells_two_rings(layouts):
    lay = layouts[3]
    assert lay.cell_count == 19
    d = np.hypot(*lay.centers.T)
    assert np.count_nonzero(d < 1e-9) == 1 and d[0] == 0
    step = math.sqrt(3) * 500
    # 6 cells at one step, 6 at sqrt(3) steps and 6 at two steps
    assert np.allclose(np.sort(d[1:7]), step)
    assert np.allclose(np.sort(d[7:]), np.sort(np.r_[np.full(6, step * math.sqrt(3)),
                                                      np.full(6, 2 * step)]))


def test_adjacent_centers_spacing(layouts):
    lay = layouts[1]
    pairs = [(i, j) for i in range(19) for j in range(i + 1, 19) if lay.adjacent(i, j)]
    assert len(pairs) == 42     # edges of the 19-hexagon patch
    for i, j in pairs:
        assert np.hypot(*(lay.centers[i] - lay.centers[j])) == pytest.approx(math.sqrt(3) * 500)


@pytest.mark.parametrize("omega, size", [(1, 18), (3, 6), (4, 4)])
def test_pilot_sharing_size(layouts, omega, size):
    lay = layouts[omega]
    assert len(lay.pilot_sharing) == size
    assert lay.pilot_mask[0] and lay.pilot_mask.sum() == size + 1


@pytest.mark.parametrize("omega", [3, 4])
def test_same_label_cells_not_adjacent(layouts, omega):
    lay = layouts[omega]
    for i in range(19):
        for j in range(i + 1, 19):
            if lay.reuse_group[i] == lay.reuse_group[j]:
                assert not lay.adjacent(i, j)


def test_reuse3_matches_axial_rule(layouts):
    lay = layouts[3]
    u, v = lay.axial.T
    assert np.array_equal(lay.reuse_group, (u + 2 * v) % 3)


def test_reuse1_shares_everything(layouts):
    lay = layouts[1]
    assert np.all(lay.reuse_group == 0)
    assert set(lay.pilot_sharing) == set(range(1, 19))


def test_labels_partition_cells(layouts):
    for w, lay in layouts.items():
        assert lay.reuse_group.shape == (19,)
        assert set(np.unique(lay.reuse_group)) <= set(range(w))


def test_unsupported_reuse_factor():
    with pytest.raises(ConfigurationError, match="1, 3, 4"):
        build_layout(500.0, 2)


def test_single_ue_on_ring(layouts):
    pl = place_ues(layouts[3], 1, "fixed-ring", 275.0)
    rel = pl.positions[:, 0] - layouts[3].centers
    assert np.allclose(rel, [[275.0, 0.0]] * 19)


def test_ring_angular_spacing(layouts):
    lay = layouts[3]
    pl = place_ues(lay, 10, "fixed-ring", 275.0)
    rel = pl.positions[5] - lay.centers[5]
    assert np.allclose(np.hypot(*rel.T), 275.0)
    ang = np.degrees(np.unwrap(np.arctan2(rel[:, 1], rel[:, 0])))
    assert np.allclose(np.diff(ang), 36.0)


def test_random_placement_reproducible(layouts):
    a = place_ues(layouts[3], 10, "uniform-random", seed=7)
    b = place_ues(layouts[3], 10, "uniform-random", seed=7)
    c = place_ues(layouts[3], 10, "uniform-random", seed=8)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_random_placement_inside_cell_and_outside_rmin(layouts):
    lay = layouts[3]
    pl = place_ues(lay, 50, "uniform-random", min_distance=50.0, seed=3)
    assert pl.positions.shape == (19, 50, 2)
    for j in range(19):
        rel = pl.positions[j] - lay.centers[j]
        assert np.all(np.hypot(*rel.T) >= 50.0)
        assert np.all(lay.contains(pl.positions[j], j))


@pytest.mark.parametrize("radius", [50.0, 20.0, 500.0, 600.0])
def test_ring_radius_out_of_range(layouts, radius):
    with pytest.raises(PlacementError):
        place_ues(layouts[3], 4, "fixed-ring", ring_radius=radius, min_distance=50.0)


def test_beta_normalisation_and_scalar(layouts):
    lay = layouts[3]
    pl = place_ues(lay, 1, "fixed-ring", 275.0)
    at = attenuation(lay, pl, 3.7, 50.0)
    # oracle in the log domain
    assert at.beta[0, 0, 0] == pytest.approx(math.exp(-3.7 * math.log(5.5)), rel=1e-12)
    assert at.beta[0, 0, 0] == pytest.approx(1.82e-3, rel=5e-3)
    assert np.all(at.beta > 0)
    assert np.all(at.mu[0] == 1.0)
    assert np.all(at.mu[1:] <= 1.0)


def test_beta_at_rmin_is_one(layouts):
    from smmimo.geometry import UePlacement
    lay = layouts[1]
    pos = lay.centers[:, None, :] + np.array([50.0, 0.0])
    at = attenuation(lay, UePlacement(pos, "fixed-ring", 50.0, 50.0), 3.7, 50.0)
    assert at.beta[0, 0, 0] == pytest.approx(1.0)


@given(d=st.floats(60.0, 5000.0), alpha=st.floats(2.1, 5.0))
def test_doubling_distance_scales_beta(d, alpha):
    lay = build_layout(500.0, 1)
    from smmimo.geometry import UePlacement
    base = np.zeros((19, 1, 2))
    base[:] = lay.centers[:, None, :]
    base[:, 0, 0] += 60.0
    pos = base.copy()
    pos[0, 0] = [d, 0.0]
    pos2 = base.copy()
    pos2[0, 0] = [2 * d, 0.0]
    b1 = attenuation(lay, UePlacement(pos, "fixed-ring", 50.0, 60.0), alpha, 50.0).beta[0, 0, 0]
    b2 = attenuation(lay, UePlacement(pos2, "fixed-ring", 50.0, 60.0), alpha, 50.0).beta[0, 0, 0]
    assert b2 / b1 == pytest.approx(2 ** -alpha, rel=1e-9)


def test_alpha_must_exceed_two(layouts):
    pl = place_ues(layouts[3], 2)
    with pytest.raises(ConfigurationError):
        attenuation(layouts[3], pl, 2.0)


def test_hexagon_sampler_uniform_mean():
    rng = stream(0, "test-hex")
    pts = sample_in_hexagon(rng, 200_000, 500.0, 0.0)
    assert np.allclose(pts.mean(axis=0), 0.0, atol=3.0)
    # mean squared radius of a regular hexagon with circumradius r is 5 r^2 / 12
    assert np.mean(np.sum(pts ** 2, axis=1)) == pytest.approx(5 * 500.0 ** 2 / 12, rel=1e-2)


@pytest.fixture(scope="module")
def moments(layouts):
    return spatial_moments(layouts[3], 3.7, 50.0, 50_000, seed=0)


def test_moments_cell_zero_exact(moments):
    assert moments.mu_bar[0, 0] == 1.0 and moments.mu_bar[0, 1] == 1.0
    assert moments.mu_var[0] == 0.0


def test_moments_jensen_and_sign(moments):
    assert np.all(moments.mu_bar >= 0)
    assert np.all(moments.mu_bar2 >= moments.mu_bar1 ** 2)


def test_first_ring_relative_stderr(moments):
    rel = moments.stderr[1:7] / moments.mu_bar[1:7]
    assert np.all(rel < 0.02)


def test_first_ring_bootstrap_error_bar(layouts):
    # the reported standard error agrees with the spread over independent seeds
    ests = [spatial_moments(layouts[3], 3.7, 50.0, 5000, seed=s).mu_bar1[1] for s in range(40)]
    one = spatial_moments(layouts[3], 3.7, 50.0, 5000, seed=0)
    assert np.std(ests, ddof=1) == pytest.approx(one.stderr[1, 0], rel=0.35)


def test_moments_error_shrinks_by_sqrt2(layouts):
    a = spatial_moments(layouts[3], 3.7, 50.0, 20_000, seed=1)
    b = spatial_moments(layouts[3], 3.7, 50.0, 40_000, seed=1)
    ratio = a.stderr[1:, 0] / b.stderr[1:, 0]
    assert np.median(ratio) == pytest.approx(math.sqrt(2), rel=0.25)


def test_moments_independent_of_workers(layouts):
    a = spatial_moments(layouts[3], 3.7, 50.0, 25_000, seed=5, workers=1, shard_size=4000)
    b = spatial_moments(layouts[3], 3.7, 50.0, 25_000, seed=5, workers=3, shard_size=4000)
    assert np.array_equal(a.mu_bar, b.mu_bar)


def test_moments_reproducible_and_fingerprint(layouts):
    a = spatial_moments(layouts[3], 3.7, 50.0, 3000, seed=2)
    b = spatial_moments(layouts[1], 3.7, 50.0, 3000, seed=2)
    assert np.array_equal(a.mu_bar, b.mu_bar)
    assert a.fingerprint == b.fingerprint
    c = spatial_moments(layouts[3], 3.5, 50.0, 3000, seed=2)
    assert c.fingerprint != a.fingerprint


def test_point_mass_moments():
    mu = np.array([1.0, 0.3, 0.05])
    m = point_mass_moments(mu)
    assert np.allclose(m.mu_bar2, mu ** 2)
    assert np.all(m.mu_var == 0)


def test_moments_from_samples_pools_ues():
    x = np.random.default_rng(0).random((100, 3, 4))
    m = moments_from_samples(x)
    assert m.sample_count == 400
    assert m.mu_bar1[1] == pytest.approx(x[:, 1, :].mean())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), K=st.integers(1, 12))
def test_random_placement_respects_rmin(seed, K):
    lay = build_layout(500.0, 3)
    pl = place_ues(lay, K, "uniform-random", min_distance=50.0, seed=seed)
    rel = pl.positions - lay.centers[:, None, :]
    assert np.all(np.hypot(rel[..., 0], rel[..., 1]) >= 50.0)
    assert pl.positions.shape[1] == K
