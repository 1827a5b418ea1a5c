import math

import numpy as np
import pytest

from smmimo.bounds import (SinrProfile, SystemParams, detection_probability, inv_sinr_fixed,
                           inv_sinr_mr_fixed, se_from_sigma)
from smmimo.correlation import jakes_matrix, max_spacing
from smmimo.exceptions import ConfigurationError, InfeasibleError
from smmimo.geometry import AttenuationProfile, attenuation, build_layout, place_ues
from smmimo.montecarlo import (ChannelEstimate, build_combiner, despread_pilots, detection_pc_oracle,
                               draw_channels, estimate_channels, mutual_information,
                               pilot_sequences, sinr_lemma1)
from smmimo.rng import stream


def _atten(beta0, serving):
    """Synthetic profile: row 0 holds beta_0jk, the diagonal holds beta_jjk."""
    beta0 = np.asarray(beta0, dtype=float)
    C, K = beta0.shape
    beta = np.ones((C, C, K))
    beta[0] = beta0
    beta[np.arange(C), np.arange(C)] = serving
    beta[0, 0] = beta0[0]
    return AttenuationProfile(beta, beta0 / beta0[0], 3.7)


def _stack(gen):
    return np.concatenate([r.H for r in gen])


def _table_point(omega=3, K=10, N=2, M=512, D=100.0, snr=10.0, combiner="zf"):
    lay = build_layout(500.0, omega)
    at = attenuation(lay, place_ues(lay, K, "fixed-ring", 275.0), 3.7, 50.0)
    corr = jakes_matrix(N, max_spacing(N, D), 60.0) if N > 1 else jakes_matrix(1, 60.0, 60.0)
    p = SystemParams(M=M, N=N, K=K, T=1000, omega=omega, snr=snr, combiner=combiner)
    return p, at, corr, lay.pilot_mask


# --- channels ---------------------------------------------------------------

def test_channel_row_covariance():
    corr = jakes_matrix(2, 30.0, 60.0)
    at = _atten([[0.5]], [[0.5]])
    H = _stack(draw_channels(at, corr, 20_000, seed=1, M=4))[:, 0, 0]   # (b, M, N)
    rows = H.reshape(-1, 2)
    cov = rows.T.conj() @ rows / rows.shape[0]
    assert np.allclose(cov, 0.5 * corr.R_t, atol=0.01)


def test_channel_draws_deterministic():
    corr = jakes_matrix(2, 30.0, 60.0)
    at = _atten([[1.0], [0.2]], [[1.0], [0.7]])
    a = _stack(draw_channels(at, corr, 300, seed=4, M=8))
    b = _stack(draw_channels(at, corr, 300, seed=4, M=8))
    c = _stack(draw_channels(at, corr, 300, seed=5, M=8))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_draw_channels_needs_m():
    at = _atten([[1.0]], [[1.0]])
    with pytest.raises(ConfigurationError):
        next(draw_channels(at, jakes_matrix(1, 60.0, 60.0), 10))


# --- estimation -------------------------------------------------------------

def _one_block(at, corr, M, count, seed=0):
    return next(draw_channels(at, corr, count, seed=seed, shard_size=count, M=M))


def test_estimate_error_variance():
    at = _atten([[0.8], [0.1]], [[0.8], [0.4]])
    corr = jakes_matrix(1, 60.0, 60.0)
    p = SystemParams(M=8, N=1, K=1, omega=1, snr=10.0)
    real = _one_block(at, corr, 8, 20_000)
    est = estimate_channels(real, at, p, [True, True], stream(0, "test-est"))
    err = est.H_hat - real.H[:, 0]
    # contamination 0.1 * 0.8 / 0.4 plus pilot noise 0.8 / (omega K snr)
    assert np.mean(np.abs(err) ** 2) == pytest.approx(0.2 + 0.08, rel=0.02)
    assert est.contributors == (1,)


def test_clean_noise_free_estimate_is_exact():
    at = _atten([[0.8], [0.1]], [[0.8], [0.4]])
    corr = jakes_matrix(2, 30.0, 60.0)
    p = SystemParams(M=8, N=2, K=1, omega=1, snr=math.inf)
    real = _one_block(at, corr, 8, 50)
    est = estimate_channels(real, at, p, [True, False], stream(0, "test-est"))
    assert np.array_equal(est.H_hat, real.H[:, 0])


def test_contamination_doubles_estimate_variance():
    at = _atten([[1.0], [1.0]], [[1.0], [1.0]])
    corr = jakes_matrix(1, 60.0, 60.0)
    p = SystemParams(M=16, N=1, K=1, omega=1, snr=1e9)
    real = _one_block(at, corr, 16, 10_000)
    clean = estimate_channels(real, at, p, [True, False], stream(0, "a")).H_hat
    dirty = estimate_channels(real, at, p, [True, True], stream(0, "a")).H_hat
    ratio = np.mean(np.abs(dirty) ** 2) / np.mean(np.abs(clean) ** 2)
    assert ratio == pytest.approx(2.0, rel=0.03)


def test_pilot_orthogonality():
    lay = build_layout(500.0, 3)
    K = 4
    v = pilot_sequences(lay, K)
    L = 3 * K
    assert v.shape == (19, K, L)
    for j in range(19):
        gram = np.conj(v[0]) @ v[j].T          # gram[k, m] = v_0k^H v_jm
        expect = L * np.eye(K) if lay.pilot_mask[j] else np.zeros((K, K))
        assert np.max(np.abs(gram - expect)) < 1e-12


def test_despreading_matches_analytic_estimate():
    lay = build_layout(500.0, 3)
    C, K, M, N = 19, 3, 6, 2
    rng = np.random.default_rng(11)
    H = rng.standard_normal((C, K, M, N)) + 1j * rng.standard_normal((C, K, M, N))
    beta_serv = rng.uniform(0.1, 1.0, (C, K))
    power = 1.0 / beta_serv
    pilots = pilot_sequences(lay, K)
    L = pilots.shape[-1]
    noise = rng.standard_normal((N, M, L)) + 1j * rng.standard_normal((N, M, L))
    for k in range(K):
        got = despread_pilots(H, pilots, power, noise, k)
        expect = H[0, k].copy()
        for j in lay.pilot_sharing:
            expect += H[j, k] * math.sqrt(power[j, k] / power[0, k])
        expect += np.stack([noise[n] @ pilots[0, k] for n in range(N)], axis=1) / (
            L * math.sqrt(power[0, k]))
        assert np.max(np.abs(got - expect)) < 1e-12


# --- combiners --------------------------------------------------------------

def test_zf_combiner_inverts_estimates():
    rng = np.random.default_rng(3)
    Hh = rng.standard_normal((5, 3, 20, 2)) + 1j * rng.standard_normal((5, 3, 20, 2))
    comb = build_combiner(ChannelEstimate(Hh, ()), "zf")
    stacked = np.moveaxis(Hh, 1, 2).reshape(5, 20, 6)
    prod = np.conj(np.swapaxes(comb.g, 1, 2)) @ stacked
    assert np.max(np.abs(prod - np.eye(6))) < 1e-8
    assert comb.residual < 1e-8
    # normal-equation form H (H^H H)^-1 on well-conditioned draws
    gram = np.conj(np.swapaxes(stacked, 1, 2)) @ stacked
    ref = stacked @ np.linalg.inv(gram)
    assert np.max(np.abs(comb.g - ref)) < 1e-8


def test_mr_combiner_is_estimate():
    rng = np.random.default_rng(3)
    Hh = rng.standard_normal((2, 3, 8, 2)) + 0j
    comb = build_combiner(ChannelEstimate(Hh, ()), "mr")
    assert np.array_equal(comb.g[:, :, 2 * 1 + 1], Hh[:, 1, :, 1])


def test_zf_rank_infeasible():
    Hh = np.ones((1, 4, 8, 2), dtype=complex)
    with pytest.raises(InfeasibleError):
        build_combiner(ChannelEstimate(Hh, ()), "zf")
    p, at, corr, mask = _table_point(M=20, K=10, N=2)
    with pytest.raises(InfeasibleError):
        sinr_lemma1(p, at, corr, mask, draws=1000)


def test_unknown_combiner():
    with pytest.raises(ConfigurationError):
        build_combiner(ChannelEstimate(np.ones((1, 1, 4, 1), dtype=complex), ()), "mmse")


# --- SINR estimator ---------------------------------------------------------

def _single_ue(M, snr, combiner):
    at = _atten([[1.0]], [[1.0]])
    p = SystemParams(M=M, N=1, K=1, T=1000, omega=1, snr=snr, combiner=combiner)
    return p, at, jakes_matrix(1, 60.0, 60.0), [True]


def test_perfect_csi_zf_single_ue():
    # with g = h / ||h||^2 the worst-case SINR is snr / E[1/||h||^2] = snr (M - 1)
    p, at, corr, mask = _single_ue(512, 10.0, "zf")
    prof = sinr_lemma1(p, at, corr, mask, draws=20_000, perfect_csi=True)
    sinr = 1.0 / prof.inv_sinr[0, 0]
    assert sinr == pytest.approx(10.0 * 511, rel=0.01)
    assert sinr == pytest.approx(5120.0, rel=0.01)


def test_perfect_csi_mr_single_ue():
    # E|h^H h|^2 = M^2 + M, so the gain-uncertainty term adds M to the noise M / snr
    p, at, corr, mask = _single_ue(512, 10.0, "mr")
    prof = sinr_lemma1(p, at, corr, mask, draws=20_000, perfect_csi=True)
    exact = 512 / (1 + 1 / 10.0)
    assert 1.0 / prof.inv_sinr[0, 0] == pytest.approx(exact, rel=0.01)
    assert abs(prof.inv_sinr[0, 0] - 1 / exact) < 3 * prof.stderr[0, 0] + 1e-12


def test_noisy_single_ue_mr_matches_closed_form():
    p, at, corr, mask = _single_ue(256, 10.0, "mr")
    mc = sinr_lemma1(p, at, corr, mask, draws=5000)
    cf = inv_sinr_fixed(p, np.ones((1, 1)), corr, mask)
    assert mc.inv_sinr[0, 0] == pytest.approx(cf.inv_sinr[0, 0], rel=0.03)


def test_too_few_draws():
    p, at, corr, mask = _single_ue(16, 10.0, "mr")
    with pytest.raises(ConfigurationError, match="1000"):
        sinr_lemma1(p, at, corr, mask, draws=999)


def test_stderr_shrinks_by_sqrt2_squared():
    p, at, corr, mask = _table_point(M=32, K=2, N=2, combiner="mr")
    a = sinr_lemma1(p, at, corr, mask, draws=1000, seed=3)
    b = sinr_lemma1(p, at, corr, mask, draws=4000, seed=3)
    ratio = np.median(a.stderr / b.stderr)
    assert ratio == pytest.approx(2.0, rel=0.25)


def test_workers_do_not_change_results():
    p, at, corr, mask = _table_point(M=32, K=2, N=2, combiner="mr")
    a = sinr_lemma1(p, at, corr, mask, draws=1000, seed=9, workers=1)
    b = sinr_lemma1(p, at, corr, mask, draws=1000, seed=9, workers=3)
    assert np.array_equal(a.inv_sinr, b.inv_sinr)
    assert np.array_equal(a.stderr, b.stderr)


def test_multiple_combiners_share_draws():
    p, at, corr, mask = _table_point(M=64, K=3, N=2, combiner="mr")
    both = sinr_lemma1(p, at, corr, mask, draws=1000, seed=2, combiners=("mr", "zf"))
    alone = sinr_lemma1(p, at, corr, mask, draws=1000, seed=2)
    assert np.array_equal(both["mr"].inv_sinr, alone.inv_sinr)
    assert both["zf"].provenance == "monte-carlo" and both["zf"].draws == 1000


def _random_scenarios(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        omega = int(rng.choice([1, 3]))
        K = int(rng.integers(2, 8))
        N = int(rng.choice([1, 2, 4]))
        M = int(rng.choice([64, 128, 192]))
        snr = 10 ** (rng.uniform(0.0, 2.0))
        D = float(rng.choice([100.0, 1000.0]))
        yield _table_point(omega=omega, K=K, N=N, M=M, D=D, snr=snr)


@pytest.mark.parametrize("case", list(range(10)))
def test_mr_closed_form_tracks_simulation(case):
    p, at, corr, mask = list(_random_scenarios(10, 2024))[case]
    p = p.with_(combiner="mr")
    # 4000 draws keep the standard error near 1%, well inside the 5% band
    mc = sinr_lemma1(p, at, corr, mask, draws=4000, seed=case)
    # the closed form carries the first row's correlation energy; inner antennas of a
    # tightly packed array see more, so compare every antenna against its own row
    for n in range(p.N):
        energy = float(np.sum(corr.R_t[n] ** 2) - 1.0)
        cf = inv_sinr_mr_fixed(p, at.mu, energy, mask)
        assert np.allclose(mc.inv_sinr[:, n], cf.inv_sinr[:, n], rtol=0.05)
    edge = inv_sinr_fixed(p, at.mu, corr, mask)
    assert np.allclose(mc.inv_sinr[:, 0], edge.inv_sinr[:, 0], rtol=0.05)


def test_mr_inner_antennas_exceed_first_row_energy():
    p, at, corr, mask = _table_point(omega=1, K=4, N=4, M=128, D=100.0, snr=35.0, combiner="mr")
    mc = sinr_lemma1(p, at, corr, mask, draws=1000)
    cf = inv_sinr_fixed(p, at.mu, corr, mask)
    assert np.all(mc.inv_sinr[:, 1:3] > 1.1 * cf.inv_sinr[:, 1:3])


@pytest.mark.parametrize("case", list(range(10)))
def test_zf_closed_form_is_near_conservative(case):
    # the ZF closed form keeps the full own-signal term in its gain factor, so it
    # mostly overstates 1/SINR; compare at the Eq-13 rate level
    p, at, corr, mask = list(_random_scenarios(10, 2025))[case]
    mc = sinr_lemma1(p, at, corr, mask, draws=1000, seed=case)
    cf = inv_sinr_fixed(p, at.mu, corr, mask)
    sim = se_from_sigma(mc.sigma_sq, p.N, p.time_fraction).sum_rate
    bound = se_from_sigma(cf.sigma_sq, p.N, p.time_fraction).sum_rate
    assert sim >= 0.97 * bound
    assert sim <= 1.2 * bound


def test_zf_single_cell_gap_is_own_signal_term():
    # one UE, no contamination, estimate noise variance s = 1/(omega K snr): with
    # h = h_hat/(1+s) + e the exact value is (s + (1+s)/snr)/(M-1), while the
    # closed form keeps the own-signal term and gives (1 + 1/snr)/(M-1)
    p, at, corr, mask = _single_ue(128, 10.0, "zf")
    mc = sinr_lemma1(p, at, corr, mask, draws=4000)
    cf = inv_sinr_fixed(p, np.ones((1, 1)), corr, mask)
    s = 0.1
    assert cf.inv_sinr[0, 0] == pytest.approx(1.1 / 127, rel=1e-12)
    assert mc.inv_sinr[0, 0] == pytest.approx((s + (1 + s) / 10.0) / 127, rel=0.03)


# --- mutual information -----------------------------------------------------

@pytest.mark.parametrize("sinr", [0.5, 3.0, 40.0])
def test_mi_single_antenna_is_shannon(sinr):
    p = SystemParams(N=1, K=1, T=1000, omega=1)
    prof = SinrProfile(np.array([[1.0 / sinr]]), "test")
    est = mutual_information(p, prof, samples=200_000, seed=1)
    assert est.value[0] == pytest.approx(p.time_fraction * math.log2(1 + sinr), rel=0.01)


def test_mi_vanishes_at_low_sinr():
    p = SystemParams(N=4, K=1, T=1000, omega=1)
    prof = SinrProfile(np.full((1, 4), 1e6), "test")
    est = mutual_information(p, prof, samples=50_000)
    assert abs(est.value[0]) < 3 * est.stderr[0] + 1e-3


@pytest.mark.parametrize("N", [2, 4, 8])
@pytest.mark.parametrize("seed", [0, 1])
def test_mi_exceeds_lower_bound(N, seed):
    rng = np.random.default_rng(100 * N + seed)
    inv = 10 ** rng.uniform(-2.5, 0.5, (3, N))
    p = SystemParams(N=N, K=3, T=1000, omega=1)
    est = mutual_information(p, SinrProfile(inv, "test"), samples=60_000, seed=seed)
    bound = se_from_sigma(inv.mean(axis=1), N, p.time_fraction).rate
    assert np.all(est.value >= bound - 3 * est.stderr)


def test_mi_depends_only_on_profile():
    p = SystemParams(N=2, K=2, T=1000, omega=1)
    prof = SinrProfile(np.array([[0.1, 0.2], [0.1, 0.2]]), "test")
    est = mutual_information(p, prof, samples=20_000, seed=5)
    again = mutual_information(p, prof, samples=20_000, seed=5)
    assert np.array_equal(est.value, again.value)


# --- detection oracle -------------------------------------------------------

def test_detection_noise_free():
    assert detection_pc_oracle(4, 1e-12, trials=20_000).value == 1.0


@pytest.mark.parametrize("N, s2", [(2, 2.0), (4, 0.5), (16, 16.0)])
def test_detection_oracle_matches_closed_form(N, s2):
    est = detection_pc_oracle(N, s2, trials=1_000_000, seed=N)
    assert abs(est.value - detection_probability(N, s2)) < 3 * est.stderr


def test_detection_two_antennas_two_thirds():
    est = detection_pc_oracle(2, 2.0, trials=1_000_000, seed=42)
    assert est.value == pytest.approx(2 / 3, abs=3 * est.stderr)
