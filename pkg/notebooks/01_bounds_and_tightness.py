# %% [markdown]
# # Closed-form bounds against Monte Carlo
#
# The uplink of a 19-cell network with pilot reuse: every UE carries N
# antennas and activates one per channel use, so the antenna index carries
# `log2 N` extra bits. This notebook evaluates the large-M rate bound at the
# baseline operating point and compares it with a direct simulation of the
# worst-case-noise SINR fed through a mutual-information estimator.
#
# Run it cell by cell in an editor that understands `# %%` markers, or as a
# plain script: `python notebooks/01_bounds_and_tightness.py`.

# %%
import numpy as np

from smmimo.bounds import SystemParams, inv_sinr_fixed, se_from_sigma
from smmimo.correlation import jakes_matrix, max_spacing
from smmimo.geometry import attenuation, build_layout, place_ues
from smmimo.montecarlo import mutual_information, sinr_lemma1

# %% [markdown]
# ## Baseline scenario
#
# UEs sit on a 275 m ring around each base station; `mu[j, k]` is the gain of
# UE k in cell j towards BS 0 relative to UE k of cell 0.

# %%
layout = build_layout(cell_radius=500.0, reuse_factor=3)
placement = place_ues(layout, K=10, mode="fixed-ring", ring_radius=275.0)
atten = attenuation(layout, placement, alpha=3.7, min_distance=50.0)
corr = jakes_matrix(2, max_spacing(2, 100.0), 60.0)

print("cells sharing cell 0's pilots:", layout.pilot_sharing)
print("correlation energy eps_s = %.4f" % corr.eps_s)
print("largest interfering mu:", atten.mu[1:].max().round(4))

# %% [markdown]
# ## Closed forms
#
# The per-UE reciprocal SINR feeds the rate bound `log2(1 + N/s2) + log2 N`
# plus a detection penalty, scaled by the pilot overhead `(T - B)/T`.

# %%
for comb in ("mr", "zf"):
    p = SystemParams(combiner=comb)
    sinr = inv_sinr_fixed(p, atten.mu, corr, layout.pilot_mask)
    res = se_from_sigma(sinr.sigma_sq, p.N, p.time_fraction)
    print(f"{comb}: mean 1/SINR {sinr.sigma_sq.mean():.5f}, P_c {res.p_c.mean():.4f}, "
          f"sum rate {res.sum_rate:.2f} bit/s/Hz")

# %% [markdown]
# ## Simulation
#
# A small budget keeps this quick; the acceptance suite uses 10 000 channel
# draws and 100 000 mutual-information samples.

# %%
draws, samples = 2000, 20_000
for M in (128, 512):
    p = SystemParams(M=M)
    sims = sinr_lemma1(p, atten, corr, layout.pilot_mask, draws=draws, combiners=("mr", "zf"))
    for comb in ("mr", "zf"):
        pc = p.with_(combiner=comb)
        bound = se_from_sigma(inv_sinr_fixed(pc, atten.mu, corr, layout.pilot_mask).sigma_sq,
                              pc.N, pc.time_fraction).sum_rate
        mi = mutual_information(pc, sims[comb], samples=samples)
        sim = mi.value.sum()
        print(f"M={M:4d} {comb}: bound {bound:6.2f}  simulated {sim:6.2f} "
              f"(+/- {np.sqrt(np.sum(mi.stderr ** 2)):.2f})  gap {100 * (sim - bound) / bound:+.1f}%")

# %% [markdown]
# MR lands within a few percent of its bound. ZF is further off because its
# closed form keeps the full own-signal term in the noise-enhancement
# factor, which a real ZF combiner removes. The bound stays below the
# simulation either way.
