# %% [markdown]
# # How many UE antennas?
#
# More antennas add `log2 N` index bits per channel use, but they lengthen the
# pilot phase (`B = omega N K` symbols) and bring correlation between closely
# spaced elements. The rate-optimal count N* balances these effects. This
# notebook reproduces the main trends with the averaged bound for uniformly
# placed UEs and a 1 m device.

# %%
from smmimo.bounds import SystemParams
from smmimo.sweep import MomentCache, Scenario, SweepGrid, evaluate_grid, parse_values

scenario = Scenario(device_size=1000.0)
moments = MomentCache().get(scenario)     # interference moments, reused by every point
print("moment fingerprint:", moments.fingerprint)


def n_star_runs(axis, values, **fixed):
    grid = SweepGrid(axis, values, SystemParams(**fixed), combiners=("zf",))
    stars = evaluate_grid(grid, scenario, moments).n_star_map("zf")
    runs, prev = [], None
    for v in values:
        if stars[v] != prev:
            runs.append((v, stars[v]))
            prev = stars[v]
    return runs

# %% [markdown]
# ## Along M
#
# Each pair is (first M of a run, N* along that run).

# %%
for omega in (1, 3):
    print(f"reuse {omega}:", n_star_runs("M", parse_values("20..1000:20"), omega=omega))

# %% [markdown]
# ## Along K and T
#
# Pilot overhead grows with `omega N K`, so crowded cells push N* down while
# long coherence blocks push it up. N* = 0 marks points where no antenna
# count fits the pilots into the coherence block.

# %%
for omega in (1, 3):
    print(f"K axis, reuse {omega}:", n_star_runs("K", tuple(range(1, 51)), omega=omega))
print("T axis, reuse 3:", n_star_runs("T", parse_values("10..2000:10"), omega=3))

# %% [markdown]
# ## Along the device size
#
# With the elements spread over the whole device, the correlation energy
# follows the ripples of J0 and N* oscillates. Optimising the spacing
# removes the ripples, so N* grows steadily with the device.

# %%
sizes = (15.0, 60.0, 65.0, 110.0, 120.0, 200.0, 1000.0)
for policy in ("max", "optimized"):
    sc = Scenario(device_size=1000.0, spacing=policy)
    grid = SweepGrid("D_m", sizes, SystemParams(), combiners=("zf",))
    stars = evaluate_grid(grid, sc, moments).n_star_map("zf")
    print(f"{policy:9s}", dict(zip(sizes, (stars[d] for d in sizes))))
