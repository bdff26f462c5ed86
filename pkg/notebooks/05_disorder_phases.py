# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Annealed moments and the two disorder regimes
#
# The annealed second moment of M_T has two routes: average over fields of
# the noise side, or the pair-path functional E exp(beta^2 int V(W - W')).
# Collisions of two independent paths get rarer like T^{-3/2}, which keeps
# the second moment bounded at small beta.

# %%
import numpy as np

from polylab.analysis import (annealed_batch, annealed_partition_mean, collision_probability, combined_z,
                              default_bound, loglog_slope, noise_side_second_moment, pair_second_moment_mc)
from polylab.kernels import covariance_build, make_mollifier
from polylab.noise import VirtualNoiseField
from polylab.polymer import partition_from_log_weights, run_batch, seed_range

spec = make_mollifier(1.0, 3)
table = covariance_build(spec)
bound = default_bound().beta_lower_bound
beta = 0.3 * bound

# %%
b = annealed_batch(VirtualNoiseField(0), spec, [2.0], np.arange(50), 50)
print("E M_T", annealed_partition_mean(b, beta, 50))
ns = noise_side_second_moment(b, beta, 50)
pp = pair_second_moment_mc(table, beta, 2.0, 0.05, 50_000)
print("E M_T^2 noise side", ns, " pair paths", pp, " z", combined_z(ns, pp))

# %%
Ts = [2.0, 4.0, 8.0, 16.0]
est = [collision_probability(1.0, 3, T, 0.05, 20_000) for T in Ts]
print([round(e.estimate, 4) for e in est])
print("slope", loglog_slope(Ts, [e.estimate for e in est], [e.std_err for e in est]))

# %% [markdown]
# ## Strong disorder
#
# At beta far above the bound, log M_T / T is clearly negative for almost
# every field; at small beta it hovers near zero.

# %%
ps = seed_range(0, 300)
for frac in (0.25, 5.0):
    vals = []
    for s in range(8):
        bb = run_batch(VirtualNoiseField(s), spec, ps, [4.0])
        vals.append(partition_from_log_weights(bb.log_weights(frac * bound)).log_m_hat / 4.0)
    print(f"beta={frac} * bound: median log M/T = {np.median(vals):.4f}")
