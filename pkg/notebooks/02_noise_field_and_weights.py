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
# # The virtual noise field and path weights
#
# The noise is never stored. Cell (j, k) of the space-time lattice gets its
# Gaussian from a hash of (seed, j, k), so every path in an ensemble sees the
# same realization no matter when or on which thread it is evaluated.

# %%
import numpy as np

from polylab.analysis import default_bound
from polylab.kernels import make_mollifier
from polylab.noise import VirtualNoiseField, gaussian_at, pair_with_kernel
from polylab.polymer import hamiltonian_terms, run_batch, sample_path

spec = make_mollifier(1.0, 3)
field = VirtualNoiseField(master_seed=11, dt=0.05, h=0.25)
print(gaussian_at(field, 3, (1, -2, 0)), gaussian_at(field, 3, (1, -2, 0)))

# %%
pr = pair_with_kernel(field, spec, np.array([0.1, 0.0, -0.3]), j=0)
print(len(pr.cells), "cells in the support ball; pairing", pr.value, "local v0", pr.local_v0)

# %% [markdown]
# A path's log-weight is beta times the sum of these pairings along the path,
# minus beta^2/2 times the matching sum of dt * local_v0. Because the
# compensator is the exact conditional variance, E[e^H] = 1 for any frozen
# path. Check it over many independent fields.

# %%
beta = 0.25 * default_bound().beta_lower_bound
n = 5000
b = run_batch(field, spec, np.zeros(n, dtype=np.int64), [2.0], noise_seeds=np.arange(n))
w = np.exp(b.log_weights(beta))
print(f"mean e^H = {w.mean():.4f} +- {w.std() / np.sqrt(n):.4f}")
print(f"var H = {b.log_weights(beta).var():.4f} vs {beta**2 * b.compensator[0, 0]:.4f}")

# %%
# the compiled route and a slow cell-by-cell route agree
path = sample_path(3, T=1.0)
print(hamiltonian_terms(path, field, spec))
print(run_batch(field, spec, [3], [1.0]).noise[0, 0], run_batch(field, spec, [3], [1.0]).compensator[0, 0])
