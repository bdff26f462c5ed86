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
# # Space-time Hermite polynomials
#
# I_n(T, x) is the mixed derivative of exp(<lam, x> - |lam|^2 T / 2) at
# lam = 0. The coefficients are exact integers, so the structural facts can be
# checked exactly rather than to a tolerance.

# %%
from fractions import Fraction

import numpy as np

from polylab.hermite import (expected_in_under_gaussian, hermite_coeffs, i_n, i_n_hermite, y_n_decay_curve)
from polylab.kernels import make_mollifier
from polylab.noise import VirtualNoiseField
from polylab.analysis import default_bound
from polylab.polymer import seed_range

c = hermite_coeffs((2, 0, 1))
for i, j, a in c.rows():
    print(i, "T^%d" % j, a)

# %%
for n in [(1, 0, 0), (2, 1, 0), (2, 2, 2)]:
    print(n, expected_in_under_gaussian(hermite_coeffs(n), Fraction(5, 2)))

# %%
x = np.array([0.3, -1.2, 2.0])
print(i_n(hermite_coeffs((3, 1, 2)), 2.5, x), i_n_hermite((3, 1, 2), 2.5, x))

# %% [markdown]
# ## Y_n along one field
#
# Y_n(T) = E_0[e^H I_n(T, W_T)] is a noise-side martingale. Scaled by
# T^{-|n|/2} it should shrink as T grows in weak disorder.

# %%
spec = make_mollifier(1.0, 3)
beta = 0.25 * default_bound().beta_lower_bound
curve = y_n_decay_curve(VirtualNoiseField(0), spec, beta, 0.05, seed_range(0, 1000), (1, 0, 0), [1.0, 2.0, 4.0])
for T, v, se in curve:
    print(f"T={T:4.1f}  T^-1/2 Y = {v:+.4f} +- {se:.4f}")
