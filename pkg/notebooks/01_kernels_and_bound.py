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
# # Mollifier, covariance and the L2 lower bound
#
# The environment is white noise smoothed in space by a bump function phi of
# radius K. Everything downstream only sees V = phi * phi and its value at the
# origin, so we start by building both and checking them against plain
# Monte Carlo.

# %%
import numpy as np

from polylab.analysis import bound_report, khasminskii_bound, occupation_oracle_mc
from polylab.kernels import covariance_build, discrete_v0, make_mollifier, mollifier_mass, phi, v_at

spec = make_mollifier(K=1.0, d=3)
table = covariance_build(spec, n_radii=512)
print("norm const", spec.norm_const, " mass", mollifier_mass(spec))
print("V(0)", table.v0)

# %% [markdown]
# V(r) by Monte Carlo: draw U uniform in the unit ball, average
# phi(U) phi(U - r e1) and multiply by the ball volume.

# %%
rng = np.random.default_rng(0)
u = rng.standard_normal((200_000, 3))
u *= (rng.random(len(u)) ** (1 / 3) / np.linalg.norm(u, axis=1))[:, None]
vol = 4 / 3 * np.pi
for r in (0.0, 0.5, 1.0, 1.5):
    f = phi(spec, u) * phi(spec, u - [r, 0, 0]) * vol
    print(f"r={r:.1f}  table {v_at(table, r):.6f}  mc {f.mean():.6f} +- {f.std() / np.sqrt(len(f)):.6f}")

# %% [markdown]
# On the noise lattice the renormalization uses the discrete norm
# sum phi(y_k)^2 h^d rather than V(0). It converges fast (the integrand is
# smooth and compactly supported), so h = K/4 is already well below 0.2%.

# %%
for h in (0.5, 0.25, 0.125):
    dn = discrete_v0(spec, h)
    print(f"h={h:<6} v0_h={dn.v0_h:.7f}  rel err {abs(dn.v0_h / table.v0 - 1):.1e}")

# %% [markdown]
# ## Green potential and the Khas'minskii bound
#
# g = int G(0, y) V(sqrt(2) y) dy for 1/2 Laplacian. beta_* = g^{-1/2} is a
# lower bound for the L2 critical point; every experiment below quotes beta as
# a fraction of it.

# %%
rep = bound_report(table)
print("g", rep.green_integral, " beta_lower_bound", rep.beta_lower_bound)
for frac, m in [(0.25, 1), (0.25, 8), (0.5, 1), (1.0, 1)]:
    e = khasminskii_bound(rep.green_integral, frac * rep.beta_lower_bound, m)
    print(f"beta={frac} * bound, m={m}: eta={e.eta:.3f} bound={e.bound}")

# %%
# independent check of g: expected total time sqrt(2) W spends weighted by V
occ = occupation_oracle_mc(table, n_paths=5000, seed=1)
print(f"occupation MC {occ.estimate:.5f} +- {occ.std_err:.5f} (tail <= {occ.tail_bound:.1e})")
