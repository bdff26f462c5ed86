"""Mollifier, its self-convolution V = phi * phi, and lattice versions of V(0).

The mollifier is the standard smooth bump ``exp(-1/(1 - |x/K|^2))`` on the open
ball of radius ``K``, scaled to unit mass. Everything radial is integrated in
reduced coordinates (radius, or axial/transverse) with Gauss-Legendre product
rules refined by doubling until two successive levels agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

QUAD_TOL = 1e-6
MAX_DOUBLINGS = 7


class QuadratureError(RuntimeError):
    pass


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1} in R^d (2 for d = 1)."""
    return 2.0 * pi ** (d / 2) / gamma(d / 2)


def bump(s):
    """Unnormalized profile as a function of s = |x|^2 / K^2; exact zero for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


def _gl(n, lo, hi):
    # Gauss-Legendre nodes/weights mapped to [lo, hi]; lo, hi may be arrays
    x, w = np.polynomial.legendre.leggauss(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _refine(rule, n0, tol=QUAD_TOL):
    n = n0
    prev = rule(n)
    for _ in range(MAX_DOUBLINGS):
        n *= 2
        cur = rule(n)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur, n
        prev = cur
    raise QuadratureError(
        f"quadrature did not stabilise to {tol:g} after {MAX_DOUBLINGS} doublings (n={n})"
    )


def radial_integral(profile, K: float, d: int, n: int) -> float:
    """sphere_area(d) * int_0^K profile(r^2) r^{d-1} dr with an n-point rule."""
    r, w = _gl(n, 0.0, K)
    return float(sphere_area(d) * np.sum(w * profile(r**2) * r ** (d - 1)))


@dataclass(frozen=True)
class MollifierSpec:
    K: float
    d: int
    norm_const: float
    quad_points_per_axis: int = 32

    def __call__(self, x):
        return phi(self, x)


def make_mollifier(K: float = 1.0, d: int = 3, quad_points_per_axis: int = 32) -> MollifierSpec:
    if not K > 0:
        raise ValueError(f"support radius K must be positive, got {K}")
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    if quad_points_per_axis < 16:
        raise ValueError("quad_points_per_axis must be >= 16")
    mass, _ = _refine(
        lambda n: np.array(radial_integral(lambda r2: bump(r2 / K**2), K, d, n)),
        quad_points_per_axis,
        tol=QUAD_TOL * 1e-2,
    )
    return MollifierSpec(K=float(K), d=int(d), norm_const=1.0 / float(mass),
                         quad_points_per_axis=int(quad_points_per_axis))


def phi(spec: MollifierSpec, x):
    """Normalized bump at ``x`` (trailing axis of length d). Zero for |x| >= K."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"expected points with trailing dimension {spec.d}, got shape {x.shape}")
    s = np.sum(x * x, axis=-1) / spec.K**2
    out = spec.norm_const * bump(s)
    return float(out) if out.ndim == 0 else out


def mollifier_mass(spec: MollifierSpec, n: int | None = None) -> float:
    n = n or 4 * spec.quad_points_per_axis
    return spec.norm_const * radial_integral(lambda r2: bump(r2 / spec.K**2), spec.K, spec.d, n)


@dataclass(frozen=True)
class CovarianceTable:
    radii: np.ndarray
    values: np.ndarray
    v0: float
    dim: int
    K: float
    quad_points: int = field(default=0, compare=False)

    def __call__(self, r):
        return v_at(self, r)


def _conv_at(spec: MollifierSpec, r: np.ndarray, n: int) -> np.ndarray:
    """V(r) for an array of radii, n-point rule per reduced axis."""
    K, d, c = spec.K, spec.d, spec.norm_const
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    live = r < 2 * K
    if not live.any():
        return out
    rl = r[live]
    # axial coordinate a: intersection of [-K, K] and [r-K, r+K]
    a, wa = _gl(n, rl - K, np.full_like(rl, K))
    if d == 1:
        vals = bump(a**2 / K**2) * bump((a - rl[:, None]) ** 2 / K**2)
        out[live] = c * c * np.sum(wa * vals, axis=-1)
        return out
    m = np.maximum(a**2, (a - rl[:, None]) ** 2)
    rho_max = np.sqrt(np.clip(K**2 - m, 0.0, None))
    rho, wr = _gl(n, np.zeros_like(rho_max), rho_max)
    rho2 = rho**2
    f = bump((a[..., None] ** 2 + rho2) / K**2) * bump(((a - rl[:, None])[..., None] ** 2 + rho2) / K**2)
    transverse = sphere_area(d - 1) * np.sum(wr * f * rho ** (d - 2), axis=-1)
    out[live] = c * c * np.sum(wa * transverse, axis=-1)
    return out


def covariance_build(spec: MollifierSpec, n_radii: int = 512) -> CovarianceTable:
    if n_radii < 32:
        raise ValueError("n_radii must be >= 32")
    radii = np.linspace(0.0, 2.0 * spec.K, n_radii)

    def rule(n):
        # chunk over radii to bound memory at high orders
        return np.concatenate([_conv_at(spec, chunk, n) for chunk in np.array_split(radii, max(1, n_radii // 64))])

    values, n = _refine(rule, spec.quad_points_per_axis)
    values[-1] = 0.0
    return CovarianceTable(radii=radii, values=values, v0=float(values[0]), dim=spec.d,
                           K=spec.K, quad_points=n)


def zero_table(like: CovarianceTable) -> CovarianceTable:
    return CovarianceTable(radii=like.radii.copy(), values=np.zeros_like(like.values), v0=0.0,
                           dim=like.dim, K=like.K)


def v_at(table: CovarianceTable, r):
    """Linear interpolation of the tabulated covariance; exact 0 for r >= 2K."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    out = np.interp(r, table.radii, table.values, right=0.0)
    out = np.where(r >= 2.0 * table.K, 0.0, out)
    return float(out) if out.ndim == 0 else out


def is_radially_nonincreasing(table: CovarianceTable, slack: float = 1e-12) -> bool:
    return bool(np.all(np.diff(table.values) <= slack))


@dataclass(frozen=True)
class DiscreteNorm:
    h: float
    v0_h: float
    offset: tuple


def lattice_in_ball(K: float, h: float, offset, center) -> np.ndarray:
    """Integer indices k with |offset + h k - center| < K, in lexicographic order."""
    offset = np.asarray(offset, dtype=float)
    center = np.asarray(center, dtype=float)
    lo = np.ceil((center - K - offset) / h).astype(np.int64)
    hi = np.floor((center + K - offset) / h).astype(np.int64)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    y = offset + h * grid - center
    return grid[np.sum(y * y, axis=-1) < K * K]


def discrete_v0(spec: MollifierSpec, h: float, offset=None, scale: float = 1.0) -> DiscreteNorm:
    """Lattice sum of (scale*phi)^2 h^d over the support ball centred at the origin."""
    if not 0 < h <= spec.K / 2 or 2 * spec.K / h < 3:
        raise ValueError(f"lattice spacing h={h} too coarse for support radius K={spec.K} (need 0 < h <= K/2)")
    offset = np.zeros(spec.d) if offset is None else np.asarray(offset, dtype=float)
    k = lattice_in_ball(spec.K, h, offset, np.zeros(spec.d))
    vals = scale * phi(spec, offset + h * k)
    return DiscreteNorm(h=float(h), v0_h=float(np.sum(vals**2) * h**spec.d), offset=tuple(offset.tolist()))
