"""Deterministic bounds and Monte Carlo oracles around the L^2 region.

The Green potential g = int G(0, y) V(sqrt(2) y) dy of 1/2 Laplacian gives the
Khas'minskii-type lower bound beta_* = g^{-1/2}: for m beta^2 g < 1 the
exponential occupation moment is at most 1 / (1 - m beta^2 g).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma, pi
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .hermite import as_multi_index, hermite_coeffs, i_n_batch
from .kernels import CovarianceTable, MollifierSpec, covariance_build, make_mollifier, sphere_area, v_at
from .noise import VirtualNoiseField
from .polymer import DEFAULT_CHUNK, PathBatch, n_steps_for, run_batch


class Estimate(NamedTuple):
    estimate: float
    std_err: float


def combined_z(a: Estimate, b: Estimate) -> float:
    """|a - b| in units of the combined standard error."""
    return abs(a.estimate - b.estimate) / float(np.hypot(a.std_err, b.std_err))


def _mean_se(x: np.ndarray) -> Estimate:
    x = np.asarray(x, dtype=float)
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return Estimate(float(np.mean(x)), se)


def _require_transient(d: int):
    if d < 3:
        raise ValueError(f"Green potential of 1/2 Laplacian needs d >= 3, got d={d}")


@dataclass(frozen=True)
class GreenQuadrature:
    d: int
    green_const: float
    n_radii: int = 0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.green_const * r ** (2 - self.d)


def green_function(d: int, n_radii: int = 0) -> GreenQuadrature:
    """G(r) = Gamma(d/2 - 1) / (2 pi^{d/2}) r^{2-d}, the 0-potential density of 1/2 Laplacian."""
    _require_transient(d)
    return GreenQuadrature(d=d, green_const=gamma(d / 2 - 1) / (2 * pi ** (d / 2)), n_radii=n_radii)


def green_potential_integral(table: CovarianceTable, d: int | None = None, rtol: float = 1e-6) -> float:
    d = table.dim if d is None else d
    G = green_function(d, len(table.radii))
    if not np.any(table.values):
        return 0.0
    # r^{2-d} * r^{d-1} = r: the Green singularity is integrable and cancels
    r_max = 2.0 * table.K / np.sqrt(2.0)
    nodes = table.radii[(table.radii > 0) & (table.radii < 2 * table.K)] / np.sqrt(2.0)
    val, _ = integrate.quad(lambda r: r * v_at(table, np.sqrt(2.0) * r), 0.0, r_max,
                            points=nodes, limit=4 * len(nodes) + 50, epsabs=0.0, epsrel=rtol)
    return float(sphere_area(d) * G.green_const * val)


@dataclass(frozen=True)
class KhasminskiiEntry:
    beta: float
    multiplier: float
    eta: float
    bound: float | None

    @property
    def finite(self) -> bool:
        return self.bound is not None

    @property
    def ratio_form(self) -> float | None:
        """eta / (1 - eta), the other expression in circulation. Flagged, not used:
        it drops below 1 for eta < 1/2, while the exponential moment is always >= 1."""
        return self.eta / (1.0 - self.eta) if self.eta < 1 else None


def khasminskii_bound(g: float, beta: float, m: float = 1.0) -> KhasminskiiEntry:
    """eta = m beta^2 g; geometric-series bound 1/(1 - eta) when eta < 1, else flagged (bound=None)."""
    if m < 1:
        raise ValueError("multiplier must be >= 1")
    eta = m * beta * beta * g
    return KhasminskiiEntry(beta=float(beta), multiplier=float(m), eta=float(eta),
                            bound=1.0 / (1.0 - eta) if eta < 1 else None)


@dataclass(frozen=True)
class BoundReport:
    green_integral: float
    d: int
    K: float
    v0: float

    @property
    def beta_lower_bound(self) -> float:
        return self.green_integral ** -0.5

    def eta(self, beta: float, m: float = 1.0) -> float:
        return khasminskii_bound(self.green_integral, beta, m).eta

    def l2_bound(self, beta: float, m: float = 1.0) -> float | None:
        return khasminskii_bound(self.green_integral, beta, m).bound

    def as_dict(self, fractions=(0.25, 0.5), multipliers=(1, 8)) -> dict:
        rows = []
        for f in fractions:
            for m in multipliers:
                e = khasminskii_bound(self.green_integral, f * self.beta_lower_bound, m)
                rows.append({"beta_frac": f, "beta": e.beta, "multiplier": m, "eta": e.eta,
                             "l2_bound": e.bound, "finite": e.finite,
                             "ratio_form_flagged": e.ratio_form,
                             "ratio_form_below_one": e.ratio_form is not None and e.ratio_form < 1})
        return {"d": self.d, "K": self.K, "V0": self.v0, "g": self.green_integral,
                "beta_lower_bound": self.beta_lower_bound, "entries": rows}


def bound_report(table: CovarianceTable) -> BoundReport:
    return BoundReport(green_integral=green_potential_integral(table), d=table.dim, K=table.K, v0=table.v0)


_BOUND_CACHE: dict = {}


def default_bound(K: float = 1.0, d: int = 3, n_radii: int = 512) -> BoundReport:
    key = (float(K), int(d), int(n_radii))
    if key not in _BOUND_CACHE:
        _BOUND_CACHE[key] = bound_report(covariance_build(make_mollifier(K, d), n_radii))
    return _BOUND_CACHE[key]


@dataclass(frozen=True)
class OccupationEstimate:
    estimate: float
    std_err: float
    tail_bound: float
    alive_fraction: float
    n_paths: int


def occupation_oracle_mc(table: CovarianceTable, d: int | None = None, n_paths: int = 20000, dt: float = 0.01,
                         T_max: float = 400.0, seed: int = 0, r_out_factor: float = 4.0) -> OccupationEstimate:
    """E_0[int_0^inf V(sqrt(2) W_s) ds] by simulating W with trapezoidal accumulation.

    V(sqrt(2) .) vanishes outside the ball of radius a = sqrt(2) K. A path that
    reaches radius R = r_out_factor * a returns to the ball with probability
    (a/|W|)^{d-2}; by radial symmetry it is then restarted on the sphere |x| = a,
    otherwise it is retired. Paths still running at T_max contribute at most
    V(0) a^2 / (d - 2) each (the sup of the ball's Green potential), reported as
    ``tail_bound``.
    """
    d = table.dim if d is None else d
    _require_transient(d)
    a = np.sqrt(2.0) * table.K
    r_out = r_out_factor * a
    rng = np.random.default_rng(seed)
    n_steps = int(np.ceil(T_max / dt))
    occ = np.zeros(n_paths)
    pos = np.zeros((n_paths, d))
    idx = np.arange(n_paths)
    f_prev = np.full(n_paths, v_at(table, 0.0))
    if not np.any(table.values):
        return OccupationEstimate(0.0, 0.0, 0.0, 0.0, n_paths)
    sq = np.sqrt(dt)
    for _ in range(n_steps):
        if idx.size == 0:
            break
        pos += sq * rng.standard_normal(pos.shape)
        r = np.sqrt(np.sum(pos * pos, axis=1))
        f = v_at(table, np.sqrt(2.0) * r)
        occ[idx] += 0.5 * dt * (f_prev + f)
        f_prev = f
        out = r >= r_out
        if out.any():
            back = rng.random(int(out.sum())) < (a / r[out]) ** (d - 2)
            leave = np.flatnonzero(out)[~back]
            stay = np.flatnonzero(out)[back]
            pos[stay] *= (a / r[stay])[:, None]
            f_prev[stay] = v_at(table, np.sqrt(2.0) * a)
            keep = np.ones(idx.size, dtype=bool)
            keep[leave] = False
            idx, pos, f_prev = idx[keep], pos[keep], f_prev[keep]
    alive = idx.size / n_paths
    tail = alive * table.v0 * a * a / (d - 2)
    est = _mean_se(occ)
    if est.estimate > 0 and tail > 0.01 * est.estimate:
        raise RuntimeError(f"tail bound {tail:.3g} exceeds 1% of the estimate; increase T_max")
    return OccupationEstimate(est.estimate, est.std_err, float(tail), float(alive), n_paths)


def _pair_rng_chunks(n_pairs: int, seed: int, chunk: int):
    children = np.random.SeedSequence(seed).spawn((n_pairs + chunk - 1) // chunk)
    for i, ss in enumerate(children):
        yield np.random.default_rng(ss), min(chunk, n_pairs - i * chunk)


def pair_exponents(table: CovarianceTable, T: float, dt: float, n_pairs: int, seed: int = 0,
                   chunk: int = 4096) -> np.ndarray:
    """dt * sum_{j < T/dt} V(W_j - W'_j) per independent pair (left-endpoint rule).

    Increments are drawn step by step, so runs with the same seed share their
    prefix and the exponent is pathwise non-decreasing in T.
    """
    n = n_steps_for(T, dt)
    d = table.dim
    out = np.empty(n_pairs)
    pos = 0
    v0 = v_at(table, 0.0)
    for rng, m in _pair_rng_chunks(n_pairs, seed, chunk):
        # W - W' is Brownian with variance 2 per unit time
        diff = np.zeros((m, d))
        acc = np.full(m, v0)
        for _ in range(n - 1):
            diff += np.sqrt(2.0 * dt) * rng.standard_normal((m, d))
            acc += v_at(table, np.sqrt(np.sum(diff * diff, axis=1)))
        out[pos:pos + m] = dt * acc
        pos += m
    return out


def pair_second_moment_mc(table: CovarianceTable, beta: float, T: float, dt: float, n_pairs: int,
                          seed: int = 0) -> Estimate:
    """Annealed E[M_T^2] as a pair-path functional E[exp(beta^2 dt sum_j V(W_j - W'_j))]."""
    if beta == 0:
        return Estimate(1.0, 0.0)
    return _mean_se(np.exp(beta * beta * pair_exponents(table, T, dt, n_pairs, seed)))


def annealed_batch(field: VirtualNoiseField, spec: MollifierSpec, T_list, noise_seeds, n_paths: int,
                   path_seed_start: int = 0, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> PathBatch:
    """Paths for several noise seeds; seed s gets its own block of n_paths path seeds."""
    noise_seeds = np.asarray(noise_seeds, dtype=np.int64)
    ns = np.repeat(noise_seeds, n_paths)
    ps = path_seed_start + np.arange(ns.size, dtype=np.int64)
    return run_batch(field, spec, ps, T_list, noise_seeds=ns, threads=threads, chunk_size=chunk_size)


def per_seed_weights(batch: PathBatch, beta: float, n_seeds: int, c: int = -1) -> np.ndarray:
    return np.exp(batch.log_weights(beta, c)).reshape(n_seeds, -1)


def annealed_partition_mean(batch: PathBatch, beta: float, n_seeds: int, c: int = -1) -> Estimate:
    """Grand mean over noise seeds of the per-seed path average M_hat_T."""
    return _mean_se(per_seed_weights(batch, beta, n_seeds, c).mean(axis=1))


def noise_side_second_moment(batch: PathBatch, beta: float, n_seeds: int, c: int = -1) -> Estimate:
    """E[M_T^2] from the noise side, with the diagonal (same-path) terms removed.

    Per seed, ((sum w)^2 - sum w^2) / (N (N - 1)) is unbiased for the off-diagonal
    pair term E[exp(H_i + H_k)], i != k.
    """
    w = per_seed_weights(batch, beta, n_seeds, c)
    n = w.shape[1]
    s1 = w.sum(axis=1)
    s2 = (w * w).sum(axis=1)
    return _mean_se((s1 * s1 - s2) / (n * (n - 1)))


def collision_probability(K: float, d: int, T: float, dt: float, n_pairs: int, seed: int = 0,
                          chunk: int = 16384) -> Estimate:
    """P(|W_s - W'_s| <= 2K for some grid time s in [T-1, T]) for independent W, W'."""
    if T < 2:
        raise ValueError("collision window needs T >= 2")
    if K == 0:
        return Estimate(0.0, 0.0)
    n_win = n_steps_for(1.0, dt)
    hits = np.empty(n_pairs, dtype=bool)
    pos = 0
    for rng, m in _pair_rng_chunks(n_pairs, seed, chunk):
        start = np.sqrt(2.0 * (T - 1)) * rng.standard_normal((m, 1, d))
        inc = np.sqrt(2.0 * dt) * rng.standard_normal((m, n_win, d))
        diff = np.concatenate([start, start + np.cumsum(inc, axis=1)], axis=1)
        hits[pos:pos + m] = np.min(np.sum(diff * diff, axis=2), axis=1) <= (2.0 * K) ** 2
        pos += m
    return _mean_se(hits.astype(float))


def loglog_slope(x, y, y_se=None) -> tuple[float, float]:
    """Least-squares slope of log y on log x (weighted by relative errors when given), with SE."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    w = None if y_se is None else (np.asarray(y, dtype=float) / np.asarray(y_se, dtype=float)) ** 2
    X = np.column_stack([np.ones_like(lx), lx])
    W = np.ones_like(lx) if w is None else w
    A = X.T @ (W[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (W * ly))
    resid = ly - X @ coef
    dof = max(len(lx) - 2, 1)
    if w is None:
        cov = np.linalg.inv(A) * float(resid @ resid) / dof
    else:
        cov = np.linalg.inv(A)
    return float(coef[1]), float(np.sqrt(cov[1, 1]))


def martingale_diff_second_moment(noise_seeds, spec: MollifierSpec, beta: float, n, T: float, dt: float,
                                  n_paths: int, h: float = 0.25, path_seed_start: int = 0,
                                  threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> Estimate:
    """E[(Y_n(T) - Y_n(T-1))^2] over noise seeds; path seeds are shared across seeds."""
    n = as_multi_index(n)
    coeffs = hermite_coeffs(n)
    seeds = np.asarray(noise_seeds, dtype=np.int64)
    ps = path_seed_start + np.arange(n_paths, dtype=np.int64)
    horizons = [T - 1.0, T] if T > 1 else [T]
    diffs = np.empty(seeds.size)
    for s_i, s in enumerate(seeds):
        field = VirtualNoiseField(int(s), dt=dt, h=h, d=spec.d)
        b = run_batch(field, spec, ps, horizons, threads=threads, chunk_size=chunk_size)
        ys = []
        for c, Tc in enumerate(b.horizons):
            ys.append(float(np.mean(np.exp(b.log_weights(beta, c)) * i_n_batch(coeffs, Tc, b.endpoints[:, c, :]))))
        prev = ys[0] if T > 1 else (1.0 if n.order == 0 else 0.0)
        diffs[s_i] = (ys[-1] - prev) ** 2
    return _mean_se(diffs)
