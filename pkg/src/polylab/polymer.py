"""Brownian paths in the quenched environment and the polymer measure they induce.

A path seed ``s >= 0`` and its complement ``~s`` (= -s - 1) generate mirrored
increments, which gives exact antithetic pairs. Log-weights are

    H = beta * sum_j <phi(W_j - .), dB_j> - beta^2 / 2 * sum_j dt * local_v0_j

with the path evaluated at the left end of each time slab, so that
E_noise[exp(H)] = 1 holds exactly for every frozen path.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _core
from .kernels import MollifierSpec
from .noise import VirtualNoiseField, check_geometry, pair_with_kernel

DEFAULT_CHUNK = 256


def n_steps_for(T: float, dt: float, tol: float = 1e-9) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    n = int(round(T / dt))
    if n < 1 or abs(n * dt - T) > tol * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return n


def antithetic_seeds(start: int, n_pairs: int) -> np.ndarray:
    """[start, ~start, start+1, ~(start+1), ...]; each pair has mirrored increments."""
    base = np.arange(start, start + n_pairs, dtype=np.int64)
    return np.stack([base, ~base], axis=1).reshape(-1)


def seed_range(start: int, n: int) -> np.ndarray:
    return np.arange(start, start + n, dtype=np.int64)


@dataclass(frozen=True)
class BrownianPath:
    seed: int
    d: int
    dt: float
    n_steps: int
    positions: np.ndarray

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def endpoint(self) -> np.ndarray:
        return self.positions[-1]


def sample_path(seed: int, d: int = 3, T: float = 1.0, dt: float = 0.05) -> BrownianPath:
    n = n_steps_for(T, dt)
    pos = _core.path_positions(np.int64(seed), n, d, np.sqrt(dt))
    pos.setflags(write=False)
    return BrownianPath(seed=int(seed), d=d, dt=float(dt), n_steps=n, positions=pos)


@dataclass(frozen=True)
class PathBatch:
    """Raw per-path functionals at several horizons, independent of beta."""

    horizons: np.ndarray      # (C,)
    noise_seeds: np.ndarray   # (N,)
    path_seeds: np.ndarray    # (N,)
    endpoints: np.ndarray     # (N, C, d)
    noise: np.ndarray         # (N, C)
    compensator: np.ndarray   # (N, C)
    dt: float

    def log_weights(self, beta: float, c: int = -1) -> np.ndarray:
        if beta == 0:
            return np.zeros(self.noise.shape[0])
        return beta * self.noise[:, c] - 0.5 * beta * beta * self.compensator[:, c]


def run_batch(field: VirtualNoiseField, spec: MollifierSpec, path_seeds, horizons,
              noise_seeds=None, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> PathBatch:
    """Evaluate every path once up to max(horizons), recording each horizon.

    ``noise_seeds`` (one per path) overrides ``field.master_seed``; the result
    does not depend on ``threads``.
    """
    check_geometry(field, spec)
    path_seeds = np.ascontiguousarray(path_seeds, dtype=np.int64)
    if path_seeds.ndim != 1 or path_seeds.size == 0:
        raise ValueError("path_seeds must be a nonempty 1-d sequence")
    n = path_seeds.size
    if noise_seeds is None:
        noise_seeds = np.full(n, field.master_seed, dtype=np.int64)
    noise_seeds = np.ascontiguousarray(np.broadcast_to(np.asarray(noise_seeds, dtype=np.int64), (n,)))
    horizons = np.atleast_1d(np.asarray(horizons, dtype=float))
    steps = np.array([n_steps_for(T, field.dt) for T in horizons], dtype=np.int64)
    if np.any(np.diff(steps) <= 0):
        raise ValueError("horizons must be strictly increasing")
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    d = field.d
    pos = np.empty((n, steps.size, d))
    noise = np.empty((n, steps.size))
    comp = np.empty((n, steps.size))
    offset = field.offset_array

    def work(lo):
        hi = min(lo + chunk_size, n)
        _core.run_paths(noise_seeds[lo:hi], path_seeds[lo:hi], steps, field.dt, field.h, offset,
                        spec.K, spec.norm_const, d, pos[lo:hi], noise[lo:hi], comp[lo:hi])

    starts = range(0, n, chunk_size)
    if threads > 1 and n > chunk_size:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, starts))
    else:
        for lo in starts:
            work(lo)
    return PathBatch(horizons=steps * field.dt, noise_seeds=noise_seeds, path_seeds=path_seeds,
                     endpoints=pos, noise=noise, compensator=comp, dt=field.dt)


def hamiltonian(path: BrownianPath, field: VirtualNoiseField, spec: MollifierSpec, beta: float) -> float:
    if path.dt != field.dt or path.d != field.d:
        raise ValueError("path and field disagree on dt or d")
    b = run_batch(field, spec, [path.seed], [path.T])
    return float(b.log_weights(beta)[0])


def hamiltonian_terms(path: BrownianPath, field: VirtualNoiseField, spec: MollifierSpec):
    """(noise functional, exact compensator) by explicit cell pairing along ``path``."""
    noise = 0.0
    comp = 0.0
    for j in range(path.n_steps):
        pr = pair_with_kernel(field, spec, path.positions[j], j)
        noise += pr.value
        comp += field.dt * pr.local_v0
    return noise, comp


def continuum_compensator(beta: float, T: float, v0: float) -> float:
    return 0.5 * beta * beta * T * v0


# -- weighted reductions ----------------------------------------------------------

def _chunked_sum(a: np.ndarray, chunk_size: int) -> float:
    # one exactly rounded sum: independent of order, threads and chunk_size, and
    # exactly zero for cancelling antithetic pairs. chunk_size is kept for the API.
    return math.fsum(a)


@dataclass(frozen=True)
class PartitionEstimate:
    log_m_hat: float
    std_err: float
    ess: float
    n_paths: int

    @property
    def m_hat(self) -> float:
        return float(np.exp(self.log_m_hat))


def partition_from_log_weights(H, chunk_size: int = DEFAULT_CHUNK) -> PartitionEstimate:
    H = np.asarray(H, dtype=float)
    n = H.size
    if n == 0:
        raise ValueError("need at least one path")
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite log-weight")
    m = float(np.max(H))
    w = np.exp(H - m)
    s1 = _chunked_sum(w, chunk_size)
    s2 = _chunked_sum(w * w, chunk_size)
    log_m = m + np.log(s1) - np.log(n)
    ess = s1 * s1 / s2
    if n > 1:
        # sample variance of exp(H) around its mean, in scaled units
        var_scaled = max(s2 - s1 * s1 / n, 0.0) / (n - 1)
        se = float(np.exp(m) * np.sqrt(var_scaled / n))
    else:
        se = float("nan")
    return PartitionEstimate(log_m_hat=float(log_m), std_err=se, ess=float(ess), n_paths=n)


def partition_estimate(field: VirtualNoiseField, spec: MollifierSpec, beta: float, T: float, dt: float,
                       path_seeds, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> PartitionEstimate:
    if len(path_seeds) == 0:
        raise ValueError("path_seeds is empty")
    _check_dt(field, dt)
    b = run_batch(field, spec, path_seeds, [T], threads=threads, chunk_size=chunk_size)
    return partition_from_log_weights(b.log_weights(beta), chunk_size)


def _check_dt(field, dt):
    if dt != field.dt:
        raise ValueError(f"dt={dt} does not match the field's dt={field.dt}")


@dataclass(frozen=True)
class WeightedEnsemble:
    beta: float
    T: float
    field_seed: int
    endpoints: np.ndarray
    log_weights: np.ndarray
    d: int
    dt: float
    chunk_size: int = DEFAULT_CHUNK

    def __len__(self):
        return self.log_weights.shape[0]

    def normalized_weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / _chunked_sum(w, self.chunk_size)

    @property
    def ess(self) -> float:
        return partition_from_log_weights(self.log_weights, self.chunk_size).ess

    @property
    def scaled_endpoints(self) -> np.ndarray:
        return self.endpoints / np.sqrt(self.T)


def ensemble_from_batch(batch: PathBatch, beta: float, c: int = -1, field_seed: int | None = None,
                        chunk_size: int = DEFAULT_CHUNK) -> WeightedEnsemble:
    H = batch.log_weights(beta, c)
    if not np.all(np.isfinite(H)):
        raise FloatingPointError("non-finite log-weight")
    seed = int(batch.noise_seeds[0]) if field_seed is None else field_seed
    return WeightedEnsemble(beta=float(beta), T=float(batch.horizons[c]), field_seed=seed,
                            endpoints=batch.endpoints[:, c, :], log_weights=H,
                            d=batch.endpoints.shape[2], dt=batch.dt, chunk_size=chunk_size)


def endpoint_ensemble(field: VirtualNoiseField, spec: MollifierSpec, beta: float, T: float, dt: float,
                      path_seeds, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> WeightedEnsemble:
    if len(path_seeds) == 0:
        raise ValueError("path_seeds is empty")
    _check_dt(field, dt)
    b = run_batch(field, spec, path_seeds, [T], threads=threads, chunk_size=chunk_size)
    return ensemble_from_batch(b, beta, field_seed=field.master_seed, chunk_size=chunk_size)


def weighted_mean_se(log_w, values, chunk_size: int = DEFAULT_CHUNK, cluster: int = 1):
    """Self-normalized mean of ``values`` under weights exp(log_w), with delta-method SE.

    ``cluster=2`` treats consecutive entries (antithetic pairs) as one sampling
    unit in the SE; the mean itself is unchanged.
    """
    log_w = np.asarray(log_w, dtype=float)
    values = np.asarray(values, dtype=float)
    if log_w.size == 0:
        raise ValueError("empty ensemble")
    if log_w.size % cluster:
        raise ValueError(f"ensemble size {log_w.size} is not a multiple of cluster={cluster}")
    w = np.exp(log_w - np.max(log_w))
    s = _chunked_sum(w, chunk_size)
    mean = _chunked_sum(w * values, chunk_size) / s
    resid = (w * (values - mean)).reshape(-1, cluster).sum(axis=1)
    se = float(np.sqrt(_chunked_sum(resid**2, chunk_size)) / s)
    return float(mean), se


def monomial(points: np.ndarray, n) -> np.ndarray:
    n = np.asarray(n, dtype=int)
    if n.shape[0] != points.shape[-1]:
        raise ValueError(f"multi-index length {n.shape[0]} != dimension {points.shape[-1]}")
    out = np.ones(points.shape[0])
    for i, p in enumerate(n):
        # repeated products, not np.power: keeps (-x)^p == -(x^p) bit-exact for odd p
        for _ in range(p):
            out = out * points[:, i]
    return out


def quenched_moment(ens: WeightedEnsemble, n, with_se: bool = False, cluster: int = 1):
    """E^Q[prod_i (W_T^(i)/sqrt(T))^{n_i}] as a self-normalized estimate."""
    n = getattr(n, "n", n)
    mean, se = weighted_mean_se(ens.log_weights, monomial(ens.scaled_endpoints, n), ens.chunk_size, cluster)
    return (mean, se) if with_se else mean


def mgf_endpoint(ens: WeightedEnsemble, lam, with_se: bool = False, cluster: int = 1):
    """E^Q[exp<lam, W_T/sqrt(T)>], accumulated in log space."""
    lam = np.asarray(lam, dtype=float)
    if len(ens) == 0:
        raise ValueError("empty ensemble")
    if not np.any(lam):
        return (1.0, 0.0) if with_se else 1.0
    a = ens.scaled_endpoints @ lam
    lw = ens.log_weights
    shifted = lw + a
    m1 = np.max(shifted)
    m0 = np.max(lw)
    num = _chunked_sum(np.exp(shifted - m1), ens.chunk_size)
    den = _chunked_sum(np.exp(lw - m0), ens.chunk_size)
    log_val = m1 - m0 + np.log(num) - np.log(den)
    val = float(np.exp(log_val))
    if not with_se:
        return val
    # delta-method SE of the ratio estimator, scaled to avoid overflow
    w = np.exp(lw - m0) / den
    f_rel = np.exp(a - log_val)
    resid = (w * (f_rel - 1.0)).reshape(-1, cluster).sum(axis=1)
    se = val * float(np.sqrt(_chunked_sum(resid**2, ens.chunk_size)))
    return val, se


def she_params_to_polymer(beta: float, epsilon: float, t: float):
    """(beta, eps, t) of the mollified heat equation -> (beta, T = t / eps^2).

    The heat-equation path measure at time t is the polymer measure at horizon
    T, with the diffusive rescaling eps * W_{t/eps^2} = sqrt(t) * W_T / sqrt(T).
    """
    if not epsilon > 0 or not t > 0:
        raise ValueError("epsilon and t must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    return beta, t / epsilon**2


def she_endpoint_mgf(ens: WeightedEnsemble, lam, with_se: bool = False, cluster: int = 1):
    """Heat-equation endpoint MGF E[exp(eps <lam, W_{eps^-2}>)] with T = eps^-2.

    Markov factorization at time 1: exp(|lam|^2 (1 - 1/T) / 2) times the polymer
    MGF at the shrunken argument lam / sqrt(T).
    """
    lam = np.asarray(lam, dtype=float)
    factor = float(np.exp(0.5 * lam @ lam * (1.0 - 1.0 / ens.T)))
    val, se = mgf_endpoint(ens, lam / np.sqrt(ens.T), with_se=True, cluster=cluster)
    return (factor * val, factor * se) if with_se else factor * val
