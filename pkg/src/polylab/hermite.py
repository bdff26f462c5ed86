"""Space-time Hermite polynomials I_n(T, x) and the weighted martingales Y_n(T).

I_n(T, x) is the mixed lambda-derivative of exp(<lam, x> - |lam|^2 T / 2) at
lam = 0. Its expansion sum A_n(i, j) x^i T^j is built by exact integer
differentiation: d/dlam_k either pulls a factor (x_k - lam_k T) out of the
exponential, or hits an existing factor (x_k - lam_k T)^{i_k}.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import prod

import numpy as np
from numpy.polynomial import hermite_e

from .kernels import MollifierSpec
from .noise import VirtualNoiseField
from .polymer import (DEFAULT_CHUNK, PathBatch, _check_dt, _chunked_sum, monomial, partition_from_log_weights,
                      run_batch)

MAX_ORDER = 12


@dataclass(frozen=True)
class MultiIndex:
    n: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        if len(n) < 1 or any(v < 0 for v in n):
            raise ValueError(f"multi-index needs d >= 1 nonnegative entries, got {self.n}")
        object.__setattr__(self, "n", n)

    @property
    def order(self) -> int:
        return sum(self.n)

    @property
    def d(self) -> int:
        return len(self.n)

    def __iter__(self):
        return iter(self.n)

    def label(self) -> str:
        return "-".join(map(str, self.n))


def as_multi_index(n) -> MultiIndex:
    return n if isinstance(n, MultiIndex) else MultiIndex(tuple(n))


@dataclass(frozen=True)
class HermiteCoefficients:
    n: MultiIndex
    terms: dict   # (i-tuple, j) -> int

    def rows(self):
        return sorted(((i, j, c) for (i, j), c in self.terms.items()), reverse=True)


def _differentiate(terms: dict, k: int) -> dict:
    out: dict = {}
    for (i, j), c in terms.items():
        up = i[:k] + (i[k] + 1,) + i[k + 1:]
        out[(up, j)] = out.get((up, j), 0) + c
        if i[k]:
            down = i[:k] + (i[k] - 1,) + i[k + 1:]
            out[(down, j + 1)] = out.get((down, j + 1), 0) - i[k] * c
    return {key: c for key, c in out.items() if c != 0}


@lru_cache(maxsize=None)
def _coeffs(n: tuple) -> dict:
    d = len(n)
    terms = {((0,) * d, 0): 1}
    for k, nk in enumerate(n):
        for _ in range(nk):
            terms = _differentiate(terms, k)
    return terms


def hermite_coeffs(n) -> HermiteCoefficients:
    n = as_multi_index(n)
    if n.order > MAX_ORDER:
        raise ValueError(f"order |n|={n.order} exceeds the cap {MAX_ORDER}")
    return HermiteCoefficients(n=n, terms=dict(_coeffs(n.n)))


def i_n(coeffs: HermiteCoefficients, T: float, x) -> float:
    """Coefficient-sum evaluation of I_n(T, x)."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for (i, j), c in coeffs.terms.items():
        total += c * float(np.prod(x ** np.asarray(i))) * T**j
    return total


def i_n_scale(coeffs: HermiteCoefficients, T: float, x) -> float:
    """Sum of |terms|; the natural scale for rounding error in :func:`i_n`."""
    x = np.asarray(x, dtype=float)
    return sum(abs(c) * float(np.prod(np.abs(x) ** np.asarray(i))) * T**j
               for (i, j), c in coeffs.terms.items())


def i_n_hermite(n, T: float, x) -> float:
    """prod_k T^{n_k/2} He_{n_k}(x_k / sqrt(T)) with probabilists' Hermite He."""
    n = as_multi_index(n)
    x = np.asarray(x, dtype=float)
    out = 1.0
    for nk, xk in zip(n, x):
        basis = np.zeros(nk + 1)
        basis[nk] = 1.0
        out *= T ** (nk / 2) * float(hermite_e.hermeval(xk / np.sqrt(T), basis))
    return out


def i_n_batch(coeffs: HermiteCoefficients, T: float, points: np.ndarray) -> np.ndarray:
    out = np.zeros(points.shape[0])
    for (i, j), c in coeffs.terms.items():
        out += c * monomial(points, i) * T**j
    return out


def gaussian_moment(n) -> int:
    """E[prod Z_i^{n_i}] for iid standard normals: prod (n_i - 1)!!, or 0 if any n_i is odd."""
    n = as_multi_index(n)
    if any(v % 2 for v in n):
        return 0
    return prod(prod(range(v - 1, 0, -2)) for v in n)


def expected_in_under_gaussian(coeffs: HermiteCoefficients, T) -> Fraction:
    """E[I_n(T, sqrt(T) Z)] with Z ~ N(0, I_d), in exact rational arithmetic."""
    T = Fraction(T)
    if T <= 0:
        raise ValueError("T must be positive")
    total = Fraction(0)
    for (i, j), c in coeffs.terms.items():
        mom = gaussian_moment(i)
        if mom:
            total += c * mom * T ** (j + sum(i) // 2)
    return total


@dataclass(frozen=True)
class YnEstimate:
    n: MultiIndex
    T: float
    value: float
    std_err: float
    n_paths: int
    normalized: float = float("nan")


def _jackknife_se(a: np.ndarray) -> float:
    n = a.size
    if n < 2:
        return float("nan")
    loo = (a.sum() - a) / (n - 1)
    return float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


def y_n_from_batch(batch: PathBatch, beta: float, n, c: int = -1,
                   chunk_size: int = DEFAULT_CHUNK) -> YnEstimate:
    n = as_multi_index(n)
    coeffs = hermite_coeffs(n)
    T = float(batch.horizons[c])
    H = batch.log_weights(beta, c)
    terms = np.exp(H) * i_n_batch(coeffs, T, batch.endpoints[:, c, :])
    value = _chunked_sum(terms, chunk_size) / terms.size
    m_hat = np.exp(partition_from_log_weights(H, chunk_size).log_m_hat)
    return YnEstimate(n=n, T=T, value=value, std_err=_jackknife_se(terms), n_paths=terms.size,
                      normalized=value / m_hat)


def y_n_estimate(field: VirtualNoiseField, spec: MollifierSpec, beta: float, T: float, dt: float,
                 path_seeds, n, threads: int = 1, chunk_size: int = DEFAULT_CHUNK) -> YnEstimate:
    """(1/N) sum_i exp(H_i) I_n(T, W_T^i), un-normalized, with jackknife SE."""
    if len(path_seeds) == 0:
        raise ValueError("path_seeds is empty")
    _check_dt(field, dt)
    b = run_batch(field, spec, path_seeds, [T], threads=threads, chunk_size=chunk_size)
    return y_n_from_batch(b, beta, n, chunk_size=chunk_size)


def y_n_decay_from_batch(batch: PathBatch, beta: float, n, chunk_size: int = DEFAULT_CHUNK):
    n = as_multi_index(n)
    out = []
    for c, T in enumerate(batch.horizons):
        est = y_n_from_batch(batch, beta, n, c, chunk_size)
        scale = T ** (-n.order / 2)
        out.append((float(T), scale * est.value, scale * est.std_err))
    return out


def y_n_decay_curve(field: VirtualNoiseField, spec: MollifierSpec, beta: float, dt: float, path_seeds, n,
                    T_list, threads: int = 1, chunk_size: int = DEFAULT_CHUNK):
    """[(T, T^{-|n|/2} Y_n(T), scaled SE)] from one nested pass over the same field."""
    T_list = list(T_list)
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("T_list must be increasing")
    _check_dt(field, dt)
    b = run_batch(field, spec, path_seeds, T_list, threads=threads, chunk_size=chunk_size)
    return y_n_decay_from_batch(b, beta, n, chunk_size)
