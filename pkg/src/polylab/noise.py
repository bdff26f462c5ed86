"""Quenched white-noise environment as a virtual space-time Gaussian lattice.

Cell ``(j, k)`` covers the time slab ``[j dt, (j+1) dt)`` and the lattice site
``y_k = offset + h k``. Its Gaussian is a pure function of
``(master_seed, j, k)``; nothing is stored, so any number of paths can be
evaluated against the same realization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .kernels import MollifierSpec, lattice_in_ball, phi


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class VirtualNoiseField:
    master_seed: int
    dt: float = 0.05
    h: float = 0.25
    d: int = 3
    offset: tuple = field(default=None)

    def __post_init__(self):
        if not self.dt > 0 or not self.h > 0:
            raise ValueError("dt and h must be positive")
        off = (0.0,) * self.d if self.offset is None else tuple(float(o) for o in self.offset)
        if len(off) != self.d or any(not 0.0 <= o < self.h for o in off):
            raise ValueError(f"offset must lie in [0, h)^d, got {off}")
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "master_seed", int(np.int64(self.master_seed)))

    @property
    def offset_array(self) -> np.ndarray:
        return np.asarray(self.offset, dtype=float)

    def with_seed(self, seed: int) -> "VirtualNoiseField":
        return VirtualNoiseField(seed, self.dt, self.h, self.d, self.offset)


def gaussian_at(field: VirtualNoiseField, j: int, k) -> float:
    """Standard normal attached to time index ``j`` and cell index vector ``k``."""
    if j < 0:
        raise ValueError("time index must be nonnegative")
    ks = np.asarray(k, dtype=np.int64).reshape(1, field.d)
    return float(_core.noise_normals(np.int64(field.master_seed), np.array([j], np.int64), ks)[0])


def gaussian_many(field: VirtualNoiseField, js, ks) -> np.ndarray:
    js = np.ascontiguousarray(js, dtype=np.int64)
    ks = np.ascontiguousarray(ks, dtype=np.int64).reshape(-1, field.d)
    if js.shape[0] != ks.shape[0]:
        raise ValueError("js and ks must have matching lengths")
    if np.any(js < 0):
        raise ValueError("time index must be nonnegative")
    return _core.noise_normals(np.int64(field.master_seed), js, ks)


def check_geometry(field: VirtualNoiseField, spec: MollifierSpec) -> None:
    if field.d != spec.d:
        raise GeometryError(f"field dimension {field.d} != mollifier dimension {spec.d}")
    if field.h > spec.K / 2:
        raise GeometryError(f"grid spacing h={field.h} exceeds K/2={spec.K / 2}")


@dataclass(frozen=True)
class PairingResult:
    value: float
    local_v0: float
    cells: np.ndarray = field(default=None, repr=False, compare=False)


def support_cells(field: VirtualNoiseField, spec: MollifierSpec, x) -> np.ndarray:
    """Cell indices inside the open support ball around ``x``, lexicographic order."""
    return lattice_in_ball(spec.K, field.h, field.offset_array, np.asarray(x, dtype=float))


def pair_with_kernel(field: VirtualNoiseField, spec: MollifierSpec, x, j: int,
                     strict: bool = True) -> PairingResult:
    """Discrete <phi(x - .), dB_j>: Gaussian with variance dt * local_v0 given x.

    ``strict=False`` skips the h <= K/2 check; a support ball that then contains
    no lattice point is still an error.
    """
    if strict:
        check_geometry(field, spec)
    elif field.d != spec.d:
        raise GeometryError(f"field dimension {field.d} != mollifier dimension {spec.d}")
    x = np.asarray(x, dtype=float)
    cells = support_cells(field, spec, x)
    if len(cells) == 0:
        raise GeometryError(f"no lattice point of spacing {field.h} inside the support ball around {x}")
    weights = phi(spec, field.offset_array + field.h * cells - x)
    g = gaussian_many(field, np.full(len(cells), j, dtype=np.int64), cells)
    hd = field.h**field.d
    return PairingResult(
        value=float(np.sqrt(field.dt * hd) * np.sum(weights * g)),
        local_v0=float(np.sum(weights**2) * hd),
        cells=cells,
    )


def pair_fast(field: VirtualNoiseField, spec: MollifierSpec, x, j: int) -> PairingResult:
    """Compiled version of :func:`pair_with_kernel` (same cells, no cell log)."""
    check_geometry(field, spec)
    x = np.ascontiguousarray(x, dtype=float)
    v, lv0 = _core.pair_at(np.int64(field.master_seed), np.int64(j), x, spec.K, field.h,
                           field.offset_array, spec.norm_const)
    hd = field.h**field.d
    return PairingResult(value=float(np.sqrt(field.dt * hd) * v), local_v0=float(lv0 * hd))
