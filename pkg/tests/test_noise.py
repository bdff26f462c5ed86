import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from polylab import _core
from polylab.kernels import make_mollifier
from polylab.noise import (
    GeometryError,
    VirtualNoiseField,
    check_geometry,
    gaussian_at,
    gaussian_many,
    pair_fast,
    pair_with_kernel,
)


def _distinct_indices(n, d=3, j_span=1000):
    i = np.arange(n, dtype=np.int64)
    js = i // j_span
    ks = np.zeros((n, d), dtype=np.int64)
    ks[:, 0] = i % j_span - j_span // 2
    ks[:, 1] = (i * 7) % 13 - 6
    return js, ks


@settings(max_examples=50, deadline=None)
@given(st.integers(-2**62, 2**62), st.integers(0, 10**6), st.lists(st.integers(-10**6, 10**6), min_size=3, max_size=3))
def test_gaussian_is_pure(seed, j, k):
    f = VirtualNoiseField(seed)
    a = gaussian_at(f, j, k)
    assert a == gaussian_at(VirtualNoiseField(seed), j, k)
    assert np.isfinite(a)


def test_order_independent():
    f = VirtualNoiseField(5)
    js, ks = _distinct_indices(5000)
    perm = np.random.default_rng(0).permutation(5000)
    a = gaussian_many(f, js, ks)
    b = gaussian_many(f, js[perm], ks[perm])
    assert np.array_equal(a[perm], b)


def test_moments_over_million_cells():
    js, ks = _distinct_indices(1_000_000)
    z = gaussian_many(VirtualNoiseField(2024), js, ks)
    n = z.size
    assert abs(z.mean()) < 4 / np.sqrt(n)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / n)
    assert abs(stats.skew(z)) < 4 * np.sqrt(6 / n)
    assert abs(stats.kurtosis(z)) < 4 * np.sqrt(24 / n)


def test_ks_normality():
    js, ks = _distinct_indices(100_000)
    z = gaussian_many(VirtualNoiseField(77), js, ks)
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_neighbour_and_seed_correlations():
    n = 200_000
    js, ks = _distinct_indices(n)
    f = VirtualNoiseField(3)
    a = gaussian_many(f, js, ks)
    ks2 = ks.copy()
    ks2[:, 2] += 1
    b = gaussian_many(f, js, ks2)
    c = gaussian_many(f, js + 1, ks)
    e = gaussian_many(VirtualNoiseField(4), js, ks)
    for other in (b, c, e):
        assert abs(np.corrcoef(a, other)[0, 1]) < 4 / np.sqrt(n)


def test_mix64_avalanche():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2**63, size=4000, dtype=np.uint64)
    hx = _core.mix64_array(x)
    for bit in range(64):
        flipped = _core.mix64_array(x ^ np.uint64(1 << bit))
        diff = hx ^ flipped
        frac = np.mean([bin(int(v)).count("1") for v in diff[:500]]) / 64
        assert 0.45 < frac < 0.55


def test_geometry_checks(spec):
    with pytest.raises(GeometryError):
        check_geometry(VirtualNoiseField(0, h=0.6), spec)
    with pytest.raises(GeometryError):
        check_geometry(VirtualNoiseField(0, d=2, offset=None), spec)
    with pytest.raises(ValueError):
        VirtualNoiseField(0, h=0.25, offset=(0.3, 0.0, 0.0))


def test_empty_support_is_an_error(spec):
    coarse = VirtualNoiseField(0, h=2.5)
    with pytest.raises(GeometryError):
        pair_with_kernel(coarse, spec, np.array([1.25, 1.25, 1.25]), 0)
    with pytest.raises(GeometryError):
        pair_with_kernel(coarse, spec, np.array([1.25, 1.25, 1.25]), 0, strict=False)
    # a nonempty support passes when the check is disabled
    assert len(pair_with_kernel(coarse, spec, np.zeros(3), 0, strict=False).cells) == 1


def test_cells_are_exactly_the_support(field, spec, rng):
    for _ in range(10):
        x = rng.normal(size=3) * 5
        pr = pair_with_kernel(field, spec, x, 3)
        y = field.offset_array + field.h * pr.cells
        assert np.all(np.linalg.norm(y - x, axis=1) < spec.K)
        # one more lattice shell around the ball: nothing inside was missed
        lo = np.floor((x - 1.0) / field.h).astype(int) - 1
        hi = np.ceil((x + 1.0) / field.h).astype(int) + 1
        grid = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij"), -1).reshape(-1, 3)
        inside = np.linalg.norm(field.h * grid - x, axis=1) < spec.K
        assert inside.sum() == len(pr.cells)


def test_fast_route_matches_reference(spec, rng):
    for seed in range(5):
        off = tuple(rng.random(3) * 0.25)
        f = VirtualNoiseField(seed, offset=off)
        for j in (0, 7, 123456):
            x = rng.normal(size=3) * 10
            a = pair_with_kernel(f, spec, x, j)
            b = pair_fast(f, spec, x, j)
            assert b.value == pytest.approx(a.value, rel=1e-12, abs=1e-15)
            assert b.local_v0 == pytest.approx(a.local_v0, rel=1e-12)


def test_shared_cells_are_quenched(field, spec):
    a = pair_with_kernel(field, spec, np.zeros(3), 2)
    b = pair_with_kernel(field, spec, np.array([0.4, 0.0, 0.0]), 2)
    shared = {tuple(k) for k in a.cells} & {tuple(k) for k in b.cells}
    assert shared
    ks = np.array(sorted(shared))
    g1 = gaussian_many(field, np.full(len(ks), 2), ks)
    g2 = np.array([gaussian_at(field, 2, k) for k in ks])
    assert np.array_equal(g1, g2)


def test_conditional_law_over_seeds(spec):
    # given x, the pairing is N(0, dt * local_v0) across independent fields
    x = np.array([0.3, -1.1, 2.05])
    n = 20_000
    vals = np.array([pair_fast(VirtualNoiseField(s), spec, x, 4).value for s in range(n)])
    lv0 = pair_fast(VirtualNoiseField(0), spec, x, 4).local_v0
    var_expected = 0.05 * lv0
    assert abs(vals.mean()) < 4 * np.sqrt(var_expected / n)
    assert abs(vals.var(ddof=1) - var_expected) < 3 * var_expected * np.sqrt(2 / (n - 1))
    assert stats.kstest(vals / np.sqrt(var_expected), "norm").pvalue > 1e-3


def test_distant_points_independent(spec):
    x = np.zeros(3)
    y = np.array([2 * spec.K + 2 * 0.25 * np.sqrt(3) + 0.01, 0.0, 0.0])
    n = 20_000
    a = np.empty(n)
    b = np.empty(n)
    for s in range(n):
        f = VirtualNoiseField(s)
        a[s] = pair_fast(f, spec, x, 0).value
        b[s] = pair_fast(f, spec, y, 0).value
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(n)


def test_local_v0_tracks_grid_phase(spec):
    # local_v0 is the discrete norm seen from x; it approaches V(0) as h shrinks
    from polylab.kernels import covariance_build
    v0 = covariance_build(spec, 128).v0
    x = np.array([0.1, 0.2, 0.3])
    errs = [abs(pair_fast(VirtualNoiseField(0, h=h), spec, x, 0).local_v0 - v0) for h in (0.5, 0.25, 0.125)]
    assert errs[2] < errs[1] < errs[0] or errs[2] < 1e-4
