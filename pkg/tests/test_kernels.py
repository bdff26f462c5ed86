import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polylab.kernels import (
    QuadratureError,
    bump,
    covariance_build,
    discrete_v0,
    is_radially_nonincreasing,
    lattice_in_ball,
    make_mollifier,
    mollifier_mass,
    phi,
    v_at,
    zero_table,
)


def _ball_uniform(rng, n, d, R):
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x * R * rng.random(n)[:, None] ** (1.0 / d)


def _ball_volume(d, R):
    from math import gamma, pi
    return pi ** (d / 2) / gamma(d / 2 + 1) * R**d


def test_bump_support_and_positivity():
    s = np.linspace(0.0, 1.5, 3001)
    b = bump(s)
    assert np.all(b[s >= 1] == 0.0)
    # exp(-1/(1-s)) underflows to 0.0 once 1 - s < 1/745
    assert np.all(b[s < 1 - 1.5e-3] > 0)
    assert np.all(np.diff(b[s < 1]) <= 0)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_unit_mass_own_quadrature(d):
    spec = make_mollifier(1.0, d)
    assert abs(mollifier_mass(spec) - 1.0) < 1e-6


def test_norm_const_tensor_oracle():
    # independent check: plain tensor midpoint rule on the cube [-K, K]^3
    spec = make_mollifier(0.7, 3)
    n = 160
    g = -0.7 + (np.arange(n) + 0.5) * 1.4 / n
    X, Y, Z = np.meshgrid(g, g, g, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
    mass = phi(spec, pts).sum() * (1.4 / n) ** 3
    assert abs(mass - 1.0) < 2e-4


def test_mass_mc_oracle(rng):
    spec = make_mollifier(1.0, 3)
    x = _ball_uniform(rng, 400_000, 3, 1.0)
    vals = phi(spec, x) * _ball_volume(3, 1.0)
    assert abs(vals.mean() - 1.0) < 4 * vals.std() / np.sqrt(vals.size)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=3, max_size=3), st.floats(0.2, 3.0))
def test_phi_even_and_supported(x, K):
    spec = make_mollifier(K, 3)
    x = np.array(x)
    assert phi(spec, x) == phi(spec, -x)
    r = np.linalg.norm(x)
    if r >= K:
        assert phi(spec, x) == 0.0
    elif r < K * (1 - 1e-3):
        assert phi(spec, x) > 0.0


def test_invalid_mollifier_args():
    with pytest.raises(ValueError):
        make_mollifier(0.0, 3)
    with pytest.raises(ValueError):
        make_mollifier(1.0, 3, quad_points_per_axis=8)


def test_covariance_invariants(table):
    assert table.radii[0] == 0.0 and table.radii[-1] == pytest.approx(2.0)
    assert np.all(np.diff(table.radii) > 0)
    assert np.all(table.values >= 0)
    assert np.all(table.values <= table.v0 + 1e-15)
    assert is_radially_nonincreasing(table)
    assert v_at(table, 2.0) == 0.0 and v_at(table, 5.0) == 0.0
    with pytest.raises(ValueError):
        v_at(table, -0.1)


def test_v0_is_phi_squared_integral(spec, table, rng):
    x = _ball_uniform(rng, 400_000, 3, 1.0)
    vals = phi(spec, x) ** 2 * _ball_volume(3, 1.0)
    se = vals.std() / np.sqrt(vals.size)
    assert abs(table.v0 - vals.mean()) < 4 * se
    assert table.values[0] == pytest.approx(table.v0, rel=1e-9)


@pytest.mark.parametrize("r", [0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9])
def test_convolution_mc_oracle(spec, table, rng, r):
    # V(r) = E_U[phi(U) phi(U - r e1)] * |B_K| with U uniform on the support ball
    x = _ball_uniform(rng, 200_000, 3, 1.0)
    shift = np.array([r, 0.0, 0.0])
    vals = phi(spec, x) * phi(spec, x - shift) * _ball_volume(3, 1.0)
    se = vals.std() / np.sqrt(vals.size)
    assert abs(v_at(table, r) - vals.mean()) < 4 * se + 1e-6


def test_table_refinement_stable(spec, table):
    coarse = covariance_build(spec, 128)
    r = np.linspace(0, 2, 57)
    assert np.max(np.abs(v_at(coarse, r) - v_at(table, r))) < 1e-3 * table.v0


def test_covariance_rejects_tiny_tables(spec):
    with pytest.raises(ValueError):
        covariance_build(spec, 8)


def test_zero_table(table):
    z = zero_table(table)
    assert z.v0 == 0.0 and not np.any(z.values)


def test_lattice_ball_matches_brute_force(rng):
    for _ in range(20):
        h = 0.25
        off = rng.random(3) * h
        c = rng.normal(size=3) * 3
        cells = lattice_in_ball(1.0, h, off, c)
        lo = np.floor((c - 1.0 - off) / h).astype(int) - 1
        hi = np.ceil((c + 1.0 - off) / h).astype(int) + 1
        grid = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij"), -1).reshape(-1, 3)
        inside = grid[np.linalg.norm(off + h * grid - c, axis=1) < 1.0]
        assert sorted(map(tuple, cells)) == sorted(map(tuple, inside))
        assert [tuple(k) for k in cells] == sorted(tuple(k) for k in cells)


def test_discrete_v0_converges(spec, table):
    hs = [0.5, 0.25, 0.125, 0.0625]
    for off in (None, "half"):
        errs = []
        for h in hs:
            o = None if off is None else np.full(3, h / 2)
            dn = discrete_v0(spec, h, o)
            assert dn.v0_h > 0
            errs.append(abs(dn.v0_h - table.v0))
        # halving sequence: error shrinks at least like h^1.5 from the second step on
        for a, b in zip(errs[1:], errs[2:]):
            assert b < a / 2**1.5


def test_discrete_v0_scale_quadratic(spec):
    a = discrete_v0(spec, 0.25).v0_h
    b = discrete_v0(spec, 0.25, scale=2.0).v0_h
    assert b == pytest.approx(4 * a, rel=1e-14)


def test_discrete_v0_geometry_errors(spec):
    with pytest.raises(ValueError):
        discrete_v0(spec, 0.6)


def test_quadrature_error_is_runtime_error():
    assert issubclass(QuadratureError, RuntimeError)
