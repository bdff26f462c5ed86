"""Compiled inner loops: counter-based Gaussians, kernel pairing, path Hamiltonians.

Everything here is a pure function of its integer inputs. The loops release the
GIL so callers can fan chunks of paths out over threads.
"""
import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TAG_NOISE = np.uint64(0x6E6F6973655F4233)
_TAG_PATH = np.uint64(0x706174685F573031)
_LANE_A = np.uint64(0xA5A5A5A5A5A5A5A5)
_LANE_B = np.uint64(0x3C3C3C3C3C3C3C3C)
_TWO53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * np.pi


@nb.njit(inline="always")
def mix64(z):
    # splitmix64 finalizer
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always")
def _normal_from_key(key):
    u1 = (np.float64(mix64(key ^ _LANE_A) >> _S11) + 0.5) * _TWO53
    u2 = np.float64(mix64(key ^ _LANE_B) >> _S11) * _TWO53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


@nb.njit(inline="always")
def _step_key(seed, j):
    return mix64(mix64(np.uint64(seed) ^ _TAG_NOISE) ^ np.uint64(j))


@nb.njit(cache=True)
def mix64_array(z):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        out[i] = mix64(z[i])
    return out


@nb.njit(cache=True, nogil=True)
def noise_normals(seed, js, ks):
    """Field Gaussians at (js[i], ks[i, :]) for one master seed."""
    n, d = ks.shape
    out = np.empty(n)
    for i in range(n):
        key = _step_key(seed, js[i])
        for c in range(d):
            key = mix64(key ^ np.uint64(ks[i, c]))
        out[i] = _normal_from_key(key)
    return out


@nb.njit(inline="always")
def _increment_normal(base_key, j, i):
    return _normal_from_key(mix64(mix64(base_key ^ np.uint64(j)) ^ np.uint64(i)))


@nb.njit(inline="always")
def _path_base(path_seed):
    # seed s and its complement ~s share increments up to sign
    if path_seed >= 0:
        return mix64(np.uint64(path_seed) ^ _TAG_PATH), 1.0
    return mix64(np.uint64(-path_seed - 1) ^ _TAG_PATH), -1.0


@nb.njit(cache=True, nogil=True)
def path_positions(path_seed, n_steps, d, sqrt_dt):
    base, sign = _path_base(path_seed)
    pos = np.zeros((n_steps + 1, d))
    for j in range(n_steps):
        for i in range(d):
            pos[j + 1, i] = pos[j, i] + sign * sqrt_dt * _increment_normal(base, j, i)
    return pos


@nb.njit(inline="always")
def _pair(x, step_key, K, h, offset, norm_const, lo, hi, k, keys, r2s):
    # returns (sum phi(y_k - x) * g(j, k), sum phi(y_k - x)^2) over the open support ball;
    # outer axes run an odometer over the bounding box, the last axis only over its chord
    d = x.shape[0]
    K2 = K * K
    inv_K2 = 1.0 / K2
    last = d - 1
    for c in range(d):
        lo[c] = np.int64(np.ceil((x[c] - K - offset[c]) / h))
        hi[c] = np.int64(np.floor((x[c] + K - offset[c]) / h))
        k[c] = lo[c]
    val = 0.0
    lv0 = 0.0
    keys[0] = step_key
    r2s[0] = 0.0
    c0 = 0
    while True:
        for c in range(c0, last):
            y = offset[c] + h * k[c] - x[c]
            r2s[c + 1] = r2s[c] + y * y
            keys[c + 1] = mix64(keys[c] ^ np.uint64(k[c]))
        rest = K2 - r2s[last]
        if rest > 0.0:
            half = np.sqrt(rest)
            a = np.int64(np.ceil((x[last] - half - offset[last]) / h))
            b = np.int64(np.floor((x[last] + half - offset[last]) / h))
            base_r2 = r2s[last]
            kl = keys[last]
            for kk in range(a, b + 1):
                y = offset[last] + h * kk - x[last]
                r2 = base_r2 + y * y
                if r2 < K2:
                    p = norm_const * np.exp(-1.0 / (1.0 - r2 * inv_K2))
                    val += p * _normal_from_key(mix64(kl ^ np.uint64(kk)))
                    lv0 += p * p
        # odometer over the outer axes
        c = last - 1
        while c >= 0:
            k[c] += 1
            if k[c] <= hi[c]:
                break
            k[c] = lo[c]
            c -= 1
        if c < 0:
            break
        c0 = c
    return val, lv0


@nb.njit(cache=True, nogil=True)
def pair_at(seed, j, x, K, h, offset, norm_const):
    d = x.shape[0]
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    k = np.empty(d, np.int64)
    keys = np.empty(d, np.uint64)
    r2s = np.empty(d)
    return _pair(x, _step_key(seed, j), K, h, offset, norm_const, lo, hi, k, keys, r2s)


@nb.njit(cache=True, nogil=True)
def run_paths(noise_seeds, path_seeds, ck_steps, dt, h, offset, K, norm_const, d,
              out_pos, out_noise, out_comp):
    """Evaluate items i = (noise_seeds[i], path_seeds[i]).

    At each checkpoint c (after ck_steps[c] steps) stores the endpoint, the raw
    noise functional sum_j sqrt(dt h^d) sum_k phi g, and the exact compensator
    sum_j dt * local_v0_j. H(beta) = beta * noise - beta^2 / 2 * comp.
    """
    n_items = path_seeds.shape[0]
    n_ck = ck_steps.shape[0]
    n_steps = ck_steps[n_ck - 1]
    sqrt_dt = np.sqrt(dt)
    amp = np.sqrt(dt * h**d)
    hd = h**d
    x = np.empty(d)
    lo = np.empty(d, np.int64)
    hi = np.empty(d, np.int64)
    k = np.empty(d, np.int64)
    keys = np.empty(d, np.uint64)
    r2s = np.empty(d)
    for it in range(n_items):
        seed = noise_seeds[it]
        base, sign = _path_base(path_seeds[it])
        for c in range(d):
            x[c] = 0.0
        acc = 0.0
        comp = 0.0
        ci = 0
        for j in range(n_steps):
            v, lv0 = _pair(x, _step_key(seed, j), K, h, offset, norm_const, lo, hi, k, keys, r2s)
            acc += v
            comp += lv0
            for c in range(d):
                x[c] += sign * sqrt_dt * _increment_normal(base, j, c)
            if j + 1 == ck_steps[ci]:
                for c in range(d):
                    out_pos[it, ci, c] = x[c]
                out_noise[it, ci] = amp * acc
                out_comp[it, ci] = dt * hd * comp
                ci += 1
    return 0
