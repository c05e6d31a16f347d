"""Philox4x32-10 counter-based generator and inverse-CDF normals.

Each path owns the substream keyed by the mixed base seed with the path index
in the upper counter words, so a normal draw is a pure function of
``(base_seed, path_index, step)`` and never depends on scheduling. One
Philox block yields four 32-bit words ``w``, mapped to four normals through
the AS241 (PPND16) inverse normal CDF at ``u = (w + 1/2) / 2^32``.

The compiled fill routine and the numpy functions evaluate the same
floating-point expressions in the same order (no contraction), so both
backends produce identical normals.
"""

import numpy as np

from ._accel import njit

MASK32 = np.uint64(0xFFFFFFFF)
SH32 = np.uint64(32)
PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
INV_2_32 = 1.0 / 4294967296.0
HALF_32 = np.uint64(0x80000000)
# 32-bit words mapped to |u - 1/2| > 0.425 are exactly w < TAIL_LO or w >= TAIL_LO + TAIL_SPAN
TAIL_LO = np.uint64(322122547)
TAIL_SPAN = np.uint64(3972844749 - 322122547)

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_SH30 = np.uint64(30)
_SH27 = np.uint64(27)
_SH31 = np.uint64(31)


def splitmix64(z):
    """64-bit finaliser used to turn a user seed into a Philox key."""
    with np.errstate(over="ignore"):
        z = np.uint64(z) + _SM_GAMMA
        z = (z ^ (z >> _SH30)) * _SM_M1
        z = (z ^ (z >> _SH27)) * _SM_M2
        return z ^ (z >> _SH31)


def seed_key(base_seed: int) -> tuple[np.uint64, np.uint64]:
    mixed = splitmix64(np.uint64(base_seed % (1 << 64)))
    return mixed & MASK32, mixed >> SH32


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on 32-bit words held in ``uint64`` (scalars or arrays)."""
    for _ in range(10):
        m0 = PHILOX_M0 * c0
        m1 = PHILOX_M1 * c2
        c0, c1, c2, c3 = (m1 >> SH32) ^ c1 ^ k0, m1 & MASK32, (m0 >> SH32) ^ c3 ^ k1, m0 & MASK32
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    return c0, c1, c2, c3


# Wichura (1988), algorithm AS241, PPND16
A0, A1, A2, A3, A4, A5, A6, A7 = (
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3)
B1, B2, B3, B4, B5, B6, B7 = (
    4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
    2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
    5.2264952788528545610e3)
C0, C1, C2, C3, C4, C5, C6, C7 = (
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4)
D1, D2, D3, D4, D5, D6, D7 = (
    2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
    1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9)
E0, E1, E2, E3, E4, E5, E6, E7 = (
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7)
F1, F2, F3, F4, F5, F6, F7 = (
    5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
    7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15)

# log(1+f) = f - s (f - R(s^2)) with s = f / (2 + f); minimax R from fdlibm
LG1, LG2, LG3, LG4, LG5, LG6, LG7 = (
    6.666666666666735130e-01, 3.999999999940941908e-01, 2.857142874366239149e-01,
    2.222219843214978396e-01, 1.818357216161805012e-01, 1.531383769920937332e-01,
    1.479819860511658591e-01)
LN2_HI = 6.93147180369123816490e-01
LN2_LO = 1.90821492927058770002e-10
FRAC_MASK = np.uint64(0x000FFFFFFFFFFFFF)
EXP_ONE = np.uint64(0x3FF0000000000000)
SQRT2_FRAC = np.uint64(0x6A09E667F3BCD)
SH52 = np.uint64(52)


def _central(q):
    r = 0.180625 - q * q
    return q * (((((((A7 * r + A6) * r + A5) * r + A4) * r + A3) * r + A2) * r + A1) * r + A0) / (
        ((((((B7 * r + B6) * r + B5) * r + B4) * r + B3) * r + B2) * r + B1) * r + 1.0
    )


def _near_tail(r):
    r = r - 1.6
    return (((((((C7 * r + C6) * r + C5) * r + C4) * r + C3) * r + C2) * r + C1) * r + C0) / (
        ((((((D7 * r + D6) * r + D5) * r + D4) * r + D3) * r + D2) * r + D1) * r + 1.0
    )


def _far_tail(r):
    r = r - 5.0
    return (((((((E7 * r + E6) * r + E5) * r + E4) * r + E3) * r + E2) * r + E1) * r + E0) / (
        ((((((F7 * r + F6) * r + F5) * r + F4) * r + F3) * r + F2) * r + F1) * r + 1.0
    )


def _log_reduced(f, k):
    """``k ln 2 + log(1 + f)`` for ``f`` in ``[sqrt(1/2) - 1, sqrt(2) - 1)``."""
    s = f / (2.0 + f)
    z = s * s
    w = z * z
    R = z * (LG1 + w * (LG3 + w * (LG5 + w * LG7))) + w * (LG2 + w * (LG4 + w * LG6))
    return k * LN2_HI - ((s * (f - R) - k * LN2_LO) - f)


_central_jit = njit(cache=True, inline="always")(_central)
_near_tail_jit = njit(cache=True, inline="always")(_near_tail)
_log_reduced_jit = njit(cache=True, inline="always")(_log_reduced)


def log_normal(x):
    """Natural log of positive normal floats, branch-free (arrays).

    Within one ulp of ``np.log``; used instead of it so that numpy and the
    compiled kernel agree bit for bit.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    bits = x.view(np.uint64)
    frac = bits & FRAC_MASK
    adj = (frac >= SQRT2_FRAC).astype(np.uint64)
    m = (frac | (EXP_ONE - (adj << SH52))).view(np.float64)
    k = ((bits >> SH52).astype(np.int64) - 1023 + adj.astype(np.int64)).astype(np.float64)
    return _log_reduced(m - 1.0, k)


def ppnd16(u):
    """Inverse standard normal CDF on arrays, ``u`` in ``(0, 1)``."""
    u = np.asarray(u, dtype=float)
    q = u - 0.5
    out = np.asarray(_central(q), dtype=float)
    tail = np.abs(q) > 0.425
    if tail.any():
        ut, qt = u[tail], q[tail]
        t = np.where(qt < 0.0, ut, 1.0 - ut)
        normal = t >= np.finfo(float).tiny
        with np.errstate(divide="ignore"):
            lg = np.where(normal, log_normal(np.where(normal, t, 1.0)), np.log(t))
        r = np.sqrt(-lg)
        z = np.where(r <= 5.0, _near_tail(r), _far_tail(r))
        out[tail] = np.copysign(z, qt)
    return out


def normal_quad(block, path, k0, k1):
    """Four normals for counters ``(block, path)`` under key ``(k0, k1)`` (arrays)."""
    block = np.asarray(block, dtype=np.uint64)
    path = np.asarray(path, dtype=np.uint64)
    words = philox4x32(block & MASK32, block >> SH32, path & MASK32, path >> SH32, k0, k1)
    return tuple(ppnd16((w.astype(np.int64) + 0.5) * INV_2_32) for w in words)


@njit(cache=True, error_model="numpy")
def fill_normals(w_buf, z_buf, t_buf, k_buf, tail_idx, path, first_block, n_blocks, k0, k1):
    """Normals of blocks ``first_block ... first_block + n_blocks - 1`` of ``path``.

    Word ``m`` of block ``first_block + j`` lands at ``z_buf[m * n_blocks + j]``.
    The structure-of-arrays layout and the pass split let the generator, the
    central branch and the tail logarithm vectorise. Every buffer holds at
    least ``4 * n_blocks`` entries.
    """
    p_lo = path & MASK32
    p_hi = path >> SH32
    for j in range(n_blocks):
        blk = np.uint64(first_block + j)
        c0 = blk & MASK32
        c1 = blk >> SH32
        c2 = p_lo
        c3 = p_hi
        a0 = k0
        a1 = k1
        for _ in range(10):  # written out, not called, so the loop vectorises
            m0 = PHILOX_M0 * c0
            m1 = PHILOX_M1 * c2
            c0, c1, c2, c3 = (m1 >> SH32) ^ c1 ^ a0, m1 & MASK32, (m0 >> SH32) ^ c3 ^ a1, m0 & MASK32
            a0 = (a0 + PHILOX_W0) & MASK32
            a1 = (a1 + PHILOX_W1) & MASK32
        w_buf[j] = c0
        w_buf[n_blocks + j] = c1
        w_buf[2 * n_blocks + j] = c2
        w_buf[3 * n_blocks + j] = c3
    n = 4 * n_blocks
    for i in range(n):
        # via int64: the words fit and the signed conversion vectorises
        z_buf[i] = _central_jit((np.int64(w_buf[i]) + 0.5) * INV_2_32 - 0.5)
    n_tail = 0
    for i in range(n):
        tail_idx[n_tail] = i
        n_tail += w_buf[i] - TAIL_LO >= TAIL_SPAN  # unsigned wrap catches w < TAIL_LO
    # t = min(u, 1 - u) >= 2^-33: the log sees normal floats and r < 5
    for t in range(n_tail):
        w = w_buf[tail_idx[t]]
        folded = w if w < HALF_32 else MASK32 - w  # (MASK32 - w + 1/2) / 2^32 is 1 - u exactly
        t_buf[t] = (np.int64(folded) + 0.5) * INV_2_32
    bits = t_buf.view(np.uint64)
    for t in range(n_tail):
        b = bits[t]
        frac = b & FRAC_MASK
        adj = np.uint64(frac >= SQRT2_FRAC)
        bits[t] = frac | (EXP_ONE - (adj << SH52))
        k_buf[t] = np.float64(np.int64(b >> SH52) - 1023 + np.int64(adj))
    for t in range(n_tail):
        t_buf[t] = _near_tail_jit(np.sqrt(-_log_reduced_jit(t_buf[t] - 1.0, k_buf[t])))
    for t in range(n_tail):
        i = tail_idx[t]
        z_buf[i] = t_buf[t] if w_buf[i] >= HALF_32 else -t_buf[t]


def normals(base_seed: int, path_index, n: int) -> np.ndarray:
    """First ``n`` normals of one or several paths' substreams (numpy path).

    Returns shape ``(len(path_index), n)`` for array input.
    """
    k0, k1 = seed_key(base_seed)
    paths = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    n_blocks = (n + 3) // 4
    out = np.empty((paths.size, 4 * n_blocks))
    for blk in range(n_blocks):
        zs = normal_quad(np.full(paths.size, blk, dtype=np.uint64), paths, k0, k1)
        for j, z in enumerate(zs):
            out[:, 4 * blk + j] = z
    out = out[:, :n]
    return out[0] if np.ndim(path_index) == 0 else out
