"""Euler-Maruyama simulation of the controlled surplus under feedback policies.

A policy is tabulated once on a uniform surplus grid and the kernels
interpolate it linearly. The table reaches more than ten standard deviations
past the drifted start; beyond it the last row is held. Paths are
independent; path ``i`` draws its normals from the Philox substream
``(base_seed, i)``, so per-path results do not depend on the number of
threads or on the backend's execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import InvalidPolicy, UnknownKind
from .farfield import asymptotics
from .model import ModelParams, asymptotic_scale
from .rng import fill_normals, normal_quad, seed_key
from .solution import Policy


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``horizon=None`` picks the truncation time from :func:`choose_horizon`
    using the asymptotic value at ``x0`` as reference.
    """

    dt: float = 1e-3
    horizon: Optional[float] = None
    n_paths: int = 10_000
    base_seed: int = 0
    tail_bound_mode: bool = False
    table_step: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.table_step > 0:
            raise ValueError("table_step must be positive")


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    ruin_fraction: float
    mean_ruin_time: Optional[float]
    truncation_fraction: float
    n_paths: int
    horizon: float
    samples: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class PolicyTable:
    """Policy sampled at ``x = i * step``.

    ``rows[i] = (q, c, u(c))``; utility is tabulated so the kernels avoid a
    power per step.
    """

    rows: np.ndarray
    step: float

    @property
    def q(self) -> np.ndarray:
        return self.rows[:, 0]

    @property
    def c(self) -> np.ndarray:
        return self.rows[:, 1]

    @property
    def x_hi(self) -> float:
        return (self.rows.shape[0] - 1) * self.step


def _utility(c, p):
    return np.where(c > 0.0, np.power(np.maximum(c, 0.0), p) / p, 0.0)


def tabulate_policy(policy: Policy, x_hi: float, step: float, p: float) -> PolicyTable:
    """Sample ``policy`` on ``[0, x_hi]``; raises InvalidPolicy on inadmissible values."""
    n = max(2, int(math.ceil(x_hi / step)) + 1)
    x = np.arange(n) * step
    q = np.broadcast_to(np.asarray(policy.q(x), dtype=float), x.shape)
    c = np.broadcast_to(np.asarray(policy.c(x), dtype=float), x.shape)
    bad_q = ~np.isfinite(q) | (q < 0.0) | (q > 1.0)
    bad_c = ~np.isfinite(c) | (c < 0.0)
    if bad_q.any():
        i = int(np.argmax(bad_q))
        raise InvalidPolicy(f"q({x[i]:.6g}) = {q[i]!r} outside [0, 1]")
    if bad_c.any():
        i = int(np.argmax(bad_c))
        raise InvalidPolicy(f"c({x[i]:.6g}) = {c[i]!r} is negative or not finite")
    return PolicyTable(rows=np.column_stack([q, c, _utility(c, p)]), step=step)


def truncation_bound(horizon: float, x0: float, params: ModelParams) -> float:
    """``exp(-beta T) v_asym(x0 + (1 + theta) a T)``."""
    reach = x0 + (1.0 + params.theta) * params.a * horizon
    return math.exp(-params.beta * horizon) * asymptotics(reach, params)[0]


def choose_horizon(x0: float, params: ModelParams, value: float, rel: float = 1e-3) -> float:
    """Smallest ``T`` (to 0.1 time units) with ``truncation_bound(T) < rel * value``."""
    target = rel * value
    lo, hi = 0.0, 1.0
    while truncation_bound(hi, x0, params) >= target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e7:
            raise ValueError("no finite horizon meets the truncation target")
    while hi - lo > 0.05:
        mid = 0.5 * (lo + hi)
        if truncation_bound(mid, x0, params) >= target:
            lo = mid
        else:
            hi = mid
    return math.ceil(hi * 10.0) / 10.0


# -- kernels -----------------------------------------------------------------
# One Philox call feeds four steps. Both kernels consume normal ``k`` of path
# ``i`` at step ``k`` and evaluate the same expressions in the same order, so
# their samples agree to the last bit. ``flat`` is the row-major table with the
# last row repeated once, so the upper neighbour of any clipped index exists.

LANES = 8  # paths stepped together so their update chains overlap
BUFFER = 512  # steps of normals drawn per refill; multiple of 4


@njit(parallel=True, cache=True, error_model="numpy")
def _paths_numba(x0, flat, inv_h, theta_a, eta_a, vol, disc_step, dt, n_steps,
                 k0, k1, first_path, value, ruined, exit_time, x_final):
    s_max = float(flat.size // 3 - 2)
    n_paths = value.size
    n_chunks = (n_paths + LANES - 1) // LANES
    for ch in prange(n_chunks):
        w_buf = np.empty(BUFFER, dtype=np.uint64)
        t_buf = np.empty(BUFFER)
        k_buf = np.empty(BUFFER)
        tail_idx = np.empty(BUFFER, dtype=np.int64)
        z_buf = np.zeros((LANES, BUFFER))
        x = np.zeros(LANES)
        acc = np.zeros(LANES)
        live = np.zeros(LANES)  # 1.0 while solvent; ruined lanes are parked at x = 0
        k_exit = np.full(LANES, n_steps)
        x_end = np.zeros(LANES)
        lo = ch * LANES
        width = min(LANES, n_paths - lo)
        for l in range(width):
            live[l] = 1.0
            x[l] = x0
        disc = 1.0
        for base in range(0, n_steps, BUFFER):
            n_live = 0
            for l in range(width):
                n_live += live[l] > 0.0
            if n_live == 0:
                break
            m = min(BUFFER, n_steps - base)
            nb = (m + 3) // 4
            for l in range(width):
                if live[l] > 0.0:
                    fill_normals(w_buf, z_buf[l], t_buf, k_buf, tail_idx,
                                 np.uint64(first_path + lo + l), base // 4, nb, k0, k1)
            for k in range(m):
                kz = (k & 3) * nb + (k >> 2)
                w_disc = disc * dt
                for l in range(LANES):
                    xl = x[l]
                    s = xl * inv_h
                    s = s if s < s_max else s_max
                    i = int(s)
                    w = s - i
                    j = 3 * i
                    q = flat[j] + w * (flat[j + 3] - flat[j])
                    c = flat[j + 1] + w * (flat[j + 4] - flat[j + 1])
                    u = flat[j + 2] + w * (flat[j + 5] - flat[j + 2])
                    a = live[l]
                    acc[l] += a * (w_disc * u)
                    xn = xl + a * (((theta_a - eta_a * q) - c) * dt) + a * (vol * (1.0 - q) * z_buf[l, kz])
                    if xn < 0.0:
                        live[l] = 0.0
                        k_exit[l] = base + k + 1
                        x_end[l] = xn
                        xn = 0.0
                    x[l] = xn
                disc *= disc_step
        for l in range(width):
            j = lo + l
            value[j] = acc[l]
            ruined[j] = live[l] == 0.0
            exit_time[j] = k_exit[l] * dt
            x_final[j] = x_end[l] if live[l] == 0.0 else x[l]


def _paths_numpy(x0, flat, inv_h, theta_a, eta_a, vol, disc_step, dt, n_steps,
                 k0, k1, first_path, value, ruined, exit_time, x_final):
    n = value.size
    s_max = float(flat.size // 3 - 2)
    q_tab, c_tab, u_tab = flat[0::3], flat[1::3], flat[2::3]
    idx = np.arange(n)
    paths = (first_path + idx).astype(np.uint64)
    x = np.full(n, float(x0))
    acc = np.zeros(n)
    disc = 1.0
    ruined[:] = False
    exit_time[:] = n_steps * dt
    zs = ()
    for k in range(n_steps):
        if idx.size == 0:
            break
        m = k % 4
        if m == 0:
            zs = normal_quad(np.full(idx.size, k // 4, dtype=np.uint64), paths, k0, k1)
        s = np.minimum(x * inv_h, s_max)
        i = s.astype(np.int64)
        w = s - i
        q = q_tab[i] + w * (q_tab[i + 1] - q_tab[i])
        c = c_tab[i] + w * (c_tab[i + 1] - c_tab[i])
        u = u_tab[i] + w * (u_tab[i + 1] - u_tab[i])
        acc += (disc * dt) * u
        x = x + ((theta_a - eta_a * q) - c) * dt + vol * (1.0 - q) * zs[m]
        disc *= disc_step
        dead = x < 0.0
        if dead.any():
            gone = idx[dead]
            ruined[gone] = True
            exit_time[gone] = (k + 1) * dt
            value[gone] = acc[dead]
            x_final[gone] = x[dead]
            keep = ~dead
            idx, paths, x, acc = idx[keep], paths[keep], x[keep], acc[keep]
            zs = tuple(t[keep] for t in zs)
    value[idx] = acc
    x_final[idx] = x


def _run_paths(table: PolicyTable, x0: float, params: ModelParams, dt: float, horizon: float,
               base_seed: int, first_path: int, n_paths: int, backend: Optional[str] = None):
    if backend is None:
        backend = "numba" if _accel.numba_enabled() else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    k0, k1 = seed_key(base_seed)
    value = np.zeros(n_paths)
    ruined = np.zeros(n_paths, dtype=np.bool_)
    exit_time = np.zeros(n_paths)
    x_final = np.zeros(n_paths)
    args = (
        float(x0), np.concatenate([table.rows.ravel(), table.rows[-1]]), 1.0 / table.step,
        params.theta * params.a, params.eta * params.a, params.b * math.sqrt(dt), math.exp(-params.beta * dt),
        dt, n_steps, k0, k1, int(first_path),
        value, ruined, exit_time, x_final,
    )
    if backend == "numba":
        _accel.apply_thread_cap()
        _paths_numba(*args)
    else:
        _paths_numpy(*args)
    return value, ruined, exit_time, x_final, n_steps * dt


def _table_for(policy: Policy, x0: float, params: ModelParams, horizon: float, step: float):
    reach = x0 + (1.0 + params.theta) * params.a * horizon + 10.0 * params.b * math.sqrt(horizon)
    return tabulate_policy(policy, reach + 1.0, step, params.p)


def _resolve_horizon(config: SimConfig, x0: float, params: ModelParams) -> float:
    if config.horizon is not None:
        return config.horizon
    return choose_horizon(x0, params, asymptotics(x0, params)[0])


def _check_start(x0: float):
    if not (math.isfinite(x0) and x0 > 0.0):
        raise ValueError(f"initial surplus must be positive, got {x0!r}")


def simulate_path(policy: Policy, x0: float, params: ModelParams, config: SimConfig,
                  path_index: int, backend: Optional[str] = None):
    """One path: ``(discounted utility, ruined, ruin or truncation time)``."""
    _check_start(x0)
    horizon = _resolve_horizon(config, x0, params)
    table = _table_for(policy, x0, params, horizon, config.table_step)
    value, ruined, t_exit, x_final, horizon = _run_paths(
        table, x0, params, config.dt, horizon, config.base_seed, path_index, 1, backend
    )
    total = value[0]
    if config.tail_bound_mode and not ruined[0]:
        total += math.exp(-params.beta * horizon) * _tail_value(x_final[:1], params)[0]
    return float(total), bool(ruined[0]), float(t_exit[0])


def _tail_value(x, params: ModelParams):
    k = asymptotic_scale(params)
    return k * np.maximum(x, 0.0) ** params.p / params.p


def estimate_value(policy: Policy, x0: float, params: ModelParams, config: SimConfig,
                   backend: Optional[str] = None) -> SimEstimate:
    """Monte Carlo estimate of expected discounted dividend utility up to ruin."""
    _check_start(x0)
    horizon = _resolve_horizon(config, x0, params)
    table = _table_for(policy, x0, params, horizon, config.table_step)
    value, ruined, t_exit, x_final, horizon = _run_paths(
        table, x0, params, config.dt, horizon, config.base_seed, 0, config.n_paths, backend
    )
    if config.tail_bound_mode:
        alive = ~ruined
        value = value.copy()
        value[alive] += math.exp(-params.beta * horizon) * _tail_value(x_final[alive], params)
    n = value.size
    mean = float(np.mean(value))
    se = float(np.std(value, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    n_ruin = int(ruined.sum())
    return SimEstimate(
        mean=mean,
        std_error=se,
        ruin_fraction=n_ruin / n,
        mean_ruin_time=float(np.mean(t_exit[ruined])) if n_ruin else None,
        truncation_fraction=(n - n_ruin) / n,
        n_paths=n,
        horizon=horizon,
        samples=value,
    )


def paired_difference(a: SimEstimate, b: SimEstimate) -> tuple[float, float]:
    """``mean(a - b)`` and its standard error for estimates on common random numbers."""
    if a.samples.size != b.samples.size:
        raise ValueError("paired comparison needs equal path counts")
    d = a.samples - b.samples
    se = float(np.std(d, ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return float(np.mean(d)), se


PERTURBATIONS = ("scale_c", "shift_q", "freeze_q")


def perturb_policy(policy: Policy, kind: str, magnitude: float) -> Policy:
    """Admissible modification of ``policy``.

    ``scale_c`` multiplies c by ``1 + magnitude`` (clipped at 0),
    ``shift_q`` adds ``magnitude`` to q (clipped to [0, 1]),
    ``freeze_q`` replaces q by the constant ``magnitude``.
    """
    if kind not in PERTURBATIONS:
        raise UnknownKind(f"unknown perturbation {kind!r}; expected one of {PERTURBATIONS}")
    m = float(magnitude)
    tag = f"{policy.descriptor} + {kind}:{m:g}"
    if kind == "scale_c":
        if m < -1.0:
            raise ValueError("scale_c magnitude must be >= -1")
        return Policy(q=policy.q, c=lambda x: np.maximum(policy.c(x) * (1.0 + m), 0.0), descriptor=tag)
    if kind == "shift_q":
        return Policy(q=lambda x: np.clip(policy.q(x) + m, 0.0, 1.0), c=policy.c, descriptor=tag)
    if not 0.0 <= m <= 1.0:
        raise ValueError("freeze_q level must lie in [0, 1]")
    return Policy(q=lambda x: np.full(np.shape(x), m), c=policy.c, descriptor=tag)
