"""Deterministic survival curves: occupancy propagation and the survival recurrence.

Two independent routes compute S(t):

* :func:`survival_exact` pushes the full occupation vector N_k(t) through
  the jump rule and removes what lands on the trap.  It is exact for any
  non-decreasing trajectory.
* :func:`survival_recurrence` evaluates
  ``S(t) = S(t-1) - q**x_T(t) * (1-q) * S(t - x_T(t) - 1)``.  For a static
  trap it reproduces the propagation result; for a moving trap it is an
  approximation whose error is an observable in its own right.

Absorption convention: a walker is absorbed at tick t iff x(t) >= x_T(t),
with both the step and the trap update applied first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
import gmpy2
from scipy.optimize import brentq

from .core import (
    DEFAULT_RATIO,
    DomainError,
    OccupancyState,
    SurvivalSeries,
    TrapTrajectory,
    check_q,
    checkpoint_grid,
    require_valid,
    trajectory_position,
)

UNDERFLOW = 1e-300
# the multiprecision recurrence costs ~1 us per tick
MP_AUTO_LIMIT = 1_000_000


@dataclass(frozen=True)
class PropagationConfig:
    q: float
    traj: TrapTrajectory
    t_max: int
    checkpoints: str = "auto"
    ratio: float = DEFAULT_RATIO

    def __post_init__(self):
        check_q(self.q)
        if self.t_max < 1:
            raise DomainError("t_max must be at least 1")
        if self.checkpoints == "log" and not self.ratio > 1:
            raise DomainError("log-spaced checkpoints need ratio > 1")

    def grid(self) -> np.ndarray:
        return checkpoint_grid(self.t_max, self.checkpoints, self.ratio)

    def params(self) -> dict:
        return {
            "q": self.q,
            "trajectory": self.traj.label,
            "t_max": self.t_max,
            "checkpoints": self.checkpoints,
            "ratio": self.ratio,
        }


def propagate_step(state: OccupancyState, q: float, traj: TrapTrajectory) -> tuple[OccupancyState, float]:
    """Advance the occupation vector by one tick.

    Returns the new state and the mass ``d`` absorbed on this tick.
    """
    q = check_q(q)
    x_old = len(state.mass)
    x_new = trajectory_position(traj, state.t + 1)
    if x_new < x_old:
        raise DomainError(f"trap moved toward the walkers at t={state.t + 1}")
    s_prev = state.survival
    # walkers on sites >= x_new - 1 that step right hit the trap
    d = q * math.fsum(state.mass[max(x_new - 1, 0):])
    mass = np.zeros(x_new)
    omq_hi = 1.0 - q
    mass[0] = omq_hi * s_prev + ((1.0 - omq_hi) - q) * s_prev
    upto = min(x_new, x_old + 1)
    mass[1:upto] = q * state.mass[: upto - 1]
    return OccupancyState(state.t + 1, mass, state.absorbed + d), d


@nb.njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@nb.njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    c = 134217729.0 * a
    ah = c - (c - a)
    al = a - ah
    c = 134217729.0 * b
    bh = c - (c - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@nb.njit(cache=True, inline="always")
def _dd_add(ahi, alo, bhi, blo):
    s, e = _two_sum(ahi, bhi)
    e += alo + blo
    hi = s + e
    return hi, e - (hi - s)


@nb.njit(cache=True, inline="always")
def _dd_mul(ahi, alo, bhi, blo):
    p, e = _two_prod(ahi, bhi)
    e += ahi * blo + alo * bhi
    hi = p + e
    return hi, e - (hi - p)


@nb.njit(cache=True)
def _propagate_kernel(q, pos, grid, out_s, out_abs):
    """Propagate to pos.size-1 ticks, writing S and absorbed mass at grid ticks.

    All mass is carried in double-double (hi, lo) form, so accumulated
    rounding stays near 1e-30 per tick instead of drifting by ~eps per tick.
    Returns (grid points written, last tick reached, worst |S + absorbed - 1|
    at a checkpoint).
    """
    t_max = pos.size - 1
    n_sites = pos[t_max] + 1
    hi = np.zeros(n_sites)
    lo = np.zeros(n_sites)
    x = pos[0]
    hi[0] = 1.0
    s_hi, s_lo = 1.0, 0.0
    a_hi, a_lo = 0.0, 0.0
    # 1-q exactly as hi+lo; fl(1-q) alone is biased when q < 1/2
    omq_hi = 1.0 - q
    omq_lo = (1.0 - omq_hi) - q
    worst = 0.0
    gi = 0
    if grid[0] == 0:
        out_s[0] = 1.0
        out_abs[0] = 0.0
        gi = 1
    t = 0
    for t in range(1, t_max + 1):
        xn = pos[t]
        d_hi, d_lo = 0.0, 0.0
        for k in range(xn - 1, x):
            d_hi, d_lo = _dd_add(d_hi, d_lo, hi[k], lo[k])
        d_hi, d_lo = _dd_mul(d_hi, d_lo, q, 0.0)
        upto = min(xn, x + 1)
        for k in range(upto - 1, 0, -1):
            hi[k], lo[k] = _dd_mul(hi[k - 1], lo[k - 1], q, 0.0)
        hi[0], lo[0] = _dd_mul(s_hi, s_lo, omq_hi, omq_lo)
        s_hi, s_lo = 0.0, 0.0
        for k in range(xn):
            s_hi, s_lo = _dd_add(s_hi, s_lo, hi[k], lo[k])
        a_hi, a_lo = _dd_add(a_hi, a_lo, d_hi, d_lo)
        x = xn
        if gi < grid.size and grid[gi] == t:
            out_s[gi] = s_hi
            out_abs[gi] = a_hi
            err = abs((s_hi - 1.0) + a_hi + (s_lo + a_lo))
            if err > worst:
                worst = err
            gi += 1
        if s_hi < 1e-300:
            break
    return gi, t, worst


def survival_exact(cfg: PropagationConfig) -> SurvivalSeries:
    """Exact S(t) by propagating the occupation vector, sampled on ``cfg.grid()``.

    Stops early once S drops below 1e-300; ``meta["stop_tick"]`` records
    where.  ``meta["conservation_error"]`` is the largest
    ``|S + absorbed - 1|`` seen at a checkpoint.
    """
    pos = require_valid(cfg.traj, cfg.t_max)
    grid = cfg.grid()
    out_s = np.empty(grid.size)
    out_abs = np.empty(grid.size)
    n, stop, worst = _propagate_kernel(cfg.q, pos, grid, out_s, out_abs)
    meta = {
        "method": "exact",
        **cfg.params(),
        "stop_tick": int(stop),
        "underflow": bool(stop < cfg.t_max or (n < grid.size)),
        "conservation_error": float(worst),
    }
    series = SurvivalSeries(grid[:n], out_s[:n], meta)
    series.absorbed = out_abs[:n]
    return series


# ---------------------------------------------------------------------------
# recurrence
# ---------------------------------------------------------------------------


def first_reachable_tick(pos: np.ndarray) -> int | None:
    """First tick t with t >= x_T(t); survival is exactly 1 before it."""
    t = np.arange(pos.size)
    hit = np.nonzero(t >= pos)[0]
    return int(hit[0]) if hit.size else None


@nb.njit(cache=True)
def _recurrence_kernel(q, pos, t_star, grid, out_s):
    t_max = pos.size - 1
    xmax = pos[t_max]
    w = xmax + 2
    buf = np.ones(w)
    qpow = np.empty(xmax + 1)
    qpow[0] = 1.0
    for k in range(1, xmax + 1):
        qpow[k] = qpow[k - 1] * q
    gi = 0
    s = 1.0
    t = 0
    for t in range(t_max + 1):
        if t < t_star:
            s = 1.0
        elif t == t_star:
            s = 1.0 - qpow[pos[t]]
        else:
            x = pos[t]
            j = t - x - 1
            sj = 1.0 if j < 0 else buf[j % w]
            s = s - qpow[x] * (1.0 - q) * sj
        buf[t % w] = s
        if gi < grid.size and grid[gi] == t:
            out_s[gi] = s
            gi += 1
        if s < 1e-300:
            break
    return gi, t


def _recurrence_multiprecision(q: float, pos: np.ndarray, t_star: int, grid: np.ndarray, bits: int):
    """Evaluate the recurrence with ``bits``-bit binary floats (MPFR).

    All characteristic roots lie inside the unit disc, so the absolute error
    stays below about t * 2**-bits.  Relative to S >= 1e-300 that costs at
    most ~1000 bits, which the default 1280 bits absorbs with room to spare.
    """
    t_max = pos.size - 1
    xmax = int(pos[t_max])
    w = xmax + 2
    out = np.empty(grid.size)
    grid_list = grid.tolist()
    gi = 0
    t = 0
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        one = gmpy2.mpfr(1)
        qm = gmpy2.mpfr(q)
        omq = one - qm
        qpow = [one]
        for _ in range(xmax):
            qpow.append(qpow[-1] * qm)
        coef = [qp * omq for qp in qpow]
        buf = [one] * w
        s = one
        for t in range(t_max + 1):
            if t < t_star:
                s = one
            elif t == t_star:
                s = one - qpow[int(pos[t])]
            else:
                x = int(pos[t])
                j = t - x - 1
                s = s - coef[x] * (one if j < 0 else buf[j % w])
            buf[t % w] = s
            sf = float(s)
            if gi < len(grid_list) and grid_list[gi] == t:
                out[gi] = sf
                gi += 1
            if sf < UNDERFLOW:
                break
    return gi, t, out


def survival_recurrence(cfg: PropagationConfig, arithmetic: str = "auto", bits: int = 1280) -> SurvivalSeries:
    """S(t) from the survival recurrence seeded with S(t*) = 1 - q**x_T(t*).

    ``arithmetic`` is ``"float"`` (numba, fast), ``"mp"`` (``bits``-bit MPFR,
    then one rounding to double) or ``"auto"`` (mp up to t_max = 10**6).  The
    float route is unstable for q > x_T/(x_T+1): the characteristic
    polynomial always has the root q, which is absent from the true solution
    but gets excited by rounding noise.
    """
    pos = require_valid(cfg.traj, cfg.t_max)
    grid = cfg.grid()
    t_star = first_reachable_tick(pos)
    if arithmetic == "auto":
        arithmetic = "mp" if cfg.t_max <= MP_AUTO_LIMIT else "float"
    if t_star is None:
        n, stop, out = grid.size, cfg.t_max, np.ones(grid.size)
    elif arithmetic == "float":
        out = np.empty(grid.size)
        n, stop = _recurrence_kernel(cfg.q, pos, t_star, grid, out)
    elif arithmetic == "mp":
        n, stop, out = _recurrence_multiprecision(cfg.q, pos, t_star, grid, bits)
    else:
        raise DomainError(f"unknown arithmetic {arithmetic!r}")
    meta = {
        "method": "recurrence",
        **cfg.params(),
        "arithmetic": arithmetic,
        "t_star": t_star,
        "stop_tick": int(stop),
    }
    return SurvivalSeries(grid[:n], out[:n], meta)


def decay_rate_static(q: float, x_trap: int) -> float:
    """Exact asymptotic decay rate (per tick) for a trap fixed at ``x_trap``.

    The static recurrence has characteristic polynomial
    ``f(l) = l**(x+1) - l**x + q**x (1-q)``.  It has exactly two positive
    roots, one of which is always ``q`` and carries no weight in S(t).  The
    rate is ``-ln`` of the other root, which sits on the far side of the
    minimum ``m = x/(x+1)`` from ``q`` (both coincide when q = m).
    """
    q = check_q(q)
    if int(x_trap) != x_trap or x_trap < 1:
        raise DomainError("trap position must be a positive integer")
    x = int(x_trap)
    c = q**x * (1.0 - q)
    m = x / (x + 1.0)

    if math.isclose(q, m, rel_tol=1e-13):
        return -math.log(m)
    tol = dict(xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    if q > m:
        root = brentq(lambda lam: lam**x * (lam - 1.0) + c, 0.0, m, **tol)
        return -math.log(root)
    # root near 1: solve for u = 1 - lambda to keep relative precision when c is tiny
    u = brentq(lambda u: c - u * math.exp(x * math.log1p(-u)), 0.0, 1.0 - m, **tol)
    return -math.log1p(-u)
