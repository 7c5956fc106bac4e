"""Ordinary biased +/-1 walk with a static or constant-velocity trap.

This is the no-restart contrast case: exponential decay for a static trap,
and a t**-1/2 tail when the trap recedes at the drift velocity 2q-1.
There is no exact engine here since the walk is unbounded to the left.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .core import ConstantVelocityTrap, DomainError, StaticTrap, TrapTrajectory, check_q, require_valid
from .montecarlo import McConfig, McResult, run_streams, tally
from .rng import bernoulli_threshold, keyed_state, next_u64, seed_word


class OrdinaryWalkConfig(McConfig):
    """:class:`McConfig` restricted to static and constant-velocity traps."""

    def __post_init__(self):
        super().__post_init__()
        if not isinstance(self.traj, (StaticTrap, ConstantVelocityTrap)):
            raise DomainError("ordinary walk supports static and constant-velocity traps only")


def drift_velocity(q: float) -> float:
    return 2.0 * check_q(q) - 1.0


def rate_candidates(q: float) -> dict[str, float]:
    """Both readings of the biased-walk decay rate.

    ``"literal"`` is 2*sqrt(q(1-q)) and ``"log_form"`` is -ln(2*sqrt(q(1-q))).
    Only the latter vanishes at q = 1/2; measured rates are reported against both.
    """
    r = 2.0 * math.sqrt(check_q(q) * (1.0 - q))
    return {"literal": r, "log_form": -math.log(r)}


@nb.njit(cache=True, nogil=True)
def _ordinary_block(thresh, pos, seed, stream, lo, hi, out):
    t_max = pos.size - 1
    for w in range(lo, hi):
        st = keyed_state(seed, stream, w)
        x = 0
        hit = t_max + 1
        for t in range(1, t_max + 1):
            if next_u64(st) < thresh:
                x += 1
                if x >= pos[t]:
                    hit = t
                    break
            else:
                x -= 1
        out[w - lo] = hit


@nb.njit(cache=True)
def _free_positions(thresh, t, seed, n, out):
    for w in range(n):
        st = keyed_state(seed, np.uint64(0), w)
        x = 0
        for _ in range(t):
            if next_u64(st) < thresh:
                x += 1
            else:
                x -= 1
        out[w] = x


def simulate_ordinary_walker(cfg: OrdinaryWalkConfig, stream: int = 0, walker: int = 0) -> int | None:
    """Absorption tick of one walker (key ``(cfg.seed, stream, walker)``), or None."""
    pos = require_valid(cfg.traj, cfg.t_max)
    out = np.empty(1, dtype=np.int64)
    _ordinary_block(bernoulli_threshold(cfg.q), pos, seed_word(cfg.seed), np.uint64(stream),
                    walker, walker + 1, out)
    return None if out[0] > cfg.t_max else int(out[0])


def survival_mc_ordinary(cfg: OrdinaryWalkConfig, workers: int = 1, keep_ticks: bool = False) -> McResult:
    cfg.check_budget()
    pos = require_valid(cfg.traj, cfg.t_max)
    ticks = run_streams(cfg, _ordinary_block, (bernoulli_threshold(cfg.q), pos), workers)
    return tally(ticks, cfg, "mc-ordinary", keep_ticks)


def free_positions(q: float, t: int, n_walkers: int, seed: int = 0) -> np.ndarray:
    """Positions after ``t`` ticks of untrapped ordinary walkers (for drift checks)."""
    out = np.empty(n_walkers, dtype=np.int64)
    _free_positions(bernoulli_threshold(check_q(q)), int(t), seed_word(seed), n_walkers, out)
    return out


def matched_trap(q: float, x0: int = 1) -> TrapTrajectory:
    """Constant-velocity trap moving at the drift velocity 2q-1."""
    from fractions import Fraction

    v = 2 * Fraction(q).limit_denominator(10**6) - 1
    if v <= 0:
        raise DomainError("matched trap needs q > 1/2")
    return ConstantVelocityTrap(x0, v)
