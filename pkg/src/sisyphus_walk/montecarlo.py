"""Monte Carlo simulation of individual Sisyphus walkers.

Each walker draws from its own keyed stream (see :mod:`sisyphus_walk.rng`),
so results depend only on ``(seed, n_streams)`` and never on the number of
worker threads.  Walkers are split into ``n_streams`` contiguous blocks and
tallies are merged in stream order.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .core import (
    DEFAULT_RATIO,
    DomainError,
    SurvivalSeries,
    TrapTrajectory,
    check_q,
    checkpoint_grid,
    require_valid,
)
from .rng import bernoulli_threshold, keyed_state, next_u64, next_unit, seed_word

# refuse runs with more than this many walker-ticks unless the caller raises it
DEFAULT_BUDGET = 10**13
NEVER = np.iinfo(np.int64).max


class ResourceError(RuntimeError):
    pass


@dataclass(frozen=True)
class McConfig:
    q: float
    traj: TrapTrajectory
    t_max: int
    n_walkers: int
    seed: int = 0
    n_streams: int = 1
    checkpoints: str = "auto"
    ratio: float = DEFAULT_RATIO
    budget: float = DEFAULT_BUDGET

    def __post_init__(self):
        check_q(self.q)
        if self.t_max < 1:
            raise DomainError("t_max must be at least 1")
        if self.n_walkers < 1:
            raise DomainError("need at least one walker")
        if self.n_streams < 1:
            raise DomainError("need at least one stream")

    def grid(self) -> np.ndarray:
        return checkpoint_grid(self.t_max, self.checkpoints, self.ratio)

    def params(self) -> dict:
        return {
            "q": self.q,
            "trajectory": self.traj.label,
            "t_max": self.t_max,
            "n_walkers": self.n_walkers,
            "seed": int(self.seed),
            "n_streams": self.n_streams,
            "checkpoints": self.checkpoints,
            "ratio": self.ratio,
        }

    def check_budget(self) -> None:
        if self.n_walkers * self.t_max > self.budget:
            raise ResourceError(
                f"n_walkers*t_max = {self.n_walkers * self.t_max:.3g} exceeds the budget "
                f"{self.budget:.3g}; use fewer walkers, a shorter horizon, or raise the budget"
            )

    def stream_bounds(self) -> list[tuple[int, int]]:
        edges = np.linspace(0, self.n_walkers, self.n_streams + 1).astype(np.int64)
        return [(int(edges[i]), int(edges[i + 1])) for i in range(self.n_streams)]


@dataclass
class McResult:
    """Empirical survival with per-checkpoint binomial standard errors.

    ``histogram[i]`` counts absorptions in ``(t[i-1], t[i]]``; ``censored``
    walkers were still alive at ``t_max``.
    """

    series: SurvivalSeries
    histogram: np.ndarray
    censored: int
    ticks: np.ndarray | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def first_hit_offsets(pos):
    """h[t0] = smallest j >= 1 with j >= x_T(t0 + j) and t0 + j <= t_max.

    A run that starts from the origin at t0 and goes right at least h[t0]
    times is absorbed at t0 + h[t0]; NEVER marks starts with no such j.
    """
    t_max = pos.size - 1
    h = np.full(t_max + 1, NEVER, dtype=np.int64)
    for t0 in range(t_max + 1):
        for j in range(1, t_max - t0 + 1):
            if j >= pos[t0 + j]:
                h[t0] = j
                break
        else:
            # no later start can do better: the remainder is NEVER
            break
    return h


@nb.njit(cache=True, inline="always")
def _step_walker(thresh, pos, t_max, st):
    x = 0
    for t in range(1, t_max + 1):
        if next_u64(st) < thresh:
            x += 1
            if x >= pos[t]:
                return t
        else:
            x = 0
    return t_max + 1


@nb.njit(cache=True, inline="always")
def _run_walker(log_q, h, t_max, st):
    t0 = 0
    while t0 <= t_max:
        hit = h[t0]
        if hit == NEVER:
            break
        # right-run length before the next reset: P(K >= k) = q**k
        k = math.floor(math.log(next_unit(st)) / log_q)
        if k >= hit:
            return t0 + hit
        t0 += k + 1
    return t_max + 1


@nb.njit(cache=True, nogil=True)
def _naive_block(thresh, pos, seed, stream, lo, hi, out):
    t_max = pos.size - 1
    for w in range(lo, hi):
        st = keyed_state(seed, stream, w)
        out[w - lo] = _step_walker(thresh, pos, t_max, st)


@nb.njit(cache=True, nogil=True)
def _fast_block(log_q, h, seed, stream, lo, hi, out):
    t_max = h.size - 1
    for w in range(lo, hi):
        st = keyed_state(seed, stream, w)
        out[w - lo] = _run_walker(log_q, h, t_max, st)


# ---------------------------------------------------------------------------
# single-walker entry points
# ---------------------------------------------------------------------------


def simulate_walker(q: float, traj: TrapTrajectory, t_max: int, seed: int = 0, stream: int = 0,
                    walker: int = 0) -> int | None:
    """Step one walker tick by tick; absorption tick, or None if it survives t_max."""
    q = check_q(q)
    pos = require_valid(traj, t_max)
    out = np.empty(1, dtype=np.int64)
    _naive_block(bernoulli_threshold(q), pos, seed_word(seed), stream, walker, walker + 1, out)
    return None if out[0] > t_max else int(out[0])


def fast_run_sampler(q: float, traj: TrapTrajectory, t_max: int, seed: int = 0, stream: int = 0,
                     walker: int = 0) -> int | None:
    """Same law as :func:`simulate_walker`, drawing whole right-runs at once."""
    q = check_q(q)
    pos = require_valid(traj, t_max)
    out = np.empty(1, dtype=np.int64)
    _fast_block(math.log(q), first_hit_offsets(pos), seed_word(seed), stream, walker, walker + 1, out)
    return None if out[0] > t_max else int(out[0])


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


def run_streams(cfg: McConfig, block, args: tuple, workers: int = 1) -> np.ndarray:
    """Absorption ticks for every walker; ``t_max + 1`` means censored.

    ``block(*args, seed, stream, lo, hi, out)`` fills ``out[w - lo]`` for the
    walkers ``w = lo..hi-1`` of one stream, numbered from 0 within the
    stream.  Streams run on up to ``workers`` threads.
    """
    ticks = np.empty(cfg.n_walkers, dtype=np.int64)
    seed = seed_word(cfg.seed)

    def one(i_bounds):
        i, (lo, hi) = i_bounds
        block(*args, seed, np.uint64(i), 0, hi - lo, ticks[lo:hi])

    bounds = list(enumerate(cfg.stream_bounds()))
    if workers <= 1:
        for item in bounds:
            one(item)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, bounds))
    return ticks


def tally(ticks: np.ndarray, cfg: McConfig, method: str, keep_ticks: bool = True) -> McResult:
    grid = cfg.grid()
    n = cfg.n_walkers
    counts = np.bincount(ticks, minlength=cfg.t_max + 2)
    absorbed_by = np.cumsum(counts)[grid]
    alive = n - absorbed_by
    s = alive / n
    stderr = np.sqrt(s * (1.0 - s) / n)
    hist = np.diff(np.concatenate(([0], absorbed_by)))
    meta = {"method": method, **cfg.params()}
    series = SurvivalSeries(grid, s, meta, stderr)
    return McResult(series, hist, int(alive[-1]), ticks if keep_ticks else None)


def survival_mc(cfg: McConfig, sampler: str = "fast", workers: int = 1, keep_ticks: bool = True) -> McResult:
    """Empirical survival of ``cfg.n_walkers`` Sisyphus walkers.

    ``sampler`` is ``"fast"`` (run-length jumps) or ``"naive"`` (one draw per
    tick).  Output is identical for any ``workers``.
    """
    cfg.check_budget()
    pos = require_valid(cfg.traj, cfg.t_max)
    if sampler == "fast":
        ticks = run_streams(cfg, _fast_block, (math.log(cfg.q), first_hit_offsets(pos)), workers)
    elif sampler == "naive":
        ticks = run_streams(cfg, _naive_block, (bernoulli_threshold(cfg.q), pos), workers)
    else:
        raise DomainError(f"unknown sampler {sampler!r}")
    return tally(ticks, cfg, f"mc-{sampler}", keep_ticks)
