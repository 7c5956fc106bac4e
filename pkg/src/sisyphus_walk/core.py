"""Shared domain types: jump probabilities, trap trajectories, survival series.

Every engine in the package speaks in terms of these objects.  They are
immutable once built, so they can be handed to worker threads freely.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

# Values of a*ln(t)+b closer than this to an integer are treated as that
# integer before rounding, so exact cases like a=1/ln2, t=8 land on 4, not 3.
SNAP_TOL = 1e-9

ROUNDING_RULES = ("floor", "nearest", "ceil")

# Largest t_max for which the default checkpoint grid stores every tick.
DENSE_LIMIT = 100_000
DEFAULT_RATIO = 1.05


class DomainError(ValueError):
    """A parameter lies outside its mathematical domain."""


class TrajectoryRangeError(IndexError):
    """A tabulated trajectory was queried past its last entry."""


class ClampingWarning(UserWarning):
    """A logarithmic trap had to be clipped to position 1 at early ticks."""


def check_q(q: float) -> float:
    """Return ``q`` as a float, raising :class:`DomainError` unless 0 < q < 1."""
    q = float(q)
    if not (0.0 < q < 1.0) or math.isnan(q):
        raise DomainError(f"jump probability q must lie in (0, 1), got {q!r}")
    return q


# ---------------------------------------------------------------------------
# trap trajectories
# ---------------------------------------------------------------------------


class TrapTrajectory:
    """Base class for integer, non-decreasing trap positions x_T(t)."""

    def positions(self, t_max: int) -> np.ndarray:
        """Positions for ticks ``0..t_max`` inclusive, as an int64 array."""
        raise NotImplementedError

    def position(self, t: int) -> int:
        return trajectory_position(self, t)

    @property
    def label(self) -> str:
        raise NotImplementedError

    @property
    def is_static(self) -> bool:
        return False


@dataclass(frozen=True)
class StaticTrap(TrapTrajectory):
    x0: int

    def __post_init__(self):
        if int(self.x0) != self.x0 or self.x0 < 1:
            raise DomainError(f"static trap position must be a positive integer, got {self.x0!r}")

    def positions(self, t_max: int) -> np.ndarray:
        return np.full(t_max + 1, self.x0, dtype=np.int64)

    @property
    def label(self) -> str:
        return f"static:{self.x0}"

    @property
    def is_static(self) -> bool:
        return True


@dataclass(frozen=True)
class ConstantVelocityTrap(TrapTrajectory):
    """Trap at ``x0 + floor(v*t)`` with a rational velocity ``v``."""

    x0: int
    v: Fraction

    def __post_init__(self):
        if int(self.x0) != self.x0 or self.x0 < 1:
            raise DomainError(f"trap start must be a positive integer, got {self.x0!r}")
        v = Fraction(self.v)
        if v < 0:
            raise DomainError("trap velocity must be non-negative")
        object.__setattr__(self, "v", v)

    def positions(self, t_max: int) -> np.ndarray:
        t = np.arange(t_max + 1, dtype=np.int64)
        return self.x0 + (self.v.numerator * t) // self.v.denominator

    @property
    def label(self) -> str:
        return f"cv:{self.x0}:{self.v.numerator}/{self.v.denominator}"

    @property
    def is_static(self) -> bool:
        return self.v == 0


@dataclass(frozen=True)
class LogarithmicTrap(TrapTrajectory):
    """Trap receding as ``a*ln(t) + b``, rounded onto the lattice.

    For t >= 1 the position is ``max(1, round(a*ln t + b))`` with a running
    maximum for monotonicity; tick 0 reuses the tick-1 position.  ``a`` may be
    any positive number, not only the value that produces a power law.
    """

    a: float
    b: float
    rounding: str = "nearest"

    def __post_init__(self):
        if not (self.a > 0) or not math.isfinite(self.a):
            raise DomainError(f"logarithmic trap needs a > 0, got {self.a!r}")
        if not math.isfinite(self.b):
            raise DomainError(f"logarithmic trap offset must be finite, got {self.b!r}")
        if self.rounding not in ROUNDING_RULES:
            raise DomainError(f"rounding must be one of {ROUNDING_RULES}, got {self.rounding!r}")

    def _raw(self, t: np.ndarray) -> np.ndarray:
        raw = self.a * np.log(t.astype(np.float64)) + self.b
        near = np.rint(raw)
        raw = np.where(np.abs(raw - near) < SNAP_TOL, near, raw)
        if self.rounding == "floor":
            return np.floor(raw)
        if self.rounding == "ceil":
            return np.ceil(raw)
        # half-up so ties move the trap away, matching monotone growth
        return np.floor(raw + 0.5)

    def positions(self, t_max: int) -> np.ndarray:
        t = np.arange(1, t_max + 1, dtype=np.int64)
        if t_max == 0:
            t = np.array([1], dtype=np.int64)
        x = np.maximum(self._raw(t), 1.0).astype(np.int64)
        x = np.maximum.accumulate(x)
        return np.concatenate(([x[0]], x))[: t_max + 1]

    @property
    def clamped(self) -> bool:
        """True when the unclipped rule would put the trap below 1 at t=1."""
        return bool(self._raw(np.array([1]))[0] < 1)

    @property
    def label(self) -> str:
        return f"log:a={self.a!r}:b={self.b!r}:{self.rounding}"


@dataclass(frozen=True)
class TableTrap(TrapTrajectory):
    """Explicit positions, entry ``t`` is the trap location at tick ``t``."""

    table: tuple[int, ...]
    name: str = "table"

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(int(x) for x in self.table))
        if not self.table:
            raise DomainError("table trajectory needs at least one entry")

    def positions(self, t_max: int) -> np.ndarray:
        if t_max >= len(self.table):
            raise TrajectoryRangeError(
                f"table trajectory defined for t <= {len(self.table) - 1}, queried t={t_max}"
            )
        return np.asarray(self.table[: t_max + 1], dtype=np.int64)

    @property
    def label(self) -> str:
        return f"table:{self.name}"


@functools.lru_cache(maxsize=8192)
def trajectory_position(traj: TrapTrajectory, t: int) -> int:
    """Lattice trap position at tick ``t``."""
    if t < 0:
        raise DomainError(f"tick must be non-negative, got {t}")
    if isinstance(traj, StaticTrap):
        return traj.x0
    if isinstance(traj, TableTrap):
        if t >= len(traj.table):
            raise TrajectoryRangeError(
                f"table trajectory defined for t <= {len(traj.table) - 1}, queried t={t}"
            )
        return traj.table[t]
    if isinstance(traj, ConstantVelocityTrap):
        return traj.x0 + (traj.v.numerator * t) // traj.v.denominator
    if isinstance(traj, LogarithmicTrap):
        # the running maximum is a no-op for a monotone raw law
        return int(max(1.0, traj._raw(np.array([max(t, 1)]))[0]))
    return int(traj.positions(t)[t])


@dataclass(frozen=True)
class TrajectoryReport:
    ok: bool
    tick: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_trajectory(traj: TrapTrajectory, t_max: int) -> TrajectoryReport:
    """Check positivity, integrality and monotonicity of x_T over [0, t_max].

    Returns a report naming the first offending tick instead of raising.
    """
    if t_max < 1:
        raise DomainError("t_max must be at least 1")
    try:
        x = traj.positions(t_max)
    except TrajectoryRangeError as exc:
        defined = len(traj.table) if isinstance(traj, TableTrap) else 0
        return TrajectoryReport(False, defined, str(exc))
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.integer):
        frac = np.nonzero(x != np.floor(x))[0]
        if frac.size:
            return TrajectoryReport(False, int(frac[0]), "non-integer position")
    bad = np.nonzero(x < 1)[0]
    first_bad = int(bad[0]) if bad.size else None
    dec = np.nonzero(np.diff(x) < 0)[0]
    first_dec = int(dec[0]) + 1 if dec.size else None
    if first_bad is not None and (first_dec is None or first_bad <= first_dec):
        return TrajectoryReport(False, first_bad, "position below 1")
    if first_dec is not None:
        return TrajectoryReport(False, first_dec, "trap moved toward the walkers")
    return TrajectoryReport(True)


def require_valid(traj: TrapTrajectory, t_max: int) -> np.ndarray:
    """Positions for ``0..t_max`` or :class:`DomainError` if the trajectory is invalid."""
    report = validate_trajectory(traj, t_max)
    if not report.ok:
        if isinstance(traj, TableTrap) and report.reason.startswith("table"):
            raise TrajectoryRangeError(report.reason)
        raise DomainError(f"invalid trajectory {traj.label} at t={report.tick}: {report.reason}")
    return traj.positions(t_max)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def checkpoint_grid(t_max: int, checkpoints: str = "auto", ratio: float = DEFAULT_RATIO) -> np.ndarray:
    """Ticks at which a survival series is sampled.

    ``"all"`` keeps every tick; ``"log"`` keeps 0, every rounded power of
    ``ratio`` and ``t_max``; ``"auto"`` picks ``"all"`` up to DENSE_LIMIT.
    """
    if t_max < 1:
        raise DomainError("t_max must be at least 1")
    if checkpoints == "auto":
        checkpoints = "all" if t_max <= DENSE_LIMIT else "log"
    if checkpoints == "all":
        return np.arange(t_max + 1, dtype=np.int64)
    if checkpoints != "log":
        raise DomainError(f"unknown checkpoint rule {checkpoints!r}")
    if not ratio > 1:
        raise DomainError("log-spaced checkpoints need ratio > 1")
    n = int(math.ceil(math.log(t_max) / math.log(ratio))) + 1
    pts = np.rint(ratio ** np.arange(n)).astype(np.int64)
    pts = np.concatenate(([0], pts[pts < t_max], [t_max]))
    return np.unique(pts)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


@dataclass
class SurvivalSeries:
    """Survival probabilities ``s`` sampled at increasing ticks ``t``."""

    t: np.ndarray
    s: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.float64)
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=np.float64)
        if self.t.shape != self.s.shape:
            raise ValueError("t and s must have the same length")

    def __len__(self) -> int:
        return len(self.t)

    def check(self, tol: float = 0.0) -> None:
        """Raise ``ValueError`` if the series breaks its invariants."""
        if len(self.t) and self.t[0] == 0 and self.s[0] != 1.0:
            raise ValueError("survival must start at 1")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("ticks must be strictly increasing")
        if np.any(self.s < 0) or np.any(self.s > 1):
            raise ValueError("survival outside [0, 1]")
        if np.any(np.diff(self.s) > tol):
            raise ValueError("survival increased")

    def at(self, t: int) -> float:
        i = np.searchsorted(self.t, t)
        if i >= len(self.t) or self.t[i] != t:
            raise KeyError(f"no checkpoint at t={t}")
        return float(self.s[i])

    def window(self, t_lo: float, t_hi: float) -> SurvivalSeries:
        m = (self.t >= t_lo) & (self.t <= t_hi)
        se = None if self.stderr is None else self.stderr[m]
        return SurvivalSeries(self.t[m], self.s[m], dict(self.meta), se)


@dataclass
class OccupancyState:
    """Probability mass on surviving sites ``0..x_T(t)-1`` at tick ``t``."""

    t: int
    mass: np.ndarray
    absorbed: float = 0.0

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)

    @classmethod
    def initial(cls, x_trap: int) -> OccupancyState:
        mass = np.zeros(x_trap)
        mass[0] = 1.0
        return cls(0, mass, 0.0)

    @property
    def survival(self) -> float:
        return float(math.fsum(self.mass))

    def conservation_error(self) -> float:
        return abs(self.survival + self.absorbed - 1.0)


@dataclass(frozen=True)
class PowerLawDesign:
    """A target exponent together with the log-trap that produces it."""

    q: float
    beta: float
    a: float
    b: float

    def __post_init__(self):
        check_q(self.q)
        if not self.beta > 0:
            raise DomainError("beta must be positive")
        if not math.isclose(self.a, 1.0 / math.log(1.0 / self.q), rel_tol=1e-14):
            raise DomainError("a must equal 1/ln(1/q)")
        if not math.isclose((1 - self.q) * self.q ** self.b, self.beta, rel_tol=1e-12):
            raise DomainError("b inconsistent with beta")

    def trajectory(self, rounding: str = "nearest") -> LogarithmicTrap:
        return LogarithmicTrap(self.a, self.b, rounding)


@dataclass(frozen=True)
class FitResult:
    """Outcome of a straight-line fit in log space.

    ``exponent_or_rate`` is beta for power laws and gamma for exponentials;
    ``stderr`` is the standard error of that slope, and ``band`` twice it.
    """

    kind: str
    exponent_or_rate: float
    amplitude: float
    window: tuple[float, float]
    residual: float
    stderr: float = 0.0
    n_points: int = 0

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise ValueError("fit window must have t_lo < t_hi")
        if self.residual < 0:
            raise ValueError("residual must be non-negative")

    @property
    def band(self) -> float:
        return 2.0 * self.stderr

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "exponent_or_rate": self.exponent_or_rate,
            "amplitude": self.amplitude,
            "window": list(self.window),
            "residual": self.residual,
            "stderr": self.stderr,
            "band": self.band,
            "n_points": self.n_points,
        }


def warn_if_clamped(traj: TrapTrajectory) -> None:
    if isinstance(traj, LogarithmicTrap) and traj.clamped:
        warnings.warn(
            f"trap {traj.label} is clipped to position 1 at early ticks (b={traj.b:.6g})",
            ClampingWarning,
            stacklevel=3,
        )
