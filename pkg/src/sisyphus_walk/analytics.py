"""Closed-form predictions for Sisyphus walkers and receding traps."""
from __future__ import annotations

import math
import warnings

from .core import ClampingWarning, DomainError, LogarithmicTrap, PowerLawDesign, check_q


def gamma_sisyphus(q: float, x_trap: int) -> float:
    """Large-distance decay rate ``-ln(1 - q**x (1-q))`` for a static trap.

    Asymptotic in ``x_trap``; :func:`sisyphus_walk.exact.decay_rate_static`
    gives the exact rate for any distance.
    """
    q = check_q(q)
    if x_trap < 1:
        raise DomainError("trap position must be at least 1")
    return -math.log1p(-(q**x_trap) * (1.0 - q))


def predicted_beta(q: float, b: float) -> float:
    """Tail exponent ``(1-q) * q**b`` of a trap at ``a*ln t + b`` with a = 1/ln(1/q)."""
    q = check_q(q)
    return (1.0 - q) * q**b


def design_log_trajectory(q: float, beta: float, rounding: str = "nearest") -> PowerLawDesign:
    """Trap law ``a*ln t + b`` whose survival tail decays as ``t**-beta``.

    Any ``beta > 0`` is accepted.  For ``beta >= 1-q`` the offset ``b`` is
    not positive and the lattice trap is clipped at position 1 for early
    ticks; a :class:`ClampingWarning` says so.
    """
    q = check_q(q)
    if not beta > 0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    a = 1.0 / math.log(1.0 / q)
    b = math.log(beta / (1.0 - q)) / math.log(q) + 0.0  # no negative zero
    design = PowerLawDesign(q, beta, a, b)
    traj = LogarithmicTrap(a, b, rounding)
    if traj.clamped:
        warnings.warn(
            f"b={b:.6g}: trap clipped to position 1 at early ticks (beta={beta:g} vs 1-q={1 - q:g})",
            ClampingWarning,
            stacklevel=2,
        )
    return design


def trap_velocity(design, t: float) -> float:
    """Continuous trap speed ``a / t`` in sites per tick."""
    if t < 1:
        raise DomainError("trap velocity is defined for t >= 1")
    return design.a / t


def _ab(design) -> tuple[float, float]:
    if isinstance(design, tuple):
        return float(design[0]), float(design[1])
    return design.a, design.b


def power_law_balance_residual(q: float, design, beta: float, t: float) -> float:
    """Mismatch left when ``S = alpha t**-beta`` is put into the survival recurrence.

    Evaluates ``1 - (1-1/t)**-beta + q**x (1-q) (1-(x+1)/t)**-beta`` with the
    continuous trap ``x = a ln t + b``.  ``design`` is a
    :class:`PowerLawDesign` or an ``(a, b)`` pair, so perturbed trajectories
    can be probed.  With the matched ``(a, b)`` the residual is
    O(ln t / t**2); a wrong ``b`` leaves an O(1/t) term.
    """
    q = check_q(q)
    a, b = _ab(design)
    x = a * math.log(t) + b
    if t <= x + 1:
        raise DomainError(f"balance residual needs t > x_T(t) + 1, got t={t}, x_T={x:.4g}")
    # 1 - (1-1/t)**-beta, written to avoid cancellation
    head = -math.expm1(-beta * math.log1p(-1.0 / t))
    tail = q**x * (1.0 - q) * math.exp(-beta * math.log1p(-(x + 1.0) / t))
    return head + tail


def lattice_beta(q: float, b: float, rounding: str = "nearest") -> float:
    """Tail exponent actually produced by a lattice-rounded matched log trap.

    Rounding makes ``q**x_T`` differ from ``q**(a ln t + b)`` by ``q**-u``,
    where ``u`` is the rounding offset.  Over each factor-1/q stretch of time
    ``u`` is uniform on [0,1) (floor), [-1/2,1/2) (nearest) or (-1,0] (ceil),
    so the exponent is ``predicted_beta(q, b)`` times the mean of ``q**-u``.
    """
    q = check_q(q)
    L = math.log(1.0 / q)
    factor = {
        "floor": (1.0 / q - 1.0) / L,
        "nearest": 2.0 * math.sinh(L / 2.0) / L,
        "ceil": (1.0 - q) / L,
    }
    if rounding not in factor:
        raise DomainError(f"unknown rounding {rounding!r}")
    return predicted_beta(q, b) * factor[rounding]


def absorption_exponent(q: float, a: float) -> float:
    """Power ``p`` in ``q**(a ln t + b) ~ t**-p`` for a general log trap.

    ``p == 1`` gives a power-law tail.  ``p > 1`` makes the total absorption
    summable, so survival levels off at a positive plateau.  ``p < 1`` gives
    a stretched-exponential decay, faster than any power.
    """
    q = check_q(q)
    if not a > 0:
        raise DomainError("a must be positive")
    return a * math.log(1.0 / q)


def regime(q: float, a: float, tol: float = 1e-12) -> str:
    p = absorption_exponent(q, a)
    if abs(p - 1.0) <= tol:
        return "power_law"
    return "plateau" if p > 1.0 else "stretched_exponential"
