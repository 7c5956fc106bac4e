"""Decay-law extraction from survival series.

Fits are ordinary (or, with standard errors present, inverse-variance
weighted) least squares of ``ln s`` against ``ln t`` (power law) or ``t``
(exponential).
"""
from __future__ import annotations

import math

import numpy as np

from .core import FitResult, SurvivalSeries

MIN_POINTS = 8


class FitWindowError(ValueError):
    pass


def _window_points(series: SurvivalSeries, window):
    t_lo, t_hi = window
    if not t_lo < t_hi:
        raise FitWindowError(f"window must satisfy t_lo < t_hi, got {window}")
    m = (series.t >= t_lo) & (series.t <= t_hi)
    t = series.t[m].astype(np.float64)
    s = series.s[m]
    if t.size < MIN_POINTS:
        raise FitWindowError(
            f"window [{t_lo:g}, {t_hi:g}] holds {t.size} checkpoints, need {MIN_POINTS}"
        )
    zero = np.nonzero(s <= 0)[0]
    if zero.size:
        raise FitWindowError(f"survival is zero at t={int(t[zero[0]])} inside the fit window")
    w = None
    if series.stderr is not None:
        se = series.stderr[m]
        # variance of ln s is (se/s)^2; censor-free points with se=0 get the max weight
        var = (se / s) ** 2
        pos = var > 0
        if pos.any():
            floor = var[pos].min()
            w = 1.0 / np.where(pos, var, floor)
    return t, s, w


def _line_fit(x, y, w):
    """Weighted LS line; returns slope, intercept, slope stderr, RMS residual."""
    if w is None:
        w = np.ones_like(x)
    w = w / w.sum()
    xm = np.dot(w, x)
    ym = np.dot(w, y)
    dx = x - xm
    sxx = np.dot(w, dx * dx)
    slope = np.dot(w, dx * (y - ym)) / sxx
    intercept = ym - slope * xm
    r = y - (intercept + slope * x)
    rms = math.sqrt(float(np.dot(w, r * r)))
    n = x.size
    # effective-sample standard error of the slope
    n_eff = 1.0 / np.dot(w, w)
    dof = max(n_eff - 2.0, 1.0)
    se = math.sqrt(float(np.dot(w, r * r)) * n_eff / dof / (sxx * n_eff))
    return float(slope), float(intercept), se, rms, n


def fit_power_law(series: SurvivalSeries, window) -> FitResult:
    """Fit ``s = amplitude * t**(-exponent)`` over checkpoints inside ``window``."""
    t, s, w = _window_points(series, window)
    slope, icpt, se, rms, n = _line_fit(np.log(t), np.log(s), w)
    return FitResult("power_law", -slope, math.exp(icpt), tuple(map(float, window)), rms, se, n)


def fit_exponential(series: SurvivalSeries, window) -> FitResult:
    """Fit ``s = amplitude * exp(-rate * t)`` over checkpoints inside ``window``."""
    t, s, w = _window_points(series, window)
    # centre t so the intercept is not lost to cancellation at large t
    t0 = float(t[0])
    slope, icpt, se, rms, n = _line_fit(t - t0, np.log(s), w)
    amp = math.exp(icpt + slope * t0) if icpt + slope * t0 > -700 else 0.0
    return FitResult("exponential", -slope, amp, tuple(map(float, window)), rms, se, n)


def _log_survival_at(series: SurvivalSeries, t: float) -> float:
    ts = series.t
    if t < ts[0] or t > ts[-1]:
        raise FitWindowError(f"series does not cover t={t:g}")
    i = int(np.searchsorted(ts, t))
    if ts[i] == t:
        return math.log(series.s[i])
    t0, t1 = ts[i - 1], ts[i]
    l0, l1 = math.log(series.s[i - 1]), math.log(series.s[i])
    if t0 <= 0:
        # linear in t on the first interval, log t is undefined at 0
        return l0 + (l1 - l0) * (t - t0) / (t1 - t0)
    u = (math.log(t) - math.log(t0)) / (math.log(t1) - math.log(t0))
    return l0 + u * (l1 - l0)


def local_log_slope(series: SurvivalSeries, t: float) -> float:
    """Doubling estimate ``-(ln S(2t) - ln S(t)) / ln 2`` of the local exponent.

    ``S`` between checkpoints is interpolated linearly in log-log space.
    """
    if t <= 0:
        raise FitWindowError("local slope needs t > 0")
    return -(_log_survival_at(series, 2 * t) - _log_survival_at(series, t)) / math.log(2.0)


def mean_local_slope(series: SurvivalSeries, t_lo: float, t_hi: float, n: int = 64) -> float:
    """Average of :func:`local_log_slope` over ``n`` log-spaced points in [t_lo, t_hi]."""
    ts = np.geomspace(t_lo, t_hi, n)
    return float(np.mean([local_log_slope(series, t) for t in ts]))
