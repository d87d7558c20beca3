"""Regret accounting and log-log rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPoints

N_CHECKPOINTS = 32


def geometric_checkpoints(start, stop, n=N_CHECKPOINTS):
    """Up to ``n`` distinct integers spaced geometrically over [start, stop]."""
    start = max(int(start), 1)
    stop = int(stop)
    if stop < start:
        return np.zeros(0, dtype=int)
    pts = np.unique(np.round(np.geomspace(start, stop, n)).astype(int))
    return pts[(pts >= start) & (pts <= stop)]


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    shift: float
    n_points: int


def fit_loglog(x, y, shift_nonpositive=True):
    """Least-squares slope of log y against log x.

    When ``y`` has non-positive entries and ``shift_nonpositive`` is set, the
    series is shifted by -min(y) + 1 first; the shift is reported.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 8:
        raise InsufficientPoints(f"need at least 8 checkpoints, got {len(x)}")
    shift = 0.0
    if np.any(y <= 0):
        if not shift_nonpositive:
            raise ValueError("non-positive values in a log-log fit")
        shift = float(-np.min(y) + 1.0)
        y = y + shift
    lx, ly = np.log(x), np.log(y)
    X = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    resid = ly - X @ coef
    dof = len(x) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    return SlopeFit(float(coef[0]), float(np.sqrt(cov[0, 0])), float(coef[1]), shift, len(x))


def fit_regret_slope(cum_regret, window=None, n_checkpoints=N_CHECKPOINTS):
    """Slope of log cumulative regret against log t.

    ``cum_regret[k]`` is the regret accumulated over the first k+1 steps of the
    segment; ``window=(lo, hi)`` restricts the fit to steps lo..hi (1-based,
    inclusive) and defaults to the whole series.
    """
    cum = np.asarray(cum_regret, float)
    lo, hi = (1, len(cum)) if window is None else window
    pts = geometric_checkpoints(lo, min(hi, len(cum)), n_checkpoints)
    return fit_loglog(pts, cum[pts - 1])


@dataclass(frozen=True)
class Regret:
    series: np.ndarray
    total: float
    fit: SlopeFit | None
    start: int


def regret(costs, J_star, start=0, n_checkpoints=N_CHECKPOINTS):
    """Cumulative regret sum_t (c_t - J*) and a rate fit after ``start``.

    ``costs`` is an array or a RunTrace.  The fit uses the regret accumulated
    from ``start`` on, against the number of steps since ``start``; it is None
    when the segment is too short for 8 checkpoints.
    """
    c = np.asarray(getattr(costs, "cost", costs), float)
    series = np.cumsum(c - J_star)
    fit = None
    seg = c[start:] - J_star
    if len(seg):
        try:
            fit = fit_regret_slope(np.cumsum(seg), n_checkpoints=n_checkpoints)
        except InsufficientPoints:
            fit = None
    total = float(series[-1]) if len(series) else 0.0
    return Regret(series, total, fit, start)
