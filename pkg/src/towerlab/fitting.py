"""Shared log-log fitting helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LogLogFit", "loglog_slope"]


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r2: float
    residuals: np.ndarray


def loglog_slope(xs, ys, window: tuple[float, float] | None = None) -> LogLogFit:
    """Least squares on (log x, log y); ys must be positive in the window."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if window is not None:
        keep = (xs >= window[0]) & (xs <= window[1])
        xs, ys = xs[keep], ys[keep]
    if len(xs) < 8:
        raise ValueError("need at least 8 points in the fit window")
    if np.any(ys <= 0):
        raise ValueError("nonpositive values cannot be fit on a log scale")
    L, Y = np.log(xs), np.log(ys)
    if np.ptp(L) == 0:
        raise ValueError("degenerate fit window (zero variance)")
    A = np.vstack([L, np.ones_like(L)]).T
    sol, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    slope, intercept = float(sol[0]), float(sol[1])
    fitted = A @ sol
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    ss_res = float(np.sum((Y - fitted) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return LogLogFit(slope=slope, intercept=intercept, r2=r2, residuals=Y - fitted)
