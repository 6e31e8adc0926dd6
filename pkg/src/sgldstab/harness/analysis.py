"""Curve fits used by the experiment verdicts."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats


def fit_line(x, y, level: float = 0.95) -> dict:
    """Ordinary least squares with a two-sided confidence interval on the slope."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least three points for a line fit")
    res = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + level / 2.0, x.size - 2)
    half = q * res.stderr
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "slope_ci": [float(res.slope - half), float(res.slope + half)], "points": int(x.size)}


def detect_plateau(t, mean, sem, frac: float = 0.25) -> dict:
    """Flatness test on the final ``frac`` of a curve.

    A plateau needs a slope confidence interval containing 0 and a fitted change
    across the window no larger than twice the average standard error.
    """
    t = np.asarray(t, dtype=float)
    start = int(math.floor((1.0 - frac) * t.size))
    w = slice(start, None)
    fit = fit_line(t[w], np.asarray(mean)[w])
    lo, hi = fit["slope_ci"]
    change = fit["slope"] * (t[-1] - t[start])
    band = 2.0 * float(np.mean(np.asarray(sem)[w]))
    fit.update(level=float(np.mean(np.asarray(mean)[w])), level_sem=band / 2.0,
               change=float(change), band=band,
               plateau=bool(lo <= 0.0 <= hi and abs(change) <= band),
               growing=bool(lo > 0.0))
    return fit


def fit_rate(t, mean, burn: float = 0.1) -> dict:
    """Exponential decay rate from a log-linear fit after discarding a burn-in.

    Only strictly positive curve values enter the fit (glued pairs drive the
    mean to exactly zero eventually).
    """
    t = np.asarray(t, dtype=float)
    mean = np.asarray(mean, dtype=float)
    keep = (t >= t[0] + burn * (t[-1] - t[0])) & (mean > 0)
    if keep.sum() < 3:
        return {"rate": math.nan, "points": int(keep.sum())}
    fit = fit_line(t[keep], np.log(mean[keep]))
    lo, hi = fit["slope_ci"]
    return {"rate": -fit["slope"], "rate_ci": [-hi, -lo], "log_intercept": fit["intercept"],
            "points": fit["points"]}
