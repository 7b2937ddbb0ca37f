from __future__ import annotations

import numpy as np
from scipy.special import ndtr

from errors import NegativeArgument
from model import LogNormalLaw
from plf import MonotonePLF, evaluate

CLOSE_BOUNDS = 1e-10
BLOCK_ROWS = 64
# Phi(-9) ~ 1e-19: segments further out than this carry no representable mass
MASS_CUTOFF = 9.0
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def std_normal_cdf(x):
    out = ndtr(np.asarray(x, dtype=float))
    if out.ndim == 0:
        return float(out)
    return out


def _interval_mass(bounds: np.ndarray) -> np.ndarray:
    """Phi(b) - Phi(a) for consecutive columns of ``bounds``."""
    lower = bounds[:, :-1]
    upper = bounds[:, 1:]
    cdf = ndtr(bounds)
    sf = ndtr(-bounds)
    mass = np.where(lower > 0, sf[:, :-1] - sf[:, 1:], cdf[:, 1:] - cdf[:, :-1])
    width = upper - lower
    close = width < CLOSE_BOUNDS
    if np.any(close):
        with np.errstate(invalid="ignore"):
            mid = 0.5 * (lower + upper)
            density = _INV_SQRT_2PI * np.exp(-0.5 * mid * mid)
            mass = np.where(close, density * width, mass)
    return np.maximum(mass, 0.0)


def _segment_window(log_knots: np.ndarray, log_x: np.ndarray, law: LogNormalLaw) -> tuple:
    """Segments [a, b) of g that can receive mass for any row with log-scale in ``log_x``."""
    s = law.s
    lo = float(log_x.min()) + law.m - MASS_CUTOFF * s
    hi = float(log_x.max()) + law.m + (MASS_CUTOFF + s) * s
    a = int(np.searchsorted(log_knots, lo, side="left"))
    b = min(int(np.searchsorted(log_knots, hi, side="right")) + 1, log_knots.size + 1)
    return a, b


def expected_plf(g: MonotonePLF, scale, law: LogNormalLaw):
    """E[g(scale * Z)], ln Z ~ Normal(m, s^2), summed segment by segment in closed form."""
    scales = np.asarray(scale, dtype=float)
    scalar = scales.ndim == 0
    scales = np.atleast_1d(scales)
    if np.any(scales < 0) or np.any(np.isnan(scales)):
        raise NegativeArgument(f"scale 必须 >= 0: {scale}")

    if law.s == 0.0:
        out = np.asarray(evaluate(g, scales * np.exp(law.m)), dtype=float)
        return float(out[0]) if scalar else out

    out = np.zeros_like(scales)
    positive = np.flatnonzero(scales > 0)
    if positive.size:
        intercepts, slopes = g.segments()
        log_knots = np.log(g.knots[1:])
        mean_z = law.mean
        s = law.s
        for start in range(0, positive.size, BLOCK_ROWS):
            rows = positive[start : start + BLOCK_ROWS]
            x = scales[rows]
            log_x = np.log(x)
            a, b = _segment_window(log_knots, log_x, law)
            # outer edges of the window absorb the mass of the dropped segments
            inner = (log_knots[None, a : b - 1] - log_x[:, None] - law.m) / s
            edge = np.full((rows.size, 1), np.inf)
            bounds = np.hstack([-edge, inner, edge])
            prob = _interval_mass(bounds)
            prob_shift = _interval_mass(bounds - s)
            out[rows] = prob @ intercepts[a:b] + x * mean_z * (prob_shift @ slopes[a:b])
    out = np.maximum(out, 0.0)
    return float(out[0]) if scalar else out


def expected_tail_slope(g: MonotonePLF, law: LogNormalLaw) -> float:
    return g.tail_slope * law.mean
