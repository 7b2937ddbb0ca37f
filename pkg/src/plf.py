"""Monotone piecewise-linear functions on [0, inf) with a linear tail."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from errors import NegativeArgument, NotStrictlyIncreasing

EPS_SLOPE = 1e-12
COALESCE_RTOL = 1e-15


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def _coalesce(knots: np.ndarray) -> np.ndarray:
    if knots.size < 2:
        return knots
    keep = np.empty(knots.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(knots) > COALESCE_RTOL * np.abs(knots[1:])
    return knots[keep]


class MonotonePLF:
    """Nondecreasing piecewise-linear function with f(0) = 0.

    The tail beyond the last knot is stored as a (rise, run) pair so that
    inversion swaps it without rounding; ``tail_slope`` is rise / run.
    """

    __slots__ = ("knots", "values", "_tail_rise", "_tail_run")

    def __init__(
        self,
        knots: Sequence[float] | np.ndarray,
        values: Sequence[float] | np.ndarray,
        tail_slope: float,
        *,
        tail_run: float = 1.0,
    ) -> None:
        knots_arr = np.asarray(knots, dtype=float)
        values_arr = np.asarray(values, dtype=float)
        if knots_arr.ndim != 1 or knots_arr.size == 0:
            raise ValueError("knots 必须是非空一维序列")
        if knots_arr.shape != values_arr.shape:
            raise ValueError(f"knots/values 长度不一致: {knots_arr.size} != {values_arr.size}")
        if not (np.all(np.isfinite(knots_arr)) and np.all(np.isfinite(values_arr))):
            raise ValueError("knots/values 含有非有限数")
        if knots_arr[0] != 0.0 or values_arr[0] != 0.0:
            raise ValueError(f"必须满足 f(0)=0 且首个 knot 为 0: ({knots_arr[0]}, {values_arr[0]})")
        if np.any(np.diff(knots_arr) <= 0):
            raise ValueError("knots 必须严格递增")
        if np.any(np.diff(values_arr) < 0):
            raise ValueError("values 必须单调不减")
        rise = float(tail_slope)
        run = float(tail_run)
        if not (np.isfinite(rise) and np.isfinite(run)) or rise < 0 or run <= 0:
            raise ValueError(f"tail 斜率无效: rise={rise} run={run}")
        self.knots = _frozen(knots_arr)
        self.values = _frozen(values_arr)
        self._tail_rise = rise
        self._tail_run = run

    # -- constructors -------------------------------------------------

    @classmethod
    def identity(cls) -> "MonotonePLF":
        return cls([0.0], [0.0], 1.0)

    @classmethod
    def zero(cls) -> "MonotonePLF":
        return cls([0.0], [0.0], 0.0)

    @classmethod
    def linear(cls, slope: float) -> "MonotonePLF":
        return cls([0.0], [0.0], slope)

    @classmethod
    def call(cls, alpha: float, strike: float) -> "MonotonePLF":
        if strike == 0.0:
            return cls.linear(alpha)
        return cls([0.0, strike], [0.0, 0.0], alpha)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], tail_slope: float) -> "MonotonePLF":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(pts[:, 0], pts[:, 1], tail_slope)

    # -- inspection -------------------------------------------------

    @property
    def tail_slope(self) -> float:
        return self._tail_rise / self._tail_run

    @property
    def tail(self) -> Tuple[float, float]:
        return self._tail_rise, self._tail_run

    def slopes(self) -> np.ndarray:
        """Segment slopes followed by the tail slope."""
        inner = np.diff(self.values) / np.diff(self.knots)
        return np.append(inner, self.tail_slope)

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        """(intercept, slope) of every segment; segment j starts at knots[j]."""
        slopes = self.slopes()
        intercepts = self.values - slopes * self.knots
        return intercepts, slopes

    @property
    def is_strictly_increasing(self) -> bool:
        return bool(np.all(self.slopes() >= EPS_SLOPE))

    def same_data(self, other: "MonotonePLF") -> bool:
        return (
            np.array_equal(self.knots, other.knots)
            and np.array_equal(self.values, other.values)
            and self.tail == other.tail
        )

    def __len__(self) -> int:
        return int(self.knots.size)

    def __repr__(self) -> str:
        return f"MonotonePLF(knots={self.knots.size}, last=({self.knots[-1]:g}, {self.values[-1]:g}), tail={self.tail_slope:g})"

    # -- evaluation -------------------------------------------------

    def __call__(self, x):
        return evaluate(self, x)

    def rescale(self, factor: float) -> "MonotonePLF":
        """x -> f(factor * x) for factor > 0."""
        if factor <= 0:
            raise NegativeArgument(f"rescale 因子必须为正: {factor}")
        rise, run = self.tail
        return MonotonePLF(self.knots / factor, self.values, rise * factor, tail_run=run)


def evaluate(f: MonotonePLF, x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NegativeArgument(f"PLF 的定义域为 [0, inf): {x}")
    out = np.interp(arr, f.knots, f.values)
    beyond = arr > f.knots[-1]
    if np.any(beyond):
        rise, run = f.tail
        out = np.where(beyond, f.values[-1] + (arr - f.knots[-1]) * rise / run, out)
    if out.ndim == 0:
        return float(out)
    return out


def add(f: MonotonePLF, g: MonotonePLF) -> MonotonePLF:
    knots = _coalesce(np.union1d(f.knots, g.knots))
    # interpolation may overshoot by an ulp next to a knot
    values = np.maximum.accumulate(evaluate(f, knots) + evaluate(g, knots))
    values[0] = 0.0
    return MonotonePLF(knots, values, f.tail_slope + g.tail_slope)


def invert(f: MonotonePLF) -> MonotonePLF:
    slopes = f.slopes()
    bad = np.flatnonzero(slopes < EPS_SLOPE)
    if bad.size:
        j = int(bad[0])
        where = "tail" if j == slopes.size - 1 else f"segment {j} at x={f.knots[j]:g}"
        raise NotStrictlyIncreasing(f"斜率 {slopes[j]:.3e} < {EPS_SLOPE:g} ({where})，无法求逆")
    rise, run = f.tail
    return MonotonePLF(f.values, f.knots, run, tail_run=rise)


def _preimages(g: MonotonePLF, levels: np.ndarray) -> np.ndarray:
    """Points x with g(x) = level for levels strictly inside a rising segment or the tail."""
    found = []
    idx = np.searchsorted(g.values, levels, side="right") - 1
    last = g.values.size - 1
    inner = (idx < last) & (levels > g.values[np.minimum(idx, last)])
    if np.any(inner):
        j = idx[inner]
        lv = levels[inner]
        lo_v, hi_v = g.values[j], g.values[j + 1]
        lo_k, hi_k = g.knots[j], g.knots[j + 1]
        found.append(lo_k + (lv - lo_v) * (hi_k - lo_k) / (hi_v - lo_v))
    rise, run = g.tail
    over = levels > g.values[-1]
    if rise > 0 and np.any(over):
        found.append(g.knots[-1] + (levels[over] - g.values[-1]) * run / rise)
    if not found:
        return np.empty(0)
    return np.concatenate(found)


def compose(f: MonotonePLF, g: MonotonePLF) -> MonotonePLF:
    extra = _preimages(g, f.knots[1:])
    knots = _coalesce(np.union1d(g.knots, extra))
    values = np.maximum.accumulate(evaluate(f, evaluate(g, knots)))
    values[0] = 0.0
    inner_tail = g.tail_slope
    tail = f.tail_slope * inner_tail if inner_tail > 0 else 0.0
    return MonotonePLF(knots, values, tail)


def payoff_transfer(f_next: MonotonePLF, h: MonotonePLF) -> MonotonePLF:
    """g = (f_next^{-1} + h)^{-1}: pre-payoff gross equity -> net equity."""
    return invert(add(invert(f_next), h))


def kink_points(f: MonotonePLF, tol: float = 1e-12) -> np.ndarray:
    """Interior knots where the slope actually changes."""
    if f.knots.size < 2:
        return np.empty(0)
    slopes = f.slopes()
    change = np.abs(np.diff(slopes)) > tol * np.maximum(1.0, np.abs(slopes[1:]))
    return f.knots[1:][change]
