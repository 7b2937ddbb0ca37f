from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import BadInterval, EbdoError, TimeOutOfRange
from model import CallStyle, ContractSchedule, make_schedule
from streams import DEFAULT_BLOCK_SIZE, MomentAccumulator, run_blocks

logger = logging.getLogger("ebdo")

SMALL_MU = 1e-12


@dataclass(frozen=True)
class LinearRateModel:
    gamma: float
    horizon: float
    sigma: float
    gross_equity: float

    def check(self) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise EbdoError(f"gamma={self.gamma} 必须 > 0")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise EbdoError(f"horizon={self.horizon} 必须 > 0")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise EbdoError(f"sigma={self.sigma} 必须 >= 0")
        if not (self.gross_equity >= 0 and math.isfinite(self.gross_equity)):
            raise EbdoError(f"gross_equity={self.gross_equity} 必须 >= 0")

    @property
    def net_equity(self) -> float:
        return decoupling_linear(0.0, self.gross_equity, self)


def _check_time(t: float, model: LinearRateModel) -> None:
    if not (0.0 <= t <= model.horizon):
        raise TimeOutOfRange(f"t={t} 不在 [0, {model.horizon}] 内")


def decoupling_linear(t: float, x, model: LinearRateModel):
    _check_time(t, model)
    arr = np.asarray(x, dtype=float)
    out = np.where(arr >= 0, arr / (1.0 + model.gamma * (model.horizon - t)), arr)
    if out.ndim == 0:
        return float(out)
    return out


def slope_linear(t: float, model: LinearRateModel) -> float:
    _check_time(t, model)
    return 1.0 / (1.0 + model.gamma * (model.horizon - t))


def gradient_bounds(model: LinearRateModel, samples: int = 101) -> Tuple[float, float]:
    """(q, 1) with q = exp(-gamma T); the slope of u stays in [q, 1] on a t-grid."""
    q = math.exp(-model.horizon * model.gamma)
    for t in np.linspace(0.0, model.horizon, samples):
        slope = slope_linear(float(t), model)
        if not (q <= slope <= 1.0):
            raise ArithmeticError(f"斜率 {slope} 超出 [{q}, 1] (t={t})")
    return q, 1.0


def expected_gross_equity(s: float, mu: float, model: LinearRateModel) -> float:
    _check_time(s, model)
    g, horizon = model.gamma, model.horizon
    return model.gross_equity * math.exp(mu * s) * (1.0 + g * (horizon - s)) / (1.0 + g * horizon)


def _exp_integral(a: float, b: float, mu: float) -> float:
    width = b - a
    if abs(mu) < SMALL_MU:
        return width * (1.0 + 0.5 * mu * (a + b) + mu * mu * (a * a + a * b + b * b) / 6.0)
    return math.exp(mu * a) * math.expm1(mu * width) / mu


def ebdo_value_interval(a: float, b: float, mu: float, model: LinearRateModel) -> float:
    if not (0.0 <= a <= b <= model.horizon):
        raise BadInterval(f"区间 [{a}, {b}] 必须满足 0 <= a <= b <= {model.horizon}")
    if a == b:
        return 0.0
    return model.gamma * model.gross_equity / (1.0 + model.gamma * model.horizon) * _exp_integral(a, b, mu)


def _check_times(times: Sequence[float], model: LinearRateModel) -> np.ndarray:
    arr = np.asarray(times, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise TimeOutOfRange("times 必须为非空一维序列")
    if arr[0] < 0 or arr[-1] > model.horizon:
        raise TimeOutOfRange(f"times 必须位于 [0, {model.horizon}] 内")
    if np.any(np.diff(arr) <= 0):
        raise TimeOutOfRange("times 必须严格递增")
    return arr


def sample_paths_exact(
    model: LinearRateModel,
    mu: float,
    times: Sequence[float],
    rng: np.random.Generator,
    n_paths: int = 1,
) -> np.ndarray:
    """X at ``times`` for ``n_paths`` paths (rows), from the exact strong solution."""
    t = _check_times(times, model)
    steps = np.diff(np.concatenate([[0.0], t]))
    w = np.cumsum(rng.standard_normal((n_paths, t.size)) * np.sqrt(steps), axis=1)
    g, horizon = model.gamma, model.horizon
    damping = (1.0 + g * (horizon - t)) / (1.0 + g * horizon)
    growth = np.exp((mu - 0.5 * model.sigma**2) * t + model.sigma * w)
    return model.gross_equity * growth * damping


def sample_path_exact(
    model: LinearRateModel,
    mu: float,
    times: Sequence[float],
    rng: np.random.Generator,
) -> np.ndarray:
    return sample_paths_exact(model, mu, times, rng, 1)[0]


def discretize_rate(model: LinearRateModel, n: int) -> ContractSchedule:
    """n lumped maturities T_i = i T / n paying (gamma T / n) y^+ each."""
    if n < 1:
        raise EbdoError(f"n={n} 必须 >= 1")
    model.check()
    step = model.horizon / n
    maturities = [model.horizon * i / n for i in range(1, n + 1)]
    payoffs = [CallStyle(alpha=model.gamma * step, strike=0.0) for _ in range(n)]
    return make_schedule(model.gross_equity, model.sigma, maturities, payoffs)


def martingale_check(
    model: LinearRateModel,
    mu: float = 0.0,
    n_paths: int = 100_000,
    n_times: int = 16,
    seed: int = 42,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: Optional[int] = None,
) -> float:
    """max_k |mean(Y_{t_k}) - Y_0| / stderr over ``n_times`` checkpoints in (0, T]."""
    if mu != 0.0:
        raise EbdoError("martingale_check 仅适用于 mu=0")
    model.check()
    times = np.linspace(0.0, model.horizon, n_times + 1)[1:]
    y0 = model.net_equity

    def work(rng: np.random.Generator, count: int) -> np.ndarray:
        x = sample_paths_exact(model, 0.0, times, rng, count)
        return np.column_stack([decoupling_linear(float(t), x[:, k], model) for k, t in enumerate(times)])

    acc = MomentAccumulator(width=times.size)
    for block in run_blocks(work, n_paths, seed, block_size, threads):
        acc.add(block)
    mean, stderr = acc.result()
    worst = 0.0
    for k in range(times.size):
        gap = abs(float(mean[k]) - y0)
        if stderr[k] > 0:
            worst = max(worst, gap / float(stderr[k]))
        elif gap > 1e-12 * max(abs(y0), 1.0):
            worst = math.inf
    logger.info(f"鞅检验: paths={n_paths} times={n_times} stat={worst:.3f}")
    return worst
