from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtri

from errors import (
    DecreasingPayoff,
    EmptySchedule,
    MalformedPayoff,
    NegativeDuration,
    NegativeEquity,
    NegativeVolatility,
    NonIncreasingMaturities,
    PayoffNonzeroAtZero,
    ScheduleShapeMismatch,
)
from plf import MonotonePLF


@dataclass(frozen=True)
class CallStyle:
    """h(y) = alpha * (y - strike)^+."""

    alpha: float
    strike: float = 0.0

    def check(self, index: int) -> None:
        if not (math.isfinite(self.alpha) and math.isfinite(self.strike)):
            raise MalformedPayoff(f"合约 {index}: alpha/strike 必须为有限数")
        if self.strike < 0:
            raise PayoffNonzeroAtZero(f"合约 {index}: strike={self.strike} < 0 导致 h(0) != 0 (条件 h_i(0)=0)")
        if self.alpha < 0:
            raise DecreasingPayoff(f"合约 {index}: alpha={self.alpha} < 0，支付函数非单调递增")

    @property
    def plf(self) -> MonotonePLF:
        return MonotonePLF.call(self.alpha, self.strike)


@dataclass(frozen=True)
class ExplicitPLF:
    """Payoff given by its knot points and tail slope."""

    points: Tuple[Tuple[float, float], ...]
    tail_slope: float

    def check(self, index: int) -> None:
        if not self.points:
            raise MalformedPayoff(f"合约 {index}: points 为空")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
            raise MalformedPayoff(f"合约 {index}: points 必须是有限的 [x, y] 对")
        if pts[0, 0] != 0.0 or pts[0, 1] != 0.0:
            raise PayoffNonzeroAtZero(
                f"合约 {index}: 首点为 ({pts[0, 0]:g}, {pts[0, 1]:g})，要求 h(0)=0 (条件 h_i(0)=0)"
            )
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise MalformedPayoff(f"合约 {index}: x 坐标必须严格递增")
        if np.any(np.diff(pts[:, 1]) < 0) or not math.isfinite(self.tail_slope) or self.tail_slope < 0:
            raise DecreasingPayoff(f"合约 {index}: 支付函数必须单调递增 (条件 h_i 单调)")

    @property
    def plf(self) -> MonotonePLF:
        return MonotonePLF.from_points(self.points, self.tail_slope)


PayoffSpec = Union[CallStyle, ExplicitPLF]


@dataclass(frozen=True)
class ContractSchedule:
    gross_equity: float
    sigma: float
    maturities: Tuple[float, ...]
    payoffs: Tuple[PayoffSpec, ...]

    @property
    def n(self) -> int:
        return len(self.maturities)

    def periods(self) -> List[float]:
        """Durations T_i - T_{i-1} with T_0 = 0."""
        times = (0.0,) + tuple(self.maturities)
        return [float(b - a) for a, b in zip(times[:-1], times[1:])]

    def payoff_plfs(self) -> List[MonotonePLF]:
        return [p.plf for p in self.payoffs]


@dataclass(frozen=True)
class LogNormalLaw:
    """ln Z ~ Normal(m, s^2); s = 0 is the point mass at e^m."""

    m: float
    s: float

    @property
    def mean(self) -> float:
        return math.exp(self.m + 0.5 * self.s * self.s)

    def quantile(self, p: float) -> float:
        return math.exp(self.m + self.s * float(ndtri(p)))


@dataclass(frozen=True)
class ValuationResult:
    net_equity: float
    value_functions: Tuple[MonotonePLF, ...]
    contract_values: Tuple[float, ...]
    conservation_residual: float
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PathSample:
    x: np.ndarray
    y: np.ndarray
    x_after: np.ndarray
    shocks: np.ndarray


def validate(schedule: ContractSchedule) -> None:
    n = len(schedule.maturities)
    if n == 0:
        raise EmptySchedule("至少需要一个到期日 (n >= 1)")
    if len(schedule.payoffs) != n:
        raise ScheduleShapeMismatch(f"maturities({n}) 与 payoffs({len(schedule.payoffs)}) 数量不一致")
    if not math.isfinite(schedule.gross_equity) or schedule.gross_equity < 0:
        raise NegativeEquity(f"gross_equity={schedule.gross_equity} 必须 >= 0 (条件 X_0 >= 0)")
    if not math.isfinite(schedule.sigma) or schedule.sigma < 0:
        raise NegativeVolatility(f"sigma={schedule.sigma} 必须 >= 0")
    times = [float(t) for t in schedule.maturities]
    if not all(math.isfinite(t) for t in times):
        raise NonIncreasingMaturities("到期日必须为有限数")
    if times[0] < 0:
        raise NonIncreasingMaturities(f"T_1={times[0]} < 0 (条件 0 <= T_1)")
    for i in range(1, n):
        if times[i] <= times[i - 1]:
            raise NonIncreasingMaturities(
                f"T_{i + 1}={times[i]} <= T_{i}={times[i - 1]} (条件 T_1 < ... < T_n，同日支付需预先合并)"
            )
    for i, payoff in enumerate(schedule.payoffs, start=1):
        payoff.check(i)


def law_for_period(mu: float, sigma: float, dt: float) -> LogNormalLaw:
    if dt < 0:
        raise NegativeDuration(f"期间长度 dt={dt} < 0")
    if sigma < 0:
        raise NegativeVolatility(f"sigma={sigma} 必须 >= 0")
    return LogNormalLaw(m=(mu - 0.5 * sigma * sigma) * dt, s=sigma * math.sqrt(dt))


def period_laws(schedule: ContractSchedule, mu: float = 0.0) -> List[LogNormalLaw]:
    return [law_for_period(mu, schedule.sigma, dt) for dt in schedule.periods()]


def make_schedule(
    gross_equity: float,
    sigma: float,
    maturities: Sequence[float],
    payoffs: Sequence[PayoffSpec],
) -> ContractSchedule:
    schedule = ContractSchedule(float(gross_equity), float(sigma), tuple(float(t) for t in maturities), tuple(payoffs))
    validate(schedule)
    return schedule
