from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np

from errors import ConfigError
from model import ContractSchedule, LogNormalLaw, period_laws

MIN_NODES = 8
MIN_RANGE_RATIO = 4.0


@dataclass(frozen=True)
class GridSpec:
    num_nodes: int = 2048
    quantile_span: float = 0.9999
    anchor: float = 0.0

    def check(self) -> None:
        if int(self.num_nodes) != self.num_nodes or self.num_nodes < MIN_NODES:
            raise ConfigError("grid_points", f"节点数 {self.num_nodes} 必须为 >= {MIN_NODES} 的整数")
        if not (0.5 < self.quantile_span < 1.0):
            raise ConfigError("quantile_span", f"{self.quantile_span} 必须位于 (0.5, 1)")
        if not math.isfinite(self.anchor) or self.anchor < 0:
            raise ConfigError("gross_equity", f"锚点 {self.anchor} 必须 >= 0")


def terminal_quantiles(schedule: ContractSchedule, span: float, mu: float = 0.0) -> Tuple[float, float]:
    """(1 - span)/2 and (1 + span)/2 quantiles of Z_1 * ... * Z_n."""
    laws = period_laws(schedule, mu)
    total = LogNormalLaw(m=sum(law.m for law in laws), s=math.sqrt(sum(law.s * law.s for law in laws)))
    return total.quantile(0.5 * (1.0 - span)), total.quantile(0.5 * (1.0 + span))


def node_range(schedule: ContractSchedule, grid: GridSpec, mu: float = 0.0) -> Tuple[float, float]:
    anchor = grid.anchor if grid.anchor > 0 else 1.0
    q_lo, q_hi = terminal_quantiles(schedule, grid.quantile_span, 0.0)
    if mu != 0.0:
        d_lo, d_hi = terminal_quantiles(schedule, grid.quantile_span, mu)
        q_lo, q_hi = min(q_lo, d_lo), max(q_hi, d_hi)
    # payoffs push X' below X by at most the summed tail slopes
    total_tail = sum(p.tail_slope for p in schedule.payoff_plfs())
    lo = anchor * min(q_lo, 1.0) / (1.0 + total_tail)
    hi = anchor * max(q_hi, 1.0)
    ratio = hi / lo
    if ratio < MIN_RANGE_RATIO:
        widen = math.sqrt(MIN_RANGE_RATIO / ratio)
        lo, hi = lo / widen, hi * widen
    return lo, hi


def base_nodes(schedule: ContractSchedule, grid: GridSpec, mu: float = 0.0) -> np.ndarray:
    grid.check()
    lo, hi = node_range(schedule, grid, mu)
    return np.concatenate([[0.0], np.geomspace(lo, hi, int(grid.num_nodes) - 1)])


def merge_nodes(nodes: np.ndarray, extra: Iterable[float]) -> np.ndarray:
    extra_arr = np.asarray(list(extra), dtype=float)
    extra_arr = extra_arr[np.isfinite(extra_arr) & (extra_arr > 0)]
    if extra_arr.size == 0:
        return nodes
    merged = np.union1d(nodes, extra_arr)
    keep = np.ones(merged.size, dtype=bool)
    keep[1:] = np.diff(merged) > 1e-12 * merged[1:]
    return merged[keep]


def grid_diagnostics(schedule: ContractSchedule, grid: GridSpec, node_counts: Iterable[int], mu: float = 0.0) -> Dict[str, object]:
    lo, hi = node_range(schedule, grid, mu)
    counts = [int(c) for c in node_counts]
    return {
        "num_nodes": int(grid.num_nodes),
        "quantile_span": float(grid.quantile_span),
        "lower": float(lo),
        "upper": float(hi),
        "log_step": float(math.log(hi / lo) / max(int(grid.num_nodes) - 2, 1)),
        "node_counts": counts,
    }
