"""Discrete-time valuation: backward value-function pass, forward path simulation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import GridTooCoarse, NegativeEquity, NotStrictlyIncreasing, UnknownContract
from gauss import expected_plf, expected_tail_slope
from grid import GridSpec, base_nodes, grid_diagnostics, merge_nodes
from model import ContractSchedule, LogNormalLaw, PathSample, ValuationResult, period_laws, validate
from plf import EPS_SLOPE, MonotonePLF, add, compose, evaluate, invert, kink_points, payoff_transfer
from streams import DEFAULT_BLOCK_SIZE, MomentAccumulator, run_blocks, standard_normals

logger = logging.getLogger("ebdo")

MONOTONE_RTOL = 1e-12
CLAMP_TOL = 1e-9


@dataclass(frozen=True)
class ValueFunctionTable:
    f: Tuple[MonotonePLF, ...]
    g: Tuple[MonotonePLF, ...]
    x_after_map: Tuple[MonotonePLF, ...]
    f_inverse: Tuple[MonotonePLF, ...]
    payoffs: Tuple[MonotonePLF, ...]
    laws: Tuple[LogNormalLaw, ...]
    kinks: Tuple[np.ndarray, ...]
    node_counts: Tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.g)


@dataclass(frozen=True)
class MonteCarloEstimate:
    mu: float
    n_paths: int
    seed: int
    values: np.ndarray
    stderr: np.ndarray
    total_value: float
    total_stderr: float
    equity_mean: np.ndarray
    equity_stderr: np.ndarray

    @property
    def terminal_equity(self) -> float:
        return float(self.equity_mean[-1])

    @property
    def terminal_stderr(self) -> float:
        return float(self.equity_stderr[-1])


def _fit_expectation(
    phi: MonotonePLF,
    law: LogNormalLaw,
    nodes: np.ndarray,
    strict: bool,
    label: str,
) -> MonotonePLF:
    """PLF through x' -> E[phi(x' Z)] at ``nodes``; exact rescaling for point-mass laws."""
    if law.s == 0.0:
        return phi.rescale(math.exp(law.m))
    values = np.asarray(expected_plf(phi, nodes, law), dtype=float)
    values[0] = 0.0
    steps = np.diff(values)
    if strict:
        slopes = steps / np.diff(nodes)
        bad = np.flatnonzero(slopes < EPS_SLOPE)
        if bad.size:
            j = int(bad[0])
            raise GridTooCoarse(f"{label}: 节点 {nodes[j]:.6g} 处拟合斜率 {slopes[j]:.3e} 非严格递增")
    else:
        scale = max(float(values[-1]), 1.0)
        if np.any(steps < -MONOTONE_RTOL * scale):
            j = int(np.argmin(steps))
            raise GridTooCoarse(f"{label}: 节点 {nodes[j]:.6g} 处拟合值下降 {steps[j]:.3e}")
        values = np.maximum.accumulate(values)
    return MonotonePLF(nodes, values, expected_tail_slope(phi, law))


def _propagate_kinks(
    kinks: np.ndarray,
    f_i: MonotonePLF,
    f_inv: MonotonePLF,
    h: MonotonePLF,
    law: LogNormalLaw,
) -> np.ndarray:
    """Kink locations in X'_i space mapped to X'_{i-1} space, plus the payoff kinks of h."""
    carried = kinks + evaluate(h, evaluate(f_i, kinks)) if kinks.size else np.empty(0)
    y_kinks = kink_points(h)
    fresh = evaluate(f_inv, y_kinks) + evaluate(h, y_kinks) if y_kinks.size else np.empty(0)
    return np.unique(np.concatenate([carried, fresh])) / math.exp(law.m)


def build_value_functions(schedule: ContractSchedule, grid: Optional[GridSpec] = None) -> ValueFunctionTable:
    validate(schedule)
    grid = grid or GridSpec(anchor=schedule.gross_equity)
    grid.check()
    started = time.perf_counter()
    n = schedule.n
    payoffs = schedule.payoff_plfs()
    laws = period_laws(schedule, 0.0)
    base = base_nodes(schedule, grid)
    if schedule.sigma == 0.0:
        logger.warning("sigma=0: 冲击退化为确定值，逐期精确缩放")

    f: List[MonotonePLF] = [MonotonePLF.identity()] * (n + 1)
    g: List[MonotonePLF] = [MonotonePLF.identity()] * n
    x_after: List[MonotonePLF] = [MonotonePLF.identity()] * n
    f_inverse: List[MonotonePLF] = [MonotonePLF.identity()] * n
    kinks: List[np.ndarray] = [np.empty(0)] * (n + 1)
    counts: List[int] = [0] * n

    for i in range(n, 0, -1):
        h = payoffs[i - 1]
        law = laws[i - 1]
        try:
            f_inv = invert(f[i])
            g_i = payoff_transfer(f[i], h)
        except NotStrictlyIncreasing as exc:
            raise GridTooCoarse(f"f_{i}: {exc}") from exc
        g[i - 1] = g_i
        f_inverse[i - 1] = f_inv
        x_after[i - 1] = compose(f_inv, g_i)
        kinks[i - 1] = _propagate_kinks(kinks[i], f[i], f_inv, h, law)
        nodes = merge_nodes(base, kinks[i - 1])
        f[i - 1] = _fit_expectation(g_i, law, nodes, strict=True, label=f"f_{i - 1}")
        counts[i - 1] = len(f[i - 1])
        logger.debug(f"f_{i - 1}: nodes={counts[i - 1]} kinks={kinks[i - 1].size} s={law.s:.4g}")

    logger.info(f"价值函数构建完成: n={n} nodes={grid.num_nodes} 用时 {time.perf_counter() - started:.2f}s")
    return ValueFunctionTable(
        f=tuple(f),
        g=tuple(g),
        x_after_map=tuple(x_after),
        f_inverse=tuple(f_inverse),
        payoffs=tuple(payoffs),
        laws=tuple(laws),
        kinks=tuple(kinks),
        node_counts=tuple(counts),
    )


def net_equity(table: ValueFunctionTable, gross_equity: float) -> float:
    if not math.isfinite(gross_equity) or gross_equity < 0:
        raise NegativeEquity(f"gross_equity={gross_equity} 必须 >= 0")
    raw = float(evaluate(table.f[0], gross_equity))
    clamped = min(max(raw, 0.0), float(gross_equity))
    if abs(clamped - raw) > CLAMP_TOL * max(1.0, float(gross_equity)):
        logger.warning(f"f_0(X_0)={raw:.10g} 超出 [0, X_0={gross_equity:g}]，已截断为 {clamped:.10g}")
    return clamped


def equity_sensitivity(table: ValueFunctionTable, gross_equity: float) -> float:
    """dY_0/dX_0: right slope of f_0 at X_0."""
    if gross_equity < 0:
        raise NegativeEquity(f"gross_equity={gross_equity} 必须 >= 0")
    f0 = table.f[0]
    j = int(np.searchsorted(f0.knots, gross_equity, side="right")) - 1
    return float(f0.slopes()[j])


def _simulate_block(
    table: ValueFunctionTable,
    laws: Sequence[LogNormalLaw],
    gross_equity: float,
    normals: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    count, n = normals.shape
    x = np.empty((count, n + 1))
    y = np.empty((count, n + 1))
    x_after = np.empty((count, n + 1))
    shocks = np.empty((count, n))
    x[:, 0] = gross_equity
    x_after[:, 0] = gross_equity
    y[:, 0] = net_equity(table, gross_equity)
    for i in range(1, n + 1):
        law = laws[i - 1]
        shocks[:, i - 1] = np.exp(law.m + law.s * normals[:, i - 1])
        x[:, i] = x_after[:, i - 1] * shocks[:, i - 1]
        y[:, i] = evaluate(table.g[i - 1], x[:, i])
        x_after[:, i] = evaluate(table.f_inverse[i - 1], y[:, i])
    return x, y, x_after, shocks


def simulate_path(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    mu: float,
    rng: np.random.Generator,
) -> PathSample:
    laws = period_laws(schedule, mu)
    normals = rng.standard_normal((1, schedule.n))
    x, y, x_after, shocks = _simulate_block(table, laws, schedule.gross_equity, normals)
    return PathSample(x=x[0], y=y[0], x_after=x_after[0], shocks=shocks[0])


def simulate_paths(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    mu: float,
    n_paths: int,
    seed: int,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    antithetic: bool = False,
    threads: Optional[int] = None,
) -> PathSample:
    """All paths stacked row-wise, in path-index order."""
    laws = period_laws(schedule, mu)

    def work(rng: np.random.Generator, count: int):
        normals = standard_normals(rng, count, schedule.n, antithetic)
        return _simulate_block(table, laws, schedule.gross_equity, normals)

    blocks = run_blocks(work, n_paths, seed, block_size, threads)
    stacked = [np.vstack([b[k] for b in blocks]) for k in range(4)]
    return PathSample(x=stacked[0], y=stacked[1], x_after=stacked[2], shocks=stacked[3])


def estimate_values_mc(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    mu: float,
    n_paths: int,
    seed: int,
    *,
    block_size: int = DEFAULT_BLOCK_SIZE,
    antithetic: bool = False,
    threads: Optional[int] = None,
) -> MonteCarloEstimate:
    if n_paths < 2:
        raise ValueError(f"n_paths={n_paths} 必须 >= 2")
    if antithetic and (n_paths % 2 or block_size % 2):
        raise ValueError("antithetic 需要偶数的 n_paths 与 block_size")
    n = schedule.n
    laws = period_laws(schedule, mu)
    started = time.perf_counter()

    def work(rng: np.random.Generator, count: int) -> np.ndarray:
        normals = standard_normals(rng, count, n, antithetic)
        _, y, _, _ = _simulate_block(table, laws, schedule.gross_equity, normals)
        paid = np.column_stack([evaluate(table.payoffs[i], y[:, i + 1]) for i in range(n)])
        return np.hstack([paid, paid.sum(axis=1, keepdims=True), y])

    acc = MomentAccumulator(width=2 * n + 2, antithetic=antithetic)
    for block in run_blocks(work, n_paths, seed, block_size, threads):
        acc.add(block)
    mean, stderr = acc.result()
    logger.info(f"MC 完成: paths={n_paths} mu={mu:g} seed={seed} 用时 {time.perf_counter() - started:.2f}s")
    return MonteCarloEstimate(
        mu=float(mu),
        n_paths=int(n_paths),
        seed=int(seed),
        values=mean[:n],
        stderr=stderr[:n],
        total_value=float(mean[n]),
        total_stderr=float(stderr[n]),
        equity_mean=mean[n + 1 :],
        equity_stderr=stderr[n + 1 :],
    )


def _contract_nodes(table: ValueFunctionTable, base: np.ndarray, level: int, law_m: float) -> np.ndarray:
    # kinks were propagated with zero-drift scaling; rescale to the pricing drift
    shift = math.exp(table.laws[level].m - law_m)
    return merge_nodes(base, table.kinks[level] * shift)


def contract_value_function(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    j: int,
    mu: float = 0.0,
    grid: Optional[GridSpec] = None,
) -> MonotonePLF:
    """w_j with w_j(X_0) = E[h_j(Y_j)] under drift ``mu``; j is 1-based."""
    if not 1 <= j <= table.n:
        raise UnknownContract(f"合约编号 {j} 不在 1..{table.n} 内")
    grid = grid or GridSpec(anchor=schedule.gross_equity)
    laws = period_laws(schedule, mu)
    base = base_nodes(schedule, grid, mu)
    phi = compose(table.payoffs[j - 1], table.g[j - 1])
    law = laws[j - 1]
    w = _fit_expectation(phi, law, _contract_nodes(table, base, j - 1, law.m), strict=False, label=f"w_{j},{j - 1}")
    for i in range(j - 1, 0, -1):
        law = laws[i - 1]
        phi = compose(w, table.x_after_map[i - 1])
        w = _fit_expectation(phi, law, _contract_nodes(table, base, i - 1, law.m), strict=False, label=f"w_{j},{i - 1}")
    return w


def contract_value_functions(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    mu: float = 0.0,
    grid: Optional[GridSpec] = None,
) -> List[MonotonePLF]:
    return [contract_value_function(table, schedule, j, mu, grid) for j in range(1, table.n + 1)]


def debt_value_function(
    table: ValueFunctionTable,
    schedule: ContractSchedule,
    mu: float = 0.0,
    grid: Optional[GridSpec] = None,
) -> MonotonePLF:
    """D with D(X_0) = E[sum_i h_i(Y_i)], one backward pass."""
    grid = grid or GridSpec(anchor=schedule.gross_equity)
    laws = period_laws(schedule, mu)
    base = base_nodes(schedule, grid, mu)
    debt = MonotonePLF.zero()
    for i in range(table.n, 0, -1):
        law = laws[i - 1]
        phi = add(compose(table.payoffs[i - 1], table.g[i - 1]), compose(debt, table.x_after_map[i - 1]))
        debt = _fit_expectation(phi, law, _contract_nodes(table, base, i - 1, law.m), strict=False, label=f"D_{i - 1}")
    return debt


def value_schedule(
    schedule: ContractSchedule,
    grid: Optional[GridSpec] = None,
    mu: float = 0.0,
    table: Optional[ValueFunctionTable] = None,
) -> ValuationResult:
    grid = grid or GridSpec(anchor=schedule.gross_equity)
    table = table or build_value_functions(schedule, grid)
    x0 = schedule.gross_equity
    y0 = net_equity(table, x0)
    w = contract_value_functions(table, schedule, mu, grid)
    values = tuple(float(evaluate(wj, x0)) for wj in w)
    total = float(evaluate(debt_value_function(table, schedule, mu, grid), x0))
    diagnostics: Dict[str, object] = {
        "grid": grid_diagnostics(schedule, grid, table.node_counts, mu),
        "total_contract_value": total,
        "equity_sensitivity": equity_sensitivity(table, x0),
    }
    if x0 == 0:
        logger.warning("gross_equity=0: 所有价值为 0")
    return ValuationResult(
        net_equity=y0,
        value_functions=table.f,
        contract_values=values,
        conservation_residual=float(x0 - y0 - sum(values)),
        diagnostics=diagnostics,
    )
