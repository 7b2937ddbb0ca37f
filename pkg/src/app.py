from __future__ import annotations

import argparse
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence

from continuous import LinearRateModel, discretize_rate
from discrete import (
    build_value_functions,
    contract_value_function,
    estimate_values_mc,
    net_equity,
    simulate_paths,
    value_schedule,
)
from errors import ConfigError, EbdoError, GridTooCoarse
from grid import GridSpec
from plf import evaluate
from report import (
    converge_table,
    path_table,
    price_report,
    simulate_table,
    summary_lines,
    to_csv,
    to_json,
    value_report,
    write_text,
)
from schedule_io import load_engine_config, load_schedule

logger = logging.getLogger("ebdo")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_GRID = 2


def setup_logging(log_file: Optional[str] = None, verbose: bool = False) -> None:
    kwargs: Dict[str, Any] = {
        "level": logging.DEBUG if verbose else logging.INFO,
        "format": "%(asctime)s %(levelname)s %(message)s",
        "force": True,
    }
    if log_file:
        kwargs["filename"] = log_file
    else:
        kwargs["stream"] = sys.stderr
    logging.basicConfig(**kwargs)


def _settings(args: argparse.Namespace) -> Dict[str, Any]:
    cfg = load_engine_config(args.config)
    for key in ("grid_points", "quantile_span", "mu", "paths", "seed"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "antithetic", False):
        cfg["antithetic"] = True
    return cfg


def _grid(cfg: Dict[str, Any], anchor: float) -> GridSpec:
    grid = GridSpec(num_nodes=int(cfg["grid_points"]), quantile_span=float(cfg["quantile_span"]), anchor=float(anchor))
    grid.check()
    return grid


def _parse_levels(raw: str) -> List[int]:
    levels: List[int] = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            n = int(part)
        except ValueError as exc:
            raise ConfigError("levels", f"{part!r} 不是整数") from exc
        if n < 1:
            raise ConfigError("levels", f"{n} 必须为正整数")
        levels.append(n)
    if not levels:
        raise ConfigError("levels", "至少需要一个层级")
    return levels


def cmd_value(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    schedule = load_schedule(args.schedule)
    grid = _grid(cfg, schedule.gross_equity)
    started = time.perf_counter()
    result = value_schedule(schedule, grid, mu=float(cfg["mu"]))
    report = value_report(schedule, result)
    logger.info(f"估值完成 用时 {time.perf_counter() - started:.2f}s")
    for line in summary_lines(report, ("net_equity", "total_contract_value", "conservation_residual")):
        logger.info(line)
    write_text(to_json(report), args.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    paths = int(cfg["paths"])
    if paths < 2:
        raise ConfigError("paths", f"{paths} 必须 >= 2")
    if int(cfg["block_size"]) < 1:
        raise ConfigError("block_size", f"{cfg['block_size']} 必须为正")
    if cfg["antithetic"] and (paths % 2 or int(cfg["block_size"]) % 2):
        raise ConfigError("antithetic", "对偶抽样需要偶数的 paths 与 block_size")
    schedule = load_schedule(args.schedule)
    grid = _grid(cfg, schedule.gross_equity)
    table = build_value_functions(schedule, grid)
    options = dict(block_size=int(cfg["block_size"]), antithetic=bool(cfg["antithetic"]), threads=cfg["threads"])
    estimate = estimate_values_mc(table, schedule, float(cfg["mu"]), paths, int(cfg["seed"]), **options)
    write_text(to_csv(simulate_table(schedule, estimate)), args.out)
    if args.dump_paths:
        sample = simulate_paths(table, schedule, float(cfg["mu"]), paths, int(cfg["seed"]), **options)
        write_text(to_csv(path_table(sample)), args.dump_paths)
        logger.info(f"路径已写入 {args.dump_paths}")
    return EXIT_OK


def cmd_price(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    schedule = load_schedule(args.schedule)
    grid = _grid(cfg, schedule.gross_equity)
    table = build_value_functions(schedule, grid)
    j = int(args.contract)
    mu = float(cfg["mu"])
    x0 = schedule.gross_equity
    neutral = float(evaluate(contract_value_function(table, schedule, j, 0.0, grid), x0))
    market = neutral if mu == 0.0 else float(evaluate(contract_value_function(table, schedule, j, mu, grid), x0))
    report = price_report(j, schedule.maturities[j - 1], neutral, market, mu)
    if report["premium"] < 0:
        logger.info(f"合约 {j}: 市场价低于风险中性价，可考虑回购")
    write_text(to_json(report), args.out)
    return EXIT_OK


def cmd_converge(args: argparse.Namespace) -> int:
    cfg = _settings(args)
    model = LinearRateModel(gamma=args.gamma, horizon=args.horizon, sigma=args.sigma, gross_equity=args.x0)
    model.check()
    levels = _parse_levels(args.levels)
    closed = model.net_equity
    grid = _grid(cfg, model.gross_equity)
    rows = []
    for n in levels:
        started = time.perf_counter()
        schedule = discretize_rate(model, n)
        y0 = net_equity(build_value_functions(schedule, grid), model.gross_equity)
        error = abs(y0 - closed) / closed if closed > 0 else abs(y0 - closed)
        logger.info(f"n={n} Y_0={y0:.12g} 相对误差={error:.3e} 用时 {time.perf_counter() - started:.2f}s")
        rows.append({"n": n, "discrete_y0": y0, "closed_form_y0": closed, "relative_error": error})
    write_text(to_csv(converge_table(rows)), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="引擎配置 JSON (默认 config/default_config.json)")
    common.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    common.add_argument("--quantile-span", dest="quantile_span", type=float, default=None)
    common.add_argument("--out", default=None, help="输出文件 (默认 stdout)")
    common.add_argument("--log-file", dest="log_file", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ebdo", description="EbDO 合约估值引擎")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("value", parents=[common], help="确定性估值，输出 JSON")
    p.add_argument("schedule")
    p.add_argument("--mu", type=float, default=None)
    p.set_defaults(handler=cmd_value)

    p = sub.add_parser("simulate", parents=[common], help="蒙特卡洛估计，输出 CSV")
    p.add_argument("schedule")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--dump-paths", dest="dump_paths", default=None, help="逐路径 X/Y/X' CSV")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("price", parents=[common], help="单个合约的风险中性价与市场价")
    p.add_argument("schedule")
    p.add_argument("--contract", type=int, required=True, help="合约编号 (从 1 开始)")
    p.add_argument("--mu", type=float, default=None)
    p.set_defaults(handler=cmd_price)

    p = sub.add_parser("converge", parents=[common], help="线性费率模型的离散化收敛表")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--x0", type=float, default=100.0)
    p.add_argument("--levels", default="1,4,16,64,128")
    p.set_defaults(handler=cmd_converge)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, args.verbose)
    try:
        return args.handler(args)
    except GridTooCoarse as exc:
        logger.error(f"网格过粗: {exc}")
        print(f"错误: {exc}", file=sys.stderr)
        return EXIT_GRID
    except EbdoError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"错误: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
