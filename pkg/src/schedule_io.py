from __future__ import annotations

import json
import math
import os
from typing import Any, Dict, List

from errors import ConfigError
from model import CallStyle, ContractSchedule, ExplicitPLF, PayoffSpec, validate

SCHEMA = "ebdo/1"
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DEFAULT_CONFIG_PATH = os.path.join(ROOT, "config", "default_config.json")

ENGINE_DEFAULTS: Dict[str, Any] = {
    "grid_points": 2048,
    "quantile_span": 0.9999,
    "mu": 0.0,
    "paths": 100_000,
    "seed": 42,
    "block_size": 4096,
    "antithetic": False,
    "threads": None,
}


def _read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError("path", f"文件不存在: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("json", f"{path} 第 {exc.lineno} 行第 {exc.colno} 列 JSON 解析失败: {exc.msg}") from exc


def _number(raw: Dict[str, Any], key: str, where: str) -> float:
    if key not in raw:
        raise ConfigError(f"{where}.{key}", "缺少字段")
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(float(value)):
        raise ConfigError(f"{where}.{key}", f"必须为有限数字，实际为 {value!r}")
    return float(value)


def _parse_payoff(raw: Any, where: str) -> PayoffSpec:
    if not isinstance(raw, dict):
        raise ConfigError(where, "payoff 必须为对象")
    kind = raw.get("kind")
    if kind == "call":
        return CallStyle(alpha=_number(raw, "alpha", where), strike=_number(raw, "strike", where))
    if kind == "plf":
        points = raw.get("points")
        if not isinstance(points, list) or not points:
            raise ConfigError(f"{where}.points", "必须为非空 [[x, y], ...] 列表")
        parsed: List[tuple] = []
        for k, point in enumerate(points):
            if (
                not isinstance(point, list)
                or len(point) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in point)
            ):
                raise ConfigError(f"{where}.points[{k}]", f"必须为 [x, y] 数字对，实际为 {point!r}")
            parsed.append((float(point[0]), float(point[1])))
        return ExplicitPLF(points=tuple(parsed), tail_slope=_number(raw, "tail_slope", where))
    raise ConfigError(f"{where}.kind", f"未知 payoff 类型 {kind!r} (应为 'call' 或 'plf')")


def parse_schedule(raw: Any) -> ContractSchedule:
    if not isinstance(raw, dict):
        raise ConfigError("root", "顶层必须为 JSON 对象")
    schema = raw.get("schema")
    if schema != SCHEMA:
        raise ConfigError("schema", f"期望 {SCHEMA!r}，实际为 {schema!r}")
    gross_equity = _number(raw, "gross_equity", "root")
    sigma = _number(raw, "sigma", "root")
    contracts = raw.get("contracts")
    if not isinstance(contracts, list) or not contracts:
        raise ConfigError("contracts", "必须为非空列表")
    maturities: List[float] = []
    payoffs: List[PayoffSpec] = []
    for i, contract in enumerate(contracts):
        where = f"contracts[{i}]"
        if not isinstance(contract, dict):
            raise ConfigError(where, "必须为对象")
        maturities.append(_number(contract, "maturity", where))
        if "payoff" not in contract:
            raise ConfigError(f"{where}.payoff", "缺少字段")
        payoffs.append(_parse_payoff(contract["payoff"], f"{where}.payoff"))
    schedule = ContractSchedule(gross_equity, sigma, tuple(maturities), tuple(payoffs))
    validate(schedule)
    return schedule


def load_schedule(path: str) -> ContractSchedule:
    return parse_schedule(_read_json(path))


def schedule_to_dict(schedule: ContractSchedule) -> Dict[str, Any]:
    contracts = []
    for maturity, payoff in zip(schedule.maturities, schedule.payoffs):
        if isinstance(payoff, CallStyle):
            body: Dict[str, Any] = {"kind": "call", "alpha": payoff.alpha, "strike": payoff.strike}
        else:
            body = {"kind": "plf", "points": [list(p) for p in payoff.points], "tail_slope": payoff.tail_slope}
        contracts.append({"maturity": maturity, "payoff": body})
    return {
        "schema": SCHEMA,
        "gross_equity": schedule.gross_equity,
        "sigma": schedule.sigma,
        "contracts": contracts,
    }


def load_engine_config(path: str | None = None) -> Dict[str, Any]:
    """Engine defaults merged with the JSON file at ``path`` (or config/default_config.json if present)."""
    cfg = dict(ENGINE_DEFAULTS)
    if path is None:
        if not os.path.exists(DEFAULT_CONFIG_PATH):
            return cfg
        path = DEFAULT_CONFIG_PATH
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError("config", "引擎配置必须为 JSON 对象")
    unknown = sorted(set(raw) - set(ENGINE_DEFAULTS))
    if unknown:
        raise ConfigError(unknown[0], "未知配置项")
    cfg.update(raw)
    return cfg
