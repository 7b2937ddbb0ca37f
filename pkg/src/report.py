from __future__ import annotations

import io
import json
import sys
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from discrete import MonteCarloEstimate
from model import ContractSchedule, PathSample, ValuationResult
from schedule_io import SCHEMA

FLOAT_FORMAT = "%.17g"


def value_report(schedule: ContractSchedule, result: ValuationResult) -> Dict[str, object]:
    diagnostics = dict(result.diagnostics)
    return {
        "schema": SCHEMA,
        "gross_equity": float(schedule.gross_equity),
        "net_equity": float(result.net_equity),
        "contract_values": [float(v) for v in result.contract_values],
        "total_contract_value": float(diagnostics.get("total_contract_value", sum(result.contract_values))),
        "conservation_residual": float(result.conservation_residual),
        "equity_sensitivity": float(diagnostics.get("equity_sensitivity", 0.0)),
        "grid": diagnostics.get("grid", {}),
    }


def price_report(
    contract: int,
    maturity: float,
    risk_neutral_price: float,
    market_price: float,
    mu: float,
) -> Dict[str, object]:
    return {
        "schema": SCHEMA,
        "contract": int(contract),
        "maturity": float(maturity),
        "mu": float(mu),
        "risk_neutral_price": float(risk_neutral_price),
        "market_price": float(market_price),
        "premium": float(market_price - risk_neutral_price),
    }


def simulate_table(schedule: ContractSchedule, estimate: MonteCarloEstimate) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "maturity_index": np.arange(1, schedule.n + 1),
            "T_i": np.asarray(schedule.maturities, dtype=float),
            "estimate": np.asarray(estimate.values, dtype=float),
            "stderr": np.asarray(estimate.stderr, dtype=float),
        }
    )


def path_table(paths: PathSample) -> pd.DataFrame:
    x = np.atleast_2d(paths.x)
    y = np.atleast_2d(paths.y)
    x_after = np.atleast_2d(paths.x_after)
    columns: Dict[str, np.ndarray] = {"path": np.arange(x.shape[0])}
    for i in range(x.shape[1]):
        columns[f"X_{i}"] = x[:, i]
        columns[f"Y_{i}"] = y[:, i]
        columns[f"Xp_{i}"] = x_after[:, i]
    return pd.DataFrame(columns)


def converge_table(rows: Iterable[Dict[str, float]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=["n", "discrete_y0", "closed_form_y0", "relative_error"])
    frame["n"] = frame["n"].astype(int)
    frame["relative_error"] = frame["relative_error"].map(lambda v: f"{v:.6e}")
    return frame


def to_json(report: Dict[str, object]) -> str:
    return json.dumps(report, ensure_ascii=False, indent=2) + "\n"


def to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def write_text(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def summary_lines(report: Dict[str, object], keys: Sequence[str]) -> List[str]:
    return [f"{k}={report[k]}" for k in keys if k in report]
