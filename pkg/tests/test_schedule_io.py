import json

import pytest

from errors import ConfigError, NonIncreasingMaturities
from model import CallStyle, ExplicitPLF
from schedule_io import ENGINE_DEFAULTS, load_engine_config, load_schedule, parse_schedule, schedule_to_dict


def _raw():
    return {
        "schema": "ebdo/1",
        "gross_equity": 100,
        "sigma": 0.2,
        "contracts": [
            {"maturity": 1.0, "payoff": {"kind": "call", "alpha": 1.0, "strike": 0.0}},
            {"maturity": 2.0, "payoff": {"kind": "plf", "points": [[0, 0], [10, 5]], "tail_slope": 0.2}},
        ],
    }


def test_parse_schedule():
    schedule = parse_schedule(_raw())
    assert schedule.gross_equity == 100.0
    assert schedule.maturities == (1.0, 2.0)
    assert schedule.payoffs[0] == CallStyle(1.0, 0.0)
    assert isinstance(schedule.payoffs[1], ExplicitPLF)


def test_schedule_dict_round_trip():
    schedule = parse_schedule(_raw())
    assert parse_schedule(schedule_to_dict(schedule)) == schedule


def test_example_schedule_loads(example_schedule_path):
    schedule = load_schedule(example_schedule_path)
    assert schedule.n == 4


def test_missing_field_names_path():
    raw = _raw()
    del raw["contracts"][0]["payoff"]["alpha"]
    with pytest.raises(ConfigError) as exc:
        parse_schedule(raw)
    assert exc.value.field == "contracts[0].payoff.alpha"


def test_bad_schema_and_kind():
    raw = _raw()
    raw["schema"] = "ebdo/0"
    with pytest.raises(ConfigError) as exc:
        parse_schedule(raw)
    assert exc.value.field == "schema"
    raw = _raw()
    raw["contracts"][1]["payoff"]["kind"] = "put"
    with pytest.raises(ConfigError) as exc:
        parse_schedule(raw)
    assert exc.value.field == "contracts[1].payoff.kind"


def test_parse_runs_validation():
    raw = _raw()
    raw["contracts"][1]["maturity"] = 0.5
    with pytest.raises(NonIncreasingMaturities):
        parse_schedule(raw)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "ebdo/1", ', encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_schedule(str(path))
    assert exc.value.field == "json"


def test_engine_config(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text(json.dumps({"paths": 500, "seed": 7}), encoding="utf-8")
    cfg = load_engine_config(str(path))
    assert cfg["paths"] == 500
    assert cfg["grid_points"] == ENGINE_DEFAULTS["grid_points"]
    assert load_engine_config()["grid_points"] == 2048


def test_engine_config_unknown_key(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text(json.dumps({"grid": 10}), encoding="utf-8")
    with pytest.raises(ConfigError) as exc:
        load_engine_config(str(path))
    assert exc.value.field == "grid"
