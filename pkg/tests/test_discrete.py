import dataclasses
import logging
import math

import numpy as np
import pytest

from discrete import (
    build_value_functions,
    contract_value_function,
    contract_value_functions,
    debt_value_function,
    equity_sensitivity,
    estimate_values_mc,
    net_equity,
    simulate_path,
    simulate_paths,
    value_schedule,
)
from errors import ConfigError, NegativeEquity, UnknownContract
from grid import GridSpec, terminal_quantiles
from model import CallStyle, ExplicitPLF, make_schedule
from plf import MonotonePLF, evaluate, payoff_transfer
from streams import block_generator


def _grid(x0, nodes=512):
    return GridSpec(num_nodes=nodes, anchor=x0)


def _mixed_schedule(sigma=0.3):
    payoffs = [CallStyle(0.2), CallStyle(0.5, 20.0), CallStyle(0.3, 60.0), CallStyle(0.25)]
    return make_schedule(100.0, sigma, [0.5, 1.0, 1.5, 2.0], payoffs)


@pytest.mark.parametrize("sigma,maturity", [(0.0, 1.0), (0.2, 1.0), (0.5, 3.0), (0.2, 0.0)])
def test_single_linear_contract(sigma, maturity):
    schedule = make_schedule(100.0, sigma, [maturity], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    assert net_equity(table, 100.0) == pytest.approx(50.0, rel=1e-10)
    nodes = table.f[0].knots
    assert np.allclose(evaluate(table.f[0], nodes), nodes / 2, rtol=1e-10, atol=1e-12)


def test_linear_chain_is_additive():
    schedule = make_schedule(100.0, 0.2, [1.0, 2.0, 3.0], [CallStyle(0.5), CallStyle(1.0), CallStyle(0.25)])
    table = build_value_functions(schedule, GridSpec(anchor=100.0))
    assert net_equity(table, 100.0) == pytest.approx(100.0 / 2.75, rel=1e-8)


def test_two_contract_chain_slope():
    schedule = make_schedule(100.0, 0.3, [1.0, 2.0], [CallStyle(0.4), CallStyle(1.5)])
    table = build_value_functions(schedule, _grid(100.0))
    slopes = table.f[0].slopes()
    assert np.allclose(slopes, 1.0 / 2.9, rtol=1e-10)


def test_point_mass_kinked_contract():
    schedule = make_schedule(100.0, 0.0, [1.0], [CallStyle(1.0, 50.0)])
    table = build_value_functions(schedule, _grid(100.0))
    assert net_equity(table, 100.0) == pytest.approx(75.0)


def test_kinked_contract_against_monte_carlo():
    schedule = make_schedule(100.0, 0.2, [1.0], [CallStyle(1.0, 50.0)])
    table = build_value_functions(schedule, GridSpec(anchor=100.0))
    law = table.laws[0]
    g = payoff_transfer(MonotonePLF.identity(), MonotonePLF.call(1.0, 50.0))
    rng = np.random.default_rng(7)
    samples = evaluate(g, 100.0 * np.exp(law.m + law.s * rng.standard_normal(1_000_000)))
    stderr = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(net_equity(table, 100.0) - samples.mean()) <= 4 * stderr


def test_net_equity_bounds():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    assert net_equity(table, 0.0) == 0.0
    y0 = net_equity(table, 100.0)
    assert 0.0 < y0 < 100.0
    with pytest.raises(NegativeEquity):
        net_equity(table, -1.0)


def test_net_equity_clamp_is_logged(caplog):
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    broken = dataclasses.replace(table, f=(MonotonePLF.linear(1.5),) + table.f[1:])
    with caplog.at_level(logging.WARNING, logger="ebdo"):
        assert net_equity(broken, 100.0) == 100.0
    assert any("截断" in record.getMessage() for record in caplog.records)

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="ebdo"):
        net_equity(table, 100.0)
    assert not any("截断" in record.getMessage() for record in caplog.records)


def test_value_function_invariants():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    assert table.f[-1].same_data(MonotonePLF.identity())
    for f in table.f:
        assert f.is_strictly_increasing
        assert np.all(f.values <= f.knots * (1 + 1e-12))
    for g in table.g:
        assert np.all(g.values <= g.knots * (1 + 1e-12))
    slopes = table.f[0].slopes()
    assert np.all(slopes > 0)
    assert np.all(slopes <= 1.0 + 1e-12)


def test_comparative_statics():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    assert net_equity(table, 120.0) > net_equity(table, 100.0)
    fewer = make_schedule(100.0, 0.3, [0.5, 1.0, 1.5], list(schedule.payoffs[:3]))
    assert net_equity(table, 100.0) < net_equity(build_value_functions(fewer, _grid(100.0)), 100.0)


def test_equity_sensitivity_linear():
    schedule = make_schedule(100.0, 0.2, [1.0], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    assert equity_sensitivity(table, 100.0) == pytest.approx(0.5, rel=1e-10)


def test_simulate_path_point_mass():
    schedule = make_schedule(100.0, 0.0, [1.0], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    path = simulate_path(table, schedule, 0.0, block_generator(1, 0))
    assert path.x == pytest.approx([100.0, 100.0])
    assert path.y == pytest.approx([50.0, 50.0])
    assert path.x_after == pytest.approx([100.0, 50.0])


def test_simulate_path_with_drift():
    schedule = make_schedule(100.0, 0.0, [1.0], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    path = simulate_path(table, schedule, math.log(2.0), block_generator(1, 0))
    assert path.x[1] == pytest.approx(200.0)
    assert path.y[1] == pytest.approx(100.0)


def test_immediate_payoff_at_time_zero():
    schedule = make_schedule(100.0, 0.3, [0.0], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    path = simulate_path(table, schedule, 0.0, block_generator(3, 0))
    assert path.x[1] == path.x[0]
    assert path.y[1] == pytest.approx(50.0)


@pytest.mark.parametrize("seed", [11, 12])
def test_path_identities(seed):
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    paths = simulate_paths(table, schedule, 0.0, 20_000, seed, block_size=2048)
    assert np.all(paths.x >= 0) and np.all(paths.y >= 0) and np.all(paths.x_after >= 0)
    for i in range(1, schedule.n + 1):
        paid = evaluate(table.payoffs[i - 1], paths.y[:, i])
        assert np.allclose(paths.x_after[:, i], paths.x[:, i] - paid, rtol=1e-10, atol=1e-9)
    assert np.allclose(paths.y[:, -1], paths.x_after[:, -1])


def test_mc_conservation_and_martingale():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    y0 = net_equity(table, 100.0)
    estimate = estimate_values_mc(table, schedule, 0.0, 50_000, 42)
    assert abs(y0 + estimate.total_value - 100.0) <= 4 * estimate.total_stderr
    assert estimate.equity_stderr[0] == 0.0
    for mean, stderr in zip(estimate.equity_mean[1:], estimate.equity_stderr[1:]):
        assert abs(mean - y0) <= 4 * stderr


def test_mc_point_mass_has_zero_stderr():
    schedule = make_schedule(100.0, 0.0, [1.0, 2.0], [CallStyle(1.0, 50.0), CallStyle(0.5)])
    table = build_value_functions(schedule, _grid(100.0))
    estimate = estimate_values_mc(table, schedule, 0.0, 1000, 3)
    assert np.all(estimate.stderr == 0.0)
    paths = simulate_paths(table, schedule, 0.0, 1, 3)
    expected = [evaluate(table.payoffs[i], paths.y[0, i + 1]) for i in range(2)]
    assert np.array_equal(estimate.values, expected)


def test_mc_reproducible_across_threads():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    one = estimate_values_mc(table, schedule, 0.05, 9000, 5, block_size=1000, threads=1)
    many = estimate_values_mc(table, schedule, 0.05, 9000, 5, block_size=1000, threads=4)
    assert np.array_equal(one.values, many.values)
    assert np.array_equal(one.stderr, many.stderr)
    assert np.array_equal(one.equity_mean, many.equity_mean)


def test_mc_antithetic():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    y0 = net_equity(table, 100.0)
    estimate = estimate_values_mc(table, schedule, 0.0, 20_000, 8, antithetic=True)
    assert abs(y0 + estimate.total_value - 100.0) <= 4 * estimate.total_stderr
    with pytest.raises(ValueError):
        estimate_values_mc(table, schedule, 0.0, 20_001, 8, antithetic=True)


def test_mc_needs_two_paths():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    with pytest.raises(ValueError):
        estimate_values_mc(table, schedule, 0.0, 1, 8)


def test_deterministic_conservation_linear():
    payoffs = [CallStyle(0.2), CallStyle(0.5), CallStyle(0.3), CallStyle(0.25)]
    schedule = make_schedule(100.0, 0.3, [0.5, 1.0, 1.5, 2.0], payoffs)
    result = value_schedule(schedule, GridSpec(anchor=100.0))
    assert abs(result.conservation_residual) <= 1e-6 * 100.0
    assert result.diagnostics["total_contract_value"] == pytest.approx(sum(result.contract_values), rel=1e-8)


def test_deterministic_conservation_kinked():
    schedule = _mixed_schedule()
    result = value_schedule(schedule, GridSpec(anchor=100.0))
    assert abs(result.conservation_residual) <= 1e-6 * 100.0
    assert result.net_equity + result.diagnostics["total_contract_value"] == pytest.approx(100.0, rel=1e-6)


def test_contract_values_against_monte_carlo():
    schedule = _mixed_schedule()
    table = build_value_functions(schedule, _grid(100.0))
    w = contract_value_functions(table, schedule, 0.0, _grid(100.0))
    estimate = estimate_values_mc(table, schedule, 0.0, 50_000, 21)
    for wj, mean, stderr in zip(w, estimate.values, estimate.stderr):
        assert evaluate(wj, 0.0) == 0.0
        assert abs(evaluate(wj, 100.0) - mean) <= 4 * stderr


def test_single_contract_value():
    schedule = make_schedule(100.0, 0.2, [1.0], [CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    w = contract_value_function(table, schedule, 1)
    assert evaluate(w, 100.0) == pytest.approx(50.0, rel=1e-10)
    with pytest.raises(UnknownContract):
        contract_value_function(table, schedule, 2)


def test_market_price_exceeds_risk_neutral_with_positive_drift():
    schedule = _mixed_schedule()
    grid = _grid(100.0)
    table = build_value_functions(schedule, grid)
    for j in range(1, schedule.n + 1):
        neutral = evaluate(contract_value_function(table, schedule, j, 0.0, grid), 100.0)
        market = evaluate(contract_value_function(table, schedule, j, 0.1, grid), 100.0)
        assert market >= neutral


def test_debt_value_function():
    schedule = make_schedule(100.0, 0.25, [1.0, 2.0], [CallStyle(0.5), CallStyle(1.0)])
    table = build_value_functions(schedule, _grid(100.0))
    debt = debt_value_function(table, schedule)
    assert evaluate(debt, 100.0) + net_equity(table, 100.0) == pytest.approx(100.0, rel=1e-8)


def test_explicit_payoff_schedule():
    payoff = ExplicitPLF(((0.0, 0.0), (40.0, 0.0), (80.0, 10.0)), 0.1)
    schedule = make_schedule(100.0, 0.25, [1.0], [payoff])
    result = value_schedule(schedule, _grid(100.0))
    assert 0.0 < result.contract_values[0] < 100.0
    assert abs(result.conservation_residual) <= 1e-3 * 100.0


def test_grid_refinement_converges():
    schedule = _mixed_schedule()
    coarse = net_equity(build_value_functions(schedule, _grid(100.0, 256)), 100.0)
    fine = net_equity(build_value_functions(schedule, _grid(100.0, 1024)), 100.0)
    finest = net_equity(build_value_functions(schedule, _grid(100.0, 4096)), 100.0)
    assert abs(fine - finest) <= abs(coarse - finest) + 1e-12


def test_zero_gross_equity():
    schedule = make_schedule(0.0, 0.2, [1.0], [CallStyle(1.0)])
    result = value_schedule(schedule)
    assert result.net_equity == 0.0
    assert result.contract_values == (0.0,)


def test_grid_spec_checks():
    with pytest.raises(ConfigError):
        GridSpec(num_nodes=4).check()
    with pytest.raises(ConfigError):
        GridSpec(quantile_span=0.4).check()


def test_terminal_quantiles():
    lo, hi = terminal_quantiles(_mixed_schedule(), 0.9)
    m, s = -0.09, 0.3 * math.sqrt(2.0)
    assert lo == pytest.approx(math.exp(m - 1.6448536269514722 * s), rel=1e-12)
    assert hi == pytest.approx(math.exp(m + 1.6448536269514722 * s), rel=1e-12)
    assert terminal_quantiles(_mixed_schedule(0.0), 0.9) == pytest.approx((1.0, 1.0))
