import datetime as dt

import numpy as np
import pandas as pd
import pytest

from pairsniper.backtest import (
    backtest_arrays,
    backtest_frame,
    check_pit,
    cumulative_return,
    default_splits,
    leg_weights,
    max_drawdown,
    pair_daily_returns,
    run_backtest,
    run_portfolio,
    sharpe_ratio,
)
from pairsniper.data_models import PairKey, SignalSeries, SpreadModel, Thresholds
from pairsniper.errors import DataError, PitViolation
from pairsniper.market_data import from_arrays
from pairsniper.signal_engine import fit_spread_model
from pairsniper.simulation import simulate_panel, simulated_pairs
from conftest import PAIR, bdates, ou_pair, window

BASE = Thresholds(theta_in=2.0, theta_out=1.0)


def _signals(positions):
    n = len(positions)
    return SignalSeries(dates=tuple(d.date() for d in bdates(n)), z_scores=np.zeros(n), positions=positions)


def test_leg_weights():
    assert leg_weights("equal") == (0.5, 0.5)
    assert leg_weights("beta", 3.0) == (0.25, 0.75)
    wx, wy = leg_weights("beta", -0.5)
    assert (wx, wy) == (pytest.approx(2 / 3), pytest.approx(-1 / 3))
    assert abs(wx) + abs(wy) == pytest.approx(1.0)


def test_negative_beta_trades_both_legs_one_way():
    sig = _signals([0, 1])
    # 空 X、空 |beta| 份 Y：两腿同涨时亏损
    r = pair_daily_returns(sig, [0.0, 0.01], [0.0, 0.01], leg_weighting="beta", beta=-0.5)
    assert r == pytest.approx([0.0, -0.01])
    r = pair_daily_returns(sig, [0.0, 0.01], [0.0, 0.01], leg_weighting="beta", beta=0.5)
    assert r == pytest.approx([0.0, (0.5 - 1.0) / 1.5 * 0.01])


def test_pair_daily_returns_examples():
    sig = _signals([0, 1, 1, -1])
    rx = [0.0, 0.02, -0.01, 0.03]
    ry = [0.0, 0.01, 0.01, -0.02]
    assert pair_daily_returns(sig, rx, ry) == pytest.approx([0.0, -0.005, 0.01, 0.025])
    assert pair_daily_returns(sig, rx, ry, leg_weighting="beta", beta=3.0) == pytest.approx(
        [0.0, 0.75 * 0.01 - 0.25 * 0.02, 0.75 * 0.01 + 0.25 * 0.01, -(0.75 * -0.02 - 0.25 * 0.03)]
    )
    with pytest.raises(DataError):
        pair_daily_returns(sig, rx[:3], ry)


def test_pair_daily_returns_costs():
    sig = _signals([0, 1, 1, -1])
    zero = [0.0] * 4
    assert pair_daily_returns(sig, zero, zero, cost_bps=10.0) == pytest.approx([0.0, -0.001, 0.0, -0.002])


def test_cumulative_return():
    assert cumulative_return([]) == 0.0
    assert cumulative_return([0.1, -0.1]) == pytest.approx(-0.01)
    assert cumulative_return([0.1, -0.1], mode="arithmetic") == pytest.approx(0.0)
    assert cumulative_return([0.0, 0.0, 0.0]) == 0.0
    with pytest.raises(DataError):
        cumulative_return([0.2, -1.5])


def test_cumulative_return_bounded(rng):
    daily = rng.uniform(-0.99, 0.5, 500)
    assert cumulative_return(daily) >= -1.0


def test_compounded_not_far_below_arithmetic(rng):
    for _ in range(200):
        r = rng.uniform(-0.05, 0.05, 250)
        lower = cumulative_return(r, "arithmetic") - 0.5 * np.sum(r**2) - np.sum(np.abs(r) ** 3)
        assert cumulative_return(r) >= lower


def test_max_drawdown_and_sharpe():
    assert max_drawdown([0.1, -0.5]) == pytest.approx(-0.5)
    assert max_drawdown([0.01, 0.02]) == 0.0
    assert max_drawdown([]) == 0.0
    assert max_drawdown([-0.1]) == pytest.approx(-0.1)
    assert sharpe_ratio([0.25, 0.25, 0.25]) == 0.0
    assert sharpe_ratio([0.01, -0.01, 0.02]) > 0


def test_check_pit():
    dates = bdates(10)
    check_pit(window(dates, 0, 4), window(dates, 5, 9))
    with pytest.raises(PitViolation):
        check_pit(window(dates, 0, 5), window(dates, 5, 9))
    with pytest.raises(PitViolation):
        check_pit(window(dates, 5, 9), window(dates, 0, 4))


def test_run_backtest_no_trades(ou_fixture):
    panel, model, _, test_w = ou_fixture
    report = run_backtest(panel, PAIR, model, Thresholds(theta_in=50.0, theta_out=0.5), test_w)
    assert report.n_trades == 0
    assert report.cumulative_return == 0.0
    assert np.all(report.equity == 1.0)
    assert report.max_drawdown == 0.0


def test_run_backtest_report(ou_fixture):
    panel, model, _, test_w = ou_fixture
    report = run_backtest(panel, PAIR, model, BASE, test_w)
    assert len(report.dates) == 250 and report.dates[0] == test_w.start
    assert report.daily_returns[0] == 0.0
    assert report.n_trades == len(report.signals.trades) > 0
    assert report.cumulative_return == pytest.approx(report.equity[-1] - 1.0)
    assert report.arithmetic_return == pytest.approx(report.daily_returns.sum())
    assert report.total_return == report.cumulative_return
    assert -1.0 <= report.max_drawdown <= 0.0
    assert list(backtest_frame(report).columns) == ["date", "daily_return", "equity"]


def test_run_backtest_rejects_look_ahead(ou_fixture):
    panel, model, fit_w, test_w = ou_fixture
    with pytest.raises(PitViolation):
        run_backtest(panel, PAIR, model, BASE, fit_w)
    overlapping = test_w.model_copy(update={"start": fit_w.end})
    with pytest.raises(PitViolation):
        run_backtest(panel, PAIR, model, BASE, overlapping)


def test_run_backtest_missing_ticker(ou_fixture):
    panel, model, _, test_w = ou_fixture
    other = PairKey(ticker_x="X", ticker_y="Z")
    with pytest.raises(DataError):
        run_backtest(panel, other, model.model_copy(update={"pair": other}), BASE, test_w)
    with pytest.raises(DataError):
        run_backtest(panel, other, model, BASE, test_w)


def test_future_prices_do_not_leak(ou_fixture):
    panel, model, _, test_w = ou_fixture
    frame = panel.frame
    cut = pd.Timestamp(test_w.start) + pd.offsets.BDay(99)
    shorter = test_w.model_copy(update={"end": cut.date()})
    base = run_backtest(panel, PAIR, model, BASE, shorter)

    truncated = from_arrays(frame.index[frame.index <= cut], {c: frame.loc[:cut, c].to_numpy() for c in frame})
    assert np.array_equal(run_backtest(truncated, PAIR, model, BASE, shorter).daily_returns, base.daily_returns)

    shocked = frame.copy()
    shocked.loc[shocked.index > cut, "X"] *= 3.0
    shocked_panel = from_arrays(shocked.index, {c: shocked[c].to_numpy() for c in shocked})
    assert np.array_equal(run_backtest(shocked_panel, PAIR, model, BASE, shorter).daily_returns, base.daily_returns)


def test_rolling_backtest_runs(ou_fixture):
    panel, model, _, test_w = ou_fixture
    report = run_backtest(panel, PAIR, model, BASE, test_w, rolling_window=60)
    assert len(report.dates) == 250
    assert np.isfinite(report.daily_returns).all()


def test_profitable_in_either_leg_order():
    rng = np.random.default_rng(21)
    n_fit, n_test = 100, 40
    t = np.arange(n_fit)
    y_fit = 100.0 + 10.0 * np.sin(t / 5.0)
    x_fit = y_fit + rng.standard_normal(n_fit)
    y_test = np.full(n_test, 100.0)
    x_test = 100.0 + np.linspace(3.0, 0.0, n_test)
    x = np.concatenate([x_fit, x_test])
    y = np.concatenate([y_fit, y_test])
    dates = bdates(n_fit + n_test)
    fit_w, test_w = window(dates, 0, n_fit - 1), window(dates, n_fit, n_fit + n_test - 1)
    pair = PairKey(ticker_x="A", ticker_y="B")

    for a, b in ((x, y), (y, x)):
        panel = from_arrays(dates, {"A": a, "B": b})
        model = fit_spread_model(a[:n_fit], b[:n_fit], pair, fit_w)
        report = run_backtest(panel, pair, model, BASE, test_w)
        assert report.n_trades >= 1
        assert report.cumulative_return > 0


@pytest.mark.slow
def test_ou_pairs_are_profitable_on_average():
    returns = []
    for seed in range(200):
        panel, model, _, test_w = ou_pair(seed, n_test=500)
        returns.append(run_backtest(panel, PAIR, model, BASE, test_w).cumulative_return)
    returns = np.array(returns)
    assert returns.mean() > 0
    assert np.mean(returns > 0) >= 0.9


def test_run_portfolio_single_pair(ou_fixture):
    panel, model, _, test_w = ou_fixture
    single = run_backtest(panel, PAIR, model, BASE, test_w)
    port = run_portfolio(panel, [(PAIR, model, BASE)], test_w)
    assert port.compounded.n == 1
    assert port.compounded.mean == single.cumulative_return
    assert port.compounded.std == 0.0
    assert port.arithmetic.mean == pytest.approx(single.arithmetic_return)
    assert port.n_failed == 0


def test_run_portfolio_records_failures(ou_fixture):
    panel, model, _, test_w = ou_fixture
    other = PairKey(ticker_x="X", ticker_y="Z")
    port = run_portfolio(panel, [(other, model.model_copy(update={"pair": other}), BASE), (PAIR, model, BASE)], test_w)
    assert [r.pair for r in port.reports] == [PAIR]
    assert set(port.failures) == {"X_Z"}
    with pytest.raises(DataError):
        run_portfolio(panel, [], test_w)


def test_run_portfolio_parallel_matches_serial():
    selections, frames = [], {}
    for i in range(3):
        panel, model, _, test_w = ou_pair(100 + i)
        key = PairKey(ticker_x=f"X{i}", ticker_y=f"Y{i}")
        frames[f"X{i}"] = panel.column("X")
        frames[f"Y{i}"] = panel.column("Y")
        selections.append((key, model.model_copy(update={"pair": key}), BASE))
    merged = from_arrays(bdates(750), frames)
    serial = run_portfolio(merged, selections, test_w, n_jobs=1)
    parallel = run_portfolio(merged, list(reversed(selections)), test_w, n_jobs=2)
    assert serial.compounded == parallel.compounded
    assert [r.pair for r in serial.reports] == [r.pair for r in parallel.reports]


def test_default_splits():
    dates = pd.bdate_range("2018-01-01", "2020-12-31")
    splits = default_splits(dates)
    assert splits.test.end == dt.date(2020, 12, 31)
    assert splits.pair_selection.start == dt.date(2018, 1, 1)
    assert splits.training.precedes(splits.test)
    assert splits.validation is None
    assert splits.test.start > dt.date(2020, 9, 30)

    with_val = default_splits(dates, validation_months=3)
    assert with_val.validation is not None
    assert with_val.training.precedes(with_val.validation) and with_val.validation.precedes(with_val.test)

    with pytest.raises(DataError):
        default_splits(pd.bdate_range("2020-01-01", periods=100))


def test_run_portfolio_identical_copies(ou_fixture):
    panel, model, _, test_w = ou_fixture
    port = run_portfolio(panel, [(PAIR, model, BASE)] * 4, test_w)
    single = run_backtest(panel, PAIR, model, BASE, test_w)
    assert port.compounded.n == 4
    assert port.compounded.mean == pytest.approx(single.cumulative_return)
    assert port.compounded.std == pytest.approx(0.0, abs=1e-15)
    assert port.compounded.min == port.compounded.max == single.cumulative_return


def _ou_return(seed: int) -> float:
    panel, model, _, test_w = ou_pair(seed)
    return run_backtest(panel, PAIR, model, BASE, test_w).cumulative_return


@pytest.mark.slow
def test_portfolio_mean_matches_per_pair_simulation():
    panel = simulate_panel(100, 750, seed=17)
    dates = panel.index
    fit_w, test_w = window(dates, 0, 499), window(dates, 500, 749)
    selections = []
    for key in simulated_pairs(100):
        x, y = panel.column(key.ticker_x)[:500], panel.column(key.ticker_y)[:500]
        selections.append((key, fit_spread_model(x, y, key, fit_w), BASE))
    port = run_portfolio(panel, selections, test_w, n_jobs=2)
    assert port.compounded.n == 100

    mc = np.array([_ou_return(1000 + s) for s in range(200)])
    se = np.sqrt(port.compounded.std**2 / 100 + mc.std(ddof=1) ** 2 / mc.size)
    assert abs(port.compounded.mean - mc.mean()) <= 3 * se


def test_arithmetic_mode_allows_total_loss():
    dates = tuple(d.date() for d in bdates(3))
    model = SpreadModel(pair=PAIR, beta=1.0, alpha=0.0, mu_z=0.0, sigma_z=1.0, fit_window=window(bdates(2), 0, 1))
    x, y, z = np.array([1.0, 1.0, 3.0]), np.ones(3), np.array([3.0, 3.0, 0.0])
    report = backtest_arrays(PAIR, model, BASE, dates, x, y, z=z, return_mode="arithmetic")
    assert report.daily_returns.tolist() == [0.0, 0.0, -1.0]
    assert report.total_return == report.arithmetic_return == -1.0
    assert report.cumulative_return == -1.0
    assert report.equity[-1] == 0.0
    assert report.max_drawdown == -1.0
    with pytest.raises(DataError):
        backtest_arrays(PAIR, model, BASE, dates, x, y, z=z, return_mode="compounded")
