from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pairsniper.cointegration import (
    adf_test,
    coint_filter,
    coint_frame,
    cointegrated_pairs,
    engle_granger,
    fit_ols,
    schwert_max_lags,
)
from pairsniper.data_models import PairKey
from pairsniper.errors import DataError, DegenerateSeriesError
from pairsniper.market_data import window_of
from pairsniper.simulation import simulate_cointegrated_pair, simulate_ou, simulate_panel, simulated_pairs


def test_fit_ols_examples():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    fit = fit_ols(2 * y, y)
    assert fit.beta == pytest.approx(2.0)
    assert fit.alpha == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(fit.residuals, 0.0)
    assert fit.r_squared == pytest.approx(1.0)

    fit = fit_ols(3.0 + 0.5 * y, y)
    assert (fit.alpha, fit.beta) == (pytest.approx(3.0), pytest.approx(0.5))

    y = np.arange(1.0, 6.0)
    fit = fit_ols(0.5 + 1.4 * y, y)
    assert fit.beta == pytest.approx(1.4) and fit.alpha == pytest.approx(0.5)

    fit = fit_ols([2.0, 3.0, 5.0, 6.0], [1.0, 2.0, 3.0, 4.0])
    assert fit.beta == pytest.approx(1.4, abs=1e-10)
    assert fit.alpha == pytest.approx(0.5, abs=1e-10)
    assert fit.residuals == pytest.approx([0.1, -0.3, 0.3, -0.1], abs=1e-12)


def test_fit_ols_normal_equations(rng):
    y = rng.standard_normal(300).cumsum() + 50
    x = 1.3 * y + rng.standard_normal(300)
    fit = fit_ols(x, y)
    assert abs(fit.residuals.sum()) < 1e-8
    assert abs(np.dot(fit.residuals, y)) < 1e-6
    assert fit.beta == pytest.approx(np.cov(x, y)[0, 1] / np.var(y, ddof=1))
    assert 0.0 <= fit.r_squared <= 1.0


def test_fit_ols_without_intercept():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    fit = fit_ols(2 * y + 1, y, with_intercept=False)
    assert fit.alpha == 0.0
    assert fit.beta == pytest.approx(np.dot(y, 2 * y + 1) / np.dot(y, y))


def test_fit_ols_errors():
    with pytest.raises(DegenerateSeriesError):
        fit_ols([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    with pytest.raises(DataError):
        fit_ols([1.0, 2.0, 3.0], [1.0, 2.0])
    with pytest.raises(DataError):
        fit_ols([1.0, np.nan, 3.0], [1.0, 2.0, 3.0])


def test_schwert_rule():
    assert schwert_max_lags(100) == 12
    assert schwert_max_lags(250) == 15


def test_adf_rejects_stationary(rng):
    z = simulate_ou(500, half_life=1.0, sigma=1.0, rng=rng)
    res = adf_test(z)
    assert res.p_value < 0.01
    assert res.t_stat < res.critical_values["1%"]


def test_adf_errors():
    with pytest.raises(DataError):
        adf_test(np.arange(10.0))
    with pytest.raises(DegenerateSeriesError):
        adf_test(np.full(100, 3.0))
    with pytest.raises(DataError):
        adf_test([1.0] * 50 + [np.inf])


def test_adf_affine_invariant(rng):
    z = rng.standard_normal(200).cumsum()
    base = adf_test(z, max_lags=4)
    moved = adf_test(7.5 * z - 120.0, max_lags=4)
    assert moved.lags_used == base.lags_used
    assert moved.t_stat == pytest.approx(base.t_stat, rel=1e-8)


ADF_FIXTURE = Path(__file__).parent / "data" / "adf_fixture.csv"


def test_adf_stored_fixture():
    # 参考值离线计算：maxlag=10, 常数项, AIC 选阶
    series = pd.read_csv(ADF_FIXTURE, comment="#")["value"].to_numpy()
    assert series.size == 300
    result = adf_test(series, max_lags=10)
    assert result.lags_used == 4
    assert result.n_obs == 295
    assert result.t_stat == pytest.approx(-2.769417114401, abs=1e-6)
    assert result.p_value == pytest.approx(0.062776851712, abs=1e-8)


def test_adf_stored_fixture_matches_statsmodels():
    stattools = pytest.importorskip("statsmodels.tsa.stattools")
    series = pd.read_csv(ADF_FIXTURE, comment="#")["value"].to_numpy()
    t_stat, p_value, used_lag, nobs, _, _ = stattools.adfuller(series, maxlag=10, regression="c", autolag="AIC")
    assert (used_lag, nobs) == (4, 295)
    assert t_stat == pytest.approx(-2.769417114401, abs=1e-6)
    assert p_value == pytest.approx(0.062776851712, abs=1e-6)


def test_adf_matches_statsmodels(rng):
    stattools = pytest.importorskip("statsmodels.tsa.stattools")
    z = np.cumsum(rng.standard_normal(300)) + 0.3 * rng.standard_normal(300)
    ours = adf_test(z, max_lags=10)
    t_stat, p_value, used_lag, nobs, crit, _ = stattools.adfuller(z, maxlag=10, regression="c", autolag="AIC")
    assert ours.t_stat == pytest.approx(t_stat, rel=1e-6)
    assert ours.lags_used == used_lag
    assert ours.n_obs == nobs
    assert ours.p_value == pytest.approx(p_value, abs=1e-8)
    assert ours.critical_values["5%"] == pytest.approx(crit["5%"], abs=1e-8)


@pytest.mark.slow
def test_adf_size_and_power():
    walks = [adf_test(np.random.default_rng(s).standard_normal(250).cumsum()).p_value for s in range(1000)]
    size = np.mean(np.array(walks) < 0.05)
    assert 0.02 <= size <= 0.09
    ar = [adf_test(simulate_ou(250, 5.0, 1.0, np.random.default_rng(s))).p_value for s in range(500)]
    assert np.mean(np.array(ar) < 0.05) > 0.8


@pytest.mark.slow
def test_engle_granger_size_and_power():
    rejected = 0
    for s in range(500):
        r = np.random.default_rng(s)
        x = 100 + r.standard_normal(750).cumsum()
        y = 100 + r.standard_normal(750).cumsum()
        rejected += engle_granger(x, y).cointegrated
    assert 0.02 <= rejected / 500 <= 0.09

    found = 0
    for s in range(500):
        x, y = simulate_cointegrated_pair(750, np.random.default_rng(s))
        found += engle_granger(x, y).cointegrated
    assert found / 500 >= 0.9


def test_engle_granger_recovers_hedge_ratio(rng):
    x, y = simulate_cointegrated_pair(750, rng, beta=1.5, half_life=5.0)
    res = engle_granger(x, y, pair=PairKey.of("X", "Y"))
    assert res.cointegrated
    assert res.ols.beta == pytest.approx(1.5, abs=0.1)
    assert res.p_value < 0.05


def test_engle_granger_identical_series_is_degenerate(rng):
    a = 100 * np.exp(np.cumsum(0.01 * rng.standard_normal(300)))
    with pytest.raises(DegenerateSeriesError):
        engle_granger(a, a)


def test_engle_granger_bad_threshold(rng):
    x, y = simulate_cointegrated_pair(100, rng)
    with pytest.raises(DataError):
        engle_granger(x, y, p_threshold=0.0)


def test_adf_surface_is_more_lenient(rng):
    x, y = simulate_cointegrated_pair(300, rng, half_life=40.0)
    eg = engle_granger(x, y, surface="engle_granger")
    adf = engle_granger(x, y, surface="adf")
    assert eg.adf.t_stat == adf.adf.t_stat
    assert adf.p_value <= eg.p_value


def test_coint_filter_universe():
    panel = simulate_panel(3, 500, seed=4, n_noise=3, half_life=3.0)
    survivors = simulated_pairs(3) + [PairKey(ticker_x="N000", ticker_y="N001"), PairKey(ticker_x="A000", ticker_y="N002")]
    results = coint_filter(panel, window_of(panel), survivors)
    assert len(results) == 5
    chosen = {r.pair for r in cointegrated_pairs(results)}
    assert set(simulated_pairs(3)) <= chosen
    p = [r.p_value for r in results if r.error is None]
    assert p == sorted(p)

    frame = coint_frame(results)
    assert list(frame.columns) == ["ticker_x", "ticker_y", "beta", "alpha", "adf_t", "p_value", "lags", "cointegrated"]
    assert len(frame) == 5


def test_coint_filter_threshold_one_and_failures():
    panel = simulate_panel(2, 300, seed=8, n_noise=2)
    results = coint_filter(panel, window_of(panel), simulated_pairs(2) + [PairKey(ticker_x="N000", ticker_y="N001")],
                           p_threshold=1.0)
    assert all(r.cointegrated == (r.p_value < 1.0) for r in results)

    # 窗口太短：每一对都记录失败，不中断
    short = window_of(panel).model_copy(update={"end": panel.dates[9]})
    failed = coint_filter(panel, short, simulated_pairs(2))
    assert all(r.error is not None and not r.cointegrated for r in failed)


def test_coint_filter_parallel_matches_serial():
    panel = simulate_panel(4, 400, seed=2, n_noise=2)
    pairs = simulated_pairs(4)
    serial = coint_filter(panel, window_of(panel), pairs, n_jobs=1)
    parallel = coint_filter(panel, window_of(panel), pairs, n_jobs=2)
    assert [r.pair for r in serial] == [r.pair for r in parallel]
    assert [r.p_value for r in serial] == [r.p_value for r in parallel]


def test_coint_filter_needs_pairs():
    panel = simulate_panel(1, 100, seed=0)
    with pytest.raises(DataError):
        coint_filter(panel, window_of(panel), [])


def test_adf_power_on_fast_ar1():
    rejected = 0
    for s in range(200):
        r = np.random.default_rng(s)
        z = np.zeros(500)
        eps = r.standard_normal(500)
        for t in range(1, 500):
            z[t] = 0.2 * z[t - 1] + eps[t]
        rejected += adf_test(z).p_value < 0.05
    assert rejected / 200 >= 0.95
