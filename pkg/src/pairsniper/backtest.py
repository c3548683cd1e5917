"""Daily pair returns, cumulative performance and point-in-time windowed backtests."""
from __future__ import annotations

import logging
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data_models import (
    AggregateStats,
    BacktestReport,
    PairKey,
    PortfolioReport,
    PricePanel,
    SignalSeries,
    SplitConfig,
    SpreadModel,
    Thresholds,
    WindowSpec,
)
from .errors import DataError, PairsError, PitViolation
from .market_data import simple_returns, slice_panel
from .signal_engine import ExitMode, rolling_z_scores, signals_from_z, z_scores

logger = logging.getLogger(__name__)

ReturnMode = Literal["compounded", "arithmetic"]
LegWeighting = Literal["equal", "beta"]
TRADING_DAYS = 252


def check_pit(fit_window: WindowSpec, eval_window: WindowSpec) -> None:
    """Parameters must come strictly before the window they are evaluated on."""
    if not fit_window.precedes(eval_window):
        raise PitViolation(f"fit window {fit_window} does not strictly precede evaluation window {eval_window}")


def leg_weights(leg_weighting: LegWeighting = "equal", beta: float = 1.0) -> tuple[float, float]:
    """(w_X, w_Y) notional weights, gross exposure |w_X| + |w_Y| = 1.

    In ``beta`` mode w_Y carries the sign of beta: with a negative hedge ratio
    both legs are traded in the same direction.
    """
    if leg_weighting == "equal":
        return 0.5, 0.5
    b = abs(beta)
    return 1.0 / (1.0 + b), beta / (1.0 + b)


def pair_daily_returns(
    signals: SignalSeries,
    x_returns,
    y_returns,
    leg_weighting: LegWeighting = "equal",
    beta: float = 1.0,
    cost_bps: float = 0.0,
) -> np.ndarray:
    """r_t = position_t * (w_Y * R_Y,t - w_X * R_X,t), minus optional turnover cost.

    +1 is short X / long Y. With equal legs this is 0.5 * (R_Y - R_X).
    """
    pos = signals.positions.astype(float)
    rx = np.asarray(x_returns, dtype=float)
    ry = np.asarray(y_returns, dtype=float)
    if not (rx.size == ry.size == pos.size):
        raise DataError(f"length mismatch: positions={pos.size}, x={rx.size}, y={ry.size}")
    wx, wy = leg_weights(leg_weighting, beta)
    r = pos * (wy * ry - wx * rx)
    if cost_bps:
        turnover = np.abs(np.diff(pos, prepend=0.0))
        r = r - turnover * cost_bps / 1e4
    return r


def cumulative_return(daily, mode: ReturnMode = "compounded") -> float:
    r = np.asarray(daily, dtype=float)
    if r.size == 0:
        return 0.0
    if mode == "arithmetic":
        return float(r.sum())
    if (r <= -1).any():
        raise DataError("compounded aggregation needs every daily return > -1")
    return float(np.prod(1.0 + r) - 1.0)


def equity_curve(daily) -> np.ndarray:
    return np.cumprod(1.0 + np.asarray(daily, dtype=float))


def _drawdown(eq: np.ndarray) -> float:
    if eq.size == 0:
        return 0.0
    peak = np.maximum.accumulate(np.concatenate([[1.0], eq]))[1:]
    return float(max(-1.0, min(0.0, (eq / peak - 1.0).min())))


def max_drawdown(daily) -> float:
    """Worst peak-to-trough loss of the compounded equity curve, in [-1, 0]."""
    return _drawdown(equity_curve(daily))


def _wiped_out_equity(daily) -> np.ndarray:
    """Compounded equity that stays at 0 from the first day with r <= -1."""
    r = np.asarray(daily, dtype=float)
    wiped = np.cumsum(r <= -1) > 0
    return np.where(wiped, 0.0, equity_curve(np.where(wiped, 0.0, r)))


def sharpe_ratio(daily, periods: int = TRADING_DAYS) -> float:
    r = np.asarray(daily, dtype=float)
    if r.size < 2:
        return 0.0
    sd = float(np.std(r, ddof=1))
    return float(r.mean() / sd * np.sqrt(periods)) if sd > 0 else 0.0


def backtest_arrays(
    pair: PairKey,
    model: SpreadModel,
    thresholds: Thresholds,
    dates: Sequence,
    x_prices: np.ndarray,
    y_prices: np.ndarray,
    z: Optional[np.ndarray] = None,
    exit_mode: ExitMode = "band",
    leg_weighting: LegWeighting = "equal",
    cost_bps: float = 0.0,
    return_mode: ReturnMode = "compounded",
) -> BacktestReport:
    """Core of :func:`run_backtest` on already-windowed arrays.

    Day-0 returns are zero; the position on day 0 is always flat.
    """
    if z is None:
        z = z_scores(model, x_prices, y_prices)
    signals = signals_from_z(z, dates, thresholds, exit_mode)
    rx = np.concatenate([[0.0], simple_returns(x_prices)])
    ry = np.concatenate([[0.0], simple_returns(y_prices)])
    daily = pair_daily_returns(signals, rx, ry, leg_weighting=leg_weighting, beta=model.beta, cost_bps=cost_bps)
    if return_mode == "compounded" or (daily > -1).all():
        equity = equity_curve(daily)
        compounded = cumulative_return(daily, "compounded")
    else:
        # 算术模式允许 r <= -1；复利口径记为全部亏光
        equity = _wiped_out_equity(daily)
        compounded = -1.0
    return BacktestReport(
        pair=pair,
        dates=signals.dates,
        daily_returns=daily,
        equity=equity,
        cumulative_return=compounded,
        arithmetic_return=cumulative_return(daily, "arithmetic"),
        return_mode=return_mode,
        n_trades=len(signals.trades),
        return_std=float(np.std(daily, ddof=1)) if daily.size > 1 else 0.0,
        max_drawdown=_drawdown(equity),
        signals=signals,
    )


def window_arrays(panel: PricePanel, pair: PairKey, window: WindowSpec) -> tuple[tuple, np.ndarray, np.ndarray]:
    for t in (pair.ticker_x, pair.ticker_y):
        if t not in panel.tickers:
            raise DataError(f"ticker {t!r} missing from panel")
    sliced = slice_panel(panel, window)
    return tuple(sliced.index.date), sliced.column(pair.ticker_x), sliced.column(pair.ticker_y)


def run_backtest(
    panel: PricePanel,
    pair: PairKey,
    model: SpreadModel,
    thresholds: Thresholds,
    window: WindowSpec,
    exit_mode: ExitMode = "band",
    leg_weighting: LegWeighting = "equal",
    cost_bps: float = 0.0,
    return_mode: ReturnMode = "compounded",
    rolling_window: Optional[int] = None,
) -> BacktestReport:
    """Backtest one pair on ``window`` with a spread model frozen on an earlier window."""
    check_pit(model.fit_window, window)
    if model.pair != pair:
        raise DataError(f"spread model is for {model.pair}, not {pair}")
    dates, px, py = window_arrays(panel, pair, window)
    z = None
    if rolling_window:
        _, hx, hy = window_arrays(panel, pair, model.fit_window)
        z = rolling_z_scores(model, hx, hy, px, py, rolling_window)
    return backtest_arrays(pair, model, thresholds, dates, px, py, z=z, exit_mode=exit_mode,
                           leg_weighting=leg_weighting, cost_bps=cost_bps, return_mode=return_mode)


def _backtest_one(panel, pair, model, thresholds, window, opts):
    try:
        return run_backtest(panel, pair, model, thresholds, window, **opts), None
    except PairsError as e:
        return None, str(e)


def run_portfolio(
    panel: PricePanel,
    selections: Sequence[tuple[PairKey, SpreadModel, Thresholds]],
    window: WindowSpec,
    n_jobs: int = 1,
    **opts,
) -> PortfolioReport:
    """Independent per-pair backtests plus cross-pair mean/std/min/max of returns."""
    if not selections:
        raise DataError("run_portfolio needs at least one selection")
    ordered = sorted(selections, key=lambda s: (s[0].ticker_x, s[0].ticker_y))
    if n_jobs == 1:
        outcomes = [_backtest_one(panel, p, m, t, window, opts) for p, m, t in ordered]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_backtest_one)(panel, p, m, t, window, opts) for p, m, t in ordered)

    reports, failures = [], {}
    for (pair, _, _), (report, err) in zip(ordered, outcomes):
        if err is not None:
            failures[pair.label] = err
            logger.warning("backtest failed for %s: %s", pair, err)
        else:
            reports.append(report)
    out = PortfolioReport(
        reports=tuple(reports),
        compounded=AggregateStats.of(r.cumulative_return for r in reports),
        arithmetic=AggregateStats.of(r.arithmetic_return for r in reports),
        failures=failures,
    )
    logger.info("portfolio on %s: %d pairs, mean return %.4f (std %.4f), %d failed",
                window, out.compounded.n, out.compounded.mean, out.compounded.std, len(failures))
    return out


def default_splits(dates: Sequence, train_months: int = 12, test_months: int = 3, validation_months: int = 0) -> SplitConfig:
    """Contiguous windows ending at the last date: [selection | training | (validation) | test]."""
    idx = pd.DatetimeIndex(pd.to_datetime(list(dates))).sort_values()
    if idx.empty:
        raise DataError("no dates to split")

    def tail(sub: pd.DatetimeIndex, months: int, name: str) -> pd.DatetimeIndex:
        if sub.empty:
            raise DataError(f"not enough history for the {name} window")
        return sub[sub > sub[-1] - pd.DateOffset(months=months)]

    def span(sub: pd.DatetimeIndex) -> WindowSpec:
        return WindowSpec(start=sub[0].date(), end=sub[-1].date())

    test = tail(idx, test_months, "test")
    rest = idx[idx < test[0]]
    validation = None
    if validation_months:
        val = tail(rest, validation_months, "validation")
        validation = span(val)
        rest = rest[rest < val[0]]
    training = tail(rest, train_months, "training")
    selection = rest[rest < training[0]]
    if selection.empty:
        raise DataError("not enough history for the pair-selection window")
    return SplitConfig(pair_selection=span(selection), training=span(training), validation=validation, test=span(test))


def backtest_frame(report: BacktestReport) -> pd.DataFrame:
    return pd.DataFrame({"date": list(report.dates), "daily_return": report.daily_returns, "equity": report.equity})
