"""Spread model, z-scores and the two-threshold entry/exit state machine."""
from __future__ import annotations

import datetime as dt
import logging
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd

from .cointegration import fit_ols
from .data_models import PairKey, SignalSeries, SpreadModel, Thresholds, Trade, WindowSpec
from .errors import DataError, DegenerateSeriesError

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 15
ExitMode = Literal["band", "zero_cross"]


def fit_spread_model(
    x,
    y,
    pair: PairKey,
    window: WindowSpec,
    with_intercept: bool = True,
    min_points: int = MIN_FIT_POINTS,
) -> SpreadModel:
    """Freeze (beta, alpha, mu_Z, sigma_Z) from in-window prices only.

    ``x``/``y`` must already be restricted to ``window``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < min_points:
        raise DataError(f"fit window {window} has {x.size} points, need >= {min_points}")
    ols = fit_ols(x, y, with_intercept=with_intercept)
    resid = ols.residuals
    sigma = float(np.std(resid, ddof=1))
    scale = max(1.0, float(np.abs(x).mean()))
    if not sigma > 1e-10 * scale:
        raise DegenerateSeriesError(f"degenerate spread for {pair}: sigma_Z = {sigma:.3g}")
    return SpreadModel(
        pair=pair,
        beta=ols.beta,
        alpha=ols.alpha,
        mu_z=float(resid.mean()),
        sigma_z=sigma,
        fit_window=window,
    )


def spread(model: SpreadModel, x, y) -> np.ndarray:
    return np.asarray(x, dtype=float) - model.alpha - model.beta * np.asarray(y, dtype=float)


def z_score(model: SpreadModel, x_t: float, y_t: float) -> float:
    return (x_t - model.alpha - model.beta * y_t - model.mu_z) / model.sigma_z


def z_scores(model: SpreadModel, x, y) -> np.ndarray:
    return (spread(model, x, y) - model.mu_z) / model.sigma_z


def rolling_z_scores(model: SpreadModel, history_x, history_y, x, y, window: int) -> np.ndarray:
    """z-scores with mu/sigma re-estimated over a trailing window ending at t.

    beta/alpha stay frozen; ``history_*`` (the fit window) seeds the first values, so
    every z_t uses spreads up to and including t only.
    """
    if window < 2:
        raise DataError("rolling window must be >= 2")
    hist = spread(model, history_x, history_y)
    cur = spread(model, x, y)
    full = pd.Series(np.concatenate([hist, cur]))
    roll = full.rolling(window, min_periods=window)
    mu = roll.mean().to_numpy()[hist.size:]
    sd = roll.std(ddof=1).to_numpy()[hist.size:]
    # 历史不足一个窗口时回退到冻结参数
    mu = np.where(np.isnan(mu), model.mu_z, mu)
    sd = np.where(np.isnan(sd) | (sd <= 0), model.sigma_z, sd)
    return (cur - mu) / sd


def _positions(z: np.ndarray, theta_in: float, theta_out: float, exit_mode: ExitMode) -> np.ndarray:
    n = z.size
    pos = np.zeros(n, dtype=np.int8)
    for t in range(1, n):
        prev = pos[t - 1]
        zp = z[t - 1]
        if prev == 0:
            if zp > theta_in:
                pos[t] = 1
            elif zp < -theta_in:
                pos[t] = -1
        elif exit_mode == "band":
            pos[t] = 0 if abs(zp) <= theta_out else prev
        else:
            crossed = zp <= 0 if prev == 1 else zp >= 0
            pos[t] = 0 if crossed else prev
    return pos


def _trades(dates: Sequence[dt.date], z: np.ndarray, pos: np.ndarray) -> list[Trade]:
    trades = []
    n = pos.size
    t = 1
    while t < n:
        if pos[t] != 0 and pos[t - 1] == 0:
            start = t
            direction = int(pos[t])
            while t < n and pos[t] == direction:
                t += 1
            if t < n:
                trades.append(Trade(entry_date=dates[start], exit_date=dates[t], direction=direction,
                                    entry_z=float(z[start - 1]), exit_z=float(z[t - 1])))
            else:
                trades.append(Trade(entry_date=dates[start], exit_date=dates[n - 1], direction=direction,
                                    entry_z=float(z[start - 1]), exit_z=float(z[n - 1]), forced=True))
            continue
        t += 1
    return trades


def signals_from_z(z, dates: Sequence, thresholds: Thresholds, exit_mode: ExitMode = "band") -> SignalSeries:
    """Run the state machine on a precomputed z-score series.

    The position held over day t is decided from z_{t-1}:
    flat and z > theta_in -> +1 (short X, long Y); flat and z < -theta_in -> -1;
    in a position and |z| <= theta_out (or z crossed 0 in ``zero_cross`` mode) -> flat.
    Exit takes effect first, so re-entry is evaluated on the next day's z. An open
    position at the end is force-closed on the final date.
    """
    z = np.asarray(z, dtype=float)
    dates = tuple(dates)
    if z.size != len(dates):
        raise DataError(f"length mismatch: {z.size} z-scores vs {len(dates)} dates")
    pos = _positions(z, thresholds.theta_in, thresholds.theta_out, exit_mode)
    return SignalSeries(dates=dates, z_scores=z, positions=pos, trades=tuple(_trades(dates, z, pos)))


def generate_signals(
    model: SpreadModel,
    x,
    y,
    dates: Sequence,
    thresholds: Thresholds,
    exit_mode: ExitMode = "band",
    z: Optional[np.ndarray] = None,
) -> SignalSeries:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (x.size == y.size == len(dates)):
        raise DataError(f"length mismatch: x={x.size}, y={y.size}, dates={len(dates)}")
    if z is None:
        z = z_scores(model, x, y)
    return signals_from_z(z, dates, thresholds, exit_mode)


def signals_frame(signals: SignalSeries) -> pd.DataFrame:
    return pd.DataFrame({"date": list(signals.dates), "z_score": signals.z_scores, "position": signals.positions})


def trades_frame(signals: SignalSeries) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"entry_date": t.entry_date, "exit_date": t.exit_date, "direction": t.direction,
             "entry_z": t.entry_z, "exit_z": t.exit_z, "forced": t.forced}
            for t in signals.trades
        ],
        columns=["entry_date", "exit_date", "direction", "entry_z", "exit_z", "forced"],
    )
