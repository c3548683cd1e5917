"""Price panel ingestion, returns and the optional min-max / log-shift transform."""
from __future__ import annotations

import datetime as dt
import logging
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd

from .data_models import PricePanel, ReturnPanel, WindowSpec
from .errors import DataError, DegenerateSeriesError

logger = logging.getLogger(__name__)

DEFAULT_MISSING_CUTOFF = 0.05
DEFAULT_SHIFT = 0.5  # 无文献依据的默认值，可配置
DEFAULT_EPSILON = 1e-6
FLOAT_FORMAT = "%.10g"


def load_panel(
    path: str | Path,
    missing_cutoff: float = DEFAULT_MISSING_CUTOFF,
    layout: Literal["wide", "long"] = "wide",
    date_column: Optional[str] = None,
    sep: str = ",",
    date_format: Optional[str] = None,
) -> PricePanel:
    """Read a price CSV into a clean :class:`PricePanel`.

    Wide layout: ``date,T1,T2,...``. Long layout: ``date,ticker,price`` rows.

    Cleaning, in order: tickers whose missing fraction exceeds ``missing_cutoff``
    are dropped (listed in ``panel.dropped``), interior gaps are forward-filled,
    and rows that still have gaps (leading rows) are removed.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, sep=sep, dtype=str, keep_default_na=True)
    except FileNotFoundError as e:
        raise DataError(f"price file not found: {path}") from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataError(f"unreadable price file {path}: {e}") from e
    if raw.shape[1] < 2:
        raise DataError(f"{path}: need a date column and at least one price column")

    date_col = date_column or raw.columns[0]
    if date_col not in raw.columns:
        raise DataError(f"{path}: date column {date_col!r} not found")
    try:
        dates = pd.to_datetime(raw[date_col], format=date_format or "ISO8601")
    except (ValueError, TypeError) as e:
        raise DataError(f"{path}: unparsable date: {e}") from e

    if layout == "long":
        cols = [c for c in raw.columns if c != date_col]
        if len(cols) != 2:
            raise DataError(f"{path}: long layout expects date,ticker,price columns")
        ticker_col, price_col = cols
        long = pd.DataFrame(
            {
                "date": dates.to_numpy(),
                "ticker": raw[ticker_col].astype(str).str.strip(),
                "price": pd.to_numeric(raw[price_col], errors="coerce"),
            }
        )
        if long.duplicated(["date", "ticker"]).any():
            raise DataError(f"{path}: duplicate (date, ticker) rows")
        wide = long.pivot(index="date", columns="ticker", values="price")
    else:
        wide = raw.drop(columns=[date_col]).apply(pd.to_numeric, errors="coerce")
        wide.index = pd.DatetimeIndex(dates.to_numpy(), name="date")
        wide.columns = [str(c).strip() for c in wide.columns]
        if wide.index.has_duplicates:
            dup = wide.index[wide.index.duplicated()][0].date()
            raise DataError(f"{path}: duplicate date {dup}")

    wide = wide.sort_index()
    wide.index = pd.DatetimeIndex(wide.index, name="date")
    return clean_panel(wide, missing_cutoff=missing_cutoff, source=str(path))


def clean_panel(wide: pd.DataFrame, missing_cutoff: float = DEFAULT_MISSING_CUTOFF, source: str = "<frame>") -> PricePanel:
    if not 0.0 <= missing_cutoff <= 1.0:
        raise DataError(f"missing_cutoff must be in [0, 1], got {missing_cutoff}")
    if wide.empty:
        raise DataError(f"{source}: no rows")

    missing = wide.isna().mean(axis=0)
    dropped = sorted(str(t) for t in missing.index[missing > missing_cutoff])
    if dropped:
        logger.warning("%s: dropping %d tickers over %.1f%% missing: %s", source, len(dropped), 100 * missing_cutoff, dropped)
    kept = wide.drop(columns=dropped)

    # 前向填充只用过去的数据；前导缺口无法填充，整行删除
    kept = kept.ffill().dropna(axis=0, how="any")
    if kept.shape[1] < 2:
        raise DataError(f"{source}: fewer than 2 tickers survive cleaning")
    if kept.empty:
        raise DataError(f"{source}: no complete rows after cleaning")
    values = kept.to_numpy(dtype=float)
    if not np.isfinite(values).all() or (values <= 0).any():
        bad = kept.columns[(~np.isfinite(values) | (values <= 0)).any(axis=0)].tolist()
        raise DataError(f"{source}: non-positive or non-finite prices after cleaning (corrupt data?): {bad}")

    logger.info("%s: loaded %d dates x %d tickers", source, kept.shape[0], kept.shape[1])
    return PricePanel(kept, dropped=tuple(dropped))


def write_panel(panel: PricePanel, path: str | Path) -> Path:
    path = Path(path)
    frame = panel.frame
    frame.index = frame.index.strftime("%Y-%m-%d")
    frame.to_csv(path, float_format=FLOAT_FORMAT, index_label="date", lineterminator="\n")
    return path


def from_arrays(dates: Sequence, columns: dict[str, Sequence[float]]) -> PricePanel:
    """Convenience constructor used by simulations and tests."""
    frame = pd.DataFrame({k: np.asarray(v, dtype=float) for k, v in columns.items()}, index=pd.DatetimeIndex(pd.to_datetime(list(dates)), name="date"))
    return PricePanel(frame)


# ──────────────────────────────────────────────────────────────────────────────
# 收益率
# ──────────────────────────────────────────────────────────────────────────────

def simple_returns(prices: np.ndarray) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    return (prices[1:] - prices[:-1]) / prices[:-1]


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """R_t = (P_t - P_{t-1}) / P_{t-1}, stamped with the later date."""
    if len(panel) < 2:
        raise DataError("need at least 2 dates to compute returns")
    values = panel.prices
    rets = simple_returns(values)
    frame = pd.DataFrame(rets, index=panel.index[1:], columns=panel.tickers)
    return ReturnPanel(frame)


def reconstruct_prices(first_row: np.ndarray, returns: np.ndarray) -> np.ndarray:
    first = np.asarray(first_row, dtype=float)
    growth = np.cumprod(1.0 + np.asarray(returns, dtype=float), axis=0)
    return np.concatenate([first[None, ...], first * growth], axis=0)


# ──────────────────────────────────────────────────────────────────────────────
# 归一化 + 对数平移
# ──────────────────────────────────────────────────────────────────────────────

def normalize_minmax(series) -> np.ndarray:
    x = np.asarray(series, dtype=float)
    if x.size < 2:
        raise DataError("min-max normalization needs at least 2 points")
    lo, hi = x.min(), x.max()
    if hi == lo:
        raise DegenerateSeriesError("constant series cannot be min-max normalized")
    return (x - lo) / (hi - lo)


def log_shift_transform(normalized, shift: float = DEFAULT_SHIFT, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """(1 - shift) * log(max(x, epsilon)). Clamping avoids log(0) at the series minimum."""
    if not 0.0 <= shift < 1.0:
        raise DataError(f"shift must be in [0, 1), got {shift}")
    if not epsilon > 0:
        raise DataError("epsilon must be positive")
    x = np.asarray(normalized, dtype=float)
    return (1.0 - shift) * np.log(np.maximum(x, epsilon))


def transformed_returns(panel: PricePanel, shift: float = DEFAULT_SHIFT, epsilon: float = DEFAULT_EPSILON) -> ReturnPanel:
    """Min-max, log-shift, then the simple-return formula on the transformed levels.

    Transformed levels are <= 0 and hit 0 at each ticker's maximum, so the
    denominators are clamped to at most ``-(1 - shift) * epsilon``.
    """
    if len(panel) < 2:
        raise DataError("need at least 2 dates to compute returns")
    out = {}
    floor = -(1.0 - shift) * epsilon
    for ticker in panel.tickers:
        d2 = log_shift_transform(normalize_minmax(panel.column(ticker)), shift=shift, epsilon=epsilon)
        denom = np.minimum(d2[:-1], floor)
        out[ticker] = (d2[1:] - d2[:-1]) / denom
    # 变换后的“收益”不受 > -1 约束
    return ReturnPanel(pd.DataFrame(out, index=panel.index[1:]), check=False)


# ──────────────────────────────────────────────────────────────────────────────
# 时间窗口
# ──────────────────────────────────────────────────────────────────────────────

def _window_mask(index: pd.DatetimeIndex, window: WindowSpec) -> np.ndarray:
    start = pd.Timestamp(window.start)
    end = pd.Timestamp(window.end)
    return (index >= start) & (index <= end)


def slice_panel(panel: PricePanel, window: WindowSpec) -> PricePanel:
    mask = _window_mask(panel.index, window)
    if not mask.any():
        raise DataError(f"window {window} does not intersect panel range [{panel.dates[0]}..{panel.dates[-1]}]")
    return PricePanel(panel.frame.loc[mask], dropped=panel.dropped)


def slice_returns(returns: ReturnPanel, window: WindowSpec) -> ReturnPanel:
    mask = _window_mask(returns.index, window)
    if not mask.any():
        raise DataError(f"window {window} does not intersect return range")
    return ReturnPanel(returns.frame.loc[mask], check=False)


# 公开名称
slice = slice_panel  # noqa: A001


def clamp_window(panel: PricePanel, window: WindowSpec) -> WindowSpec:
    """Clamp a window to the panel's first/last date (the rule applied to configured splits)."""
    first, last = panel.dates[0], panel.dates[-1]
    start, end = max(window.start, first), min(window.end, last)
    if start > end:
        raise DataError(f"window {window} outside panel range [{first}..{last}]")
    return WindowSpec(start=start, end=end)


def window_of(panel: PricePanel) -> WindowSpec:
    dates = panel.dates
    return WindowSpec(start=dates[0], end=dates[-1])


def to_date(value) -> dt.date:
    return pd.Timestamp(value).date()
