"""Adjusted-close history from Yahoo Finance, written as a wide price CSV.

Batch snapshot for research runs, not a live feed.
"""
from __future__ import annotations

import logging
import time
from typing import Optional, Sequence

import pandas as pd
import yfinance as yf

from .errors import DataError

logger = logging.getLogger(__name__)


class YahooClient:
    """Thin wrapper around yfinance with retry and backoff per ticker."""

    def __init__(self, retries: int = 3):
        self.retries = retries

    @staticmethod
    def _sleep_backoff(i: int) -> None:
        time.sleep(0.6 + 0.2 * i)

    def get_history(self, ticker: str, start: str, end: Optional[str] = None) -> pd.Series:
        """Adjusted daily closes; empty series when every attempt fails."""
        ticker = (ticker or "").upper()
        tkr = yf.Ticker(ticker)
        for i in range(self.retries):
            try:
                hist = tkr.history(start=start, end=end, interval="1d", auto_adjust=True)
                if isinstance(hist, pd.DataFrame) and not hist.empty and "Close" in hist.columns:
                    close = pd.to_numeric(hist["Close"], errors="coerce")
                    # 去掉时区，只保留日历日期
                    idx = pd.DatetimeIndex(hist.index)
                    if idx.tz is not None:
                        idx = idx.tz_localize(None)
                    close.index = idx.normalize()
                    return close.rename(ticker)
            except Exception as e:
                logger.debug("history for %s failed (attempt %d): %s", ticker, i + 1, e)
                self._sleep_backoff(i)
        logger.warning("no price history for %s", ticker)
        return pd.Series(dtype=float, name=ticker)

    def get_panel_frame(self, tickers: Sequence[str], start: str, end: Optional[str] = None) -> pd.DataFrame:
        """Outer-joined wide frame (date x ticker), gaps left as NaN for ``clean_panel``."""
        series = [self.get_history(t, start, end) for t in tickers]
        series = [s for s in series if not s.empty]
        if not series:
            raise DataError("no ticker returned any price history")
        frame = pd.concat(series, axis=1).sort_index()
        frame.index.name = "date"
        logger.info("downloaded %d/%d tickers, %d dates", frame.shape[1], len(tickers), frame.shape[0])
        return frame
