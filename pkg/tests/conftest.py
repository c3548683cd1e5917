from __future__ import annotations

import datetime as dt
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from pairsniper.data_models import PairKey, WindowSpec
from pairsniper.market_data import from_arrays
from pairsniper.signal_engine import fit_spread_model
from pairsniper.simulation import simulate_cointegrated_pair, simulate_random_walk

PAIR = PairKey(ticker_x="X", ticker_y="Y")


def bdates(n: int, start: str = "2018-01-01") -> pd.DatetimeIndex:
    return pd.bdate_range(start, periods=n)


def window(dates, a: int, b: int) -> WindowSpec:
    """Inclusive window over positional dates[a..b]."""
    return WindowSpec(start=pd.Timestamp(dates[a]).date(), end=pd.Timestamp(dates[b]).date())


def ou_pair(seed: int, n_fit: int = 500, n_test: int = 250, half_life: float = 10.0):
    """OU-spread pair X = Y + S with its fit / test windows and the frozen model."""
    rng = np.random.default_rng(seed)
    x, y = simulate_cointegrated_pair(n_fit + n_test, rng, half_life=half_life)
    dates = bdates(n_fit + n_test)
    panel = from_arrays(dates, {"X": x, "Y": y})
    fit_w = window(dates, 0, n_fit - 1)
    test_w = window(dates, n_fit, n_fit + n_test - 1)
    model = fit_spread_model(x[:n_fit], y[:n_fit], PAIR, fit_w)
    return panel, model, fit_w, test_w


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ou_fixture():
    return ou_pair(7)


@pytest.fixture
def three_ticker_csv(tmp_path: Path) -> Path:
    """A and B identical, C independent; 400 business days."""
    rng = np.random.default_rng(3)
    a = simulate_random_walk(400, rng)
    c = simulate_random_walk(400, rng)
    frame = pd.DataFrame({"A": a, "B": a, "C": c}, index=bdates(400))
    path = tmp_path / "three.csv"
    frame.to_csv(path, index_label="date", float_format="%.10g")
    return path


def write_toml(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def iso(d: dt.date) -> str:
    return d.isoformat()
