import numpy as np
import pandas as pd
import pytest

from pairsniper import yahoo_client
from pairsniper.errors import ConfigError, DataError
from pairsniper.simulation import (
    simulate_cointegrated_pair,
    simulate_ou,
    simulate_panel,
    simulate_random_walk,
    simulated_pairs,
)
from pairsniper.yahoo_client import YahooClient


def test_random_walk_is_positive(rng):
    path = simulate_random_walk(500, rng, start=50.0)
    assert path[0] == 50.0
    assert (path > 0).all()


def test_ou_half_life_and_scale():
    path = simulate_ou(200_000, half_life=10.0, sigma=2.0, rng=np.random.default_rng(1))
    assert path.std() == pytest.approx(2.0, rel=0.05)
    phi = np.corrcoef(path[:-1], path[1:])[0, 1]
    assert phi == pytest.approx(0.5 ** 0.1, abs=0.01)
    with pytest.raises(ConfigError):
        simulate_ou(10, half_life=0.0, sigma=1.0, rng=np.random.default_rng(1))


def test_cointegrated_pair(rng):
    x, y = simulate_cointegrated_pair(1000, rng, beta=2.0)
    assert (x > 0).all() and (y > 0).all()
    spread = x - 2.0 * y
    assert abs(spread.std() - 1.0) < 0.5


def test_simulate_panel_layout():
    panel = simulate_panel(3, 100, seed=5, n_noise=2)
    assert panel.tickers == ["A000", "B000", "A001", "B001", "A002", "B002", "N000", "N001"]
    assert len(panel) == 100
    assert pd.Timestamp(panel.dates[0]) == pd.Timestamp("2015-01-02")
    assert [p.label for p in simulated_pairs(2)] == ["A000_B000", "A001_B001"]
    with pytest.raises(ConfigError):
        simulate_panel(0, 100, n_noise=1)


def test_simulate_panel_paths_are_stable():
    small = simulate_panel(2, 200, seed=9)
    large = simulate_panel(5, 200, seed=9, n_noise=3)
    assert np.array_equal(small.column("A001"), large.column("A001"))
    assert simulate_panel(2, 200, seed=9) == small
    assert simulate_panel(2, 200, seed=10) != small


# ────── Yahoo ──────

class _FakeTicker:
    def __init__(self, symbol):
        self.symbol = symbol

    def history(self, **kwargs):
        if self.symbol == "BAD":
            raise RuntimeError("boom")
        idx = pd.date_range("2024-01-02", periods=3, freq="B", tz="America/New_York")
        base = {"AAA": 10.0, "BBB": 20.0}[self.symbol]
        return pd.DataFrame({"Close": [base, base + 1, base + 2]}, index=idx)


@pytest.fixture
def fake_yf(monkeypatch):
    monkeypatch.setattr(yahoo_client.yf, "Ticker", _FakeTicker)
    monkeypatch.setattr(yahoo_client.time, "sleep", lambda s: None)


def test_yahoo_history(fake_yf):
    s = YahooClient().get_history("aaa", "2024-01-01")
    assert s.name == "AAA"
    assert s.tolist() == [10.0, 11.0, 12.0]
    assert s.index.tz is None
    assert YahooClient(retries=2).get_history("BAD", "2024-01-01").empty


def test_yahoo_panel_frame(fake_yf):
    frame = YahooClient().get_panel_frame(["AAA", "BAD", "BBB"], "2024-01-01")
    assert list(frame.columns) == ["AAA", "BBB"]
    assert frame.index.name == "date"
    with pytest.raises(DataError):
        YahooClient(retries=1).get_panel_frame(["BAD"], "2024-01-01")
