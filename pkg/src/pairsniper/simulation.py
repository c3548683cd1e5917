"""Synthetic price paths: random walks, OU spreads and cointegrated pairs."""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .data_models import PairKey, PricePanel
from .errors import ConfigError
from .market_data import from_arrays

logger = logging.getLogger(__name__)

DEFAULT_START = "2015-01-02"


def simulate_random_walk(n: int, rng: np.random.Generator, start: float = 100.0, vol: float = 0.01) -> np.ndarray:
    """Geometric random walk; first value is ``start``."""
    steps = np.concatenate([[0.0], vol * rng.standard_normal(n - 1)])
    return start * np.exp(np.cumsum(steps))


def simulate_ou(
    n: int,
    half_life: float,
    sigma: float,
    rng: np.random.Generator,
    x0: Optional[float] = None,
) -> np.ndarray:
    """Discrete OU / AR(1) path with stationary standard deviation ``sigma``.

    phi = 0.5 ** (1 / half_life); x0 defaults to a draw from the stationary law.
    """
    if half_life <= 0 or sigma <= 0:
        raise ConfigError("half_life and sigma must be positive")
    phi = 0.5 ** (1.0 / half_life)
    eps = sigma * np.sqrt(1.0 - phi**2) * rng.standard_normal(n)
    eps[0] = sigma * rng.standard_normal() if x0 is None else x0
    return lfilter([1.0], [1.0, -phi], eps)


def simulate_cointegrated_pair(
    n: int,
    rng: np.random.Generator,
    beta: float = 1.0,
    half_life: float = 10.0,
    spread_sd: float = 1.0,
    start: float = 100.0,
    vol: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) with y a random walk and x = beta * y + OU spread.

    If the spread would push x non-positive, x is shifted up by a constant, which
    only changes the intercept.
    """
    y = simulate_random_walk(n, rng, start=start, vol=vol)
    x = beta * y + simulate_ou(n, half_life, spread_sd, rng)
    if x.min() <= 0:
        x = x + (1.0 - x.min())
    return x, y


def simulate_panel(
    n_pairs: int,
    n_days: int,
    seed: int = 0,
    n_noise: int = 0,
    start: str = DEFAULT_START,
    half_life: float = 10.0,
    spread_sd: float = 1.0,
    beta: float = 1.0,
) -> PricePanel:
    """Business-day panel of ``n_pairs`` cointegrated pairs (A###, B###) plus
    ``n_noise`` independent random walks (N###).

    Each path has its own generator keyed on (seed, index), so adding pairs never
    changes the existing ones.
    """
    if n_pairs < 0 or n_noise < 0 or n_pairs * 2 + n_noise < 2:
        raise ConfigError("need at least two simulated tickers")
    dates = pd.bdate_range(start, periods=n_days)
    columns: dict[str, np.ndarray] = {}
    for i in range(n_pairs):
        x, y = simulate_cointegrated_pair(n_days, np.random.default_rng([seed, 0, i]), beta=beta,
                                          half_life=half_life, spread_sd=spread_sd)
        columns[f"A{i:03d}"] = x
        columns[f"B{i:03d}"] = y
    for j in range(n_noise):
        columns[f"N{j:03d}"] = simulate_random_walk(n_days, np.random.default_rng([seed, 1, j]))
    logger.info("simulated %d pairs + %d noise tickers over %d days (seed %d)", n_pairs, n_noise, n_days, seed)
    return from_arrays(dates, columns)


def simulated_pairs(n_pairs: int) -> list[PairKey]:
    return [PairKey(ticker_x=f"A{i:03d}", ticker_y=f"B{i:03d}") for i in range(n_pairs)]
