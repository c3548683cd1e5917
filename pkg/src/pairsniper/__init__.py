"""Pairs-trading research engine: correlation screen, Engle-Granger cointegration,
z-score signals, point-in-time backtests and threshold optimization."""
from .data_models import PairKey, PricePanel, SearchSpace, SplitConfig, SpreadModel, Thresholds, WindowSpec
from .errors import ConfigError, DataError, NumericalError, PairsError, PitViolation

__version__ = "0.1.0"

__all__ = [
    "PairKey",
    "PricePanel",
    "SearchSpace",
    "SplitConfig",
    "SpreadModel",
    "Thresholds",
    "WindowSpec",
    "ConfigError",
    "DataError",
    "NumericalError",
    "PairsError",
    "PitViolation",
]
