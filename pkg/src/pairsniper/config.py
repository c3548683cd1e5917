"""Run configuration: one TOML file plus command-line overrides (flags win)."""
from __future__ import annotations

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Literal, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .backtest import default_splits
from .data_models import PricePanel, SearchSpace, SplitConfig, Thresholds, WindowSpec
from .errors import ConfigError, PitViolation
from .market_data import clamp_window

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class DataSection(_Section):
    path: Optional[Path] = None
    missing_cutoff: float = Field(0.05, ge=0.0, le=1.0)
    layout: Literal["wide", "long"] = "wide"
    date_column: Optional[str] = None


class SplitsSection(_Section):
    """Explicit windows, or month counts for splits derived from the panel's last date."""

    pair_selection: Optional[WindowSpec] = None
    training: Optional[WindowSpec] = None
    validation: Optional[WindowSpec] = None
    test: Optional[WindowSpec] = None
    train_months: int = Field(12, gt=0)
    test_months: int = Field(3, gt=0)
    validation_months: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _all_or_none(self) -> "SplitsSection":
        given = [w is not None for w in (self.pair_selection, self.training, self.test)]
        if any(given) and not all(given):
            raise ValueError("explicit splits need pair_selection, training and test together")
        if self.validation is not None and not all(given):
            raise ValueError("an explicit validation window needs the other explicit windows")
        return self

    @property
    def explicit(self) -> bool:
        return self.test is not None


class ScreenSection(_Section):
    threshold: float = Field(0.8, ge=0.0, le=1.0)
    sample_pairs: Optional[int] = Field(None, gt=0)
    transform: bool = False
    shift: float = Field(0.5, ge=0.0, lt=1.0)
    epsilon: float = Field(1e-6, gt=0.0)


class CointSection(_Section):
    threshold: float = Field(0.05, gt=0.0, le=1.0)
    with_intercept: bool = True
    surface: Literal["engle_granger", "adf"] = "engle_granger"
    test_on: Literal["prices", "returns"] = "prices"
    max_lags: Optional[int] = Field(None, ge=0)


class SignalsSection(_Section):
    exit_mode: Literal["band", "zero_cross"] = "band"
    rolling_window: Optional[int] = Field(None, ge=2)


class BacktestSection(_Section):
    leg_weighting: Literal["equal", "beta"] = "equal"
    cost_bps: float = Field(0.0, ge=0.0)
    return_mode: Literal["compounded", "arithmetic"] = "compounded"
    baseline: Thresholds = Thresholds(theta_in=2.0, theta_out=1.0)


class OptimizeSection(_Section):
    method: Literal["grid", "tpe"] = "grid"
    budget: int = Field(100, ge=10)
    search_space: SearchSpace = SearchSpace()
    objective: Literal["cumulative_return", "sharpe"] = "cumulative_return"
    model_mode: Literal["refit", "inherit"] = "refit"
    top_k_validation: int = Field(5, ge=1)
    max_pairs: Optional[int] = Field(None, gt=0)


class RunConfig(_Section):
    data: DataSection = DataSection()
    splits: SplitsSection = SplitsSection()
    screen: ScreenSection = ScreenSection()
    coint: CointSection = CointSection()
    signals: SignalsSection = SignalsSection()
    backtest: BacktestSection = BacktestSection()
    optimize: OptimizeSection = OptimizeSection()
    seed: int = 0
    output_dir: Path = Path("runs/latest")
    n_jobs: int = Field(1, ge=-1)

    @property
    def data_path(self) -> Optional[Path]:
        return self.data.path

    @property
    def correlation_threshold(self) -> float:
        return self.screen.threshold

    @property
    def cointegration_threshold(self) -> float:
        return self.coint.threshold

    @property
    def baseline_thresholds(self) -> Thresholds:
        return self.backtest.baseline

    def backtest_options(self) -> dict[str, Any]:
        """Keyword options shared by every backtest and objective evaluation."""
        return {
            "exit_mode": self.signals.exit_mode,
            "leg_weighting": self.backtest.leg_weighting,
            "cost_bps": self.backtest.cost_bps,
            "return_mode": self.backtest.return_mode,
            "rolling_window": self.signals.rolling_window,
        }


def _set_dotted(tree: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override {dotted!r}: {k!r} is not a table")
    node[keys[-1]] = value


def load_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Read ``path`` (TOML) and apply dotted-key overrides such as ``{"optimize.method": "tpe"}``.

    ``None`` override values are ignored so unset CLI flags leave the file alone.
    """
    tree: dict = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                tree = tomllib.load(fh)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"invalid TOML in {path}: {e}") from e
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(tree, key, value)
    try:
        cfg = RunConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    logger.debug("config: %s", cfg.model_dump(mode="json"))
    return cfg


def resolve_splits(config: RunConfig, panel: PricePanel) -> SplitConfig:
    """Explicit windows are clamped to the panel range; otherwise derived from its dates.

    Out-of-order or overlapping windows raise :class:`PitViolation`.
    """
    s = config.splits
    if not s.explicit:
        return default_splits(panel.dates, train_months=s.train_months, test_months=s.test_months,
                              validation_months=s.validation_months)
    windows = {
        "pair_selection": clamp_window(panel, s.pair_selection),
        "training": clamp_window(panel, s.training),
        "validation": clamp_window(panel, s.validation) if s.validation is not None else None,
        "test": clamp_window(panel, s.test),
    }
    try:
        return SplitConfig(**windows)
    except ValidationError as e:
        raise PitViolation(f"split windows overlap or are out of order: {e.errors()[0]['msg']}") from e
