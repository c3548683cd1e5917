from __future__ import annotations

import datetime as dt
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .errors import DataError


def _frozen_array(v, dtype=float) -> np.ndarray:
    arr = np.array(v, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class _Record(BaseModel):
    model_config = ConfigDict(frozen=True)


class _ArrayRecord(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# ──────────────────────────────────────────────────────────────────────────────
# 面板：日期 × 代码
# ──────────────────────────────────────────────────────────────────────────────

class PricePanel:
    """Aligned date × ticker matrix of strictly positive prices.

    Built by ``market_data.load_panel`` or directly from a DataFrame with a
    DatetimeIndex. The wrapped frame is copied on construction and never exposed
    mutably.
    """

    __slots__ = ("_frame", "dropped")

    def __init__(self, frame: pd.DataFrame, dropped: tuple[str, ...] = ()):
        if not isinstance(frame.index, pd.DatetimeIndex):
            raise DataError("panel index must be a DatetimeIndex")
        if frame.index.has_duplicates or not frame.index.is_monotonic_increasing:
            raise DataError("panel dates must be strictly increasing")
        values = frame.to_numpy(dtype=float)
        if not np.isfinite(values).all():
            raise DataError("panel has missing or non-finite prices")
        if (values <= 0).any():
            bad = frame.columns[(values <= 0).any(axis=0)].tolist()
            raise DataError(f"non-positive prices for {bad}")
        out = pd.DataFrame(values, index=frame.index.copy(), columns=[str(c) for c in frame.columns])
        out.index.name = "date"
        self._frame = out
        self.dropped = tuple(dropped)

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def index(self) -> pd.DatetimeIndex:
        return self._frame.index

    @property
    def dates(self) -> list[dt.date]:
        return list(self._frame.index.date)

    @property
    def tickers(self) -> list[str]:
        return list(self._frame.columns)

    @property
    def prices(self) -> np.ndarray:
        return _frozen_array(self._frame.to_numpy())

    def column(self, ticker: str) -> np.ndarray:
        if ticker not in self._frame.columns:
            raise DataError(f"ticker {ticker!r} not in panel")
        return _frozen_array(self._frame[ticker].to_numpy())

    def __len__(self) -> int:
        return len(self._frame)

    def __eq__(self, other) -> bool:
        return isinstance(other, PricePanel) and self._frame.equals(other._frame)

    def __repr__(self) -> str:
        return f"PricePanel({len(self)} dates x {len(self._frame.columns)} tickers)"


class ReturnPanel:
    """Simple returns, stamped with the later date of each price pair."""

    __slots__ = ("_frame",)

    def __init__(self, frame: pd.DataFrame, check: bool = True):
        values = frame.to_numpy(dtype=float)
        if check and (values <= -1).any():
            raise DataError("simple returns must be > -1")
        self._frame = frame.copy()

    @property
    def frame(self) -> pd.DataFrame:
        return self._frame.copy()

    @property
    def index(self) -> pd.DatetimeIndex:
        return self._frame.index

    @property
    def dates(self) -> list[dt.date]:
        return list(self._frame.index.date)

    @property
    def tickers(self) -> list[str]:
        return list(self._frame.columns)

    @property
    def returns(self) -> np.ndarray:
        return _frozen_array(self._frame.to_numpy())

    def column(self, ticker: str) -> np.ndarray:
        if ticker not in self._frame.columns:
            raise DataError(f"ticker {ticker!r} not in return panel")
        return _frozen_array(self._frame[ticker].to_numpy())

    def __len__(self) -> int:
        return len(self._frame)


class WindowSpec(_Record):
    start: dt.date
    end: dt.date

    @model_validator(mode="after")
    def _ordered(self) -> "WindowSpec":
        if self.start > self.end:
            raise ValueError(f"window start {self.start} after end {self.end}")
        return self

    def overlaps(self, other: "WindowSpec") -> bool:
        return self.start <= other.end and other.start <= self.end

    def precedes(self, other: "WindowSpec") -> bool:
        return self.end < other.start

    def __str__(self) -> str:
        return f"[{self.start}..{self.end}]"


# ──────────────────────────────────────────────────────────────────────────────
# 配对筛选 / 协整
# ──────────────────────────────────────────────────────────────────────────────

class PairKey(_Record):
    ticker_x: str
    ticker_y: str

    @model_validator(mode="after")
    def _canonical(self) -> "PairKey":
        if self.ticker_x == self.ticker_y:
            raise ValueError(f"pair needs two distinct tickers, got {self.ticker_x!r} twice")
        if self.ticker_x > self.ticker_y:
            raise ValueError(f"pair not canonical: {self.ticker_x!r} > {self.ticker_y!r}")
        return self

    @classmethod
    def of(cls, a: str, b: str) -> "PairKey":
        a, b = str(a), str(b)
        return cls(ticker_x=min(a, b), ticker_y=max(a, b))

    @property
    def label(self) -> str:
        return f"{self.ticker_x}_{self.ticker_y}"

    def __lt__(self, other: "PairKey") -> bool:
        return (self.ticker_x, self.ticker_y) < (other.ticker_x, other.ticker_y)

    def __str__(self) -> str:
        return f"{self.ticker_x}/{self.ticker_y}"


class ScreenResult(_Record):
    pair: PairKey
    correlation: float
    passed: bool
    error: Optional[str] = None


class OlsFit(_ArrayRecord):
    beta: float
    alpha: float
    residuals: np.ndarray
    r_squared: float

    @field_validator("residuals", mode="before")
    @classmethod
    def _freeze(cls, v):
        return _frozen_array(v)


class AdfResult(_Record):
    t_stat: float
    p_value: float
    lags_used: int
    n_obs: int
    critical_values: dict[str, float] = {}


class CointResult(_Record):
    pair: PairKey
    ols: Optional[OlsFit] = None
    adf: Optional[AdfResult] = None
    cointegrated: bool = False
    error: Optional[str] = None

    @property
    def p_value(self) -> float:
        return self.adf.p_value if self.adf is not None else float("nan")


# ──────────────────────────────────────────────────────────────────────────────
# 价差模型 / 信号
# ──────────────────────────────────────────────────────────────────────────────

class SpreadModel(_Record):
    pair: PairKey
    beta: float
    alpha: float
    mu_z: float
    sigma_z: float
    fit_window: WindowSpec

    @field_validator("sigma_z")
    @classmethod
    def _positive_sigma(cls, v: float) -> float:
        if not (v > 0):
            raise ValueError("sigma_z must be > 0")
        return v


class Thresholds(_Record):
    theta_in: float
    theta_out: float

    @model_validator(mode="after")
    def _band(self) -> "Thresholds":
        if not (self.theta_in > 0):
            raise ValueError("theta_in must be > 0")
        if not (0 <= self.theta_out < self.theta_in):
            raise ValueError(f"need 0 <= theta_out < theta_in, got ({self.theta_in}, {self.theta_out})")
        return self

    def __str__(self) -> str:
        return f"(in={self.theta_in:.4g}, out={self.theta_out:.4g})"


class Trade(_Record):
    entry_date: dt.date      # 第一个持仓日
    exit_date: dt.date       # 第一个空仓日；强平时为最后一天
    direction: Literal[-1, 1]
    entry_z: float
    exit_z: float
    forced: bool = False


class SignalSeries(_ArrayRecord):
    dates: tuple[dt.date, ...]
    z_scores: np.ndarray
    positions: np.ndarray
    trades: tuple[Trade, ...] = ()

    @field_validator("z_scores", mode="before")
    @classmethod
    def _freeze_z(cls, v):
        return _frozen_array(v)

    @field_validator("positions", mode="before")
    @classmethod
    def _freeze_pos(cls, v):
        return _frozen_array(v, dtype=np.int8)

    @model_validator(mode="after")
    def _aligned(self) -> "SignalSeries":
        n = len(self.dates)
        if len(self.z_scores) != n or len(self.positions) != n:
            raise ValueError("dates, z_scores and positions must align")
        if n and self.positions[0] != 0:
            raise ValueError("positions must start flat")
        return self


# ──────────────────────────────────────────────────────────────────────────────
# 回测
# ──────────────────────────────────────────────────────────────────────────────

class SplitConfig(_Record):
    pair_selection: WindowSpec
    training: WindowSpec
    validation: Optional[WindowSpec] = None
    test: WindowSpec

    @model_validator(mode="after")
    def _ordered(self) -> "SplitConfig":
        chain = [self.pair_selection, self.training]
        if self.validation is not None:
            chain.append(self.validation)
        chain.append(self.test)
        for a, b in zip(chain, chain[1:]):
            if not a.precedes(b):
                raise ValueError(f"split windows must be strictly ordered: {a} then {b}")
        return self


class BacktestReport(_ArrayRecord):
    pair: PairKey
    dates: tuple[dt.date, ...]
    daily_returns: np.ndarray
    equity: np.ndarray
    cumulative_return: float
    arithmetic_return: float
    return_mode: Literal["compounded", "arithmetic"] = "compounded"
    n_trades: int
    return_std: float
    max_drawdown: float
    signals: SignalSeries

    @field_validator("daily_returns", "equity", mode="before")
    @classmethod
    def _freeze(cls, v):
        return _frozen_array(v)

    @property
    def total_return(self) -> float:
        """Return under the configured aggregation mode."""
        return self.cumulative_return if self.return_mode == "compounded" else self.arithmetic_return


class AggregateStats(_Record):
    n: int
    mean: float
    std: float
    min: float
    max: float

    @classmethod
    def of(cls, values) -> "AggregateStats":
        v = np.asarray(list(values), dtype=float)
        if v.size == 0:
            nan = float("nan")
            return cls(n=0, mean=nan, std=nan, min=nan, max=nan)
        std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return cls(n=int(v.size), mean=float(v.mean()), std=std, min=float(v.min()), max=float(v.max()))


class PortfolioReport(_Record):
    reports: tuple[BacktestReport, ...]
    compounded: AggregateStats
    arithmetic: AggregateStats
    failures: dict[str, str] = {}

    @property
    def n_failed(self) -> int:
        return len(self.failures)


# ──────────────────────────────────────────────────────────────────────────────
# 参数优化
# ──────────────────────────────────────────────────────────────────────────────

class SearchSpace(_Record):
    theta_in_low: float = 1.0
    theta_in_high: float = 2.5
    theta_in_step: Optional[float] = 0.1
    theta_out_low: float = 0.0
    theta_out_high: float = 1.0
    theta_out_step: Optional[float] = 0.1

    @model_validator(mode="after")
    def _ranges(self) -> "SearchSpace":
        if not self.theta_in_low < self.theta_in_high:
            raise ValueError("theta_in range needs low < high")
        if not self.theta_out_low < self.theta_out_high:
            raise ValueError("theta_out range needs low < high")
        if self.theta_in_low <= 0 or self.theta_out_low < 0:
            raise ValueError("theta_in must be positive and theta_out nonnegative")
        for step in (self.theta_in_step, self.theta_out_step):
            if step is not None and step <= 0:
                raise ValueError("grid steps must be > 0")
        return self

    @property
    def gridded(self) -> bool:
        return self.theta_in_step is not None and self.theta_out_step is not None

    def continuous(self) -> "SearchSpace":
        return self.model_copy(update={"theta_in_step": None, "theta_out_step": None})


class Trial(_Record):
    index: int
    thresholds: Thresholds
    objective: float


class OptimizationResult(_Record):
    pair: PairKey
    best: Thresholds
    best_objective: float
    history: tuple[Trial, ...]
    method: Literal["grid", "tpe"]
    degenerate: bool = False
    # 有验证窗口时，从训练前 k 名里按验证集重新挑选
    selected: Optional[Thresholds] = None
    selected_validation_objective: Optional[float] = None

    @property
    def chosen(self) -> Thresholds:
        return self.selected if self.selected is not None else self.best


class UniverseOptimization(_Record):
    results: tuple[OptimizationResult, ...]
    failures: dict[str, str] = {}
    theta_in: AggregateStats
    theta_out: AggregateStats
    n_degenerate: int = 0
