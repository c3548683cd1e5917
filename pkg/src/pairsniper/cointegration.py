"""OLS hedge ratio, Augmented Dickey-Fuller test and the two-step Engle-Granger test."""
from __future__ import annotations

import logging
import math
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data_models import AdfResult, CointResult, OlsFit, PairKey, PricePanel, WindowSpec
from .errors import DataError, DegenerateSeriesError, PairsError
from .market_data import simple_returns, slice_panel
from .surfaces import critical_values, mackinnon_pvalue

logger = logging.getLogger(__name__)

DEFAULT_COINTEGRATION_THRESHOLD = 0.05
MIN_ADF_LENGTH = 15
_DEGENERATE_RTOL = 1e-10


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise DataError(f"length mismatch: {x.shape} vs {y.shape}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("series contain non-finite values")
    return x, y


# ──────────────────────────────────────────────────────────────────────────────
# OLS：X_t = alpha + beta * Y_t + Z_t
# ──────────────────────────────────────────────────────────────────────────────

def fit_ols(x, y, with_intercept: bool = True) -> OlsFit:
    """Regress ``x`` on ``y`` by the closed-form normal equations."""
    x, y = _as_pair(x, y)
    if x.size < 3:
        raise DataError("OLS needs at least 3 observations")
    yc = y - y.mean()
    if not np.any(yc):
        raise DegenerateSeriesError("zero-variance regressor")
    xc = x - x.mean()
    if with_intercept:
        beta = float(np.dot(yc, xc) / np.dot(yc, yc))
        alpha = float(x.mean() - beta * y.mean())
        sst = float(np.dot(xc, xc))
    else:
        beta = float(np.dot(y, x) / np.dot(y, y))
        alpha = 0.0
        sst = float(np.dot(x, x))  # 无截距时用非中心化 R²
    resid = x - alpha - beta * y
    ssr = float(np.dot(resid, resid))
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return OlsFit(beta=beta, alpha=alpha, residuals=resid, r_squared=min(1.0, max(0.0, r2)))


# ──────────────────────────────────────────────────────────────────────────────
# ADF：Δz_t = c + γ z_{t-1} + Σ φ_i Δz_{t-i} + ε_t
# ──────────────────────────────────────────────────────────────────────────────

def schwert_max_lags(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def _lstsq(y: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, float]:
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise DegenerateSeriesError("singular ADF design matrix")
    resid = y - X @ coef
    return coef, float(np.dot(resid, resid))


def _adf_design(z: np.ndarray, dz: np.ndarray, lags: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    rows = np.arange(start, z.size - 1)
    cols = [z[rows], np.ones(rows.size)]
    cols += [dz[rows - j] for j in range(1, lags + 1)]
    return dz[rows], np.column_stack(cols)


def adf_test(series, max_lags: Optional[int] = None, n_vars: int = 1) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant and no trend.

    The lag order minimizes AIC over ``0..max_lags`` on a common sample, then the
    chosen regression is refit on the longest sample it allows. ``n_vars`` picks the
    p-value surface: 1 for a plain series, 2 for residuals of an estimated
    two-series cointegrating regression.
    """
    z = np.asarray(series, dtype=float)
    if z.ndim != 1 or not np.isfinite(z).all():
        raise DataError("ADF input must be a finite 1-d series")
    n = z.size
    if n < MIN_ADF_LENGTH:
        raise DataError(f"series too short for ADF: {n} < {MIN_ADF_LENGTH}")
    if np.ptp(z) == 0:
        raise DegenerateSeriesError("constant series")
    if max_lags is None:
        max_lags = schwert_max_lags(n)
    if max_lags < 0:
        raise DataError("max_lags must be nonnegative")
    max_lags = min(int(max_lags), n // 2 - 2)
    dz = np.diff(z)

    best_lag, best_aic = 0, math.inf
    for p in range(max_lags + 1):
        y, X = _adf_design(z, dz, p, max_lags)
        _, ssr = _lstsq(y, X)
        if ssr <= 0:
            raise DegenerateSeriesError("perfect ADF fit")
        m = y.size
        aic = m * math.log(ssr / m) + 2 * X.shape[1]
        if aic < best_aic:
            best_lag, best_aic = p, aic

    y, X = _adf_design(z, dz, best_lag, best_lag)
    coef, ssr = _lstsq(y, X)
    m, k = X.shape
    sigma2 = ssr / (m - k)
    xtx_inv = np.linalg.pinv(X.T @ X)
    se = math.sqrt(sigma2 * xtx_inv[0, 0])
    if not se > 0:
        raise DegenerateSeriesError("zero standard error in ADF regression")
    t_stat = float(coef[0] / se)
    return AdfResult(
        t_stat=t_stat,
        p_value=mackinnon_pvalue(t_stat, n_vars=n_vars),
        lags_used=best_lag,
        n_obs=m,
        critical_values=critical_values(m, n_vars),
    )


# ──────────────────────────────────────────────────────────────────────────────
# Engle-Granger 两步法
# ──────────────────────────────────────────────────────────────────────────────

def engle_granger(
    x,
    y,
    p_threshold: float = DEFAULT_COINTEGRATION_THRESHOLD,
    pair: Optional[PairKey] = None,
    with_intercept: bool = True,
    max_lags: Optional[int] = None,
    surface: Literal["engle_granger", "adf"] = "engle_granger",
) -> CointResult:
    """Step 1: regress x (first-named) on y. Step 2: ADF on the residuals.

    ``surface="engle_granger"`` uses the residual-based p-values, which are stricter
    than plain ADF because beta is estimated.
    """
    if not 0.0 < p_threshold <= 1.0:
        raise DataError(f"p_threshold must be in (0, 1], got {p_threshold}")
    ols = fit_ols(x, y, with_intercept=with_intercept)
    scale = max(1.0, float(np.abs(np.asarray(x, dtype=float)).mean()))
    if float(np.std(ols.residuals)) <= _DEGENERATE_RTOL * scale:
        raise DegenerateSeriesError("degenerate residuals: series are an exact linear combination")
    adf = adf_test(ols.residuals, max_lags=max_lags, n_vars=2 if surface == "engle_granger" else 1)
    return CointResult(
        pair=pair or PairKey(ticker_x="x", ticker_y="y"),
        ols=ols,
        adf=adf,
        cointegrated=adf.p_value < p_threshold,
    )


def _coint_one(x, y, pair: PairKey, p_threshold: float, kwargs: dict) -> CointResult:
    try:
        return engle_granger(x, y, p_threshold, pair=pair, **kwargs)
    except PairsError as e:
        return CointResult(pair=pair, cointegrated=False, error=str(e))


def coint_filter(
    panel: PricePanel,
    window: WindowSpec,
    survivors: Sequence[PairKey],
    p_threshold: float = DEFAULT_COINTEGRATION_THRESHOLD,
    with_intercept: bool = True,
    max_lags: Optional[int] = None,
    surface: Literal["engle_granger", "adf"] = "engle_granger",
    test_on: Literal["prices", "returns"] = "prices",
    n_jobs: int = 1,
) -> list[CointResult]:
    """Engle-Granger on every survivor over the windowed prices.

    Per-pair failures are recorded on the result. Sorted by ascending p-value then
    PairKey; failed pairs last.
    """
    if not survivors:
        raise DataError("no pairs to test for cointegration")
    sliced = slice_panel(panel, window)
    kwargs = {"with_intercept": with_intercept, "max_lags": max_lags, "surface": surface}

    def series(ticker: str) -> np.ndarray:
        s = sliced.column(ticker)
        return simple_returns(s) if test_on == "returns" else s

    jobs = [(series(p.ticker_x), series(p.ticker_y), p) for p in survivors]
    if n_jobs == 1:
        results = [_coint_one(x, y, p, p_threshold, kwargs) for x, y, p in jobs]
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_coint_one)(x, y, p, p_threshold, kwargs) for x, y, p in jobs)

    results.sort(key=lambda r: (r.error is not None, r.p_value if r.error is None else 0.0, r.pair.ticker_x, r.pair.ticker_y))
    failed = [r for r in results if r.error is not None]
    for r in failed:
        logger.warning("cointegration failed for %s: %s", r.pair, r.error)
    logger.info(
        "cointegration on %s: %d/%d pairs cointegrated at p < %.3f (%s surface, %s), %d failed",
        window, sum(r.cointegrated for r in results), len(results), p_threshold, surface, test_on, len(failed),
    )
    return results


def cointegrated_pairs(results: Sequence[CointResult]) -> list[CointResult]:
    return [r for r in results if r.cointegrated]


def coint_frame(results: Sequence[CointResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        rows.append(
            {
                "ticker_x": r.pair.ticker_x,
                "ticker_y": r.pair.ticker_y,
                "beta": r.ols.beta if r.ols else np.nan,
                "alpha": r.ols.alpha if r.ols else np.nan,
                "adf_t": r.adf.t_stat if r.adf else np.nan,
                "p_value": r.p_value,
                "lags": r.adf.lags_used if r.adf else pd.NA,
                "cointegrated": r.cointegrated,
            }
        )
    return pd.DataFrame(rows, columns=["ticker_x", "ticker_y", "beta", "alpha", "adf_t", "p_value", "lags", "cointegrated"])
