"""Pair universe enumeration, sampling and correlation screening."""
from __future__ import annotations

import itertools
import logging
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .data_models import PairKey, ReturnPanel, ScreenResult, WindowSpec
from .errors import DataError, DegenerateSeriesError
from .market_data import slice_returns

logger = logging.getLogger(__name__)

DEFAULT_CORRELATION_THRESHOLD = 0.8
HISTOGRAM_BINS = 40
_CHUNK = 2048


def enumerate_pairs(tickers: Sequence[str]) -> list[PairKey]:
    """All n(n-1)/2 canonical pairs, lexicographic order."""
    names = sorted(set(str(t) for t in tickers))
    if len(names) < 2:
        raise DataError(f"need at least 2 distinct tickers, got {len(names)}")
    return [PairKey(ticker_x=a, ticker_y=b) for a, b in itertools.combinations(names, 2)]


def sample_pairs(pairs: Sequence[PairKey], k: int, seed: int) -> list[PairKey]:
    """k distinct pairs, uniform without replacement, reproducible from seed."""
    if not 0 < k <= len(pairs):
        raise DataError(f"sample size must be in (0, {len(pairs)}], got {k}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(pairs), size=k, replace=False)
    return [pairs[i] for i in idx]


def _unit(x: np.ndarray) -> np.ndarray:
    """Centered, unit-norm column(s). Pearson correlation is then a plain dot product."""
    xc = x - x.mean(axis=0)
    norm = np.sqrt(np.einsum("i...,i...->...", xc, xc))
    if np.any(norm == 0):
        raise DegenerateSeriesError("zero-variance series")
    return xc / norm


def correlation(x, y) -> float:
    """Pearson correlation (sample moments; the n-1 cancels), clamped to [-1, 1]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size < 3:
        raise DataError("correlation needs at least 3 observations")
    rho = float(np.einsum("i,i->", _unit(x), _unit(y)))
    return max(-1.0, min(1.0, rho))


def _chunk_correlations(units: np.ndarray, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    # 每一对独立计算点积，结果与分块方式无关
    rho = np.einsum("ij,ij->j", units[:, ix], units[:, iy])
    return np.clip(rho, -1.0, 1.0)


def screen_universe(
    returns: ReturnPanel,
    window: Optional[WindowSpec],
    threshold: float = DEFAULT_CORRELATION_THRESHOLD,
    pairs: Optional[Sequence[PairKey]] = None,
    n_jobs: int = 1,
) -> list[ScreenResult]:
    """Correlation of every candidate pair on the windowed returns.

    Degenerate (zero-variance) series fail their pairs without aborting the run.
    Output is sorted by descending correlation then PairKey; failed pairs last.
    """
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"correlation threshold must be in [0, 1], got {threshold}")
    windowed = slice_returns(returns, window) if window is not None else returns
    if len(windowed) < 3:
        raise DataError(f"window {window} yields {len(windowed)} return rows, need >= 3")
    candidates = list(pairs) if pairs is not None else enumerate_pairs(windowed.tickers)

    frame = windowed.frame
    tickers = frame.columns
    missing = sorted({t for p in candidates for t in (p.ticker_x, p.ticker_y)} - set(tickers))
    if missing:
        raise DataError(f"tickers not in return panel: {missing}")

    values = frame.to_numpy(dtype=float)
    xc = values - values.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", xc, xc))
    finite = np.isfinite(values).all(axis=0)
    ok_col = (norms > 0) & finite
    units = np.where(ok_col, xc / np.where(ok_col, norms, 1.0), 0.0)

    pos = {t: i for i, t in enumerate(tickers)}
    ix = np.fromiter((pos[p.ticker_x] for p in candidates), dtype=np.intp, count=len(candidates))
    iy = np.fromiter((pos[p.ticker_y] for p in candidates), dtype=np.intp, count=len(candidates))

    bounds = [(s, min(s + _CHUNK, len(candidates))) for s in range(0, len(candidates), _CHUNK)]
    if n_jobs == 1 or len(bounds) <= 1:
        chunks = [_chunk_correlations(units, ix[a:b], iy[a:b]) for a, b in bounds]
    else:
        chunks = Parallel(n_jobs=n_jobs)(delayed(_chunk_correlations)(units, ix[a:b], iy[a:b]) for a, b in bounds)
    rho = np.concatenate(chunks) if chunks else np.empty(0)

    results = []
    for k, pair in enumerate(candidates):
        if not (ok_col[ix[k]] and ok_col[iy[k]]):
            bad = [t for t in (pair.ticker_x, pair.ticker_y) if not ok_col[pos[t]]]
            results.append(ScreenResult(pair=pair, correlation=float("nan"), passed=False, error=f"degenerate series: {bad}"))
            continue
        r = float(rho[k])
        results.append(ScreenResult(pair=pair, correlation=r, passed=r >= threshold))

    results.sort(key=_sort_key)
    n_pass = sum(r.passed for r in results)
    n_fail = sum(r.error is not None for r in results)
    logger.info("screened %d pairs on %s: %d passed threshold %.3f, %d degenerate", len(results), window, n_pass, threshold, n_fail)
    return results


def _sort_key(r: ScreenResult):
    failed = r.error is not None
    return (failed, -r.correlation if not failed else 0.0, r.pair.ticker_x, r.pair.ticker_y)


def passed_pairs(results: Sequence[ScreenResult]) -> list[PairKey]:
    return [r.pair for r in results if r.passed]


def correlation_histogram(results: Sequence[ScreenResult], bins: int = HISTOGRAM_BINS) -> pd.DataFrame:
    """Equal-width bins over [-1, 1] plus one trailing ``degenerate`` row.

    The bin counts cover the pairs with a finite correlation; the last row counts the
    excluded ones (NaN edges), so the ``count`` column sums to ``len(results)``.
    """
    rho = np.array([r.correlation for r in results if r.error is None], dtype=float)
    counts, edges = np.histogram(rho, bins=bins, range=(-1.0, 1.0))
    hist = pd.DataFrame({"kind": "bin", "bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})
    excluded = pd.DataFrame({"kind": ["degenerate"], "bin_left": [np.nan], "bin_right": [np.nan],
                             "count": [len(results) - rho.size]})
    return pd.concat([hist, excluded], ignore_index=True)


def screen_frame(results: Sequence[ScreenResult]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "ticker_x": [r.pair.ticker_x for r in results],
            "ticker_y": [r.pair.ticker_y for r in results],
            "correlation": [r.correlation for r in results],
            "passed": [r.passed for r in results],
        }
    )
