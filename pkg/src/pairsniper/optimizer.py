"""Per-pair (theta_in, theta_out) search: exhaustive grid and TPE."""
from __future__ import annotations

import hashlib
import logging
import math
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .backtest import LegWeighting, ReturnMode, backtest_arrays, check_pit, sharpe_ratio, window_arrays
from .data_models import (
    AggregateStats,
    BacktestReport,
    OptimizationResult,
    PairKey,
    PricePanel,
    SearchSpace,
    SplitConfig,
    SpreadModel,
    Thresholds,
    Trial,
    UniverseOptimization,
    WindowSpec,
)
from .errors import ConfigError, DataError, PairsError
from .market_data import slice_panel
from .signal_engine import ExitMode, fit_spread_model, rolling_z_scores, z_scores
from .tpe import DEFAULT_GAMMA, DEFAULT_N_CANDIDATES, DEFAULT_N_STARTUP, TpeSampler

logger = logging.getLogger(__name__)

Method = Literal["grid", "tpe"]
ObjectiveKind = Literal["cumulative_return", "sharpe"]
ModelMode = Literal["refit", "inherit"]
Evaluator = Callable[[Thresholds], float]

DEFAULT_BUDGET = 100
DEFAULT_TOP_K = 5
MIN_TPE_TRIALS = 10
_GRID_TOL = 1e-9

_PLACEHOLDER_PAIR = PairKey(ticker_x="x", ticker_y="y")


# ──────────────────────────────────────────────────────────────────────────────
# 目标函数
# ──────────────────────────────────────────────────────────────────────────────

def score_report(report: BacktestReport, objective: ObjectiveKind = "cumulative_return") -> float:
    if objective == "sharpe":
        return sharpe_ratio(report.daily_returns)
    return report.total_return


def make_objective(
    panel: PricePanel,
    pair: PairKey,
    model: SpreadModel,
    window: WindowSpec,
    objective: ObjectiveKind = "cumulative_return",
    exit_mode: ExitMode = "band",
    leg_weighting: LegWeighting = "equal",
    cost_bps: float = 0.0,
    return_mode: ReturnMode = "compounded",
    rolling_window: Optional[int] = None,
) -> Evaluator:
    """Closure over one pair and window; slices prices and computes z-scores once.

    Every call runs the same code path as :func:`backtest.run_backtest`, so the value
    is bit-identical to the full backtest for the same thresholds.
    """
    check_pit(model.fit_window, window)
    dates, px, py = window_arrays(panel, pair, window)
    if rolling_window:
        _, hx, hy = window_arrays(panel, pair, model.fit_window)
        z = rolling_z_scores(model, hx, hy, px, py, rolling_window)
    else:
        z = z_scores(model, px, py)

    def evaluate(thresholds: Thresholds) -> float:
        report = backtest_arrays(pair, model, thresholds, dates, px, py, z=z, exit_mode=exit_mode,
                                 leg_weighting=leg_weighting, cost_bps=cost_bps, return_mode=return_mode)
        return score_report(report, objective)

    return evaluate


def objective(
    panel: PricePanel,
    pair: PairKey,
    model: SpreadModel,
    thresholds: Thresholds,
    training: WindowSpec,
    **opts,
) -> float:
    """Training-window score of one threshold pair."""
    return make_objective(panel, pair, model, training, **opts)(thresholds)


# ──────────────────────────────────────────────────────────────────────────────
# 网格 / TPE
# ──────────────────────────────────────────────────────────────────────────────

def _axis(low: float, high: float, step: float) -> np.ndarray:
    n = int(math.floor((high - low) / step + _GRID_TOL)) + 1
    return np.round(low + step * np.arange(n), 10)


def frange_grid(space: SearchSpace) -> list[Thresholds]:
    """Feasible grid points ordered by theta_in, then theta_out."""
    if not space.gridded:
        raise ConfigError("grid search needs a gridded search space")
    points = []
    for t_in in _axis(space.theta_in_low, space.theta_in_high, space.theta_in_step):
        for t_out in _axis(space.theta_out_low, space.theta_out_high, space.theta_out_step):
            if t_out < t_in - _GRID_TOL:
                points.append(Thresholds(theta_in=float(t_in), theta_out=float(t_out)))
    return points


def _safe(value: float) -> float:
    return float(value) if np.isfinite(value) else -math.inf


def _argmax(history: Sequence[Trial]) -> Trial:
    """Highest objective; ties go to smaller theta_in, then smaller theta_out."""
    return min(history, key=lambda t: (-_safe(t.objective), t.thresholds.theta_in, t.thresholds.theta_out, t.index))


def _result(pair: PairKey, history: list[Trial], method: Method) -> OptimizationResult:
    best = _argmax(history)
    degenerate = all(t.objective == 0.0 for t in history)
    return OptimizationResult(
        pair=pair,
        best=best.thresholds,
        best_objective=best.objective,
        history=tuple(history),
        method=method,
        degenerate=degenerate,
    )


def grid_search(space: SearchSpace, evaluate: Evaluator, pair: Optional[PairKey] = None) -> OptimizationResult:
    points = frange_grid(space)
    if not points:
        raise ConfigError("search space has no feasible grid point")
    history = [Trial(index=i, thresholds=th, objective=float(evaluate(th))) for i, th in enumerate(points)]
    return _result(pair or _PLACEHOLDER_PAIR, history, "grid")


def tpe_search(
    space: SearchSpace,
    evaluate: Evaluator,
    n_trials: int = DEFAULT_BUDGET,
    seed: int = 0,
    pair: Optional[PairKey] = None,
    n_startup: int = DEFAULT_N_STARTUP,
    gamma: float = DEFAULT_GAMMA,
    n_candidates: int = DEFAULT_N_CANDIDATES,
) -> OptimizationResult:
    """Sequential TPE over the box of ``space`` (grid steps are ignored)."""
    if n_trials < MIN_TPE_TRIALS:
        raise ConfigError(f"tpe_search needs n_trials >= {MIN_TPE_TRIALS}, got {n_trials}")
    sampler = TpeSampler(space, seed, n_startup=n_startup, gamma=gamma, n_candidates=n_candidates)
    points: list[np.ndarray] = []
    values: list[float] = []
    history: list[Trial] = []
    for i in range(n_trials):
        p = sampler.suggest(points, values)
        th = Thresholds(theta_in=float(p[0]), theta_out=float(p[1]))
        value = float(evaluate(th))
        points.append(np.array([th.theta_in, th.theta_out]))
        values.append(value)
        history.append(Trial(index=i, thresholds=th, objective=value))
    return _result(pair or _PLACEHOLDER_PAIR, history, "tpe")


def rescore_on_validation(result: OptimizationResult, evaluate: Evaluator, top_k: int = DEFAULT_TOP_K) -> OptimizationResult:
    """Re-score the top-k training candidates on validation and keep the best."""
    ranked, seen = [], set()
    for t in sorted(result.history, key=lambda t: (-_safe(t.objective), t.thresholds.theta_in, t.thresholds.theta_out, t.index)):
        key = (t.thresholds.theta_in, t.thresholds.theta_out)
        if key not in seen:
            seen.add(key)
            ranked.append(t.thresholds)
        if len(ranked) == top_k:
            break
    scored = [(_safe(evaluate(th)), -rank, th) for rank, th in enumerate(ranked)]
    value, _, chosen = max(scored, key=lambda s: (s[0], s[1]))
    return result.model_copy(update={"selected": chosen, "selected_validation_objective": value})


# ──────────────────────────────────────────────────────────────────────────────
# 全体配对
# ──────────────────────────────────────────────────────────────────────────────

def derive_seed(run_seed: int, pair: PairKey) -> int:
    """Per-pair seed independent of pair order and parallel layout."""
    digest = hashlib.blake2b(f"{run_seed}:{pair.ticker_x}:{pair.ticker_y}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") & (2**63 - 1)


def split_training(panel: PricePanel, training: WindowSpec) -> tuple[WindowSpec, WindowSpec]:
    """First half of the training dates for fitting, second half for scoring."""
    idx = slice_panel(panel, training).index
    mid = len(idx) // 2
    if mid < 1 or mid >= len(idx):
        raise DataError(f"training window {training} too short to split")
    fit = WindowSpec(start=idx[0].date(), end=idx[mid - 1].date())
    score = WindowSpec(start=idx[mid].date(), end=idx[-1].date())
    return fit, score


def _refit(panel: PricePanel, pair: PairKey, window: WindowSpec, with_intercept: bool) -> SpreadModel:
    _, px, py = window_arrays(panel, pair, window)
    return fit_spread_model(px, py, pair, window, with_intercept=with_intercept)


def optimize_pair(
    panel: PricePanel,
    pair: PairKey,
    model: Optional[SpreadModel],
    splits: SplitConfig,
    space: SearchSpace,
    method: Method = "grid",
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    model_mode: ModelMode = "refit",
    with_intercept: bool = True,
    top_k_validation: int = DEFAULT_TOP_K,
    **opts,
) -> OptimizationResult:
    """Search on the training window; never touches data at or after ``splits.test``."""
    if model_mode == "refit":
        fit_w, score_w = split_training(panel, splits.training)
        model = _refit(panel, pair, fit_w, with_intercept)
    else:
        if model is None:
            model = _refit(panel, pair, splits.pair_selection, with_intercept)
        score_w = splits.training
    evaluate = make_objective(panel, pair, model, score_w, **opts)

    if method == "grid":
        result = grid_search(space, evaluate, pair=pair)
    elif method == "tpe":
        result = tpe_search(space.continuous(), evaluate, n_trials=budget, seed=derive_seed(seed, pair), pair=pair)
    else:
        raise ConfigError(f"unknown method {method!r}")

    if splits.validation is not None:
        model_v = _refit(panel, pair, splits.training, with_intercept)
        result = rescore_on_validation(result, make_objective(panel, pair, model_v, splits.validation, **opts),
                                       top_k=top_k_validation)
    logger.debug("%s: best %s -> %.6f (%s, %d trials)", pair, result.chosen, result.best_objective, method, len(result.history))
    return result


def _optimize_one(panel, pair, model, splits, space, kwargs):
    try:
        return optimize_pair(panel, pair, model, splits, space, **kwargs), None
    except PairsError as e:
        return None, str(e)


def optimize_universe(
    panel: PricePanel,
    selections: Sequence[tuple[PairKey, Optional[SpreadModel]]],
    splits: SplitConfig,
    space: SearchSpace = SearchSpace(),
    method: Method = "grid",
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    n_jobs: int = 1,
    **kwargs,
) -> UniverseOptimization:
    """Independent per-pair searches plus cross-pair mean/std of the chosen thresholds."""
    if not selections:
        raise DataError("optimize_universe needs at least one selection")
    ordered = sorted(selections, key=lambda s: (s[0].ticker_x, s[0].ticker_y))
    kwargs = dict(kwargs, method=method, budget=budget, seed=seed)
    if n_jobs == 1:
        outcomes = [_optimize_one(panel, p, m, splits, space, kwargs) for p, m in ordered]
    else:
        outcomes = Parallel(n_jobs=n_jobs)(delayed(_optimize_one)(panel, p, m, splits, space, kwargs) for p, m in ordered)

    results, failures = [], {}
    for (pair, _), (res, err) in zip(ordered, outcomes):
        if err is not None:
            failures[pair.label] = err
            logger.warning("optimization failed for %s: %s", pair, err)
        else:
            results.append(res)
    n_degenerate = sum(r.degenerate for r in results)
    if n_degenerate:
        logger.warning("%d pairs never crossed any threshold in training; kept at the tie-break point", n_degenerate)
    out = UniverseOptimization(
        results=tuple(results),
        failures=failures,
        theta_in=AggregateStats.of(r.chosen.theta_in for r in results),
        theta_out=AggregateStats.of(r.chosen.theta_out for r in results),
        n_degenerate=n_degenerate,
    )
    logger.info("optimized %d pairs (%s): theta_in %.3f ± %.3f, theta_out %.3f ± %.3f, %d failed",
                len(results), method, out.theta_in.mean, out.theta_in.std, out.theta_out.mean, out.theta_out.std, len(failures))
    return out


def _training_objective(result: OptimizationResult) -> float:
    if result.selected is None:
        return result.best_objective
    return next(t.objective for t in result.history if t.thresholds == result.selected)


def optimization_frame(results: Sequence[OptimizationResult]) -> pd.DataFrame:
    rows = []
    for r in results:
        rows.append(
            {
                "ticker_x": r.pair.ticker_x,
                "ticker_y": r.pair.ticker_y,
                "method": r.method,
                "theta_in": r.chosen.theta_in,
                "theta_out": r.chosen.theta_out,
                "objective": _training_objective(r),
                "n_trials": len(r.history),
                "validation_objective": r.selected_validation_objective,
                "degenerate": r.degenerate,
            }
        )
    return pd.DataFrame(rows, columns=["ticker_x", "ticker_y", "method", "theta_in", "theta_out", "objective",
                                       "n_trials", "validation_objective", "degenerate"])


def trials_frame(result: OptimizationResult) -> pd.DataFrame:
    return pd.DataFrame(
        [{"index": t.index, "theta_in": t.thresholds.theta_in, "theta_out": t.thresholds.theta_out, "objective": t.objective}
         for t in result.history],
        columns=["index", "theta_in", "theta_out", "objective"],
    )
