"""Phase orchestration: screen -> coint -> optimize -> backtest, each on its own window.

Every file a phase writes is hashed into ``manifest.json``. A failing phase saves the
manifest with ``complete = false`` and re-raises as :class:`PhaseError`.
"""
from __future__ import annotations

import datetime as dt
import logging
from pathlib import Path
from typing import Callable, Literal, Optional, TypeVar

from .backtest import backtest_frame, run_portfolio, window_arrays
from .cointegration import coint_filter, coint_frame, cointegrated_pairs
from .config import RunConfig, resolve_splits
from .data_models import (
    CointResult,
    PairKey,
    PortfolioReport,
    PricePanel,
    ScreenResult,
    SpreadModel,
    SplitConfig,
    UniverseOptimization,
    WindowSpec,
)
from .errors import DataError, PairsError, PhaseError
from .market_data import compute_returns, load_panel, slice_panel, transformed_returns
from .optimizer import optimization_frame, optimize_universe, trials_frame
from .pair_screen import correlation_histogram, enumerate_pairs, passed_pairs, sample_pairs, screen_frame, screen_universe
from .reporting import SUMMARY, RunManifest, pair_file, portfolio_summary, write_frame, write_json
from .signal_engine import fit_spread_model, signals_frame, trades_frame

logger = logging.getLogger(__name__)

Phase = Literal["screen", "coint", "optimize", "backtest"]
T = TypeVar("T")


def fit_models(
    panel: PricePanel,
    pairs: list[PairKey],
    window: WindowSpec,
    with_intercept: bool = True,
) -> tuple[dict[PairKey, SpreadModel], dict[str, str]]:
    models, failures = {}, {}
    for pair in pairs:
        try:
            _, px, py = window_arrays(panel, pair, window)
            models[pair] = fit_spread_model(px, py, pair, window, with_intercept=with_intercept)
        except PairsError as e:
            failures[pair.label] = str(e)
            logger.warning("spread model failed for %s: %s", pair, e)
    return models, failures


class Pipeline:
    """One run over one panel, writing into ``config.output_dir``."""

    def __init__(self, config: RunConfig, panel: Optional[PricePanel] = None):
        self.config = config
        self.run_dir = Path(config.output_dir)
        self.manifest = RunManifest(created=dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"), seed=config.seed)
        self.panel = panel
        self.splits: Optional[SplitConfig] = None
        self.screen_results: list[ScreenResult] = []
        self.coint_results: list[CointResult] = []
        self.optimization: Optional[UniverseOptimization] = None
        self.summary: Optional[dict] = None

    # ── plumbing ──────────────────────────────────────────────────────────────

    def _phase(self, name: str, fn: Callable[[], T]) -> T:
        logger.info("── phase %s ──", name)
        try:
            out = fn()
        except Exception as e:
            self.manifest.failed_phase = name
            self.manifest.error = str(e)
            self.manifest.complete = False
            self.run_dir.mkdir(parents=True, exist_ok=True)
            self.manifest.save(self.run_dir)
            logger.error("phase %s failed: %s", name, e)
            raise PhaseError(name, e) from e
        if name != "load":
            self.manifest.phases.append(name)
            self.manifest.save(self.run_dir)
        return out

    def _write(self, frame, relpath: str) -> Path:
        path = write_frame(frame, self.run_dir / relpath)
        self.manifest.record(self.run_dir, [path])
        return path

    # ── phases ────────────────────────────────────────────────────────────────

    def load(self) -> PricePanel:
        cfg = self.config
        if self.panel is None:
            if cfg.data_path is None:
                raise DataError("no data file configured (data.path or --data)")
            self.panel = load_panel(cfg.data_path, missing_cutoff=cfg.data.missing_cutoff, layout=cfg.data.layout,
                                    date_column=cfg.data.date_column)
        self.splits = resolve_splits(cfg, self.panel)
        logger.info("splits: selection %s, training %s, validation %s, test %s", self.splits.pair_selection,
                    self.splits.training, self.splits.validation, self.splits.test)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        path = write_json(cfg.model_dump(mode="json"), self.run_dir / "run_config.json")
        self.manifest.record(self.run_dir, [path])
        return self.panel

    def screen(self) -> list[ScreenResult]:
        cfg, window = self.config, self.splits.pair_selection
        selection = slice_panel(self.panel, window)
        if cfg.screen.transform:
            returns = transformed_returns(selection, shift=cfg.screen.shift, epsilon=cfg.screen.epsilon)
        else:
            returns = compute_returns(selection)
        pairs = enumerate_pairs(selection.tickers)
        if cfg.screen.sample_pairs is not None:
            pairs = sample_pairs(pairs, min(cfg.screen.sample_pairs, len(pairs)), seed=cfg.seed)
        self.screen_results = screen_universe(returns, window, threshold=cfg.screen.threshold, pairs=pairs, n_jobs=cfg.n_jobs)
        self._write(screen_frame(self.screen_results), "screen_results.csv")
        self._write(correlation_histogram(self.screen_results), "correlation_histogram.csv")
        return self.screen_results

    def coint(self) -> list[CointResult]:
        cfg = self.config
        survivors = passed_pairs(self.screen_results)
        self.coint_results = coint_filter(
            self.panel,
            self.splits.pair_selection,
            survivors,
            p_threshold=cfg.coint.threshold,
            with_intercept=cfg.coint.with_intercept,
            max_lags=cfg.coint.max_lags,
            surface=cfg.coint.surface,
            test_on=cfg.coint.test_on,
            n_jobs=cfg.n_jobs,
        )
        self._write(coint_frame(self.coint_results), "coint_results.csv")
        return self.coint_results

    def selected_pairs(self) -> list[PairKey]:
        pairs = [r.pair for r in cointegrated_pairs(self.coint_results)]
        if self.config.optimize.max_pairs is not None:
            pairs = pairs[: self.config.optimize.max_pairs]
        if not pairs:
            raise DataError(f"no cointegrated pairs at p < {self.config.coint.threshold}")
        return pairs

    def optimize(self) -> UniverseOptimization:
        cfg = self.config
        pairs = self.selected_pairs()
        self.optimization = optimize_universe(
            self.panel,
            [(p, None) for p in pairs],
            self.splits,
            space=cfg.optimize.search_space,
            method=cfg.optimize.method,
            budget=cfg.optimize.budget,
            seed=cfg.seed,
            n_jobs=cfg.n_jobs,
            model_mode=cfg.optimize.model_mode,
            with_intercept=cfg.coint.with_intercept,
            top_k_validation=cfg.optimize.top_k_validation,
            objective=cfg.optimize.objective,
            **cfg.backtest_options(),
        )
        if not self.optimization.results:
            raise DataError("optimization failed for every pair")
        self._write(optimization_frame(self.optimization.results), "optimization_results.csv")
        for r in self.optimization.results:
            self._write(trials_frame(r), f"trials/{pair_file('trials', r.pair)}")
        return self.optimization

    def backtest(self) -> dict:
        """Test-window backtests at baseline and (if optimized) chosen thresholds.

        The test-phase spread model is refit on the full training window.
        """
        cfg, test = self.config, self.splits.test
        opts = cfg.backtest_options()
        if self.optimization is not None:
            chosen = {r.pair: r.chosen for r in self.optimization.results}
        else:
            chosen = {}
        pairs = list(chosen) if chosen else self.selected_pairs()
        models, fit_failures = fit_models(self.panel, pairs, self.splits.training, cfg.coint.with_intercept)
        if not models:
            raise DataError("no pair has a valid spread model on the training window")

        baseline = run_portfolio(self.panel, [(p, m, cfg.baseline_thresholds) for p, m in models.items()], test,
                                 n_jobs=cfg.n_jobs, **opts)
        optimized: Optional[PortfolioReport] = None
        if chosen:
            optimized = run_portfolio(self.panel, [(p, m, chosen[p]) for p, m in models.items()], test,
                                      n_jobs=cfg.n_jobs, **opts)

        for r in baseline.reports:
            self._write(backtest_frame(r), f"baseline/{pair_file('backtest', r.pair)}")
        for r in (optimized or baseline).reports:
            if optimized is not None:
                self._write(backtest_frame(r), f"backtests/{pair_file('backtest', r.pair)}")
            self._write(signals_frame(r.signals), f"signals/{pair_file('signals', r.pair)}")
            self._write(trades_frame(r.signals), f"trades/{pair_file('trades', r.pair)}")

        opt = self.optimization
        self.summary = portfolio_summary(
            baseline,
            optimized,
            cfg.baseline_thresholds,
            {p.label: th for p, th in chosen.items()},
            theta_in=opt.theta_in if opt else None,
            theta_out=opt.theta_out if opt else None,
            meta={
                "seed": cfg.seed,
                "method": cfg.optimize.method if opt else None,
                "return_mode": cfg.backtest.return_mode,
                "splits": self.splits.model_dump(mode="json"),
                "n_pairs": len(pairs),
                "n_degenerate": opt.n_degenerate if opt else 0,
                "model_failures": dict(sorted(fit_failures.items())),
            },
        )
        path = write_json(self.summary, self.run_dir / SUMMARY)
        self.manifest.record(self.run_dir, [path])
        logger.info(
            "test window %s: baseline mean %.4f (std %.4f) vs optimized mean %s over %d pairs",
            test, baseline.compounded.mean, baseline.compounded.std,
            f"{optimized.compounded.mean:.4f}" if optimized else "n/a", baseline.compounded.n,
        )
        return self.summary

    # ── driver ────────────────────────────────────────────────────────────────

    def run(self, until: Phase = "backtest", optimize: bool = True) -> "Pipeline":
        """Run phases in order up to ``until``; ``optimize=False`` backtests at the baseline only."""
        self._phase("load", self.load)
        self._phase("screen", self.screen)
        if until != "screen":
            self._phase("coint", self.coint)
        if until in ("optimize", "backtest") and optimize:
            self._phase("optimize", self.optimize)
        if until == "backtest":
            self._phase("backtest", self.backtest)
        self.manifest.complete = True
        self.manifest.save(self.run_dir)
        logger.info("run complete: %s (%d files)", self.run_dir, len(self.manifest.files))
        return self


def run_pipeline(config: RunConfig, until: Phase = "backtest", optimize: bool = True,
                 panel: Optional[PricePanel] = None) -> Pipeline:
    return Pipeline(config, panel=panel).run(until=until, optimize=optimize)
