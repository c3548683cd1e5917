"""Run-directory writers, the hashed manifest and the plot-ready report bundle."""
from __future__ import annotations

import datetime as dt
import json
import logging
import math
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .data_models import AggregateStats, PairKey, PortfolioReport, Thresholds
from .errors import DataError
from .utils import sha256_file

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
MANIFEST = "manifest.json"
SUMMARY = "portfolio_summary.json"
PHASES = ("screen", "coint", "optimize", "backtest")
REPORT_PHASES = ("screen", "coint", "backtest")


# ──────────────────────────────────────────────────────────────────────────────
# 写文件
# ──────────────────────────────────────────────────────────────────────────────

def pair_file(kind: str, pair: PairKey) -> str:
    return f"{kind}_{pair.label}.csv"


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (dt.date, Path)):
        return str(value)
    if isinstance(value, BaseModel):
        return _jsonable(value.model_dump())
    return value


def write_json(payload: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    return path


def aggregate_block(portfolio: PortfolioReport) -> dict:
    return {
        "compounded": portfolio.compounded.model_dump(),
        "arithmetic": portfolio.arithmetic.model_dump(),
        "n_failed": portfolio.n_failed,
        "failures": dict(sorted(portfolio.failures.items())),
    }


def portfolio_summary(
    baseline: PortfolioReport,
    optimized: Optional[PortfolioReport],
    baseline_thresholds: Thresholds,
    chosen: dict[str, Thresholds],
    theta_in: Optional[AggregateStats] = None,
    theta_out: Optional[AggregateStats] = None,
    meta: Optional[dict] = None,
) -> dict:
    """Baseline vs optimized test-window statistics plus a per-pair table."""
    opt_by_pair = {r.pair.label: r for r in optimized.reports} if optimized is not None else {}
    rows = []
    for r in baseline.reports:
        o = opt_by_pair.get(r.pair.label)
        th = chosen.get(r.pair.label)
        rows.append(
            {
                "ticker_x": r.pair.ticker_x,
                "ticker_y": r.pair.ticker_y,
                "baseline_return": r.cumulative_return,
                "baseline_arithmetic": r.arithmetic_return,
                "baseline_trades": r.n_trades,
                "theta_in": th.theta_in if th else None,
                "theta_out": th.theta_out if th else None,
                "optimized_return": o.cumulative_return if o else None,
                "optimized_arithmetic": o.arithmetic_return if o else None,
                "optimized_trades": o.n_trades if o else None,
                "optimized_max_drawdown": o.max_drawdown if o else None,
            }
        )
    out = {
        "meta": meta or {},
        "baseline": {"thresholds": baseline_thresholds.model_dump(), **aggregate_block(baseline)},
        "optimized": aggregate_block(optimized) if optimized is not None else None,
        "optimal_thresholds": {
            "theta_in": theta_in.model_dump() if theta_in else None,
            "theta_out": theta_out.model_dump() if theta_out else None,
        },
        "pairs": rows,
    }
    return out


# ──────────────────────────────────────────────────────────────────────────────
# 清单
# ──────────────────────────────────────────────────────────────────────────────

class RunManifest(BaseModel):
    created: str
    seed: int
    phases: list[str] = []
    complete: bool = False
    failed_phase: Optional[str] = None
    error: Optional[str] = None
    files: dict[str, str] = {}

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        path = Path(run_dir) / MANIFEST
        if not path.exists():
            raise DataError(f"{run_dir}: no {MANIFEST}; not a run directory")
        return cls.model_validate_json(path.read_text(encoding="utf-8"))

    def record(self, run_dir: Path, paths: Sequence[Path]) -> None:
        for p in paths:
            self.files[Path(p).relative_to(run_dir).as_posix()] = sha256_file(p)

    def save(self, run_dir: Path) -> Path:
        path = Path(run_dir) / MANIFEST
        self.files = dict(sorted(self.files.items()))
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


# ──────────────────────────────────────────────────────────────────────────────
# 报告：画图用的 CSV
# ──────────────────────────────────────────────────────────────────────────────

def _zscore_frame(signals: pd.DataFrame, trades: pd.DataFrame, th: Thresholds) -> pd.DataFrame:
    out = signals.copy()
    out["upper_in"] = th.theta_in
    out["lower_in"] = -th.theta_in
    out["upper_out"] = th.theta_out
    out["lower_out"] = -th.theta_out
    entries = set(trades["entry_date"].astype(str)) if not trades.empty else set()
    exits = set(trades["exit_date"].astype(str)) if not trades.empty else set()
    dates = out["date"].astype(str)
    out["entry"] = dates.isin(entries).astype(int)
    out["exit"] = dates.isin(exits).astype(int)
    return out


def build_report(run_dir: str | Path) -> list[Path]:
    """Write ``report/zscore_*`` and ``report/equity_*`` for every backtested pair.

    Baseline-only runs (no ``optimize`` phase) get baseline thresholds on the z-score
    plot and a single ``baseline_equity`` column.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir() or not any(run_dir.iterdir()):
        raise DataError(f"{run_dir}: run directory is missing or empty")
    manifest = RunManifest.load(run_dir)
    missing = [p for p in REPORT_PHASES if p not in manifest.phases]
    if missing:
        raise DataError(f"{run_dir}: run incomplete, missing phase {missing[0]!r}")
    if not manifest.complete:
        raise DataError(f"{run_dir}: run flagged incomplete (failed phase {manifest.failed_phase!r})")

    summary = json.loads((run_dir / SUMMARY).read_text(encoding="utf-8"))
    optimized = "optimize" in manifest.phases
    baseline_th = Thresholds(**summary["baseline"]["thresholds"])
    report_dir = run_dir / "report"
    written = []
    for row in summary["pairs"]:
        pair = PairKey(ticker_x=str(row["ticker_x"]), ticker_y=str(row["ticker_y"]))
        sig_path = run_dir / "signals" / pair_file("signals", pair)
        bt_path = run_dir / "backtests" / pair_file("backtest", pair)
        base_path = run_dir / "baseline" / pair_file("backtest", pair)
        if not (sig_path.exists() and base_path.exists() and (bt_path.exists() or not optimized)):
            logger.warning("no test-window backtest for %s; skipped", pair)
            continue
        if optimized and row["theta_in"] is not None:
            th = Thresholds(theta_in=float(row["theta_in"]), theta_out=float(row["theta_out"]))
        else:
            th = baseline_th
        trades = pd.read_csv(run_dir / "trades" / pair_file("trades", pair))
        z = _zscore_frame(pd.read_csv(sig_path), trades, th)
        written.append(write_frame(z, report_dir / pair_file("zscore", pair)))

        base_bt = pd.read_csv(base_path)
        equity = pd.DataFrame({"date": base_bt["date"], "baseline_equity": base_bt["equity"]})
        if optimized:
            equity["optimized_equity"] = pd.read_csv(bt_path)["equity"]
        written.append(write_frame(equity, report_dir / pair_file("equity", pair)))

    hist = run_dir / "correlation_histogram.csv"
    if hist.exists():
        written.append(write_frame(pd.read_csv(hist), report_dir / "correlation_histogram.csv"))
    logger.info("report: wrote %d files under %s", len(written), report_dir)
    return written
