"""Command-line front door.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 point-in-time
violation, 4 numerical failure.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, List, Optional, TypeVar

import click
import typer

from .config import RunConfig, load_config
from .errors import ConfigError, PairsError
from .market_data import clean_panel, write_panel
from .pipeline import Phase, run_pipeline
from .reporting import build_report
from .simulation import simulate_panel
from .surfaces import regenerate_surfaces
from .utils import configure_logging

logger = logging.getLogger(__name__)
T = TypeVar("T")

app = typer.Typer(help="Pairs-trading research engine: screen, cointegrate, optimize, backtest.",
                  add_completion=False, no_args_is_help=True)

# ────── 通用参数 ──────
CONFIG = typer.Option(None, "--config", "-c", help="TOML run configuration.")
DATA = typer.Option(None, "--data", help="Price CSV (overrides data.path).")
SEED = typer.Option(None, "--seed", help="Run seed (overrides seed).")
METHOD = typer.Option(None, "--method", help="grid | tpe (overrides optimize.method).")
TRIALS = typer.Option(None, "--trials", help="TPE budget (overrides optimize.budget).")
OUT = typer.Option(None, "--out", help="Run directory (overrides output_dir).")
JOBS = typer.Option(None, "--jobs", help="Parallel workers (overrides n_jobs).")


@app.callback()
def root(verbose: bool = typer.Option(False, "--verbose", "-v", help="DEBUG logging.")) -> None:
    configure_logging(verbose)


def _guard(fn: Callable[[], T]) -> T:
    try:
        return fn()
    except PairsError as e:
        logger.error("%s", e)
        raise typer.Exit(code=e.exit_code)


def _config(config, data, seed, method, trials, out, jobs) -> RunConfig:
    return load_config(
        config,
        {
            "data.path": str(data) if data else None,
            "seed": seed,
            "optimize.method": method,
            "optimize.budget": trials,
            "output_dir": str(out) if out else None,
            "n_jobs": jobs,
        },
    )


def _run(until: Phase, optimize: bool, config, data, seed, method, trials, out, jobs) -> None:
    def go():
        cfg = _config(config, data, seed, method, trials, out, jobs)
        run = run_pipeline(cfg, until=until, optimize=optimize)
        typer.echo(str(run.run_dir))

    _guard(go)


@app.command()
def screen(config: Optional[Path] = CONFIG, data: Optional[Path] = DATA, seed: Optional[int] = SEED,
           out: Optional[Path] = OUT, jobs: Optional[int] = JOBS) -> None:
    """Correlation screen on the pair-selection window (+ histogram)."""
    _run("screen", False, config, data, seed, None, None, out, jobs)


@app.command()
def coint(config: Optional[Path] = CONFIG, data: Optional[Path] = DATA, seed: Optional[int] = SEED,
          out: Optional[Path] = OUT, jobs: Optional[int] = JOBS) -> None:
    """Screen, then Engle-Granger on the survivors."""
    _run("coint", False, config, data, seed, None, None, out, jobs)


@app.command()
def optimize(config: Optional[Path] = CONFIG, data: Optional[Path] = DATA, seed: Optional[int] = SEED,
             method: Optional[str] = METHOD, trials: Optional[int] = TRIALS, out: Optional[Path] = OUT,
             jobs: Optional[int] = JOBS) -> None:
    """Screen, cointegrate and search thresholds on the training window."""
    _run("optimize", True, config, data, seed, method, trials, out, jobs)


@app.command()
def backtest(config: Optional[Path] = CONFIG, data: Optional[Path] = DATA, seed: Optional[int] = SEED,
             out: Optional[Path] = OUT, jobs: Optional[int] = JOBS) -> None:
    """Test-window backtest of every cointegrated pair at the baseline thresholds."""
    _run("backtest", False, config, data, seed, None, None, out, jobs)


@app.command()
def pipeline(config: Optional[Path] = CONFIG, data: Optional[Path] = DATA, seed: Optional[int] = SEED,
             method: Optional[str] = METHOD, trials: Optional[int] = TRIALS, out: Optional[Path] = OUT,
             jobs: Optional[int] = JOBS) -> None:
    """All four phases; writes portfolio_summary.json (baseline vs optimized)."""
    _run("backtest", True, config, data, seed, method, trials, out, jobs)


@app.command()
def report(run_dir: Path = typer.Argument(..., help="Completed run directory.")) -> None:
    """Plot-ready z-score and equity CSVs for a completed run."""
    paths = _guard(lambda: build_report(run_dir))
    typer.echo(f"{len(paths)} files under {run_dir / 'report'}")


@app.command()
def simulate(
    out: Path = typer.Option(Path("simulated_prices.csv"), "--out", help="Output CSV."),
    pairs: int = typer.Option(10, "--pairs", help="Cointegrated pairs (A###/B###)."),
    noise: int = typer.Option(10, "--noise", help="Independent random walks (N###)."),
    days: int = typer.Option(1000, "--days", help="Business days."),
    half_life: float = typer.Option(10.0, "--half-life", help="Spread half-life in days."),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Synthetic wide price CSV with known cointegrated pairs."""
    def go():
        if days < 30:
            raise ConfigError("--days must be >= 30")
        write_panel(simulate_panel(pairs, days, seed=seed, n_noise=noise, half_life=half_life), out)
        typer.echo(str(out))

    _guard(go)


@app.command()
def download(
    tickers: List[str] = typer.Argument(..., help="Ticker symbols."),
    start: str = typer.Option("2015-01-01", "--start"),
    end: Optional[str] = typer.Option(None, "--end"),
    out: Path = typer.Option(Path("prices.csv"), "--out"),
    missing_cutoff: float = typer.Option(0.05, "--missing-cutoff"),
) -> None:
    """Adjusted closes from Yahoo Finance into a wide price CSV."""
    from .yahoo_client import YahooClient

    def go():
        frame = YahooClient().get_panel_frame(tickers, start, end)
        write_panel(clean_panel(frame, missing_cutoff=missing_cutoff, source="yahoo"), out)
        typer.echo(str(out))

    _guard(go)


@app.command()
def tables(
    out: Path = typer.Option(Path("response_surfaces.csv"), "--out"),
    reps: int = typer.Option(1_000_000, "--reps", help="Monte-Carlo replications per surface."),
    obs: int = typer.Option(500, "--obs", help="Series length."),
    seed: int = typer.Option(0, "--seed"),
) -> None:
    """Regenerate the ADF / Engle-Granger p-value surfaces by simulation."""
    _guard(lambda: regenerate_surfaces(n_obs=obs, n_reps=reps, seed=seed, out=out))
    typer.echo(str(out))


def main(args: Optional[List[str]] = None) -> None:
    """Console entry point. Usage errors exit 1 like configuration errors."""
    try:
        code = app(args=args, prog_name="pairsniper", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        code = ConfigError.exit_code
    except click.ClickException as e:
        e.show()
        code = e.exit_code
    except click.exceptions.Abort:
        typer.echo("Aborted!", err=True)
        code = 1
    raise SystemExit(code if isinstance(code, int) else 0)


if __name__ == "__main__":
    main()
