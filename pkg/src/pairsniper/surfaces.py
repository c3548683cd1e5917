"""Response-surface p-values and critical values for ADF / Engle-Granger tau statistics.

Coefficient tables live in ``pairsniper/data/*.csv``. :func:`regenerate_surfaces`
rebuilds the p-value surface by simulation so the shipped numbers can be audited.
"""
from __future__ import annotations

import functools
import logging
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.stats import norm

from .errors import DataError

logger = logging.getLogger(__name__)

SURFACE_FILE = "response_surfaces.csv"
CRITICAL_FILE = "critical_values.csv"
SURFACE_COLUMNS = [
    "surface", "n_vars", "tau_min", "tau_star", "tau_max",
    "small_0", "small_1", "small_2", "large_0", "large_1", "large_2", "large_3",
]


def _read_table(name: str) -> pd.DataFrame:
    with resources.files("pairsniper").joinpath("data", name).open("r", encoding="utf-8") as fh:
        return pd.read_csv(fh, comment="#")


@functools.lru_cache(maxsize=None)
def surface_table() -> pd.DataFrame:
    return _read_table(SURFACE_FILE)


@functools.lru_cache(maxsize=None)
def critical_table() -> pd.DataFrame:
    return _read_table(CRITICAL_FILE)


def _surface_row(n_vars: int, table: Optional[pd.DataFrame] = None) -> pd.Series:
    table = surface_table() if table is None else table
    rows = table[table["n_vars"] == n_vars]
    if rows.empty:
        raise DataError(f"no response surface for n_vars={n_vars}")
    return rows.iloc[0]


def mackinnon_pvalue(t_stat: float, n_vars: int = 1, table: Optional[pd.DataFrame] = None) -> float:
    """Approximate p-value of a constant-only tau statistic.

    n_vars=1 is the plain unit-root test, n_vars=2 the residual-based test for a
    two-series cointegrating regression. Clamped to 0/1 outside the surface support.
    """
    row = _surface_row(n_vars, table)
    if not np.isfinite(t_stat):
        return 0.0 if t_stat < 0 else 1.0
    if t_stat > row["tau_max"]:
        return 1.0
    if t_stat < row["tau_min"]:
        return 0.0
    if t_stat <= row["tau_star"]:
        coef = [row["small_0"], row["small_1"], row["small_2"]]
    else:
        coef = [row["large_0"], row["large_1"], row["large_2"], row["large_3"]]
    return float(np.clip(norm.cdf(np.polynomial.polynomial.polyval(t_stat, coef)), 0.0, 1.0))


def critical_values(n_obs: int, n_vars: int = 1) -> dict[str, float]:
    table = critical_table()
    rows = table[table["n_vars"] == n_vars]
    out = {}
    for _, r in rows.iterrows():
        out[str(r["level"])] = float(r["b0"] + r["b1"] / n_obs + r["b2"] / n_obs**2 + r["b3"] / n_obs**3)
    return out


# ──────────────────────────────────────────────────────────────────────────────
# 蒙特卡洛重建
# ──────────────────────────────────────────────────────────────────────────────

def _df_tau(z: np.ndarray) -> np.ndarray:
    """Row-wise Dickey-Fuller tau (constant, no lags) for a batch of series."""
    lag = z[:, :-1]
    dz = np.diff(z, axis=1)
    lag_c = lag - lag.mean(axis=1, keepdims=True)
    dz_c = dz - dz.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", lag_c, lag_c)
    gamma = np.einsum("ij,ij->i", lag_c, dz_c) / sxx
    resid = dz_c - gamma[:, None] * lag_c
    dof = dz.shape[1] - 2
    s2 = np.einsum("ij,ij->i", resid, resid) / dof
    return gamma / np.sqrt(s2 / sxx)


def simulate_tau(n_vars: int, n_obs: int, n_reps: int, seed: int, batch: int = 10_000) -> np.ndarray:
    """Draws of the tau statistic under the null (independent random walks)."""
    if n_vars not in (1, 2):
        raise DataError("only n_vars in {1, 2} are supported")
    rng = np.random.default_rng(seed)
    out = np.empty(n_reps)
    done = 0
    while done < n_reps:
        m = min(batch, n_reps - done)
        x = np.cumsum(rng.standard_normal((m, n_obs)), axis=1)
        if n_vars == 2:
            y = np.cumsum(rng.standard_normal((m, n_obs)), axis=1)
            xc = x - x.mean(axis=1, keepdims=True)
            yc = y - y.mean(axis=1, keepdims=True)
            beta = np.einsum("ij,ij->i", xc, yc) / np.einsum("ij,ij->i", yc, yc)
            x = xc - beta[:, None] * yc
        out[done:done + m] = _df_tau(x)
        done += m
    return out


def fit_surface(taus: np.ndarray, surface: str, n_vars: int) -> dict:
    """Probit polynomials fitted to the empirical distribution, split at the median."""
    taus = np.sort(np.asarray(taus, dtype=float))
    p_small = np.linspace(0.0005, 0.5, 200)
    p_large = np.linspace(0.5, 0.9995, 200)
    small = np.polyfit(np.quantile(taus, p_small), norm.ppf(p_small), 2)[::-1]
    large = np.polyfit(np.quantile(taus, p_large), norm.ppf(p_large), 3)[::-1]
    row = {
        "surface": surface,
        "n_vars": n_vars,
        "tau_min": float(taus[0]),
        "tau_star": float(np.quantile(taus, 0.5)),
        "tau_max": float(taus[-1]),
    }
    row.update({f"small_{i}": float(c) for i, c in enumerate(small)})
    row.update({f"large_{i}": float(c) for i, c in enumerate(large)})
    return row


def regenerate_surfaces(n_obs: int = 500, n_reps: int = 1_000_000, seed: int = 0, out: Optional[Path] = None) -> pd.DataFrame:
    rows = []
    for surface, n_vars in (("adf", 1), ("engle_granger", 2)):
        logger.info("simulating %s surface: %d replications of T=%d (seed %d)", surface, n_reps, n_obs, seed)
        rows.append(fit_surface(simulate_tau(n_vars, n_obs, n_reps, seed + n_vars), surface, n_vars))
    table = pd.DataFrame(rows, columns=SURFACE_COLUMNS)
    if out is not None:
        out = Path(out)
        header = (
            "# Response-surface coefficients regenerated by simulation.\n"
            f"# n_obs={n_obs} n_reps={n_reps} seed={seed} (series seeds: seed + n_vars)\n"
            "# p = Phi(poly(t)); quadratic at or below tau_star, cubic above.\n"
        )
        out.write_text(header + table.to_csv(index=False, float_format="%.10g", lineterminator="\n"), encoding="utf-8")
        logger.info("wrote %s", out)
    return table
