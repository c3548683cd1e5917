"""Tree-structured Parzen estimator for the two-threshold search.

Observations are split into the best ``gamma`` quantile and the rest; candidates are
drawn from a Gaussian kernel density over the good set and ranked by l(x) / g(x).
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from .data_models import SearchSpace
from .errors import ConfigError

DEFAULT_N_STARTUP = 10
DEFAULT_GAMMA = 0.25
DEFAULT_N_CANDIDATES = 24
_MIN_BANDWIDTH_FRAC = 0.01


class ParzenEstimator:
    """Product-Gaussian KDE with Scott's-rule bandwidths, samples clipped to the box."""

    def __init__(self, points: np.ndarray, low: np.ndarray, high: np.ndarray):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.low = low
        self.high = high
        m, d = self.points.shape
        span = high - low
        sd = self.points.std(axis=0, ddof=1) if m > 1 else span
        bw = sd * m ** (-1.0 / (d + 4))
        self.bandwidth = np.clip(bw, _MIN_BANDWIDTH_FRAC * span, span)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        m, d = self.points.shape
        centers = self.points[rng.integers(0, m, size=size)]
        draws = centers + rng.standard_normal((size, d)) * self.bandwidth
        return np.clip(draws, self.low, self.high)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        lp = norm.logpdf(x[:, None, :], loc=self.points[None, :, :], scale=self.bandwidth).sum(axis=2)
        return logsumexp(lp, axis=1) - math.log(self.points.shape[0])


class TpeSampler:
    """Sequential sampler over (theta_in, theta_out) with theta_out < theta_in.

    The constraint is enforced by rejection, both in the uniform start-up phase and
    on the density-model candidates.
    """

    def __init__(
        self,
        space: SearchSpace,
        seed: int,
        n_startup: int = DEFAULT_N_STARTUP,
        gamma: float = DEFAULT_GAMMA,
        n_candidates: int = DEFAULT_N_CANDIDATES,
        max_rejections: int = 1000,
    ):
        if space.theta_out_low >= space.theta_in_high:
            raise ConfigError("search space has no point with theta_out < theta_in")
        if not 0 < gamma < 1:
            raise ConfigError("gamma must be in (0, 1)")
        self.low = np.array([space.theta_in_low, space.theta_out_low])
        self.high = np.array([space.theta_in_high, space.theta_out_high])
        self.rng = np.random.default_rng(seed)
        self.n_startup = n_startup
        self.gamma = gamma
        self.n_candidates = n_candidates
        self.max_rejections = max_rejections

    @staticmethod
    def feasible(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return (points[:, 1] < points[:, 0]) & (points[:, 0] > 0) & (points[:, 1] >= 0)

    def uniform(self) -> np.ndarray:
        for _ in range(self.max_rejections):
            p = self.rng.uniform(self.low, self.high)
            if self.feasible(p)[0]:
                return p
        raise ConfigError("could not draw a feasible point from the search space")

    def suggest(self, points: Sequence[np.ndarray], values: Sequence[float]) -> np.ndarray:
        n = len(points)
        if n < self.n_startup:
            return self.uniform()
        pts = np.asarray(points, dtype=float)
        vals = np.asarray(values, dtype=float)
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        order = np.argsort(-vals, kind="stable")
        n_below = min(n - 1, max(1, math.ceil(self.gamma * n)))
        good = ParzenEstimator(pts[order[:n_below]], self.low, self.high)
        bad = ParzenEstimator(pts[order[n_below:]], self.low, self.high)

        candidates = np.empty((0, 2))
        for _ in range(self.max_rejections):
            draws = good.sample(self.rng, self.n_candidates)
            candidates = np.vstack([candidates, draws[self.feasible(draws)]])
            if len(candidates) >= self.n_candidates:
                break
        if len(candidates) == 0:
            return self.uniform()
        candidates = candidates[: self.n_candidates]
        score = good.log_pdf(candidates) - bad.log_pdf(candidates)
        return candidates[int(np.argmax(score))]
