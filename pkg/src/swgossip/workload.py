"""Zipf file popularity: request sampling and served-locally fractions."""

from __future__ import annotations

import bisect
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

DEFAULT_CATALOG = 1_000_000


class WorkloadError(ValueError):
    pass


@lru_cache(maxsize=32)
def _cumulative_weights(alpha: float, n_files: int) -> np.ndarray:
    """Partial sums S(C) = sum_{r<=C} r**-alpha for C = 1..n_files."""
    ranks = np.arange(1, n_files + 1, dtype=np.float64)
    cum = np.cumsum(ranks ** -alpha)
    cum.flags.writeable = False
    return cum


@dataclass(frozen=True)
class ZipfWorkload:
    alpha: float
    n_files: int
    seed: int = 0
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf_list: list = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n_files < 1:
            raise WorkloadError(f"n_files must be >= 1, got {self.n_files}")
        if self.alpha < 0:
            raise WorkloadError(f"alpha must be >= 0, got {self.alpha}")
        cum = _cumulative_weights(float(self.alpha), self.n_files)
        cdf = cum / cum[-1]
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)
        object.__setattr__(self, "_cdf_list", cdf.tolist())

    def probability(self, rank: int) -> float:
        cum = _cumulative_weights(float(self.alpha), self.n_files)
        return rank ** -self.alpha / cum[-1]

    def rank_for(self, u: float) -> int:
        """Inverse CDF: the rank whose cumulative interval holds ``u`` in [0, 1)."""
        return min(bisect.bisect_right(self._cdf_list, u), self.n_files - 1) + 1

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def sample(self, count: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """``count`` i.i.d. ranks in 1..n_files; seeded from ``self.seed`` by default."""
        if count < 0:
            raise WorkloadError("count must be >= 0")
        gen = rng if rng is not None else self.rng()
        u = gen.random(count)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, self.n_files - 1) + 1


def covered_files(n_files: int, coverage: float) -> int:
    if not 0.0 <= coverage <= 1.0:
        raise WorkloadError(f"coverage must be in [0, 1], got {coverage}")
    # guard 0.29 * 100 = 28.999999999999996 style products
    return min(n_files, math.floor(coverage * n_files + 1e-9))


@dataclass(frozen=True)
class ServedFraction:
    coverage: float
    fraction_served: float


def fraction_served(alpha: float, n_files: int, coverage: float) -> ServedFraction:
    """Share of Zipf requests that fall in the ``coverage`` most popular files."""
    if n_files < 1 or alpha < 0:
        raise WorkloadError("need n_files >= 1 and alpha >= 0")
    c = covered_files(n_files, coverage)
    if c == 0:
        return ServedFraction(coverage, 0.0)
    cum = _cumulative_weights(float(alpha), n_files)
    return ServedFraction(coverage, float(cum[c - 1] / cum[-1]))


def figure2_curve(
    alphas: Iterable[float], n_files: int, coverage_grid: Iterable[float]
) -> list[tuple[float, float, float]]:
    alphas, grid = list(alphas), list(coverage_grid)
    if not alphas or not grid:
        raise WorkloadError("alpha list and coverage grid must be non-empty")
    return [
        (a, c, fraction_served(a, n_files, c).fraction_served)
        for a in alphas
        for c in grid
    ]


def curve_to_csv(rows: list[tuple[float, float, float]]) -> str:
    buf = io.StringIO()
    buf.write("alpha,coverage,fraction_served\n")
    for a, c, f in rows:
        buf.write(f"{a:g},{c:g},{f:.6f}\n")
    return buf.getvalue()
