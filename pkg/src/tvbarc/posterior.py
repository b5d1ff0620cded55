"""Pointwise posterior summaries of the trend and lag-coefficient curves."""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .sampler import PosteriorChain

__all__ = [
    "TrendSummary",
    "trend_summary",
    "posterior_band_coverage",
    "default_grid",
    "grid_dates",
    "parse_target",
]

DEFAULT_GRID_POINTS = 100
CSV_COLUMNS = ("date", "x", "mean", "lower", "upper")


def default_grid(n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def grid_dates(grid, start_date: dt.date, n_obs: int) -> tuple[dt.date, ...]:
    """Calendar date of each grid point: day ``ceil(x * T)``, clamped to ``[1, T]``."""
    out = []
    for x in np.asarray(grid, dtype=float):
        day = min(max(math.ceil(x * n_obs), 1), n_obs)
        out.append(start_date + dt.timedelta(days=day - 1))
    return tuple(out)


@dataclass(frozen=True)
class TrendSummary:
    """Posterior mean curve with a pointwise equal-tailed credible band.

    Attributes:
        target: ``"mu"`` or ``"ar_<i>"``.
        grid: Increasing points in [0, 1].
        dates: Calendar date for each grid point, or ``None`` if the chain
            carries no start date.
        mean, lower, upper: Curves on ``grid``.
        level: Credible level, e.g. 0.95.
    """

    target: str
    grid: np.ndarray
    dates: Optional[tuple]
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    def __post_init__(self):
        n = len(self.grid)
        if not (len(self.mean) == len(self.lower) == len(self.upper) == n):
            raise ValueError("summary curves must match the grid length")
        if self.dates is not None and len(self.dates) != n:
            raise ValueError("dates must match the grid length")

    def rows(self) -> list[dict]:
        dates = self.dates or (None,) * len(self.grid)
        return [
            {"date": d.isoformat() if d else "", "x": float(x), "mean": float(m),
             "lower": float(lo), "upper": float(hi)}
            for d, x, m, lo, hi in zip(dates, self.grid, self.mean, self.lower, self.upper)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows():
            w.writerow([r["date"], repr(r["x"]), repr(r["mean"]), repr(r["lower"]), repr(r["upper"])])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {"target": self.target, "level": self.level, "rows": self.rows()}
        return json.dumps(doc, indent=2) + "\n"


def parse_target(target: Union[str, tuple]) -> tuple[str, int]:
    """Normalise ``"mu"``, ``"ar1"``, ``"ar_1"`` or ``("ar", 1)``."""
    if isinstance(target, tuple):
        kind, i = target
        if kind != "ar":
            raise ValueError(f"unknown target {target!r}")
        return "ar", int(i)
    if target == "mu":
        return "mu", 0
    if target.startswith("ar"):
        rest = target[2:].lstrip("_")
        if rest.isdigit():
            return "ar", int(rest)
    raise ValueError(f"unknown target {target!r}; use 'mu' or 'ar<i>'")


def trend_summary(chain: PosteriorChain, target: Union[str, tuple] = "mu", grid=None,
                  level: float = 0.95) -> TrendSummary:
    """Mean and ``((1 - level) / 2, (1 + level) / 2)`` quantiles of a curve
    across draws, at each grid point.

    Quantiles interpolate linearly between order statistics.

    Raises:
        ValueError: on an empty chain, a level outside (0, 1) or a bad grid.
        IndexError: for ``ar`` with a lag index outside ``1..p``.
    """
    if len(chain) == 0:
        raise ValueError("chain has no draws")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a non-empty increasing sequence")
    if grid[0] < 0 or grid[-1] > 1:
        raise ValueError("grid must lie in [0, 1]")

    kind, i = parse_target(target)
    curves = chain.mu_curves(grid) if kind == "mu" else chain.ar_curves(i, grid)
    alpha = 1.0 - level
    lower, upper = np.quantile(curves, [alpha / 2, 1 - alpha / 2], axis=0)
    mean = curves.mean(axis=0)
    # a mean computed in floating point can step outside a degenerate band
    mean = np.clip(mean, lower, upper)
    dates = None
    if chain.start_date is not None and chain.n_obs:
        dates = grid_dates(grid, chain.start_date, chain.n_obs)
    name = "mu" if kind == "mu" else f"ar_{i}"
    return TrendSummary(name, grid, dates, mean, lower, upper, level)


def posterior_band_coverage(summary: TrendSummary, truth_curve) -> float:
    """Fraction of grid points where the true curve lies inside the band."""
    truth = np.asarray(truth_curve, dtype=float)
    if truth.shape != summary.grid.shape:
        raise ValueError(f"truth has shape {truth.shape}, grid has {summary.grid.shape}")
    inside = (truth >= summary.lower) & (truth <= summary.upper)
    return float(inside.mean())
