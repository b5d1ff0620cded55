"""Frequentist baselines: a single mean-shift changepoint and the sample ACF."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CountSeries

__all__ = ["ChangePointResult", "detect_changepoint", "sample_acf"]


@dataclass(frozen=True)
class ChangePointResult:
    """Least-squares fit of a one-shift mean model.

    ``E X_t = base_mean`` for ``t <= tau_hat`` and ``base_mean + shift``
    afterwards (1-based ``t``).
    """

    tau_hat: int
    base_mean: float
    shift: float
    sse_reduction: float

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "base_mean": self.base_mean,
            "shift": self.shift,
            "sse_reduction": self.sse_reduction,
        }


def _values(series) -> np.ndarray:
    if isinstance(series, CountSeries):
        return series.values.astype(float)
    return np.asarray(series, dtype=float)


def detect_changepoint(series, min_seg: int = 2) -> ChangePointResult:
    """Scan every split ``tau`` in ``[min_seg, T - min_seg]`` for the lowest
    within-segment sum of squares.

    Ties (up to rounding) go to the smallest ``tau``.

    Raises:
        ValueError: if ``min_seg < 1`` or ``T < 2 * min_seg``.
    """
    x = _values(series)
    T = x.size
    if min_seg < 1:
        raise ValueError("min_seg must be positive")
    if T < 2 * min_seg:
        raise ValueError(f"series of length {T} is too short for min_seg={min_seg}")

    # centre first so the prefix sums stay small
    xc = x - x.mean()
    cs = np.cumsum(xc)
    total = cs[-1]
    taus = np.arange(min_seg, T - min_seg + 1)
    left = cs[taus - 1]
    # SSE(tau) = SS_total - [S_l^2 / tau + S_r^2 / (T - tau)]; maximise the bracket
    gain = left**2 / taus + (total - left) ** 2 / (T - taus)
    best = gain.max()
    tol = 1e-9 * max(best, 1.0)
    k = int(np.nonzero(gain >= best - tol)[0][0])
    tau = int(taus[k])

    pre, post = x[:tau].mean(), x[tau:].mean()
    reduction = float(gain[k] - total**2 / T)
    return ChangePointResult(tau, float(pre), float(post - pre), max(reduction, 0.0))


def sample_acf(series, max_lag: int) -> np.ndarray:
    """``rho(h) = sum_t (X_t - m)(X_{t+h} - m) / sum_t (X_t - m)^2`` for
    ``h = 0..max_lag``.

    Raises:
        ValueError: if ``max_lag`` is not in ``[1, T)`` or the series is constant.
    """
    x = _values(series)
    T = x.size
    if not 1 <= max_lag < T:
        raise ValueError(f"max_lag must lie in [1, {T - 1}], got {max_lag}")
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0.0:
        raise ValueError("autocorrelation is undefined for a constant series")
    rho = np.empty(max_lag + 1)
    rho[0] = 1.0
    for h in range(1, max_lag + 1):
        rho[h] = float(d[:-h] @ d[h:]) / denom
    return rho
