"""Forward simulation of time-varying Poisson autoregressions.

Curves are given in closed form (piecewise-linear or sinusoidal) rather
than through the spline parameterisation, so synthetic studies do not share
code with the model they validate.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CountSeries

__all__ = ["PiecewiseLinear", "Sinusoid", "GeneratorSpec", "simulate", "curve_from_dict", "ADMISSIBILITY_GRID"]

ADMISSIBILITY_GRID = 1000


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation through ``(x, y)`` points, flat beyond the ends."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise ValueError("piecewise-linear curve needs at least one point")
        xs = [x for x, _ in pts]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("piecewise-linear x values must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def constant(cls, value: float) -> "PiecewiseLinear":
        return cls(((0.0, value),))

    def __call__(self, x):
        xs, ys = zip(*self.points)
        return np.interp(x, xs, ys)

    def to_dict(self) -> dict:
        return {"kind": "piecewise_linear", "points": [list(p) for p in self.points]}


@dataclass(frozen=True)
class Sinusoid:
    """``offset + amplitude * sin(2 pi (x / period) + phase)``."""

    offset: float
    amplitude: float
    period: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("sinusoid period must be positive")

    def __call__(self, x):
        return self.offset + self.amplitude * np.sin(2 * np.pi * np.asarray(x) / self.period + self.phase)

    def to_dict(self) -> dict:
        return {"kind": "sinusoid", "offset": self.offset, "amplitude": self.amplitude,
                "period": self.period, "phase": self.phase}


def curve_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple(tuple(p) for p in d["points"]))
    if kind == "constant":
        return PiecewiseLinear.constant(float(d["value"]))
    if kind == "sinusoid":
        return Sinusoid(float(d["offset"]), float(d["amplitude"]),
                        float(d.get("period", 1.0)), float(d.get("phase", 0.0)))
    raise ValueError(f"unknown curve kind {kind!r}")


@dataclass(frozen=True)
class GeneratorSpec:
    """A fully specified process to simulate from.

    Admissibility (``mu > 0``, each ``a_i >= 0`` and ``sum_i a_i < 1``) is
    checked on a 1000-point grid at construction.
    """

    T: int
    p: int
    mu_fn: object
    ar_fns: tuple = ()
    seed: int = 0
    warmup: int = 50
    start_date: dt.date = dt.date(2020, 1, 1)
    label: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "ar_fns", tuple(self.ar_fns))
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.p < 0 or len(self.ar_fns) != self.p:
            raise ValueError(f"need exactly p={self.p} lag-coefficient curves, got {len(self.ar_fns)}")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        grid = np.linspace(0.0, 1.0, ADMISSIBILITY_GRID)
        if np.min(self.mu_fn(grid)) <= 0:
            raise ValueError("mu curve must be strictly positive on [0, 1]")
        if self.p:
            ar = np.array([f(grid) for f in self.ar_fns])
            if ar.min() < 0 or ar.max() >= 1:
                raise ValueError("lag-coefficient curves must lie in [0, 1)")
            if ar.sum(axis=0).max() >= 1:
                raise ValueError("lag-coefficient curves must sum to less than 1")

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "p": self.p,
            "mu": self.mu_fn.to_dict(),
            "ar": [f.to_dict() for f in self.ar_fns],
            "seed": self.seed,
            "warmup": self.warmup,
            "start_date": self.start_date.isoformat(),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(
            T=int(d["T"]),
            p=int(d.get("p", len(d.get("ar", [])))),
            mu_fn=curve_from_dict(d["mu"]),
            ar_fns=tuple(curve_from_dict(c) for c in d.get("ar", [])),
            seed=int(d.get("seed", 0)),
            warmup=int(d.get("warmup", 50)),
            start_date=dt.date.fromisoformat(d.get("start_date", "2020-01-01")),
            label=str(d.get("label", "synthetic")),
        )

    @classmethod
    def load(cls, path) -> "GeneratorSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def simulate(spec: GeneratorSpec) -> CountSeries:
    """Draw one series of length ``spec.T``.

    The first ``warmup`` steps run with the curves frozen at ``x = 0`` from
    an all-zero history and are discarded.
    """
    rng = np.random.default_rng(spec.seed)
    p, T = spec.p, spec.T
    x = np.arange(1, T + 1) / T
    mu = np.concatenate([np.full(spec.warmup, float(spec.mu_fn(0.0))), spec.mu_fn(x)])
    ar = np.zeros((spec.warmup + T, p))
    for i, f in enumerate(spec.ar_fns):
        ar[:, i] = np.concatenate([np.full(spec.warmup, float(f(0.0))), f(x)])

    out = np.zeros(p + spec.warmup + T, dtype=np.int64)
    for k in range(spec.warmup + T):
        t = p + k
        lam = mu[k] + (ar[k] @ out[t - p:t][::-1] if p else 0.0)
        out[t] = rng.poisson(lam)
    return CountSeries(spec.start_date, tuple(out[p + spec.warmup:].tolist()), spec.label)
