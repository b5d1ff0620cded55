"""Clamped B-spline bases on the unit interval.

Every time-varying function in the model is a linear combination of these
basis functions, so evaluation is vectorised over the evaluation points and
returns a dense ``(n_points, num_basis)`` design matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BasisSpec", "make_basis", "eval_basis", "basis_matrix"]


@dataclass(frozen=True)
class BasisSpec:
    """A clamped B-spline family on [0, 1].

    Attributes:
        degree: Polynomial degree of each piece (3 is cubic).
        num_basis: Number of basis functions K.
        knots: Non-decreasing knot vector of length ``num_basis + degree + 1``
            with ``degree + 1`` repeated knots at each end.
    """

    degree: int
    num_basis: int
    knots: tuple[float, ...]

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"degree must be non-negative, got {self.degree}")
        if self.num_basis < self.degree + 1:
            raise ValueError(
                f"num_basis={self.num_basis} must be at least degree + 1 = {self.degree + 1}"
            )
        knots = tuple(float(k) for k in self.knots)
        object.__setattr__(self, "knots", knots)
        if len(knots) != self.num_basis + self.degree + 1:
            raise ValueError(
                f"expected {self.num_basis + self.degree + 1} knots, got {len(knots)}"
            )
        if any(b < a for a, b in zip(knots, knots[1:])):
            raise ValueError("knots must be non-decreasing")
        d, K = self.degree, self.num_basis
        if any(k != 0.0 for k in knots[: d + 1]) or any(k != 1.0 for k in knots[K:]):
            raise ValueError("knot vector must be clamped to 0 and 1")

    def to_dict(self) -> dict:
        return {"degree": self.degree, "num_basis": self.num_basis, "knots": list(self.knots)}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(int(d["degree"]), int(d["num_basis"]), tuple(d["knots"]))


def make_basis(num_basis: int, degree: int = 3) -> BasisSpec:
    """Build a clamped basis with equally spaced interior knots."""
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    if num_basis < degree + 1:
        raise ValueError(f"num_basis={num_basis} must be at least degree + 1 = {degree + 1}")
    n_interior = num_basis - degree - 1
    interior = [j / (n_interior + 1) for j in range(1, n_interior + 1)]
    knots = [0.0] * (degree + 1) + interior + [1.0] * (degree + 1)
    return BasisSpec(degree, num_basis, tuple(knots))


def basis_matrix(spec: BasisSpec, x) -> np.ndarray:
    """Evaluate all basis functions at each point of ``x``.

    Uses the triangular Cox-de Boor scheme on the knot span containing each
    point, so only the ``degree + 1`` possibly-nonzero functions are
    computed. Spans are right-continuous; ``x == 1`` is assigned to the last
    non-empty span so the final basis function equals one there.

    Args:
        spec: Basis to evaluate.
        x: Scalar or 1-d array of points in [0, 1].

    Returns:
        Array of shape ``(len(x), spec.num_basis)``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("x must be a scalar or 1-d array")
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    d, K = spec.degree, spec.num_basis
    knots = np.asarray(spec.knots)
    span = np.searchsorted(knots, x, side="right") - 1
    span = np.clip(span, d, K - 1)
    # clip can land on an empty span when interior knots repeat; walk back
    while True:
        empty = knots[span] == knots[span + 1]
        if not np.any(empty & (span > d)):
            break
        span = np.where(empty & (span > d), span - 1, span)

    n = x.shape[0]
    N = np.zeros((n, d + 1))
    N[:, 0] = 1.0
    left = np.zeros((n, d + 1))
    right = np.zeros((n, d + 1))
    for j in range(1, d + 1):
        left[:, j] = x - knots[span + 1 - j]
        right[:, j] = knots[span + j] - x
        saved = np.zeros(n)
        for r in range(j):
            denom = right[:, r + 1] + left[:, j - r]
            temp = np.divide(N[:, r], denom, out=np.zeros(n), where=denom != 0.0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved

    out = np.zeros((n, K))
    rows = np.arange(n)[:, None]
    cols = span[:, None] - d + np.arange(d + 1)[None, :]
    out[rows, cols] = N
    return out


def eval_basis(spec: BasisSpec, x: float) -> np.ndarray:
    """Evaluate the basis at a single point; returns a length-K vector."""
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    return basis_matrix(spec, x)[0]
