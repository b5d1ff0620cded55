"""Time-varying Poisson autoregression with B-spline coefficient functions.

The count process is

    X_t | past ~ Poisson(lambda_t),
    lambda_t = mu(t/T) + sum_i a_i(t/T) X_{t-i},

with

    mu(x)  = sum_j exp(beta_j) B_j(x)
    a_i(x) = sum_j theta_ij M_i B_j(x),     0 <= theta_ij <= 1
    M_i    = exp(delta_i) / sum_{k=0..p} exp(delta_k)

so that mu > 0 and sum_i a_i(x) < 1 hold for every parameter value. The
sampler works on an unconstrained vector ``[beta, logit(theta), delta]``.

In floating point the slack weight ``M_0`` can underflow and the bound
becomes ``sum_i a_i(x) == 1``; states whose worst-case coefficient sum
``sum_i M_i max_j theta_ij`` is within ``STABILITY_MARGIN`` of one are
treated as outside the support.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logit

from .spline_basis import BasisSpec, basis_matrix, make_basis

__all__ = [
    "ModelSpec",
    "ParameterState",
    "CountSeries",
    "LogPosterior",
    "mixture_weights",
    "mu_at",
    "ar_at",
    "lambda_at",
    "log_likelihood",
    "log_prior",
    "to_unconstrained",
    "from_unconstrained",
    "log_posterior_unconstrained",
    "grad_log_posterior_unconstrained",
    "THETA_EPS",
    "STABILITY_MARGIN",
]

THETA_EPS = 1e-8
STABILITY_MARGIN = 1e-12
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Lag order, the two spline bases and the prior variances.

    ``c1`` is the prior variance of every ``delta_l`` and ``c2`` that of
    every ``beta_j``.
    """

    p: int
    basis_mu: BasisSpec
    basis_ar: BasisSpec
    c1: float = 100.0
    c2: float = 100.0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError(f"lag order p must be non-negative, got {self.p}")
        if not self.c1 > 0 or not self.c2 > 0:
            raise ValueError("prior variances c1 and c2 must be positive")

    @classmethod
    def default(cls, p: int = 1, k1: int = 6, k2: int = 6, degree: int = 3,
                c1: float = 100.0, c2: float = 100.0) -> "ModelSpec":
        return cls(p, make_basis(k1, degree), make_basis(k2, degree), float(c1), float(c2))

    @property
    def k1(self) -> int:
        return self.basis_mu.num_basis

    @property
    def k2(self) -> int:
        return self.basis_ar.num_basis

    @property
    def dim(self) -> int:
        return self.k1 + self.p * self.k2 + self.p + 1

    def blocks(self) -> dict[str, slice]:
        """Slices of the unconstrained vector, in sampler update order."""
        out = {"beta": slice(0, self.k1)}
        start = self.k1
        for i in range(self.p):
            out[f"theta_{i + 1}"] = slice(start, start + self.k2)
            start += self.k2
        out["delta"] = slice(start, start + self.p + 1)
        return out

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "basis_mu": self.basis_mu.to_dict(),
            "basis_ar": self.basis_ar.to_dict(),
            "c1": self.c1,
            "c2": self.c2,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(int(d["p"]), BasisSpec.from_dict(d["basis_mu"]),
                   BasisSpec.from_dict(d["basis_ar"]), float(d["c1"]), float(d["c2"]))


@dataclass(frozen=True, eq=False)
class ParameterState:
    """One point in parameter space.

    Attributes:
        beta: Trend coefficients, shape ``(K1,)``.
        theta: Lag-coefficient weights in [0, 1], shape ``(p, K2)``.
        delta: Softmax logits, shape ``(p + 1,)``; index 0 is slack mass.
    """

    beta: np.ndarray
    theta: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        delta = np.array(self.delta, dtype=float).reshape(-1)
        theta = np.array(self.theta, dtype=float)
        if theta.ndim == 1 and theta.size == 0:
            theta = theta.reshape(0, 0)
        if theta.ndim != 2:
            raise ValueError("theta must be a (p, K2) matrix")
        if theta.shape[0] + 1 != delta.size:
            raise ValueError(f"delta must have p + 1 = {theta.shape[0] + 1} entries, got {delta.size}")
        for a in (beta, theta, delta):
            a.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "delta", delta)

    @property
    def p(self) -> int:
        return self.theta.shape[0]

    def in_support(self) -> bool:
        return bool(np.all((self.theta >= 0.0) & (self.theta <= 1.0)))

    def __eq__(self, other):
        if not isinstance(other, ParameterState):
            return NotImplemented
        return (np.array_equal(self.beta, other.beta) and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.delta, other.delta))

    __hash__ = None


@dataclass(frozen=True)
class CountSeries:
    """Consecutive daily counts starting at ``start_date``."""

    start_date: dt.date
    counts: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        counts = tuple(self.counts)
        if not counts:
            raise ValueError("count series must be non-empty")
        clean = []
        for c in counts:
            if isinstance(c, (bool, np.bool_)) or int(c) != c:
                raise ValueError(f"counts must be integers, got {c!r}")
            if c < 0:
                raise ValueError(f"counts must be non-negative, got {c}")
            clean.append(int(c))
        object.__setattr__(self, "counts", tuple(clean))

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def T(self) -> int:
        return len(self.counts)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    def date_at(self, t: int) -> dt.date:
        """Calendar date of 1-based time index ``t``."""
        return self.start_date + dt.timedelta(days=t - 1)

    @property
    def end_date(self) -> dt.date:
        return self.date_at(self.T)


def mixture_weights(delta) -> np.ndarray:
    """Softmax weights ``M_1..M_p``; ``delta[0]`` only enters the normaliser."""
    delta = np.asarray(delta, dtype=float)
    if delta.size < 2:
        raise ValueError("mixture weights need p >= 1 (delta of length >= 2)")
    e = np.exp(delta - delta.max())
    return e[1:] / e.sum()


def _softmax(delta: np.ndarray) -> np.ndarray:
    e = np.exp(delta - delta.max())
    return e / e.sum()


def _check_x(x) -> np.ndarray:
    xs = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xs)) or np.any(xs < 0) or np.any(xs > 1):
        raise ValueError("x must lie in [0, 1]")
    return xs


def mu_at(state: ParameterState, spec: ModelSpec, x):
    """Trend ``mu(x)``; accepts a scalar or an array of points."""
    xs = _check_x(x)
    vals = basis_matrix(spec.basis_mu, xs.reshape(-1)) @ np.exp(state.beta)
    return float(vals[0]) if xs.ndim == 0 else vals


def ar_at(state: ParameterState, spec: ModelSpec, i: int, x):
    """Lag-``i`` coefficient ``a_i(x)`` (``i`` is 1-based)."""
    if not 1 <= i <= spec.p:
        raise IndexError(f"lag index {i} outside 1..{spec.p}")
    xs = _check_x(x)
    M = mixture_weights(state.delta)
    vals = M[i - 1] * (basis_matrix(spec.basis_ar, xs.reshape(-1)) @ state.theta[i - 1])
    return float(vals[0]) if xs.ndim == 0 else vals


def lambda_at(state: ParameterState, spec: ModelSpec, series: CountSeries, t: int) -> float:
    """Conditional mean at 1-based time ``t``; needs ``p`` observed lags."""
    T, p = series.T, spec.p
    if not p + 1 <= t <= T:
        raise ValueError(f"t={t} outside {p + 1}..{T}: lambda needs {p} lagged observations")
    x = t / T
    lam = mu_at(state, spec, x)
    for i in range(1, p + 1):
        lam += ar_at(state, spec, i, x) * series.counts[t - i - 1]
    return lam


def log_prior(state: ParameterState, spec: ModelSpec) -> float:
    """Normal priors on beta and delta, uniform on the theta cube.

    Returns ``-inf`` when any theta entry leaves [0, 1].
    """
    if not state.in_support():
        return -np.inf
    b, d = state.beta, state.delta
    return float(
        -0.5 * np.dot(b, b) / spec.c2 - 0.5 * b.size * (_LOG_2PI + np.log(spec.c2))
        - 0.5 * np.dot(d, d) / spec.c1 - 0.5 * d.size * (_LOG_2PI + np.log(spec.c1))
    )


def to_unconstrained(state: ParameterState) -> np.ndarray:
    """Flatten to ``[beta, logit(theta) row-major, delta]``.

    Theta entries at the boundary are clamped to ``[THETA_EPS, 1 - THETA_EPS]``.
    """
    theta = np.clip(state.theta, THETA_EPS, 1.0 - THETA_EPS)
    return np.concatenate([state.beta, logit(theta).reshape(-1), state.delta])


def from_unconstrained(u, spec: ModelSpec) -> ParameterState:
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.dim,):
        raise ValueError(f"expected vector of length {spec.dim}, got shape {u.shape}")
    k1, k2, p = spec.k1, spec.k2, spec.p
    z = u[k1:k1 + p * k2].reshape(p, k2)
    return ParameterState(u[:k1].copy(), expit(z), u[k1 + p * k2:].copy())


class LogPosterior:
    """Log-posterior on the unconstrained scale for a fixed series.

    Design matrices are built once, so repeated evaluation inside a sampler
    costs a few small matrix products.

    Args:
        spec: Model specification.
        series: Observed counts; must be longer than ``spec.p``.
        temperature: Multiplier on the log-likelihood. ``0`` switches the
            likelihood off, which leaves the prior (used for sampler
            validation).
    """

    def __init__(self, spec: ModelSpec, series: CountSeries, temperature: float = 1.0):
        T, p = series.T, spec.p
        if T <= p:
            raise ValueError(f"series of length {T} too short for lag order p={p}")
        self.spec = spec
        self.temperature = float(temperature)
        X = series.values
        x = np.arange(p + 1, T + 1) / T
        self.Bmu = basis_matrix(spec.basis_mu, x)
        self.Bar = basis_matrix(spec.basis_ar, x)
        self.y = X[p:]
        self.lags = np.column_stack([X[p - i:T - i] for i in range(1, p + 1)]) if p else np.zeros((T, 0))
        self._log_fact = float(gammaln(self.y + 1.0).sum())
        self._k1, self._k2 = spec.k1, spec.k2

    def _split(self, u):
        k1, k2, p = self._k1, self._k2, self.spec.p
        return u[:k1], u[k1:k1 + p * k2].reshape(p, k2), u[k1 + p * k2:]

    def lam(self, beta, theta, M) -> np.ndarray:
        lam = self.Bmu @ np.exp(beta)
        if self.spec.p:
            lam = lam + ((self.Bar @ theta.T) * self.lags) @ M
        return lam

    def log_likelihood(self, beta, theta, M) -> float:
        lam = self.lam(beta, theta, M)
        if lam.min() <= 0.0:
            return -np.inf  # exp(beta) underflowed
        return float(self.y @ np.log(lam) - lam.sum() - self._log_fact)

    def log_prior(self, beta, delta) -> float:
        s = self.spec
        return float(
            -0.5 * np.dot(beta, beta) / s.c2 - 0.5 * beta.size * (_LOG_2PI + np.log(s.c2))
            - 0.5 * np.dot(delta, delta) / s.c1 - 0.5 * delta.size * (_LOG_2PI + np.log(s.c1))
        )

    @staticmethod
    def log_jacobian(z) -> float:
        # log sigma(z) + log(1 - sigma(z))
        return float(-np.sum(np.logaddexp(0.0, -z) + np.logaddexp(0.0, z)))

    def in_support(self, theta, M) -> bool:
        if not self.spec.p:
            return True
        return float(M @ theta.max(axis=1)) < 1.0 - STABILITY_MARGIN

    def __call__(self, u) -> float:
        beta, z, delta = self._split(np.asarray(u, dtype=float))
        theta = expit(z)
        M = _softmax(delta)[1:]
        if not self.in_support(theta, M):
            return -np.inf
        out = self.log_prior(beta, delta) + self.log_jacobian(z)
        if self.temperature != 0.0:
            out += self.temperature * self.log_likelihood(beta, theta, M)
        return out

    def value_and_grad(self, u) -> tuple[float, np.ndarray]:
        u = np.asarray(u, dtype=float)
        beta, z, delta = self._split(u)
        s, p = self.spec, self.spec.p
        theta = expit(z)
        soft = _softmax(delta)
        M = soft[1:]
        eb = np.exp(beta)
        if not self.in_support(theta, M):
            return -np.inf, np.zeros_like(u)

        value = self.log_prior(beta, delta) + self.log_jacobian(z)
        g_beta = -beta / s.c2
        g_z = 1.0 - 2.0 * theta
        g_delta = -delta / s.c1

        if self.temperature != 0.0:
            tau = self.temperature
            ar_curves = self.Bar @ theta.T            # (n, p): sum_j theta_ij B_j(x_t)
            A = ar_curves * self.lags                 # d lambda / d M_i
            lam = self.Bmu @ eb + A @ M
            if lam.min() <= 0.0:
                return -np.inf, np.zeros_like(u)
            value += tau * float(self.y @ np.log(lam) - lam.sum() - self._log_fact)
            r = self.y / lam - 1.0
            g_beta = g_beta + tau * eb * (self.Bmu.T @ r)
            if p:
                # d/d theta_ij = M_i sum_t r_t B_j(x_t) X_{t-i}
                g_theta = M[:, None] * ((self.lags * r[:, None]).T @ self.Bar)
                g_z = g_z + tau * g_theta * theta * (1.0 - theta)
                gM = A.T @ r
                w = gM * M
                g_soft = np.concatenate([[0.0], w]) - soft * w.sum()
                g_delta = g_delta + tau * g_soft

        return value, np.concatenate([g_beta, g_z.reshape(-1), g_delta])

    def grad(self, u) -> np.ndarray:
        return self.value_and_grad(u)[1]


def log_likelihood(state: ParameterState, spec: ModelSpec, series: CountSeries) -> float:
    """Conditional log-likelihood over ``t = p+1..T``."""
    _check_state(state, spec)
    lp = LogPosterior(spec, series)
    M = mixture_weights(state.delta) if spec.p else np.zeros(0)
    return lp.log_likelihood(state.beta, state.theta, M)


def log_posterior_unconstrained(u, spec: ModelSpec, series: CountSeries,
                                temperature: float = 1.0) -> float:
    """Log-likelihood + log-prior + logistic Jacobian at unconstrained ``u``."""
    return LogPosterior(spec, series, temperature)(u)


def grad_log_posterior_unconstrained(u, spec: ModelSpec, series: CountSeries,
                                     temperature: float = 1.0) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (spec.dim,):
        raise ValueError(f"expected vector of length {spec.dim}, got shape {u.shape}")
    return LogPosterior(spec, series, temperature).grad(u)


def _check_state(state: ParameterState, spec: ModelSpec):
    theta_ok = state.theta.shape == (spec.p, spec.k2) or (spec.p == 0 and state.theta.size == 0)
    if state.beta.shape != (spec.k1,) or not theta_ok or state.delta.shape != (spec.p + 1,):
        raise ValueError("parameter state shapes do not match the model spec")
