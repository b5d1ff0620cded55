"""Blockwise adaptive Metropolis-Hastings for the time-varying Poisson AR model.

One sweep updates, in order, the ``beta`` block, each row of ``theta`` (on
the logit scale) and the ``delta`` block, with a Gaussian random-walk or a
Langevin (MALA) proposal. Each block has its own scalar step size, tuned by
a Robbins-Monro rule during burn-in and frozen after it so the retained
draws come from a fixed Markov kernel.

Block moves alone mix poorly. Near each basis function the data pin down
``mu + a_i * X_{t-i}`` far better than either term, so trend and lag
coefficients sit on a narrow curved ridge. Every sweep therefore also makes,
for each ``theta_ij``, a coupled move that shifts ``logit(theta_ij)`` and
solves for the nearest trend coefficient so the local level is preserved,
and a level move that raises every ``a_i`` while lowering the trend by the
matching amount.

Two more degeneracies need their own moves. ``a_i = M_i * theta_i`` is
unchanged when ``M_i`` grows and ``theta_i`` shrinks in proportion, so a
scale move shifts ``delta`` and rescales ``theta`` exactly along that
direction. And where ``exp(beta_j)`` is negligible the likelihood is flat in
``beta_j``, which then drifts through its wide prior; fixed steps of
``sqrt(c2) / 2`` per coordinate let the chain cross that plateau.
"""
from __future__ import annotations

import datetime as dt
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
from scipy.special import expit

from .model import (
    STABILITY_MARGIN,
    CountSeries,
    LogPosterior,
    ModelSpec,
    ParameterState,
    to_unconstrained,
)
from .spline_basis import basis_matrix

__all__ = [
    "SamplerConfig",
    "PosteriorChain",
    "NumericalFailure",
    "run_chain",
    "run_chains",
    "adapt_step",
    "effective_sample_size",
    "initial_state",
]

log = logging.getLogger(__name__)

PROPOSALS = ("random-walk", "gradient-informed")


class NumericalFailure(RuntimeError):
    """The log-posterior could not be made finite."""


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC run settings.

    Defaults follow the 10,000 burn-in / 20,000 retained iterations used for
    the published trend figures.

    Attributes:
        burn_in: Adaptation iterations, discarded.
        retained: Iterations after burn-in; every ``thin``-th is stored.
        thin: Thinning interval.
        seed: Seed for the chain's private generator.
        proposal: ``"random-walk"`` or ``"gradient-informed"`` (MALA).
        initial_step: Starting step size, either one value for all blocks or
            a mapping from block name (``beta``, ``theta_1``, ..., ``delta``).
        target_accept: Acceptance rate the burn-in adaptation aims for.
        adapt_window: Iterations per acceptance-rate window during burn-in.
        temperature: Multiplier on the log-likelihood; ``0`` samples the
            prior. Only meant for validating the sampler.
    """

    burn_in: int = 10_000
    retained: int = 20_000
    thin: int = 1
    seed: int = 0
    proposal: str = "random-walk"
    initial_step: Union[float, Mapping[str, float]] = 0.1
    target_accept: float = 0.44
    adapt_window: int = 25
    temperature: float = 1.0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.retained < 1:
            raise ValueError("retained must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.proposal not in PROPOSALS:
            raise ValueError(f"proposal must be one of {PROPOSALS}, got {self.proposal!r}")
        steps = self.initial_step.values() if isinstance(self.initial_step, Mapping) else [self.initial_step]
        if any(not s > 0 for s in steps):
            raise ValueError("initial_step must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")

    @property
    def n_draws(self) -> int:
        return self.retained // self.thin

    def step_for(self, block: str) -> float:
        if isinstance(self.initial_step, Mapping):
            return float(self.initial_step.get(block, 0.1))
        return float(self.initial_step)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.initial_step, Mapping):
            d["initial_step"] = dict(self.initial_step)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(**d)


@dataclass(eq=False)
class PosteriorChain:
    """Retained draws of one or more chains, stored as stacked arrays.

    ``beta`` has shape ``(n, K1)``, ``theta`` ``(n, p, K2)`` and ``delta``
    ``(n, p + 1)``. ``start_date`` and ``n_obs`` describe the fitted series
    so curves on [0, 1] can be mapped back to calendar dates.
    """

    beta: np.ndarray
    theta: np.ndarray
    delta: np.ndarray
    model_spec: ModelSpec
    sampler_config: SamplerConfig
    acceptance_rates: dict[str, float]
    log_posterior_trace: np.ndarray
    step_sizes: dict[str, float] = field(default_factory=dict)
    start_date: Optional[dt.date] = None
    n_obs: Optional[int] = None
    label: str = ""

    def __len__(self) -> int:
        return self.beta.shape[0]

    def draw(self, k: int) -> ParameterState:
        return ParameterState(self.beta[k], self.theta[k], self.delta[k])

    @property
    def draws(self) -> list[ParameterState]:
        return [self.draw(k) for k in range(len(self))]

    @property
    def weights(self) -> np.ndarray:
        """Softmax weights ``M_1..M_p`` per draw, shape ``(n, p)``."""
        e = np.exp(self.delta - self.delta.max(axis=1, keepdims=True))
        return e[:, 1:] / e.sum(axis=1, keepdims=True)

    def mu_curves(self, grid) -> np.ndarray:
        """``mu`` of every draw on ``grid``; shape ``(n, len(grid))``."""
        return np.exp(self.beta) @ basis_matrix(self.model_spec.basis_mu, grid).T

    def ar_curves(self, i: int, grid) -> np.ndarray:
        """``a_i`` (1-based lag) of every draw on ``grid``."""
        if not 1 <= i <= self.model_spec.p:
            raise IndexError(f"lag index {i} outside 1..{self.model_spec.p}")
        B = basis_matrix(self.model_spec.basis_ar, grid)
        return self.weights[:, i - 1, None] * (self.theta[:, i - 1, :] @ B.T)

    @classmethod
    def concatenate(cls, chains: list["PosteriorChain"]) -> "PosteriorChain":
        """Pool draws from independent chains, in the given order."""
        first = chains[0]
        rates = {k: float(np.mean([c.acceptance_rates[k] for c in chains])) for k in first.acceptance_rates}
        return cls(
            np.concatenate([c.beta for c in chains]),
            np.concatenate([c.theta for c in chains]),
            np.concatenate([c.delta for c in chains]),
            first.model_spec,
            first.sampler_config,
            rates,
            np.concatenate([c.log_posterior_trace for c in chains]),
            dict(first.step_sizes),
            first.start_date,
            first.n_obs,
            first.label,
        )


def adapt_step(current_step: float, accept_rate_window: float, target: float, k: int) -> float:
    """Robbins-Monro update of a proposal scale after the ``k``-th window.

    ``log(step) += k**-0.6 * (rate - target)``; ``k`` starts at 1.
    """
    if k < 1:
        raise ValueError("window counter k starts at 1")
    return float(current_step * np.exp(k ** -0.6 * (accept_rate_window - target)))


def effective_sample_size(trace) -> float:
    """Effective sample size by Geyer's initial positive sequence.

    Autocorrelations are summed in adjacent pairs until the first pair sum
    that is not positive. A constant trace returns its length.
    """
    x = np.asarray(trace, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("effective sample size needs at least 10 values")
    x = x - x.mean()
    if not np.any(x):
        return float(n)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n]
    rho = acov / acov[0]
    m = (n - 1) // 2
    pairs = rho[0:2 * m:2] + rho[1:2 * m + 1:2]
    nonpos = np.nonzero(pairs <= 0)[0]
    stop = nonpos[0] if nonpos.size else pairs.size
    tau = -1.0 + 2.0 * pairs[:stop].sum()
    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def initial_state(series: CountSeries, spec: ModelSpec) -> ParameterState:
    """Scale-aware starting point: theta = 0.5, delta = 0, and beta set so
    the implied stationary mean matches the sample mean."""
    p = spec.p
    ar_total = 0.5 * p / (p + 1)
    level = max(float(np.mean(series.counts)), 0.1) * (1.0 - ar_total)
    return ParameterState(
        np.full(spec.k1, np.log(level)),
        np.full((p, spec.k2), 0.5),
        np.zeros(p + 1),
    )


def _initialise(lp: LogPosterior, series, spec, rng, initial):
    start = initial if initial is not None else initial_state(series, spec)
    u = to_unconstrained(start)
    value = lp(u)
    tries = 0
    while not np.isfinite(value):
        tries += 1
        if tries > 100:
            raise NumericalFailure("could not find a starting point with finite log-posterior")
        log.warning("non-finite log-posterior at start; re-initialising (attempt %d)", tries)
        u = to_unconstrained(ParameterState(
            rng.normal(0, 1, spec.k1), np.full((spec.p, spec.k2), 0.5), rng.normal(0, 1, spec.p + 1)
        ))
        value = lp(u)
    return u, value


def _logistic_logpdf(z):
    return -np.logaddexp(0.0, -z) - np.logaddexp(0.0, z)


class _Cache:
    """Current state plus the pieces of the log-posterior moves reuse.

    ``m`` is the trend at each conditioning time, ``R[:, i]`` the lag-``i``
    curve times ``X_{t-i}`` (before weighting by ``M_i``). A proposal only
    recomputes the pieces it changes.
    """

    def __init__(self, lp: LogPosterior, u: np.ndarray):
        spec = lp.spec
        self.lp = lp
        self.k1, self.k2, self.p = spec.k1, spec.k2, spec.p
        self.c1, self.c2 = spec.c1, spec.c2
        self.tau = lp.temperature
        self.const = (-self.tau * lp._log_fact
                      - 0.5 * self.k1 * np.log(2 * np.pi * self.c2)
                      - 0.5 * (self.p + 1) * np.log(2 * np.pi * self.c1))
        self.set(u)

    def set(self, u: np.ndarray):
        k1, k2, p = self.k1, self.k2, self.p
        lp = self.lp
        self.u = u.copy()
        beta, z, delta = u[:k1], u[k1:k1 + p * k2].reshape(p, k2), u[k1 + p * k2:]
        self.eb = np.exp(beta)
        self.m = lp.Bmu @ self.eb
        self.theta = expit(z)
        self.thmax = self.theta.max(axis=1) if p else np.zeros(0)
        self.R = (lp.Bar @ self.theta.T) * lp.lags
        self.M = _softmax_tail(delta)
        self.jac = _logistic_logpdf(z).sum(axis=1)
        self.pb = -0.5 * float(beta @ beta) / self.c2
        self.pd = -0.5 * float(delta @ delta) / self.c1
        self.ll = self._ll(self.m + self.R @ self.M)
        self.value = self.const + self.ll + self.pb + self.pd + float(self.jac.sum())

    def _ll(self, lam):
        if self.tau == 0.0:
            return 0.0
        if lam.min() <= 0.0:
            return -np.inf
        return self.tau * float(self.lp.y @ np.log(lam) - lam.sum())

    def propose(self, beta=None, row=None, delta=None):
        """Log-posterior after replacing some components.

        ``row`` is ``(i, z_i)`` for a new logit-theta row ``i`` (0-based).
        Returns ``(value, patch)``; ``patch`` is ``None`` outside the support.
        """
        lp = self.lp
        k1, k2, p = self.k1, self.k2, self.p
        value = self.const
        patch = {}
        if beta is not None:
            eb = np.exp(beta)
            m = lp.Bmu @ eb
            pb = -0.5 * float(beta @ beta) / self.c2
            patch.update(eb=eb, m=m, pb=pb)
        else:
            m, pb = self.m, self.pb
        R, thmax, jac = self.R, self.thmax, self.jac
        if row is not None:
            i, zi = row
            th = expit(zi)
            R = R.copy()
            R[:, i] = (lp.Bar @ th) * lp.lags[:, i]
            thmax = thmax.copy()
            thmax[i] = th.max()
            jac = jac.copy()
            jac[i] = float(_logistic_logpdf(zi).sum())
            patch.update(row=(i, zi, th), R=R, thmax=thmax, jac=jac)
        if delta is not None:
            M = _softmax_tail(delta)
            pd = -0.5 * float(delta @ delta) / self.c1
            patch.update(M=M, pd=pd, delta=delta)
        else:
            M, pd = self.M, self.pd
        if p and float(M @ thmax) >= 1.0 - STABILITY_MARGIN:
            return -np.inf, None
        ll = self._ll(m + R @ M)
        patch["ll"] = ll
        if beta is not None:
            patch["beta"] = beta
        value += ll + pb + pd + float(jac.sum())
        patch["value"] = value
        return value, patch

    def commit(self, patch):
        k1, k2, p = self.k1, self.k2, self.p
        if "beta" in patch:
            self.u[:k1] = patch["beta"]
            self.eb, self.m, self.pb = patch["eb"], patch["m"], patch["pb"]
        if "row" in patch:
            i, zi, th = patch["row"]
            self.u[k1 + i * k2:k1 + (i + 1) * k2] = zi
            self.theta = self.theta.copy()
            self.theta[i] = th
            self.R, self.thmax, self.jac = patch["R"], patch["thmax"], patch["jac"]
        if "delta" in patch:
            self.u[k1 + p * k2:] = patch["delta"]
            self.M, self.pd = patch["M"], patch["pd"]
        self.ll = patch["ll"]
        self.value = patch["value"]


def _softmax_tail(delta):
    e = np.exp(delta - delta.max())
    return e[1:] / e.sum()


def _greville(basis) -> np.ndarray:
    d, K = basis.degree, basis.num_basis
    k = np.asarray(basis.knots)
    if d == 0:
        return 0.5 * (k[:-1] + k[1:])
    return np.array([k[j + 1:j + d + 1].mean() for j in range(K)])


def _ridge_pairs(lp: LogPosterior):
    """For each lag coefficient ``theta_ij``: the trend coefficient it trades
    off against and the typical lag count near that basis function."""
    spec = lp.spec
    g_mu, g_ar = _greville(spec.basis_mu), _greville(spec.basis_ar)
    partner = np.array([int(np.argmin(np.abs(g_mu - g))) for g in g_ar])
    w = lp.Bar.sum(axis=0)
    lag_level = np.where(w > 0, (lp.Bar.T @ lp.lags).T / np.where(w > 0, w, 1.0), 0.0)  # (p, K2)
    return partner, np.maximum(lag_level, 1e-3)




def run_chain(series: CountSeries, spec: ModelSpec, config: SamplerConfig = SamplerConfig(),
              initial: Optional[ParameterState] = None) -> PosteriorChain:
    """Sample the posterior of ``(beta, theta, delta)`` given ``series``.

    Each sweep makes one proposal per block (``beta``, every ``theta`` row,
    ``delta``), then the coupled ridge, level, wide-trend and scale moves
    described in the module docstring. Step sizes adapt during burn-in only.

    The chain is a pure function of its arguments: the same inputs, including
    ``config.seed``, give bitwise-identical draws.

    Raises:
        ValueError: if the series is not longer than ``spec.p``.
        NumericalFailure: if no starting point has a finite log-posterior.
    """
    lp = LogPosterior(spec, series, temperature=config.temperature)
    rng = np.random.default_rng(config.seed)
    k1, k2, p = spec.k1, spec.k2, spec.p
    gradient = config.proposal == "gradient-informed"

    u0, _ = _initialise(lp, series, spec, rng, initial)
    cache = _Cache(lp, u0)

    blocks = spec.blocks()
    names = list(blocks)
    slices = list(blocks.values())
    kinds = [_block_kind(n) for n in names]
    steps = np.array([config.step_for(n) for n in names])
    if p:
        partner, lag_level = _ridge_pairs(lp)
    ridge_steps = np.full((p, k2), 0.5)
    level_w = _level_shift_weights(lp) if p else None
    level_steps = np.full(p, 0.05)
    scale_step = np.array([1.0])
    window_level = np.zeros(p)
    window_scale = 0
    post_level = post_scale = post_wide = 0
    wide = 0.5 * np.sqrt(spec.c2)

    n_iter = config.burn_in + config.retained
    n_keep = config.n_draws
    kept_u = np.empty((n_keep, spec.dim))
    trace = np.empty(n_keep)
    window_acc = np.zeros(len(names))
    window_ridge = np.zeros((p, k2))
    post_acc = np.zeros(len(names))
    post_ridge = 0
    n_window = 0
    k_adapt = 0
    keep = 0

    for it in range(n_iter):
        burning = it < config.burn_in
        for b in range(len(names)):
            sl, h = slices[b], steps[b]
            noise = rng.standard_normal(sl.stop - sl.start)
            log_u = np.log(rng.random())
            u = cache.u
            if gradient:
                accepted = _mala_step(lp, cache, sl, h, noise, log_u)
            else:
                new_value, patch = _propose_block(cache, kinds[b], u[sl] + h * noise)
                accepted = patch is not None and log_u < new_value - cache.value
                if accepted:
                    cache.commit(patch)
            if burning:
                window_acc[b] += accepted
            else:
                post_acc[b] += accepted

        for i in range(p):
            for j in range(k2):
                accepted = _ridge_move(cache, rng, i, j, partner[j], lag_level[i, j], ridge_steps[i, j])
                if burning:
                    window_ridge[i, j] += accepted
                else:
                    post_ridge += accepted
        for i in range(p):
            accepted = _level_move(cache, rng, i, level_w[i], level_steps[i])
            if burning:
                window_level[i] += accepted
            else:
                post_level += accepted
        # fixed wide steps reach trend coefficients stranded where exp(beta_j) ~ 0
        for j in range(k1):
            beta = cache.u[:k1].copy()
            beta[j] += wide * rng.standard_normal()
            log_u = np.log(rng.random())
            new_value, patch = cache.propose(beta=beta)
            accepted = patch is not None and log_u < new_value - cache.value
            if accepted:
                cache.commit(patch)
            if not burning:
                post_wide += accepted
        if p:
            accepted = _scale_move(cache, rng, scale_step[0])
            if burning:
                window_scale += accepted
            else:
                post_scale += accepted

        if burning:
            n_window += 1
            if n_window == config.adapt_window:
                k_adapt += 1
                for b in range(len(names)):
                    steps[b] = adapt_step(steps[b], window_acc[b] / n_window, config.target_accept, k_adapt)
                ridge_steps *= np.exp(k_adapt ** -0.6 * (window_ridge / n_window - config.target_accept))
                level_steps *= np.exp(k_adapt ** -0.6 * (window_level / n_window - config.target_accept))
                scale_step *= np.exp(k_adapt ** -0.6 * (window_scale / n_window - config.target_accept))
                window_level[:] = 0
                window_scale = 0
                window_acc[:] = 0
                window_ridge[:] = 0
                n_window = 0
        else:
            j = it - config.burn_in + 1
            if j % config.thin == 0 and keep < n_keep:
                kept_u[keep] = cache.u
                trace[keep] = cache.value
                keep += 1
        if it % 100 == 99:
            # rebuild from scratch so incremental round-off cannot accumulate
            cache.set(cache.u)

    rates = {n: float(post_acc[b] / config.retained) for b, n in enumerate(names)}
    step_sizes = {n: float(steps[b]) for b, n in enumerate(names)}
    if p:
        rates["ridge"] = float(post_ridge / (config.retained * p * k2))
        step_sizes["ridge_mean"] = float(ridge_steps.mean())
        rates["level"] = float(post_level / (config.retained * p))
        rates["scale"] = float(post_scale / config.retained)
        step_sizes["scale"] = float(scale_step[0])
    rates["beta_wide"] = float(post_wide / (config.retained * k1))
    return PosteriorChain(
        beta=kept_u[:, :k1].copy(),
        theta=expit(kept_u[:, k1:k1 + p * k2]).reshape(n_keep, p, k2),
        delta=kept_u[:, k1 + p * k2:].copy(),
        model_spec=spec,
        sampler_config=config,
        acceptance_rates=rates,
        log_posterior_trace=trace,
        step_sizes=step_sizes,
        start_date=series.start_date,
        n_obs=series.T,
        label=series.label,
    )


def _level_shift_weights(lp: LogPosterior) -> np.ndarray:
    """``(p, K1)``: typical ``X_{t-i}`` under each trend basis function."""
    w = lp.Bmu.sum(axis=0)
    lv = (lp.Bmu.T @ lp.lags).T / np.where(w > 0, w, 1.0)
    return np.maximum(lv, 1e-3)


def _level_move(cache: _Cache, rng, i, weights, step) -> bool:
    """Raise ``a_i`` by ``eta`` everywhere and lower the trend by ``eta``
    times the local lag level, keeping ``lambda`` roughly fixed.

    In ``(beta, theta)`` coordinates the map is a translation of
    ``theta_i`` and ``exp(beta) -> exp(beta) - eta * w``; its inverse is the
    same map with ``-eta``. Log-Jacobian: ``sum(beta - beta')`` plus the
    change of logit coordinates.
    """
    k1, k2 = cache.k1, cache.k2
    eta = step * rng.standard_normal()
    log_u = np.log(rng.random())
    th = cache.theta[i] + eta / cache.M[i]
    if th.min() <= 0.0 or th.max() >= 1.0:
        return False
    eb = cache.eb - eta * weights
    if eb.min() <= 0.0:
        return False
    u = cache.u
    beta = np.log(eb)
    zi = np.log(th) - np.log1p(-th)
    old_z = u[k1 + i * k2:k1 + (i + 1) * k2]
    new_value, patch = cache.propose(beta=beta, row=(i, zi))
    if patch is None:
        return False
    log_jac = float(np.sum(u[:k1] - beta)) + float(_logistic_logpdf(old_z).sum() - _logistic_logpdf(zi).sum())
    if not log_u < new_value - cache.value + log_jac:
        return False
    cache.commit(patch)
    return True


def _scale_move(cache: _Cache, rng, step) -> bool:
    """Move ``delta`` and rescale each ``theta`` row by ``M_i / M_i'`` so
    every ``a_i`` is unchanged. Only the ``delta`` prior and the Jacobian
    ``(M_i / M_i')**K2`` enter the acceptance ratio."""
    k1, k2, p = cache.k1, cache.k2, cache.p
    u = cache.u
    delta = u[k1 + p * k2:]
    new_delta = delta + step * rng.standard_normal(p + 1)
    log_u = np.log(rng.random())
    new_m = _softmax_tail(new_delta)
    if new_m.min() <= 0.0:
        return False
    c = cache.M / new_m
    th = cache.theta * c[:, None]
    if th.max() >= 1.0 - 1e-12:
        return False
    log_r = -0.5 * (new_delta @ new_delta - delta @ delta) / cache.c1 + k2 * float(np.log(c).sum())
    if not log_u < log_r:
        return False
    new = u.copy()
    new[k1:k1 + p * k2] = (np.log(th) - np.log1p(-th)).ravel()
    new[k1 + p * k2:] = new_delta
    cache.set(new)
    return True


def _block_kind(name: str):
    if name.startswith("theta_"):
        return int(name.split("_")[1]) - 1
    return name


def _propose_block(cache: _Cache, kind, values):
    if kind == "beta":
        return cache.propose(beta=values)
    if kind == "delta":
        return cache.propose(delta=values)
    return cache.propose(row=(kind, values))


def _mala_step(lp: LogPosterior, cache: _Cache, sl: slice, h: float, noise, log_u) -> bool:
    u = cache.u
    value, grad = lp.value_and_grad(u)
    prop = u.copy()
    prop[sl] = u[sl] + 0.5 * h * h * grad[sl] + h * noise
    new_value, new_grad = lp.value_and_grad(prop)
    if not np.isfinite(new_value):
        return False
    back = u[sl] - prop[sl] - 0.5 * h * h * new_grad[sl]
    if log_u < new_value - value - back @ back / (2 * h * h) + noise @ noise / 2:
        cache.set(prop)
        return True
    return False


def _ridge_move(cache: _Cache, rng, i, j, jj, level, step) -> bool:
    """Shift ``logit(theta_ij)`` and move ``beta_jj`` so that
    ``exp(beta_jj) + level * M_i * theta_ij`` stays fixed.

    For a given shift the map is undone by the opposite shift, so the
    acceptance ratio only needs the Jacobian ``exp(beta_old - beta_new)``.
    """
    k1, k2 = cache.k1, cache.k2
    eps = step * rng.standard_normal()
    log_u = np.log(rng.random())
    u = cache.u
    zi = u[k1 + i * k2:k1 + (i + 1) * k2].copy()
    zi[j] += eps
    e_new = cache.eb[jj] + level * cache.M[i] * (cache.theta[i, j] - expit(zi[j]))
    if e_new <= 0:
        return False
    beta = u[:k1].copy()
    beta[jj] = np.log(e_new)
    new_value, patch = cache.propose(beta=beta, row=(i, zi))
    if patch is None or not log_u < new_value - cache.value + u[jj] - beta[jj]:
        return False
    cache.commit(patch)
    return True


def _run_one(args):
    return run_chain(*args)


def run_chains(series: CountSeries, spec: ModelSpec, config: SamplerConfig = SamplerConfig(),
               n_chains: int = 1, max_workers: Optional[int] = None) -> list[PosteriorChain]:
    """Independent chains with seeds spawned from ``config.seed``.

    Chain ``k`` always receives the ``k``-th spawned seed, so results do
    not depend on worker scheduling. A single chain uses ``config.seed``
    unchanged.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if n_chains == 1:
        return [run_chain(series, spec, config)]
    seeds = [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(config.seed).spawn(n_chains)]
    jobs = [(series, spec, _with_seed(config, s)) for s in seeds]
    if max_workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_run_one, jobs))


def _with_seed(config: SamplerConfig, seed: int) -> SamplerConfig:
    d = config.to_dict()
    d["seed"] = seed
    return SamplerConfig.from_dict(d)
