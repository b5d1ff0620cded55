"""Time-varying Bayesian autoregressive Poisson models for daily counts."""

__version__ = "0.1.0"
