"""Numerical experiments around stochastic localization and log-concave isoperimetry."""

__version__ = "0.1.0"
