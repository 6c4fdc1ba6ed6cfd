"""Stochastic characteristics - SPDEs with transport noise solved along stochastic flows."""

__version__ = "0.1.0"
