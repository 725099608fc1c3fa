"""Turn Bayesian allocation algorithms into incentive-compatible mechanisms."""

__version__ = "0.1.0"
