"""Development-sample size calculations for binary-outcome risk models."""

__version__ = "0.1.0"
