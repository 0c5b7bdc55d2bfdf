"""Variance-stabilized empirical Bayes prediction of batting averages."""

__version__ = "0.1.0"
