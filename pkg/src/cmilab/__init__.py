"""Conditional mutual information of concrete learners, measured exactly or by Monte Carlo."""

__version__ = "0.1.0"
