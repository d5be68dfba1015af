"""Feature graphs for interpretable unsupervised random forests."""

__version__ = "0.1.0"
