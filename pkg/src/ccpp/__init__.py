"""Communication-constrained multi-agent multi-goal path planning."""
__version__ = "0.1.0"
