"""regflow - regularized map equation community detection."""

__version__ = "0.1.0"
