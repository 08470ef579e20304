"""Session-based next-item recommendation via two-view graph co-training."""

__version__ = "0.1.0"
