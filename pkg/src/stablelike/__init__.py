"""Monte Carlo engine for stable-like pure-jump processes."""

__version__ = "0.1.0"
