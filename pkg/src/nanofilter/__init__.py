"""Natural-gradient Gaussian approximation filtering with Kalman-family baselines."""

__version__ = "0.1.0"
