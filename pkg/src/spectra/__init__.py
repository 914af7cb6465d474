"""Spectral analysis of spiked general sample covariance matrices."""

__version__ = "0.1.0"
