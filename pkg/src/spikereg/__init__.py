"""Numerical laboratory for minimum-norm least squares under spiked
covariance in the regime where dimension dwarfs sample size."""

__version__ = "0.1.0"
