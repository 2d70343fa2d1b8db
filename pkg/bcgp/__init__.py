"""Box-Cox warped Gaussian process toolkit."""

__version__ = "0.1.0"
