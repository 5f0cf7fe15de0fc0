"""Sequential experimental design over reduced-rank spectral Gaussian processes."""

__version__ = "0.1.0"
