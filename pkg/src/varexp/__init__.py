"""Variable-exponent function spaces, rigidity estimators and linearization experiments."""

__version__ = "0.1.0"
