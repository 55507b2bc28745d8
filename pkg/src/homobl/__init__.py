"""homobl: effective coefficients and boundary layers for oscillating media."""

__version__ = "0.1.0"
