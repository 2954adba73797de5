"""Collision-counting LSH with a learned starting radius."""

from . import data, errors, lsh, metrics, radius, regress

__version__ = "0.1.0"

__all__ = ["data", "errors", "lsh", "metrics", "radius", "regress", "__version__"]
