"""Lipschitz isotonic and unimodal regression on paths and trees."""

from .act import Act
from .pwl import AffineMap2, Point2, PwlMonotone

__all__ = ["Act", "AffineMap2", "Point2", "PwlMonotone"]
__version__ = "0.1.0"
