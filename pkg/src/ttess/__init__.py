"""Gibbsian T-tessellations: approximation, simulation, inference and testing."""

from .geometry import LineGeom, Point, PolygonGeom, SegmentGeom, rectangle_polygon, UNIT_SQUARE
from .tessellation import Flip, Merge, Split, TTess, InvalidUpdate, validate

__all__ = [
    "LineGeom",
    "Point",
    "PolygonGeom",
    "SegmentGeom",
    "rectangle_polygon",
    "UNIT_SQUARE",
    "Flip",
    "Merge",
    "Split",
    "TTess",
    "InvalidUpdate",
    "validate",
]

__version__ = "0.1.0"
