"""Hierarchical spherical cell indexing.

Cells partition the sphere by projecting a cube onto it and recursively
splitting each face into four children along a Hilbert curve, giving 64-bit
ids whose bit prefixes encode containment. This package provides the id
arithmetic, cap and polygon regions, budgeted region coverings, and GeoJSON
rendering. The hot kernels live in a compiled extension with a pure-Python
twin selected at import time.
"""

from flamekit.cells.core import EARTH_RADIUS_M, MAX_LEVEL, CellId, LatLng
from flamekit.cells.covering import CoveringParams, cover, normalize_ids
from flamekit.cells.geojson import cell_to_feature, cells_to_geojson
from flamekit.cells.kernel import IMPLEMENTATION
from flamekit.cells.regions import Cap, Polygon, Region

__all__ = [
    "EARTH_RADIUS_M",
    "MAX_LEVEL",
    "CellId",
    "LatLng",
    "Cap",
    "Polygon",
    "Region",
    "CoveringParams",
    "cover",
    "normalize_ids",
    "cell_to_feature",
    "cells_to_geojson",
    "IMPLEMENTATION",
]
