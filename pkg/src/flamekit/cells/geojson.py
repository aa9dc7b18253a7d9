"""GeoJSON rendering of cell sets for map viewers."""

from __future__ import annotations

from typing import Iterable

from flamekit.cells.core import CellId


def cell_to_feature(cell: CellId) -> dict:
    # corners as straight segments; fine at viewer scale for small cells
    ring = [[v.lng, v.lat] for v in cell.vertices()]
    ring.append(ring[0])
    return {
        "type": "Feature",
        "properties": {"token": cell.token(), "level": cell.level()},
        "geometry": {"type": "Polygon", "coordinates": [ring]},
    }


def cells_to_geojson(cells: Iterable[CellId]) -> dict:
    return {
        "type": "FeatureCollection",
        "features": [cell_to_feature(c) for c in cells],
    }
