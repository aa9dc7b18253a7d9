"""Spherical regions (caps and geodesic polygons) for coverings.

Both region types answer the three questions the coverer asks about a cell:
may it intersect, is it fully contained, and what is a bounding cap. Caps use
exact spherical math from the kernel. Polygons project through the gnomonic
projection centered on the polygon (great circles map to straight lines, so
geodesic edges become exact planar segments) and use GEOS predicates on the
result; that is exact up to floating point for regions far smaller than a
hemisphere, which covers every supported use.
"""

from __future__ import annotations

import math
from typing import Protocol, Sequence

from shapely.geometry import Point as PlanarPoint
from shapely.geometry import Polygon as PlanarPolygon

from flamekit.cells import kernel as K
from flamekit.cells.core import EARTH_RADIUS_M, LatLng

# cells at levels this coarse span a large fraction of the sphere; polygon
# predicates answer conservatively for them instead of projecting
_PROJECTION_MIN_LEVEL = 4


def _raw_id(cell_id) -> int:
    # predicates accept a CellId or its raw 64-bit value
    return getattr(cell_id, "id", cell_id)


class Region(Protocol):
    def may_intersect_cell(self, cell_id: int) -> bool: ...

    def contains_cell(self, cell_id: int) -> bool: ...

    def cap_bound(self) -> tuple[float, float, float, float]: ...


class Cap:
    """Spherical cap: all points within an angular radius of a center."""

    __slots__ = ("axis", "height")

    def __init__(self, axis: tuple[float, float, float], height: float):
        self.axis = axis
        self.height = height

    @classmethod
    def from_center_radius(cls, center: LatLng, radius_m: float) -> Cap:
        if radius_m < 0:
            raise ValueError(f"radius must be non-negative: {radius_m}")
        angle = radius_m / EARTH_RADIUS_M
        d = math.sin(0.5 * angle)
        return cls(center.to_xyz(), 2 * d * d)

    def angle(self) -> float:
        if self.height < 0:
            return -1.0
        return 2 * math.asin(math.sqrt(0.5 * self.height))

    def contains_point(self, x: float, y: float, z: float) -> bool:
        ax, ay, az = self.axis
        return K.cap_contains_xyz(ax, ay, az, self.height, x, y, z)

    def contains_latlng(self, point: LatLng) -> bool:
        return self.contains_point(*point.to_xyz())

    def may_intersect_cell(self, cell_id: int) -> bool:
        ax, ay, az = self.axis
        return K.cap_may_intersect_cell(ax, ay, az, self.height,
                                        _raw_id(cell_id))

    def contains_cell(self, cell_id: int) -> bool:
        ax, ay, az = self.axis
        return K.cap_contains_cell(ax, ay, az, self.height, _raw_id(cell_id))

    def cap_bound(self) -> tuple[float, float, float, float]:
        ax, ay, az = self.axis
        return ax, ay, az, self.height

    def __repr__(self) -> str:
        center = LatLng.from_xyz(*self.axis)
        return f"Cap(center=({center.lat:.6f}, {center.lng:.6f}), angle={self.angle():.3e})"


def _normalize(v: tuple[float, float, float]) -> tuple[float, float, float]:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    return v[0] / n, v[1] / n, v[2] / n


class Polygon:
    """Simple geodesic polygon; the interior is on the left of the boundary
    walked in counter-clockwise order (viewed from outside the sphere)."""

    def __init__(self, vertices: Sequence[LatLng]):
        if len(vertices) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        self.vertices = list(vertices)
        xyz = [v.to_xyz() for v in self.vertices]

        cx = sum(p[0] for p in xyz)
        cy = sum(p[1] for p in xyz)
        cz = sum(p[2] for p in xyz)
        norm = math.sqrt(cx * cx + cy * cy + cz * cz)
        if norm < 1e-9:
            raise ValueError("degenerate polygon: vertices cancel out")
        self._center = (cx / norm, cy / norm, cz / norm)

        # gnomonic basis at the center: east, north
        ex, ey = -self._center[1], self._center[0]
        en = math.sqrt(ex * ex + ey * ey)
        if en < 1e-12:
            east = (1.0, 0.0, 0.0)
        else:
            east = (ex / en, ey / en, 0.0)
        north = _normalize((
            self._center[1] * east[2] - self._center[2] * east[1],
            self._center[2] * east[0] - self._center[0] * east[2],
            self._center[0] * east[1] - self._center[1] * east[0],
        ))
        self._east = east
        self._north = north

        ring = [self._project(p) for p in xyz]
        if ring is None or any(q is None for q in ring):
            raise ValueError("polygon spans more than a hemisphere")
        shape = PlanarPolygon(ring)
        if not shape.is_valid:
            raise ValueError("polygon boundary must be a simple loop")
        if not shape.exterior.is_ccw:
            raise ValueError("polygon must wind counter-clockwise")
        self._shape = shape
        # containment treats the boundary as inside with a micron-scale slack,
        # so a polygon built from a cell's own corners contains that cell;
        # intersection uses the inward twin so cells merely touching the
        # boundary (shared cell edges) do not count as overlapping
        self._outer = shape.buffer(1e-12, join_style="mitre")
        self._inner = shape.buffer(-1e-12, join_style="mitre")
        if self._inner.is_empty:
            raise ValueError("polygon is degenerately thin")

        # bounding cap: caps are geodesically convex, so covering the
        # vertices covers the edges too
        height = 0.0
        round_up = 1.0 + 1.0 / (1 << 52)
        for px, py, pz in xyz:
            dx = self._center[0] - px
            dy = self._center[1] - py
            dz = self._center[2] - pz
            height = max(height, round_up * 0.5 * (dx * dx + dy * dy + dz * dz))
        self._bound = Cap(self._center, height)

    def _project(self, p: tuple[float, float, float]) -> tuple[float, float] | None:
        w = (p[0] * self._center[0] + p[1] * self._center[1] +
             p[2] * self._center[2])
        if w < 1e-6:
            return None
        u = (p[0] * self._east[0] + p[1] * self._east[1] +
             p[2] * self._east[2]) / w
        v = (p[0] * self._north[0] + p[1] * self._north[1] +
             p[2] * self._north[2]) / w
        return u, v

    def contains_point(self, x: float, y: float, z: float) -> bool:
        q = self._project((x, y, z))
        if q is None:
            return False
        return self._outer.covers(PlanarPoint(q))

    def contains_latlng(self, point: LatLng) -> bool:
        return self.contains_point(*point.to_xyz())

    def _cell_quad(self, cell_id: int) -> PlanarPolygon | None:
        corners = []
        for p in K.vertices_xyz(cell_id):
            q = self._project(p)
            if q is None:
                return None
            corners.append(q)
        return PlanarPolygon(corners)

    def may_intersect_cell(self, cell_id: int) -> bool:
        cell_id = _raw_id(cell_id)
        ax, ay, az = self._center
        if not K.cap_may_intersect_cell(ax, ay, az, self._bound.height, cell_id):
            return False
        if K.level_of(cell_id) < _PROJECTION_MIN_LEVEL:
            return True
        quad = self._cell_quad(cell_id)
        if quad is None:
            return True
        return self._inner.intersects(quad)

    def contains_cell(self, cell_id: int) -> bool:
        cell_id = _raw_id(cell_id)
        if K.level_of(cell_id) < _PROJECTION_MIN_LEVEL:
            return False
        quad = self._cell_quad(cell_id)
        if quad is None:
            return False
        return self._outer.covers(quad)

    def cap_bound(self) -> tuple[float, float, float, float]:
        return self._bound.cap_bound()

    def __repr__(self) -> str:
        return f"Polygon({len(self.vertices)} vertices)"
