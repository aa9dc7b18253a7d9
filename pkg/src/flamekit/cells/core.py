"""Cell id and lat/lng value types over the kernel bit math."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

from flamekit.cells import kernel as K

EARTH_RADIUS_M = 6_371_000.0

MAX_LEVEL = K.MAX_LEVEL


@dataclass(frozen=True)
class LatLng:
    """Geodetic coordinate in degrees."""

    lat: float
    lng: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lng)):
            raise ValueError("latitude/longitude must be finite")

    @classmethod
    def from_xyz(cls, x: float, y: float, z: float) -> LatLng:
        lat, lng = K.xyz_to_latlng(x, y, z)
        return cls(lat, lng)

    def to_xyz(self) -> tuple[float, float, float]:
        return K.latlng_to_xyz(self.lat, self.lng)


@functools.total_ordering
class CellId:
    """64-bit hierarchical cell id (levels 0..30, Hilbert child order)."""

    __slots__ = ("_id",)

    def __init__(self, id_: int):
        if not K.is_valid_id(id_):
            raise ValueError(f"invalid cell id: {id_:#x}")
        self._id = id_

    @classmethod
    def from_latlng(cls, lat: float, lng: float, level: int = MAX_LEVEL) -> CellId:
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude out of range: {lat}")
        if not 0 <= level <= MAX_LEVEL:
            raise ValueError(f"level out of range: {level}")
        return cls(K.cell_from_latlng(lat, lng, level))

    @classmethod
    def from_point(cls, x: float, y: float, z: float) -> CellId:
        return cls(K.leaf_from_xyz(x, y, z))

    @classmethod
    def from_face(cls, face: int) -> CellId:
        if not 0 <= face <= 5:
            raise ValueError(f"face out of range: {face}")
        return cls((face << K.POS_BITS) | (1 << (K.POS_BITS - 1)))

    @classmethod
    def from_token(cls, token: str) -> CellId:
        if not 1 <= len(token) <= 16 or token != token.lower():
            raise ValueError(f"malformed cell token: {token!r}")
        try:
            value = int(token, 16)
        except ValueError:
            raise ValueError(f"malformed cell token: {token!r}") from None
        return cls(value << (64 - 4 * len(token)))

    @property
    def id(self) -> int:
        return self._id

    def token(self) -> str:
        # 16 hex digits with trailing zeros trimmed; the sentinel bit keeps
        # the trim lossless
        return format(self._id, "016x").rstrip("0")

    def level(self) -> int:
        return K.level_of(self._id)

    def face(self) -> int:
        return K.face_of(self._id)

    def is_leaf(self) -> bool:
        return bool(self._id & 1)

    def is_face(self) -> bool:
        return K.is_face(self._id)

    def parent(self, level: int | None = None) -> CellId:
        own = self.level()
        if level is None:
            level = own - 1
        if not 0 <= level <= own:
            raise ValueError(f"parent level {level} not in [0, {own}]")
        return CellId(K.parent_at(self._id, level))

    def child(self, pos: int) -> CellId:
        if self.is_leaf():
            raise ValueError("leaf cell has no children")
        if not 0 <= pos <= 3:
            raise ValueError(f"child position out of range: {pos}")
        return CellId(K.child_at(self._id, pos))

    def children(self) -> list[CellId]:
        return [self.child(k) for k in range(4)]

    def child_position(self, level: int) -> int:
        """Hilbert digit (0..3) chosen at `level` on the path to this cell."""
        if not 1 <= level <= self.level():
            raise ValueError(f"level {level} not in [1, {self.level()}]")
        return K.child_position(self._id, level)

    def contains(self, other: CellId) -> bool:
        return K.contains_id(self._id, other._id)

    def intersects(self, other: CellId) -> bool:
        return (K.range_min(other._id) <= K.range_max(self._id) and
                K.range_max(other._id) >= K.range_min(self._id))

    def range_min(self) -> CellId:
        return CellId(K.range_min(self._id))

    def range_max(self) -> CellId:
        return CellId(K.range_max(self._id))

    def center(self) -> LatLng:
        lat, lng = K.center_latlng(self._id)
        return LatLng(lat, lng)

    def vertices(self) -> list[LatLng]:
        """Cell corners in counter-clockwise order."""
        return [LatLng.from_xyz(*v) for v in K.vertices_xyz(self._id)]

    def __eq__(self, other) -> bool:
        return isinstance(other, CellId) and self._id == other._id

    def __lt__(self, other: CellId) -> bool:
        return self._id < other._id

    def __hash__(self) -> int:
        return hash(self._id)

    def __repr__(self) -> str:
        return f"CellId({self.token()})"
