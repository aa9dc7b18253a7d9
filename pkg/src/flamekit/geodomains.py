"""Cell ids as DNS names, query sets from coarse location, zone generation.

A cell becomes a dot-separated geo-domain: child digits from deepest to
shallowest, then the face digit, then a configurable DNS suffix. The cell
(face=5, path=[3,1]) under suffix "loc" renders as "1.3.5.loc"; removing
labels from the left walks up the cell hierarchy, which is what lets a
resolver find coarse registrations by querying parent names.
"""

from __future__ import annotations

from dataclasses import dataclass

from flamekit.cells import Cap, CellId, CoveringParams, LatLng, Region, cover
from flamekit.dnswire import FlameRecord, SoaData, format_flame_record

__all__ = [
    "DEFAULT_SUFFIX",
    "DEFAULT_QUERY_COVERING",
    "DEFAULT_REGISTRATION_COVERING",
    "GeoDomain",
    "CoarseLocation",
    "QueryConfig",
    "ZoneRecord",
    "cell_to_geodomain",
    "geodomain_to_cell",
    "parse_geodomain",
    "parent_domains",
    "query_set",
    "zone_records",
    "default_soa",
    "render_zone",
]

DEFAULT_SUFFIX = "flame.test"

DEFAULT_QUERY_COVERING = CoveringParams(
    max_cells=8, min_level=0, max_level=23, mode="interior")
# registration stays coarser than query base cells so a client whose
# error circle sits anywhere inside a venue always probes an owner name
# via its parent chain; finer registration is possible but shifts the
# burden onto child_levels at query time
DEFAULT_REGISTRATION_COVERING = CoveringParams(
    max_cells=16, min_level=10, max_level=17, mode="exterior")

_FACE_DIGITS = frozenset("012345")
_CHILD_DIGITS = frozenset("0123")


@dataclass(frozen=True)
class GeoDomain:
    """One cell's DNS name: digit labels (deepest child first, face last)
    plus the zone suffix."""

    labels: tuple[str, ...]
    suffix: str

    def __post_init__(self):
        if not self.suffix or self.suffix.startswith(".") \
                or self.suffix.endswith("."):
            raise ValueError(f"invalid suffix {self.suffix!r}")
        if not self.labels:
            raise ValueError("geo-domain needs at least the face label")
        if len(self.labels) - 1 > 30:
            raise ValueError(f"cell path too deep: {len(self.labels) - 1}")
        for i, label in enumerate(self.labels[:-1]):
            if label not in _CHILD_DIGITS:
                raise ValueError(f"label {i} must be a child digit 0-3, "
                                 f"got {label!r}")
        face = self.labels[-1]
        if face not in _FACE_DIGITS:
            raise ValueError(f"label {len(self.labels) - 1} must be a face "
                             f"digit 0-5, got {face!r}")

    def name(self) -> str:
        return ".".join(self.labels) + "." + self.suffix

    def level(self) -> int:
        return len(self.labels) - 1

    def cell(self) -> CellId:
        cell = CellId.from_face(int(self.labels[-1]))
        for digit in self.labels[-2::-1]:
            cell = cell.child(int(digit))
        return cell

    def parents(self) -> list[GeoDomain]:
        return [GeoDomain(self.labels[i:], self.suffix)
                for i in range(1, len(self.labels))]

    def __str__(self):
        return self.name()


def cell_to_geodomain(cell: CellId, suffix: str = DEFAULT_SUFFIX) -> GeoDomain:
    digits = [str(cell.child_position(level))
              for level in range(cell.level(), 0, -1)]
    digits.append(str(cell.face()))
    return GeoDomain(tuple(digits), suffix)


def geodomain_to_cell(domain: GeoDomain) -> CellId:
    return domain.cell()


def parse_geodomain(name: str, suffix: str = DEFAULT_SUFFIX) -> GeoDomain:
    """Parse a rendered name back into a GeoDomain under a known suffix."""
    name = name.rstrip(".")
    tail = "." + suffix
    if not name.endswith(tail):
        raise ValueError(f"{name!r} is not under suffix {suffix!r}")
    return GeoDomain(tuple(name[:-len(tail)].split(".")), suffix)


def parent_domains(domain: GeoDomain) -> list[GeoDomain]:
    """Strict ancestors, deepest first, down to the face-level domain."""
    return domain.parents()


@dataclass(frozen=True)
class CoarseLocation:
    center: LatLng
    error_radius_m: float

    def __post_init__(self):
        if not self.error_radius_m > 0:
            raise ValueError(
                f"error radius must be positive: {self.error_radius_m}")


@dataclass(frozen=True)
class QueryConfig:
    covering: CoveringParams = DEFAULT_QUERY_COVERING
    child_levels: int = 0
    suffix: str = DEFAULT_SUFFIX

    def __post_init__(self):
        if not 0 <= self.child_levels <= 3:
            raise ValueError("child_levels outside 0..3 (4^k query blowup)")


def _base_cells(loc: CoarseLocation, covering: CoveringParams) -> list[CellId]:
    cap = Cap.from_center_radius(loc.center, loc.error_radius_m)
    base = cover(cap, covering)
    if not base:
        # radius smaller than any max_level cell: fall back to the single
        # deepest cell containing the center so there is always a base
        base = [CellId.from_latlng(loc.center.lat, loc.center.lng,
                                   covering.max_level)]
    return base


def query_set(loc: CoarseLocation,
              cfg: QueryConfig = QueryConfig()) -> list[GeoDomain]:
    """Geo-domains to resolve for a coarse location: covering base cells,
    all their parents, optional descendants, deduplicated; ordered by
    (level descending, raw cell id) so runs are reproducible."""
    cells: set[CellId] = set()
    base = _base_cells(loc, cfg.covering)
    for cell in base:
        cells.add(cell)
        parent = cell
        for level in range(cell.level() - 1, -1, -1):
            parent = parent.parent(level)
            cells.add(parent)
    frontier = base
    for _ in range(cfg.child_levels):
        frontier = [child for cell in frontier for child in cell.children()]
        cells.update(frontier)
    ordered = sorted(cells, key=lambda c: (-c.level(), c.id))
    return [cell_to_geodomain(c, cfg.suffix) for c in ordered]


@dataclass(frozen=True)
class ZoneRecord:
    owner: str
    ttl: int
    rdata: str
    rtype: str = "TXT"


def zone_records(region: Region, target: FlameRecord,
                 cfg: CoveringParams = DEFAULT_REGISTRATION_COVERING,
                 suffix: str = DEFAULT_SUFFIX,
                 ttl: int = 300) -> list[ZoneRecord]:
    """TXT registration records for every covering cell of a region."""
    rdata = format_flame_record(target)
    return [ZoneRecord(cell_to_geodomain(cell, suffix).name(), ttl, rdata)
            for cell in cover(region, cfg)]


def default_soa(suffix: str = DEFAULT_SUFFIX, serial: int = 1,
                minimum: int = 60) -> SoaData:
    return SoaData(mname=f"ns1.{suffix}", rname=f"admin.{suffix}",
                   serial=serial, refresh=3600, retry=600, expire=86400,
                   minimum=minimum)


def _owner_sort_key(record: ZoneRecord):
    return tuple(reversed(record.owner.lower().split(".")))


def render_zone(suffix: str, records: list[ZoneRecord],
                soa: SoaData | None = None, soa_ttl: int = 60,
                default_ttl: int = 300) -> str:
    """Master-file text for a zone: $ORIGIN/$TTL, SOA, then the records
    sorted hierarchically. Byte-stable for identical inputs."""
    soa = soa or default_soa(suffix)
    tail = "." + suffix
    lines = [
        f"$ORIGIN {suffix}.",
        f"$TTL {default_ttl}",
        f"@ {soa_ttl} IN SOA {soa.mname}. {soa.rname}. "
        f"{soa.serial} {soa.refresh} {soa.retry} {soa.expire} {soa.minimum}",
    ]
    for record in sorted(records, key=_owner_sort_key):
        owner = record.owner.lower()
        if owner == suffix:
            owner = "@"
        elif owner.endswith(tail):
            owner = owner[:-len(tail)]
        if '"' in record.rdata or any(ord(c) < 0x20 or ord(c) > 0x7e
                                      for c in record.rdata):
            raise ValueError(f"unrenderable TXT rdata: {record.rdata!r}")
        lines.append(f'{owner} {record.ttl} IN {record.rtype} '
                     f'"{record.rdata}"')
    return "\n".join(lines) + "\n"
