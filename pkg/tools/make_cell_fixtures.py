"""Regenerate tests/data/cell_fixtures.json from the reference cell library.

Requires the s2sphere package (the reference pure-Python port of the cell
geometry library). It is not a runtime dependency; run this only when the
frozen fixtures need to be regenerated, and review the diff carefully.
"""

import json
import math
import random
import sys
from pathlib import Path

try:
    import s2sphere as s2
except ImportError:
    sys.exit("s2sphere is required to regenerate fixtures "
             "(pip install s2sphere)")

EARTH_R = 6371000.0
FIX_LAT, FIX_LNG = 40.4433, -79.9436
OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / \
    "cell_fixtures.json"


def cap_at(lat, lng, radius_m):
    axis = s2.LatLng.from_degrees(lat, lng).to_point()
    return s2.Cap.from_axis_angle(axis, s2.Angle.from_radians(
        radius_m / EARTH_R))


def cover(region, max_cells, min_level, max_level, interior):
    coverer = s2.RegionCoverer()
    coverer.min_level = min_level
    coverer.max_level = max_level
    coverer.max_cells = max_cells
    cells = (coverer.get_interior_covering(region) if interior
             else coverer.get_covering(region))
    return [c.id() for c in cells]


def main():
    out = {}
    ll = s2.LatLng.from_degrees(FIX_LAT, FIX_LNG)
    leaf = s2.CellId.from_lat_lng(ll)
    out["fixed_point"] = {
        "lat": FIX_LAT, "lng": FIX_LNG, "leaf_id": leaf.id(),
        "parents": {str(lv): leaf.parent(lv).id() for lv in range(31)},
        "centers_deg": {},
    }
    for lv in (5, 10, 13, 17, 20, 23, 30):
        c = leaf.parent(lv).to_lat_lng()
        out["fixed_point"]["centers_deg"][str(lv)] = [c.lat().degrees,
                                                      c.lng().degrees]

    cell13 = s2.Cell(leaf.parent(13))
    out["cell13_id"] = cell13.id().id()
    out["cell13_vertices_deg"] = []
    for k in range(4):
        v = s2.LatLng.from_point(cell13.get_vertex(k))
        out["cell13_vertices_deg"].append([v.lat().degrees, v.lng().degrees])

    rng = random.Random(20260815)
    out["random_points"] = []
    for _ in range(64):
        lat = math.degrees(math.asin(rng.uniform(-0.999, 0.999)))
        lng = rng.uniform(-180.0, 180.0)
        cid = s2.CellId.from_lat_lng(s2.LatLng.from_degrees(lat, lng))
        out["random_points"].append({
            "lat": lat, "lng": lng, "leaf_id": cid.id(),
            "level17_id": cid.parent(17).id(),
        })

    out["cap_coverings_fixed_point"] = {}
    for radius in (5, 10, 20, 30, 100):
        cap = cap_at(FIX_LAT, FIX_LNG, radius)
        out["cap_coverings_fixed_point"][str(radius)] = {
            "interior_8_0_23": cover(cap, 8, 0, 23, True),
            "exterior_64_10_24": cover(cap, 64, 10, 24, False),
        }
    out["cap_coverings_equator"] = {}
    for radius in (20, 100):
        cap = cap_at(0.01, 44.99, radius)
        out["cap_coverings_equator"][str(radius)] = {
            "interior_8_0_23": cover(cap, 8, 0, 23, True),
            "exterior_64_10_24": cover(cap, 64, 10, 24, False),
        }

    out["vertex_neighbors_13"] = sorted(
        c.id() for c in leaf.get_vertex_neighbors(13))
    out["edge_neighbors_13"] = [
        c.id() for c in leaf.parent(13).get_edge_neighbors()]

    base = cover(cap_at(FIX_LAT, FIX_LNG, 20.0), 8, 0, 23, True)
    seen = {}
    for raw in base:
        c = s2.CellId(raw)
        seen[c.id()] = c.level()
        for lv in range(c.level() - 1, -1, -1):
            seen[c.parent(lv).id()] = lv
    ordered = sorted(seen.items(), key=lambda kv: (-kv[1], kv[0]))
    out["queryset_20m"] = {"base": base, "all_ids": [i for i, _ in ordered]}

    OUT.write_text(json.dumps(out, indent=1, sort_keys=True))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
