"""Cross-map navigation: stitch waypoint graphs, route over the result.

Waypoint names are the merge key.  Mapping teams that want two maps to
join must publish the shared physical point under the same name in both;
nothing here tries to guess correspondences.  Each map measures its own
edges, so a stitched node keeps one position per contributing map and a
shared edge keeps the mean of the per-map lengths.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .client import waypoint_to_app_frame
from .posemath import Pose

DEFAULT_TOLERANCE_M = 0.5

Vec3 = tuple[float, float, float]


class NavGraphError(ValueError):
    """Validation or lookup failure while stitching or routing."""


@dataclass(frozen=True)
class Edge:
    """Undirected edge; endpoints kept in sorted order."""

    u: str
    v: str
    weight_m: float
    maps: tuple[str, ...]


@dataclass(frozen=True)
class RouteResult:
    """A route, or the statement that none exists (not an error)."""

    path: tuple[tuple[str, str], ...]   # (waypoint name, map id per hop)
    length_m: float
    reachable: bool

    def names(self) -> list[str]:
        return [name for name, _ in self.path]


@dataclass(frozen=True)
class StitchedGraph:
    nodes: dict[str, dict[str, Vec3]]   # name -> map_id -> position
    edges: tuple[Edge, ...]
    warnings: tuple[str, ...]
    _adjacency: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        adj: dict[str, list[tuple[str, float, tuple[str, ...]]]] = {
            name: [] for name in self.nodes
        }
        for e in self.edges:
            adj[e.u].append((e.v, e.weight_m, e.maps))
            adj[e.v].append((e.u, e.weight_m, e.maps))
        for name in adj:
            adj[name].sort()
        object.__setattr__(self, "_adjacency", adj)

    def neighbors(self, name: str) -> list[tuple[str, float, tuple[str, ...]]]:
        """(neighbor, weight_m, contributing maps), sorted by neighbor."""
        try:
            return list(self._adjacency[name])
        except KeyError:
            raise NavGraphError(f"unknown waypoint: {name!r}") from None

    def component_count(self) -> int:
        seen: set[str] = set()
        count = 0
        for start in self.nodes:
            if start in seen:
                continue
            count += 1
            stack = [start]
            while stack:
                cur = stack.pop()
                if cur in seen:
                    continue
                seen.add(cur)
                stack.extend(n for n, _, _ in self._adjacency[cur])
        return count


def _distance(a: Vec3, b: Vec3) -> float:
    return math.dist(a, b)


def stitch(graphs, *, tolerance_m: float = DEFAULT_TOLERANCE_M) -> StitchedGraph:
    """Merge per-map waypoint graphs by exact name equality.

    `graphs` is a list of (map_id, waypoint_graph) pairs as served by a
    map server's /waypoints route.  Shared waypoint names join maps; a
    shared edge gets the arithmetic mean of its per-map lengths.  Distance
    disagreements past `tolerance_m` between maps that both see a pair of
    shared waypoints produce warnings, never errors: the caller decides
    whether a sloppy map is still usable.
    """
    nodes: dict[str, dict[str, Vec3]] = {}
    per_edge: dict[tuple[str, str], dict[str, float]] = {}
    map_ids: list[str] = []
    for map_id, graph in graphs:
        if map_id in map_ids:
            raise NavGraphError(f"map id {map_id!r} given twice")
        map_ids.append(map_id)
        positions: dict[str, Vec3] = {}
        for w in graph["waypoints"]:
            name = w["name"]
            if name in positions:
                raise NavGraphError(f"map {map_id!r}: duplicate waypoint {name!r}")
            positions[name] = tuple(float(v) for v in w["position"])
        for name, pos in positions.items():
            nodes.setdefault(name, {})[map_id] = pos
        for a, b in graph.get("edges", ()):
            if a == b:
                raise NavGraphError(f"map {map_id!r}: self-loop at {a!r}")
            if a not in positions or b not in positions:
                raise NavGraphError(
                    f"map {map_id!r}: edge ({a!r}, {b!r}) references an unknown waypoint")
            w = _distance(positions[a], positions[b])
            if w <= 0.0:
                raise NavGraphError(
                    f"map {map_id!r}: zero-length edge ({a!r}, {b!r})")
            key = (a, b) if a < b else (b, a)
            per_edge.setdefault(key, {})[map_id] = w

    warnings: list[str] = []
    edges = []
    for (a, b), by_map in sorted(per_edge.items()):
        weights = [by_map[m] for m in sorted(by_map)]
        edges.append(Edge(a, b, sum(weights) / len(weights), tuple(sorted(by_map))))

    # true-to-scale maps must agree on distances between co-shared waypoints
    for name_a, name_b, map_x, map_y, dx, dy in _shared_pair_distances(nodes):
        if abs(dx - dy) >= tolerance_m:
            warnings.append(
                f"{name_a!r}..{name_b!r}: {map_x} measures {dx:.3f} m, "
                f"{map_y} measures {dy:.3f} m")
    return StitchedGraph(nodes=nodes, edges=tuple(edges), warnings=tuple(warnings))


def _shared_pair_distances(nodes):
    """Yield distance pairs for waypoints co-resident in two maps, sorted."""
    by_map: dict[str, dict[str, Vec3]] = {}
    for name, positions in nodes.items():
        for map_id, pos in positions.items():
            by_map.setdefault(map_id, {})[name] = pos
    map_ids = sorted(by_map)
    for i, map_x in enumerate(map_ids):
        for map_y in map_ids[i + 1:]:
            shared = sorted(set(by_map[map_x]) & set(by_map[map_y]))
            for j, name_a in enumerate(shared):
                for name_b in shared[j + 1:]:
                    dx = _distance(by_map[map_x][name_a], by_map[map_x][name_b])
                    dy = _distance(by_map[map_y][name_a], by_map[map_y][name_b])
                    yield name_a, name_b, map_x, map_y, dx, dy


def route(g: StitchedGraph, src: str, dst: str) -> RouteResult:
    """Minimum-weight path by Dijkstra with deterministic name tie-breaks.

    Hop annotations name the map whose frame covers the segment leaving
    each node; the final node reuses the arriving segment's map.
    """
    for name in (src, dst):
        if name not in g.nodes:
            raise NavGraphError(f"unknown waypoint: {name!r}")
    if src == dst:
        return RouteResult(path=((src, min(g.nodes[src])),),
                           length_m=0.0, reachable=True)

    dist: dict[str, float] = {src: 0.0}
    prev: dict[str, str] = {}
    done: set[str] = set()
    heap: list[tuple[float, str]] = [(0.0, src)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        done.add(cur)
        if cur == dst:
            break
        for nxt, w, _maps in g.neighbors(cur):
            if nxt in done:
                continue
            cand = d + w
            old = dist.get(nxt)
            # strict improvement wins; on exact ties prefer the smaller
            # predecessor name so equal-cost routes are reproducible
            if old is None or cand < old or (cand == old and cur < prev[nxt]):
                dist[nxt] = cand
                prev[nxt] = cur
                heapq.heappush(heap, (cand, nxt))

    if dst not in done:
        return RouteResult(path=(), length_m=math.inf, reachable=False)

    names = [dst]
    while names[-1] != src:
        names.append(prev[names[-1]])
    names.reverse()

    def edge_map(a: str, b: str) -> str:
        for nxt, _w, maps in g.neighbors(a):
            if nxt == b:
                return maps[0]
        raise NavGraphError(f"no edge ({a!r}, {b!r})")   # unreachable by construction

    hops = [(name, edge_map(name, names[k + 1]))
            for k, name in enumerate(names[:-1])]
    hops.append((names[-1], edge_map(names[-2], names[-1])))
    return RouteResult(path=tuple(hops), length_m=dist[dst], reachable=True)


def path_positions(g: StitchedGraph, path, active_map_id: str,
                   app_pose: Pose, server_pose: Pose) -> list[np.ndarray | None]:
    """App-frame positions for a route's nodes.

    Nodes without a position in the active map are deferred (None): they
    become renderable once the client hands over to the map that knows
    them.  `app_pose` and `server_pose` are the same device instant in the
    app frame and the active map's frame.
    """
    out: list[np.ndarray | None] = []
    for name, _map_id in path:
        positions = g.nodes.get(name)
        if not positions:
            raise NavGraphError(f"unknown waypoint: {name!r}")
        pos = positions.get(active_map_id)
        if pos is None:
            out.append(None)
            continue
        out.append(waypoint_to_app_frame(np.asarray(pos), server_pose, app_pose))
    return out


def to_json_obj(g: StitchedGraph) -> dict:
    return {
        "v": 1,
        "nodes": [
            {"name": name,
             "positions": {m: list(p) for m, p in sorted(g.nodes[name].items())}}
            for name in sorted(g.nodes)
        ],
        "edges": [
            {"u": e.u, "v": e.v, "weight_m": e.weight_m, "maps": list(e.maps)}
            for e in g.edges
        ],
        "warnings": list(g.warnings),
    }


def to_json(g: StitchedGraph) -> str:
    return json.dumps(to_json_obj(g), indent=2, sort_keys=True) + "\n"


def to_dot(g: StitchedGraph) -> str:
    """Graphviz text for eyeballing a stitched campus."""
    lines = ["graph stitched {"]
    for name in sorted(g.nodes):
        maps = ",".join(sorted(g.nodes[name]))
        lines.append(f'  "{name}" [label="{name}\\n{maps}"];')
    for e in g.edges:
        lines.append(f'  "{e.u}" -- "{e.v}" [label="{e.weight_m:.2f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
