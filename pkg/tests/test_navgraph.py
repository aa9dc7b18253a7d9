"""Stitching, routing, and frame transfer for cross-map navigation."""

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flamekit.navgraph import (
    NavGraphError,
    StitchedGraph,
    path_positions,
    route,
    stitch,
    to_dot,
    to_json,
    to_json_obj,
)
from flamekit.posemath import Pose


def graph_of(map_id, waypoints, edges=()):
    """(map_id, waypoint_graph) pair shaped like GET /waypoints output."""
    return (map_id, {
        "v": 1,
        "map_id": map_id,
        "frame_note": "",
        "waypoints": [{"name": n, "position": list(p), "meta": {}}
                      for n, p in waypoints.items()],
        "edges": [list(e) for e in edges],
    })


def two_rooms(door_gap=0.0):
    """Two maps joined at door-3; `door_gap` shifts B's idea of the door."""
    a = graph_of("room-a", {
        "a1": (0, 0, 0), "a2": (3, 0, 0), "a3": (3, 4, 0), "a4": (0, 4, 0),
        "door-3": (6, 2, 0),
    }, [("a1", "a2"), ("a2", "a3"), ("a3", "a4"), ("a2", "door-3")])
    b = graph_of("room-b", {
        "door-3": (0, 0, 0), "b1": (4, 0, 0), "b2": (4, 3, 0),
        "b3": (0 + door_gap, 3, 0),
    }, [("door-3", "b1"), ("b1", "b2"), ("b2", "b3"), ("b3", "door-3")])
    return [a, b]


class TestStitch:
    def test_shared_waypoint_merges_node_count(self):
        g = stitch(two_rooms())
        assert len(g.nodes) == 8     # 5 + 4 with one shared name
        assert set(g.nodes["door-3"]) == {"room-a", "room-b"}

    def test_node_keeps_one_position_per_map(self):
        g = stitch(two_rooms())
        assert g.nodes["door-3"]["room-a"] == (6.0, 2.0, 0.0)
        assert g.nodes["door-3"]["room-b"] == (0.0, 0.0, 0.0)
        assert set(g.nodes["a1"]) == {"room-a"}

    def test_disjoint_maps_stay_separate_components(self):
        a = graph_of("a", {"x": (0, 0, 0), "y": (1, 0, 0)}, [("x", "y")])
        b = graph_of("b", {"p": (0, 0, 0), "q": (1, 0, 0)}, [("p", "q")])
        g = stitch([a, b])
        assert g.component_count() == 2
        assert not route(g, "x", "p").reachable

    def test_sharing_one_name_connects_components(self):
        g = stitch(two_rooms())
        assert g.component_count() == 1

    def test_shared_edge_weight_is_mean(self):
        a = graph_of("a", {"u": (0, 0, 0), "v": (3.0, 0, 0)}, [("u", "v")])
        b = graph_of("b", {"u": (0, 0, 0), "v": (3.2, 0, 0)}, [("u", "v")])
        g = stitch([a, b])
        (edge,) = g.edges
        assert edge.weight_m == pytest.approx(3.1)
        assert edge.maps == ("a", "b")
        assert not g.warnings

    def test_disagreeing_shared_edge_warns(self):
        a = graph_of("a", {"u": (0, 0, 0), "v": (3.0, 0, 0)}, [("u", "v")])
        b = graph_of("b", {"u": (0, 0, 0), "v": (3.8, 0, 0)}, [("u", "v")])
        g = stitch([a, b])
        assert len(g.warnings) == 1
        assert "3.000" in g.warnings[0] and "3.800" in g.warnings[0]

    def test_shared_pair_without_edge_still_checked(self):
        # both maps know u and v but neither declares the edge; distances
        # disagree by 0.6 m so the maps cannot both be true to scale
        a = graph_of("a", {"u": (0, 0, 0), "v": (2.0, 0, 0), "w": (1, 1, 0)},
                     [("u", "w"), ("w", "v")])
        b = graph_of("b", {"u": (0, 0, 0), "v": (2.6, 0, 0), "t": (1, -1, 0)},
                     [("u", "t"), ("t", "v")])
        g = stitch([a, b])
        assert any("'u'..'v'" in w for w in g.warnings)

    def test_tolerance_is_configurable(self):
        a = graph_of("a", {"u": (0, 0, 0), "v": (3.0, 0, 0)}, [("u", "v")])
        b = graph_of("b", {"u": (0, 0, 0), "v": (3.2, 0, 0)}, [("u", "v")])
        assert stitch([a, b], tolerance_m=0.1).warnings
        assert not stitch([a, b], tolerance_m=0.5).warnings

    def test_duplicate_name_within_one_map_rejected(self):
        bad = ("m", {"v": 1, "waypoints": [
            {"name": "x", "position": [0, 0, 0]},
            {"name": "x", "position": [1, 0, 0]}], "edges": []})
        with pytest.raises(NavGraphError, match="duplicate waypoint"):
            stitch([bad])

    def test_edge_to_unknown_waypoint_rejected(self):
        bad = graph_of("m", {"x": (0, 0, 0)}, [("x", "ghost")])
        with pytest.raises(NavGraphError, match="unknown waypoint"):
            stitch([bad])

    def test_self_loop_rejected(self):
        bad = graph_of("m", {"x": (0, 0, 0)}, [("x", "x")])
        with pytest.raises(NavGraphError, match="self-loop"):
            stitch([bad])

    def test_zero_length_edge_rejected(self):
        bad = graph_of("m", {"x": (0, 0, 0), "y": (0, 0, 0)}, [("x", "y")])
        with pytest.raises(NavGraphError, match="zero-length"):
            stitch([bad])

    def test_repeated_map_id_rejected(self):
        a = graph_of("m", {"x": (0, 0, 0), "y": (1, 0, 0)})
        with pytest.raises(NavGraphError, match="twice"):
            stitch([a, a])

    def test_order_independent(self):
        campus = three_map_campus()
        exports = {to_json(stitch(list(perm)))
                   for perm in itertools.permutations(campus)}
        assert len(exports) == 1


def three_map_campus():
    m1 = graph_of("hall", {
        "hall/desk": (0, 0, 0), "hall/stairs": (4, 0, 0), "door-12": (4, 3, 0),
    }, [("hall/desk", "hall/stairs"), ("hall/stairs", "door-12"),
        ("hall/desk", "door-12")])
    m2 = graph_of("corridor", {
        "door-12": (0, 0, 0), "corridor/mid": (5, 0, 0), "door-23": (10, 0, 0),
    }, [("door-12", "corridor/mid"), ("corridor/mid", "door-23")])
    m3 = graph_of("lab", {
        "door-23": (0, 0, 0), "lab/bench": (2, 2, 0), "lab/goal": (5, 2, 0),
    }, [("door-23", "lab/bench"), ("lab/bench", "lab/goal")])
    return [m1, m2, m3]


def brute_force_length(g: StitchedGraph, src: str, dst: str) -> float:
    best = math.inf

    def dfs(cur, seen, acc):
        nonlocal best
        if acc >= best:
            return
        if cur == dst:
            best = acc
            return
        for nxt, w, _ in g.neighbors(cur):
            if nxt not in seen:
                dfs(nxt, seen | {nxt}, acc + w)

    dfs(src, {src}, 0.0)
    return best


class TestRoute:
    def test_single_node_path(self):
        g = stitch(two_rooms())
        r = route(g, "door-3", "door-3")
        assert r.reachable
        assert r.length_m == 0.0
        assert r.path == (("door-3", "room-a"),)

    def test_linear_chain_sums_weights(self):
        g = stitch([graph_of("m", {"A": (0, 0, 0), "B": (3, 0, 0), "C": (3, 4, 0)},
                             [("A", "B"), ("B", "C")])])
        r = route(g, "A", "C")
        assert r.names() == ["A", "B", "C"]
        assert r.length_m == pytest.approx(7.0)

    def test_unknown_name_is_an_error(self):
        g = stitch(two_rooms())
        with pytest.raises(NavGraphError, match="unknown waypoint"):
            route(g, "a1", "ghost")

    def test_unreachable_is_a_result(self):
        a = graph_of("a", {"x": (0, 0, 0), "y": (1, 0, 0)}, [("x", "y")])
        b = graph_of("b", {"p": (0, 0, 0), "q": (1, 0, 0)}, [("p", "q")])
        r = route(stitch([a, b]), "x", "q")
        assert not r.reachable
        assert r.path == ()
        assert math.isinf(r.length_m)

    def test_equal_cost_tie_breaks_by_name(self):
        # diamond: s -> {b, c} -> t with identical geometry
        g = stitch([graph_of("m", {
            "s": (0, 0, 0), "b": (1, 1, 0), "c": (1, -1, 0), "t": (2, 0, 0),
        }, [("s", "b"), ("s", "c"), ("b", "t"), ("c", "t")])])
        r = route(g, "s", "t")
        assert r.names() == ["s", "b", "t"]   # 'b' < 'c'

    def test_cross_campus_route_crosses_both_doors(self):
        g = stitch(three_map_campus())
        r = route(g, "hall/desk", "lab/goal")
        assert r.reachable
        assert r.names()[0] == "hall/desk" and r.names()[-1] == "lab/goal"
        assert "door-12" in r.names() and "door-23" in r.names()
        assert r.length_m == pytest.approx(brute_force_length(g, "hall/desk", "lab/goal"))
        hop_maps = [m for _, m in r.path]
        # annotations walk hall -> corridor -> lab in order
        assert sorted(set(hop_maps)) == ["corridor", "hall", "lab"]
        assert hop_maps == sorted(hop_maps, key=["hall", "corridor", "lab"].index)

    def test_route_length_never_below_straight_line_in_one_map(self):
        g = stitch(three_map_campus())
        r = route(g, "hall/desk", "hall/stairs")
        assert r.length_m >= 4.0 - 1e-9

    def test_concurrent_queries_agree(self):
        g = stitch(three_map_campus())
        pairs = [("hall/desk", "lab/goal"), ("lab/bench", "hall/stairs"),
                 ("door-12", "lab/goal"), ("corridor/mid", "hall/desk")]

        def run(_):
            return [route(g, a, b) for a, b in pairs]

        with ThreadPoolExecutor(max_workers=16) as pool:
            results = list(pool.map(run, range(32)))
        assert all(r == results[0] for r in results)


@st.composite
def random_world(draw):
    n = draw(st.integers(min_value=2, max_value=9))
    names = [f"n{i:02d}" for i in range(n)]
    jitter = draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    positions = {nm: (float(i * 3), float(jitter[i]), 0.0)
                 for i, nm in enumerate(names)}
    pairs = list(itertools.combinations(names, 2))
    edges = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return positions, edges


class TestRouteOptimality:
    @settings(max_examples=60, deadline=None)
    @given(random_world())
    def test_matches_exhaustive_search(self, world):
        positions, edges = world
        g = stitch([graph_of("m", positions, edges)])
        names = sorted(positions)
        src, dst = names[0], names[-1]
        r = route(g, src, dst)
        oracle = brute_force_length(g, src, dst)
        if math.isinf(oracle):
            assert not r.reachable
        else:
            assert r.reachable
            assert r.length_m == pytest.approx(oracle)
            # the reported path really has the reported length
            total = 0.0
            for (a, _), (b, _) in zip(r.path, r.path[1:]):
                total += next(w for nxt, w, _ in g.neighbors(a) if nxt == b)
            assert total == pytest.approx(r.length_m)


class TestPathPositions:
    def test_active_map_nodes_transform_others_defer(self):
        g = stitch(three_map_campus())
        r = route(g, "hall/desk", "lab/goal")
        device_world = Pose.from_axis_angle((0, 0, 1), 0.3, (1.0, 2.0, 0.0))
        g_hall = Pose.from_axis_angle((0, 0, 1), -0.6, (10.0, -4.0, 0.0))
        offset = Pose.from_axis_angle((0, 1, 0), 0.2, (0.5, 0.5, 0.0))
        server_pose = g_hall.inverse().compose(device_world)
        app_pose = offset.compose(device_world)
        out = path_positions(g, r.path, "hall", app_pose, server_pose)
        assert len(out) == len(r.path)
        for (name, _), pos in zip(r.path, out):
            if "hall" in g.nodes[name]:
                expected = offset.compose(g_hall).transform_point(
                    np.asarray(g.nodes[name]["hall"]))
                assert np.allclose(pos, expected, atol=1e-9)
            else:
                assert pos is None

    def test_all_nodes_in_active_map(self):
        g = stitch(two_rooms())
        r = route(g, "a1", "door-3")
        out = path_positions(g, r.path, "room-a", Pose.identity(), Pose.identity())
        assert all(p is not None for p in out)
        assert np.allclose(out[0], (0, 0, 0))

    def test_unknown_path_node_is_an_error(self):
        g = stitch(two_rooms())
        with pytest.raises(NavGraphError, match="unknown waypoint"):
            path_positions(g, [("ghost", "room-a")], "room-a",
                           Pose.identity(), Pose.identity())


class TestExports:
    def test_json_roundtrips_and_sorts(self):
        g = stitch(two_rooms())
        doc = json.loads(to_json(g))
        assert doc == to_json_obj(g)
        assert [n["name"] for n in doc["nodes"]] == sorted(n["name"] for n in doc["nodes"])
        (door,) = [n for n in doc["nodes"] if n["name"] == "door-3"]
        assert set(door["positions"]) == {"room-a", "room-b"}
        edge_keys = [(e["u"], e["v"]) for e in doc["edges"]]
        assert edge_keys == sorted(edge_keys)

    def test_json_byte_stable(self):
        assert to_json(stitch(two_rooms())) == to_json(stitch(two_rooms()))

    def test_dot_lists_every_edge(self):
        g = stitch(two_rooms())
        dot = to_dot(g)
        assert dot.startswith("graph stitched {")
        for e in g.edges:
            assert f'"{e.u}" -- "{e.v}"' in dot
        assert dot.count("--") == len(g.edges)
