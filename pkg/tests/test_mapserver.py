"""Map file validation, localization math, and the HTTP surface."""

import concurrent.futures
import json
import socket
import time
import urllib.error
import urllib.request

import numpy as np
import pytest

from flamekit.mapserver import (
    CUE_LANDMARKS_V1,
    LocationCues,
    MapApi,
    MapApiError,
    MapFile,
    MapFileError,
    Waypoint,
    capabilities,
    load_map,
    localize,
    save_map,
    serve,
    waypoint_graph,
)
from flamekit.posemath import Pose

RNG = np.random.default_rng(20260815)


def random_pose(rng) -> Pose:
    axis = rng.normal(size=3)
    angle = rng.uniform(0, np.pi)
    t = rng.uniform(-20, 20, size=3)
    return Pose.from_axis_angle(axis, angle, t)


def make_map(n_landmarks=12, rng=RNG, **kw) -> MapFile:
    landmarks = tuple(
        (f"lm-{i:03d}", tuple(rng.uniform(-30, 30, size=3)))
        for i in range(n_landmarks)
    )
    waypoints = (
        Waypoint("door", (0.0, 0.0, 0.0), (("floor", "1"),)),
        Waypoint("hall", (5.0, 0.0, 0.0)),
        Waypoint("stairs", (5.0, 8.0, 0.0)),
    )
    edges = (("door", "hall"), ("hall", "stairs"))
    defaults = dict(
        map_id="museum-east",
        landmarks=landmarks,
        waypoints=waypoints,
        edges=edges,
        frame_note="y-up, meters, origin at lobby door",
        region=((40.4440, -79.9440), (40.4430, -79.9435), (40.4440, -79.9430)),
    )
    defaults.update(kw)
    return MapFile(**defaults)


def cues_for(map_file: MapFile, device_pose: Pose, ids=None,
             noise_m=0.0, rng=None) -> LocationCues:
    """Observations a device at ''device_pose'' (map frame) would see."""
    inv = device_pose.inverse()
    index = map_file.landmark_index()
    ids = list(index) if ids is None else ids
    obs = []
    for lid in ids:
        p = inv.transform_point(np.asarray(index[lid]))
        if noise_m:
            p = p + rng.normal(scale=noise_m, size=3)
        obs.append((lid, tuple(float(v) for v in p)))
    return LocationCues(observations=tuple(obs), timestamp=1.5)


class TestMapFile:
    def test_roundtrip_through_json(self, tmp_path):
        m = make_map()
        path = tmp_path / "m.json"
        save_map(m, path)
        assert load_map(path) == m

    def test_roundtrip_is_byte_stable(self, tmp_path):
        m = make_map()
        once = m.to_json()
        again = MapFile.from_json(once).to_json()
        assert once == again

    def test_duplicate_landmark_id_rejected(self):
        lms = (("a", (0.0, 0.0, 0.0)), ("a", (1.0, 0.0, 0.0)), ("b", (0.0, 1.0, 0.0)))
        with pytest.raises(MapFileError, match="duplicate landmark"):
            make_map(landmarks=lms)

    def test_too_few_landmarks_rejected(self):
        lms = (("a", (0.0, 0.0, 0.0)), ("b", (1.0, 0.0, 0.0)))
        with pytest.raises(MapFileError, match="at least 3"):
            make_map(landmarks=lms)

    def test_duplicate_waypoint_name_rejected(self):
        wps = (Waypoint("door", (0.0, 0.0, 0.0)), Waypoint("door", (1.0, 0.0, 0.0)))
        with pytest.raises(MapFileError, match="duplicate waypoint"):
            make_map(waypoints=wps, edges=())

    def test_edge_to_unknown_waypoint_rejected(self):
        with pytest.raises(MapFileError, match="unknown waypoint"):
            make_map(edges=(("door", "no-such"),))

    def test_nonpositive_sigma_rejected(self):
        with pytest.raises(MapFileError, match="sigma"):
            make_map(confidence_sigma_m=0.0)

    def test_bad_json_text(self):
        with pytest.raises(MapFileError, match="not valid JSON"):
            MapFile.from_json("{nope")

    @pytest.mark.parametrize("mutate, where", [
        (lambda d: d.pop("map_id"), "map_id"),
        (lambda d: d.__setitem__("v", 2), "v"),
        (lambda d: d["landmarks"][0].pop("position"), "position"),
        (lambda d: d["landmarks"][0].__setitem__("position", [1, 2]), "position"),
        (lambda d: d.__setitem__("extra", True), "extra"),
    ])
    def test_schema_violations(self, mutate, where):
        doc = json.loads(make_map().to_json())
        mutate(doc)
        with pytest.raises(MapFileError, match="schema violation"):
            MapFile.from_json(json.dumps(doc))

    def test_region_polygon_contains_interior(self):
        m = make_map()
        poly = m.region_polygon()
        # centroid of the triangle is inside it
        lat = sum(v[0] for v in m.region) / 3
        lng = sum(v[1] for v in m.region) / 3
        from flamekit.cells import LatLng
        assert poly.contains_latlng(LatLng(lat, lng))

    def test_region_optional(self):
        m = make_map(region=None)
        with pytest.raises(MapFileError, match="no region"):
            m.region_polygon()


class TestLocalize:
    def test_noiseless_recovers_pose(self):
        rng = np.random.default_rng(7)
        m = make_map(rng=rng)
        device = random_pose(rng)
        result = localize(cues_for(m, device), m)
        assert result.ok
        assert result.pose.almost_equal(device, tol_m=1e-6, tol_deg=1e-4)
        assert result.confidence > 0.99
        assert result.matched_count == 12
        assert result.rmsd_m < 1e-9

    def test_foreign_ids_are_ignored(self):
        rng = np.random.default_rng(8)
        m = make_map(rng=rng)
        device = random_pose(rng)
        cues = cues_for(m, device)
        extra = cues.observations + (("other-map-lm", (1.0, 2.0, 3.0)),)
        result = localize(LocationCues(observations=extra), m)
        assert result.ok
        assert result.matched_count == 12

    def test_disjoint_ids_fail_cleanly(self):
        m = make_map()
        cues = LocationCues(observations=(("x", (0.0, 0.0, 0.0)),
                                          ("y", (1.0, 0.0, 0.0)),
                                          ("z", (0.0, 1.0, 0.0))))
        result = localize(cues, m)
        assert not result.ok
        assert result.pose is None
        assert result.confidence == 0.0
        assert result.matched_count == 0
        assert result.error == "insufficient-matches"

    def test_two_matches_are_not_enough(self):
        rng = np.random.default_rng(9)
        m = make_map(rng=rng)
        cues = cues_for(m, random_pose(rng), ids=["lm-000", "lm-001"])
        result = localize(cues, m)
        assert not result.ok
        assert result.matched_count == 2
        assert result.error == "insufficient-matches"

    def test_collinear_matches_fail_as_degenerate(self):
        lms = tuple((f"l{i}", (float(i), 0.0, 0.0)) for i in range(4))
        m = make_map(landmarks=lms)
        cues = LocationCues(observations=lms)
        result = localize(cues, m)
        assert not result.ok
        assert result.error == "degenerate-geometry"
        assert result.confidence == 0.0

    def test_noisy_fit_centimeter_accuracy(self):
        # 1 cm observation noise, 10 matches: translation error stays at
        # the centimeter scale and rmsd sits near the noise floor.
        rng = np.random.default_rng(10)
        errs, rmsds = [], []
        for _ in range(200):
            m = make_map(n_landmarks=10, rng=rng)
            device = random_pose(rng)
            cues = cues_for(m, device, noise_m=0.01, rng=rng)
            result = localize(cues, m)
            assert result.ok
            errs.append(float(np.linalg.norm(result.pose.t - device.t)))
            rmsds.append(result.rmsd_m)
        assert np.median(errs) < 0.02
        assert 0.005 < np.median(rmsds) < 0.025

    def test_confidence_decays_with_noise(self):
        rng = np.random.default_rng(11)
        means = []
        for noise in (0.0, 0.01, 0.05, 0.20):
            vals = []
            for _ in range(60):
                m = make_map(n_landmarks=10, rng=rng)
                device = random_pose(rng)
                result = localize(cues_for(m, device, noise_m=noise, rng=rng), m)
                vals.append(result.confidence)
            means.append(float(np.mean(vals)))
        assert all(a > b for a, b in zip(means, means[1:]))
        assert means[0] > 0.99

    def test_confidence_law_matches_rmsd(self):
        rng = np.random.default_rng(12)
        m = make_map(rng=rng, confidence_sigma_m=0.04)
        device = random_pose(rng)
        result = localize(cues_for(m, device, noise_m=0.03, rng=rng), m)
        assert result.confidence == pytest.approx(
            min(1.0, np.exp(-result.rmsd_m / 0.04)), abs=1e-12)

    def test_deterministic_for_equal_inputs(self):
        rng = np.random.default_rng(13)
        m = make_map(rng=rng)
        cues = cues_for(m, random_pose(rng), noise_m=0.02, rng=rng)
        a = localize(cues, m)
        b = localize(cues, m)
        assert (a.pose.q == b.pose.q).all() and (a.pose.t == b.pose.t).all()
        assert (a.confidence, a.rmsd_m, a.matched_count) == \
               (b.confidence, b.rmsd_m, b.matched_count)


def scan_for_landmarks(body: str, map_file: MapFile) -> list[str]:
    """Every landmark id or coordinate that leaks into a response body."""
    leaks = []
    for lid, pos in map_file.landmarks:
        if lid in body:
            leaks.append(lid)
        for coord in pos:
            if f"{coord:.6f}".rstrip("0") in body or repr(coord) in body:
                leaks.append(f"{lid}:{coord}")
    return leaks


class TestPublicViews:
    def test_capabilities_shape(self):
        m = make_map()
        caps = capabilities(m)
        assert caps["v"] == 1
        assert caps["map_id"] == "museum-east"
        assert CUE_LANDMARKS_V1 in caps["cue_types"]
        assert caps["waypoints_available"] is True

    def test_waypoint_graph_shape(self):
        g = waypoint_graph(make_map())
        assert [w["name"] for w in g["waypoints"]] == ["door", "hall", "stairs"]
        assert g["edges"] == [["door", "hall"], ["hall", "stairs"]]
        assert g["waypoints"][0]["meta"] == {"floor": "1"}

    def test_no_landmark_data_in_public_views(self):
        m = make_map()
        for view in (capabilities(m), waypoint_graph(m)):
            body = json.dumps(view)
            assert scan_for_landmarks(body, m) == []
        # the cue-type label mentions landmarks; the graph must not at all
        assert "landmark" not in json.dumps(waypoint_graph(m)).lower()


@pytest.fixture(scope="module")
def live():
    m = make_map(rng=np.random.default_rng(99))
    with serve(("127.0.0.1", 0), m) as server:
        yield server, m


def http_get(url: str):
    with urllib.request.urlopen(url, timeout=2.0) as resp:
        return resp.status, resp.read()


class TestHttpApi:
    def test_capabilities_round_trip(self, live):
        server, m = live
        status, body = http_get(server.url + "/capabilities")
        assert status == 200
        assert json.loads(body) == capabilities(m)

    def test_capability_bytes_identical_across_requests(self, live):
        server, _ = live
        bodies = {http_get(server.url + "/capabilities")[1] for _ in range(5)}
        assert len(bodies) == 1

    def test_waypoints_round_trip(self, live):
        server, m = live
        status, body = http_get(server.url + "/waypoints")
        assert status == 200
        assert json.loads(body) == waypoint_graph(m)

    def test_localize_round_trip_matches_library(self, live):
        server, m = live
        rng = np.random.default_rng(14)
        device = random_pose(rng)
        cues = cues_for(m, device, noise_m=0.01, rng=rng)
        api = MapApi(server.url)
        remote = api.localize(cues)
        local = localize(cues, m)
        assert remote.ok and local.ok
        assert remote.pose.almost_equal(local.pose, tol_m=1e-9, tol_deg=1e-7)
        assert remote.confidence == pytest.approx(local.confidence)
        assert remote.matched_count == local.matched_count

    def test_localize_failure_is_a_response_not_an_error(self, live):
        server, _ = live
        api = MapApi(server.url)
        cues = LocationCues(observations=(("nope", (0.0, 0.0, 0.0)),))
        result = api.localize(cues)
        assert not result.ok
        assert result.error == "insufficient-matches"

    def test_no_landmark_leak_over_http(self, live):
        server, m = live
        rng = np.random.default_rng(15)
        cues = cues_for(m, random_pose(rng), noise_m=0.01, rng=rng)
        api = MapApi(server.url)
        api.localize(cues)
        for path in ("/capabilities", "/waypoints"):
            _, body = http_get(server.url + path)
            assert scan_for_landmarks(body.decode(), m) == []
        body = _raw_localize(server.url, {"v": 1, "cues": cues.to_json_obj()})[1]
        # the request carries observation ids; the response must not echo
        # map-side landmark positions
        doc = json.loads(body)
        assert set(doc) <= {"v", "ok", "pose", "confidence", "matched_count", "rmsd_m"}

    def test_malformed_json_gets_machine_readable_400(self, live):
        server, _ = live
        status, doc = _raw_post(server.url + "/localize", b"{nope")
        assert status == 400
        assert doc["error"] == "bad-request"

    def test_missing_fields_get_400(self, live):
        server, _ = live
        status, doc = _raw_post(
            server.url + "/localize",
            json.dumps({"cues": {"observations": [{"id": "a"}]}}).encode())
        assert status == 400
        assert doc["error"] == "bad-request"

    def test_unknown_route_404(self, live):
        server, _ = live
        with pytest.raises(urllib.error.HTTPError) as exc:
            http_get(server.url + "/landmarks")
        assert exc.value.code == 404
        assert json.loads(exc.value.read())["error"] == "not-found"

    def test_unknown_post_route_404(self, live):
        server, _ = live
        status, doc = _raw_post(server.url + "/nope", b"{}")
        assert status == 404
        assert doc["error"] == "not-found"

    def test_api_error_distinct_from_failed_localization(self, live):
        api = MapApi("http://127.0.0.1:1")  # nothing listens there
        with pytest.raises(MapApiError):
            api.capabilities()

    def test_round_trip_under_50ms(self, live):
        server, m = live
        rng = np.random.default_rng(16)
        cues = cues_for(m, random_pose(rng), noise_m=0.01, rng=rng)
        api = MapApi(server.url)
        api.localize(cues)  # warm the connection path
        samples = []
        for _ in range(20):
            t0 = time.perf_counter()
            api.localize(cues)
            samples.append(time.perf_counter() - t0)
        assert np.median(samples) < 0.050

    def test_fifty_concurrent_clients(self, live):
        server, m = live
        rng = np.random.default_rng(17)
        cues = cues_for(m, random_pose(rng), noise_m=0.01, rng=rng)
        before = server.stats()["requests"]

        def poll(_):
            api = MapApi(server.url)
            r = api.localize(cues)
            c = api.capabilities()
            return r.ok and c["map_id"] == m.map_id

        with concurrent.futures.ThreadPoolExecutor(max_workers=50) as pool:
            results = list(pool.map(poll, range(50)))
        assert all(results)
        assert server.stats()["requests"] >= before + 100

    def test_counters_accumulate(self, live):
        server, _ = live
        before = server.stats()
        http_get(server.url + "/capabilities")
        after = server.stats()
        assert after["requests"] == before["requests"] + 1


def _raw_post(url: str, payload: bytes):
    req = urllib.request.Request(
        url, data=payload, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=2.0) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def _raw_localize(url: str, obj: dict):
    payload = json.dumps(obj).encode()
    status, doc = _raw_post(url + "/localize", payload)
    return status, json.dumps(doc)
