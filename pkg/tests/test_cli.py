"""CLI subcommands and the tools API: wrappers must equal library calls."""

import json
import subprocess
import sys
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from flamekit.cells import Cap, CoveringParams, LatLng, cover
from flamekit.cli import main
from flamekit.geodomains import CoarseLocation, query_set
from flamekit.nameserver import load_zone
from flamekit.sim import load_world, world_to_latlng

FIXTURE = Path(__file__).resolve().parent.parent / "fixtures" / "campus"
CAP = "40.4433,-79.9436,25"


def run_cli(*argv):
    out = subprocess.run([sys.executable, "-m", "flamekit.cli", *argv],
                         capture_output=True, text=True)
    return out.returncode, out.stdout, out.stderr


def start_server(*argv):
    proc = subprocess.Popen([sys.executable, "-m", "flamekit.cli", *argv],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                            text=True)
    banner = json.loads(proc.stdout.readline())
    assert banner["event"] == "listening"
    return proc, banner


def post(url, doc):
    req = urllib.request.Request(url, data=json.dumps(doc).encode(),
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


class TestCover:
    def test_cap_equals_library_call(self, capsys):
        assert main(["cover", "--cap", CAP, "--max-cells", "12",
                     "--mode", "exterior"]) == 0
        doc = json.loads(capsys.readouterr().out)
        want = cover(Cap.from_center_radius(LatLng(40.4433, -79.9436), 25.0),
                     CoveringParams(max_cells=12, mode="exterior"))
        assert doc["tokens"] == [c.token() for c in want]

    def test_geojson_cells_are_quads(self, capsys):
        assert main(["cover", "--cap", CAP]) == 0
        doc = json.loads(capsys.readouterr().out)
        for feature in doc["geojson"]["features"]:
            ring = feature["geometry"]["coordinates"][0]
            assert len(ring) == 5 and ring[0] == ring[-1]

    def test_polygon_region_roundtrip(self, capsys, tmp_path):
        geojson = {
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [[
                [-79.9440, 40.4430], [-79.9430, 40.4430],
                [-79.9430, 40.4440], [-79.9440, 40.4440],
                [-79.9440, 40.4430],
            ]]},
        }
        path = tmp_path / "region.geojson"
        path.write_text(json.dumps(geojson))
        assert main(["cover", "--region", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["tokens"]

    def test_malformed_geojson_exits_2(self, tmp_path):
        path = tmp_path / "bad.geojson"
        path.write_text("{not json")
        rc, out, err = run_cli("cover", "--region", str(path))
        assert rc == 2 and "not valid JSON" in err
        path.write_text(json.dumps({"type": "Point", "coordinates": [0, 0]}))
        rc, out, err = run_cli("cover", "--region", str(path))
        assert rc == 2 and "unsupported" in err

    def test_cap_and_region_together_exit_2(self, tmp_path):
        rc, _, err = run_cli("cover", "--cap", CAP, "--region", "x.json")
        assert rc == 2 and "exactly one" in err

    def test_bad_flag_exits_2(self):
        rc, _, _ = run_cli("cover", "--cap", CAP, "--mode", "sideways")
        assert rc == 2


class TestZonefile:
    def test_deterministic_and_loadable(self, capsys):
        outs = []
        for _ in range(2):
            assert main(["zonefile", "--cap", CAP,
                         "--mcname", "http://maps.example/api"]) == 0
            outs.append(capsys.readouterr().out)
        assert outs[0] == outs[1]
        zone = load_zone(outs[0])
        assert zone.origin == "flame.test"
        assert zone.records

    def test_mns_record(self, capsys):
        assert main(["zonefile", "--cap", CAP, "--suffix", "maps.example",
                     "--mns", "127.0.0.1:5353"]) == 0
        text = capsys.readouterr().out
        assert "MNS 127.0.0.1:5353" in text
        assert load_zone(text).origin == "maps.example"

    def test_record_required(self):
        rc, _, err = run_cli("zonefile", "--cap", CAP)
        assert rc == 2 and "exactly one" in err


class TestRoute:
    def test_fixture_route_matches_known_optimum(self, capsys):
        assert main(["route", "--maps", str(FIXTURE / "maps"),
                     "--from", "m0/center", "--to", "m2/center"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert [n for n, _ in doc["path"]] == [
            "m0/center", "door-01n", "m1/center", "door-12n", "m2/center"]
        assert doc["reachable"]

    def test_unknown_waypoint_exits_2(self):
        rc, _, err = run_cli("route", "--maps", str(FIXTURE / "maps"),
                             "--from", "m0/center", "--to", "nowhere")
        assert rc == 2 and "unknown waypoint" in err

    def test_unreachable_is_not_an_error(self, capsys, tmp_path):
        for name in ("m0.json", "m2.json"):
            (tmp_path / name).write_text((FIXTURE / "maps" / name).read_text())
        assert main(["route", "--maps", str(tmp_path),
                     "--from", "m0/center", "--to", "m2/center"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert not doc["reachable"] and doc["length_m"] is None


class TestSimulate:
    def test_writes_manifest_and_figure_data(self, tmp_path, capsys):
        assert main(["simulate", "--scenario",
                     str(FIXTURE / "scenario.json"), "--out",
                     str(tmp_path / "out"), "--mode", "discovery"]) == 0
        doc = json.loads(capsys.readouterr().out)
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert set(doc["files"]) == set(manifest["files"]) | {"manifest.json"}
        for name in ("metrics.json", "summary.json", "steps.csv",
                     "fig_geodomains_per_step.csv", "fig_hit_ratio_hist.csv",
                     "fig_selection_timeline.csv"):
            assert (tmp_path / "out" / name).exists()

    def test_seed_override_changes_world_hash(self, tmp_path):
        rc, out, _ = run_cli("simulate", "--scenario",
                             str(FIXTURE / "scenario.json"),
                             "--out", str(tmp_path / "a"),
                             "--mode", "discovery", "--seed", "99")
        assert rc == 0
        a = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert a["seed"] == 99

    def test_bad_scenario_exits_2(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{}")
        rc, _, err = run_cli("simulate", "--scenario", str(path),
                             "--out", str(tmp_path / "out"))
        assert rc == 2 and "schema violation" in err


@pytest.fixture(scope="module")
def tools_server():
    proc, banner = start_server("serve-tools", "--listen", "127.0.0.1:0")
    yield f"http://{banner['addr']}"
    proc.terminate()
    proc.wait(timeout=5)


class TestToolsApi:
    def test_cover_matches_cli_bytes(self, tools_server):
        rc, out, _ = run_cli("cover", "--cap", CAP)
        assert rc == 0
        status, body = post(tools_server + "/cover", {
            "cap": {"lat": 40.4433, "lng": -79.9436, "radius_m": 25}})
        assert status == 200 and body.decode() == out

    def test_zonefile_matches_cli_bytes(self, tools_server):
        rc, out, _ = run_cli("zonefile", "--cap", CAP,
                             "--mcname", "http://maps.example/api")
        assert rc == 0
        status, body = post(tools_server + "/zonefile", {
            "cap": {"lat": 40.4433, "lng": -79.9436, "radius_m": 25},
            "record": {"type": "MCNAME", "value": "http://maps.example/api"}})
        assert status == 200 and json.loads(body)["zone"] == out

    def test_queryset_matches_library(self, tools_server):
        status, body = post(tools_server + "/queryset", {
            "lat": 40.4433, "lng": -79.9436, "radius_m": 10})
        assert status == 200
        names = [d.name() for d in query_set(
            CoarseLocation(LatLng(40.4433, -79.9436), 10.0))]
        doc = json.loads(body)
        assert doc["names"] == names
        assert len(doc["geojson"]["features"]) == len(names)

    def test_validation_errors_are_400(self, tools_server):
        status, body = post(tools_server + "/cover", {"cap": {"lat": 1}})
        assert status == 400 and "bad cap" in json.loads(body)["error"]
        status, body = post(tools_server + "/zonefile", {
            "cap": {"lat": 1, "lng": 2, "radius_m": 3}, "record": {}})
        assert status == 400
        status, _ = post(tools_server + "/nope", {})
        assert status == 404

    def test_preflight_allows_ui_origins(self, tools_server):
        req = urllib.request.Request(tools_server + "/cover",
                                     method="OPTIONS")
        with urllib.request.urlopen(req, timeout=5) as resp:
            assert resp.status == 204
            assert resp.headers["Access-Control-Allow-Origin"] == "*"
            assert "POST" in resp.headers["Access-Control-Allow-Methods"]


class TestEndToEnd:
    def test_discovered_route_matches_fixture_optimum(self, tmp_path):
        world = load_world(FIXTURE / "scenario.json")
        servers = []
        try:
            urls = []
            for sm in world.maps[:2]:
                proc, banner = start_server(
                    "serve-map", "--map",
                    str(FIXTURE / "maps" / f"{sm.map_id}.json"),
                    "--listen", "127.0.0.1:0")
                servers.append(proc)
                urls.append(banner["url"])

            zone_text = []
            for sm, url in zip(world.maps[:2], urls):
                ll = world_to_latlng(world.origin, *sm.center_xy)
                rc, out, err = run_cli(
                    "zonefile", "--cap", f"{ll.lat},{ll.lng},{sm.radius_m}",
                    "--mcname", url)
                assert rc == 0, err
                if zone_text:
                    out = "".join(
                        line for line in out.splitlines(keepends=True)
                        if not line.startswith("$") and " SOA " not in line)
                zone_text.append(out)
            zone_path = tmp_path / "campus.zone"
            zone_path.write_text("".join(zone_text))

            dns, banner = start_server("serve-dns", "--zone", str(zone_path),
                                       "--listen", "127.0.0.1:0")
            servers.append(dns)

            mid = world_to_latlng(
                world.origin,
                (world.maps[0].center_xy[0] + world.maps[1].center_xy[0]) / 2,
                0.0)
            rc, out, err = run_cli(
                "route", "--resolver", banner["addr"],
                "--at", f"{mid.lat},{mid.lng},25", "--child-levels", "2",
                "--from", "m0/center", "--to", "m1/center")
            assert rc == 0, err
            doc = json.loads(out)
            assert [n for n, _ in doc["path"]] == [
                "m0/center", "door-01n", "m1/center"]
            assert doc["maps"] == ["m0", "m1"]
        finally:
            for proc in servers:
                proc.terminate()
            for proc in servers:
                proc.wait(timeout=5)
