"""Command line entry points and the JSON tools API.

Every subcommand is orchestration: parse flags, call the library, print.
The tools API handlers call the same builder functions the one-shot
commands print from, so a UI talking to `serve-tools` can never drift
from what the CLI emits.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import signal
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import __version__
from .cells import Cap, CellId, CoveringParams, LatLng, Polygon, cover, cells_to_geojson
from .discovery import DiscoveryError, Resolver
from .dnswire import FlameRecord
from .geodomains import (
    DEFAULT_QUERY_COVERING,
    DEFAULT_REGISTRATION_COVERING,
    DEFAULT_SUFFIX,
    CoarseLocation,
    QueryConfig,
    default_soa,
    query_set,
    render_zone,
    zone_records,
)
from .mapserver import (
    MapApi,
    MapApiError,
    MapFile,
    MapFileError,
    serve as serve_map,
    waypoint_graph,
)
from .nameserver import ZoneLoadError, load_zone, serve as serve_dns
from .navgraph import NavGraphError, route as graph_route, stitch
from .sim import HarnessError, load_world, replay_discovery, report, run

log = logging.getLogger(__name__)


class UsageError(Exception):
    """Bad flags or malformed input files; maps to exit code 2."""


# ---------------------------------------------------------------- inputs

def _parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _parse_latlng_radius(text: str) -> tuple[LatLng, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected LAT,LNG,RADIUS_M, got {text!r}")
    try:
        lat, lng, radius = (float(p) for p in parts)
        return LatLng(lat, lng), radius
    except ValueError as exc:
        raise UsageError(f"bad location {text!r}: {exc}") from exc


def _parse_cap(text: str) -> Cap:
    center, radius = _parse_latlng_radius(text)
    try:
        return Cap.from_center_radius(center, radius)
    except ValueError as exc:
        raise UsageError(f"bad cap {text!r}: {exc}") from exc


def _polygon_from_geojson(doc) -> Polygon:
    """Accept a bare Polygon geometry, a Feature, or a one-feature collection."""
    if not isinstance(doc, dict):
        raise UsageError("GeoJSON root must be an object")
    kind = doc.get("type")
    if kind == "FeatureCollection":
        features = doc.get("features") or []
        if len(features) != 1:
            raise UsageError(
                f"need exactly one feature, got {len(features)}")
        return _polygon_from_geojson(features[0])
    if kind == "Feature":
        return _polygon_from_geojson(doc.get("geometry"))
    if kind != "Polygon":
        raise UsageError(f"unsupported GeoJSON type {kind!r}")
    rings = doc.get("coordinates")
    if not isinstance(rings, list) or not rings:
        raise UsageError("Polygon has no coordinates")
    if len(rings) > 1:
        raise UsageError("Polygon holes are not supported")
    ring = rings[0]
    if len(ring) >= 2 and ring[0] == ring[-1]:
        ring = ring[:-1]    # GeoJSON rings repeat the first vertex
    try:
        return Polygon(tuple(LatLng(float(lat), float(lng))
                             for lng, lat in ring))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad polygon: {exc}") from exc


def _load_geojson(path: str) -> Polygon:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc
    return _polygon_from_geojson(doc)


def _region_from_args(args):
    if bool(args.cap) == bool(args.region):
        raise UsageError("give exactly one of --cap or --region")
    if args.cap:
        return _parse_cap(args.cap)
    return _load_geojson(args.region)


def _covering_from_args(args, default: CoveringParams) -> CoveringParams:
    try:
        return CoveringParams(
            max_cells=args.max_cells if args.max_cells is not None
            else default.max_cells,
            min_level=args.min_level if args.min_level is not None
            else default.min_level,
            max_level=args.max_level if args.max_level is not None
            else default.max_level,
            mode=args.mode or default.mode,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _print_doc(doc: dict) -> None:
    sys.stdout.write(_doc_bytes(doc).decode())


def _doc_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


# ------------------------------------------------- shared result builders

def cover_doc(region, params: CoveringParams) -> dict:
    cells = cover(region, params)
    return {
        "tokens": [c.token() for c in cells],
        "geojson": cells_to_geojson(cells),
    }


def zonefile_text(region, record: FlameRecord, *, suffix: str,
                  ttl: int, params: CoveringParams) -> str:
    records = zone_records(region, record, params, suffix=suffix, ttl=ttl)
    return render_zone(suffix, records, soa=default_soa(suffix))


def queryset_doc(loc: CoarseLocation, cfg: QueryConfig) -> dict:
    domains = query_set(loc, cfg)
    return {
        "names": [d.name() for d in domains],
        "geojson": cells_to_geojson([d.cell() for d in domains]),
    }


def _flame_record_from_args(args) -> FlameRecord:
    if bool(args.mcname) == bool(args.mns):
        raise UsageError("give exactly one of --mcname or --mns")
    if args.mcname:
        return FlameRecord("MCNAME", args.mcname)
    return FlameRecord("MNS", args.mns)


# ------------------------------------------------------------ subcommands

def _cmd_cover(args) -> int:
    region = _region_from_args(args)
    params = _covering_from_args(args, CoveringParams())
    _print_doc(cover_doc(region, params))
    return 0


def _cmd_zonefile(args) -> int:
    region = _region_from_args(args)
    params = _covering_from_args(args, DEFAULT_REGISTRATION_COVERING)
    text = zonefile_text(region, _flame_record_from_args(args),
                         suffix=args.suffix, ttl=args.ttl, params=params)
    sys.stdout.write(text)
    return 0


def _announce(service: str, addr: tuple[str, int], **extra) -> None:
    doc = {"event": "listening", "service": service,
           "addr": f"{addr[0]}:{addr[1]}", **extra}
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    sys.stdout.flush()
    log.info("%s listening on %s:%d", service, addr[0], addr[1])


def _block_until_interrupt() -> None:
    def raise_interrupt(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, raise_interrupt)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass


def _cmd_serve_dns(args) -> int:
    zones = []
    for path in args.zone:
        try:
            zones.append(load_zone(Path(path).read_text()))
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc}") from exc
        except ZoneLoadError as exc:
            raise UsageError(f"{path}: {exc}") from exc
    with serve_dns(_parse_endpoint(args.listen), zones) as server:
        _announce("dns", server.endpoint,
                  zones=[z.origin for z in zones])
        _block_until_interrupt()
    return 0


def _cmd_serve_map(args) -> int:
    try:
        map_file = MapFile.from_json(Path(args.map).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {args.map}: {exc}") from exc
    except MapFileError as exc:
        raise UsageError(f"{args.map}: {exc}") from exc
    with serve_map(_parse_endpoint(args.listen), map_file) as server:
        _announce("map", server.endpoint, map_id=map_file.map_id,
                  url=server.url)
        _block_until_interrupt()
    return 0


def _cmd_simulate(args) -> int:
    try:
        world = load_world(args.scenario)
    except OSError as exc:
        raise UsageError(f"cannot read {args.scenario}: {exc}") from exc
    except HarnessError as exc:
        raise UsageError(f"{args.scenario}: {exc}") from exc
    if args.seed is not None:
        world = dataclasses.replace(world, rng_seed=args.seed)
    metrics = replay_discovery(world) if args.mode == "discovery" else run(world)
    written = report(metrics, args.out)
    _print_doc({
        "aggregates": metrics.aggregates(),
        "out_dir": str(Path(args.out)),
        "files": sorted(p.name for p in written),
    })
    return 0


def _route_graphs(args) -> list[tuple[str, dict]]:
    if bool(args.maps) == bool(args.at):
        raise UsageError("give exactly one of --maps or --at")
    graphs: list[tuple[str, dict]] = []
    if args.maps:
        paths = sorted(Path(args.maps).glob("*.json"))
        if not paths:
            raise UsageError(f"no map files under {args.maps}")
        for path in paths:
            try:
                map_file = MapFile.from_json(path.read_text())
            except (OSError, MapFileError) as exc:
                raise UsageError(f"{path}: {exc}") from exc
            graphs.append((map_file.map_id, waypoint_graph(map_file)))
        return graphs
    if not args.resolver:
        raise UsageError("--at needs --resolver HOST:PORT")
    center, radius = _parse_latlng_radius(args.at)
    try:
        loc = CoarseLocation(center, radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with Resolver(_parse_endpoint(args.resolver)) as resolver:
        found = resolver.discover(
            loc, QueryConfig(child_levels=args.child_levels,
                             suffix=args.suffix))
    for desc in found:
        graph = MapApi(desc.url).waypoints()
        graphs.append((graph["map_id"], graph))
    return graphs


def _cmd_route(args) -> int:
    graphs = _route_graphs(args)
    try:
        g = stitch(graphs)
        result = graph_route(g, args.src, args.dst)
    except NavGraphError as exc:
        raise UsageError(str(exc)) from exc
    _print_doc({
        "path": [[name, map_id] for name, map_id in result.path],
        "length_m": result.length_m if result.reachable else None,
        "reachable": result.reachable,
        "maps": sorted(map_id for map_id, _ in graphs),
        "warnings": list(g.warnings),
    })
    return 0


# ------------------------------------------------------------- tools API

_TOOLS_ROUTES = ("/cover", "/zonefile", "/queryset")


def _tools_region(doc: dict):
    cap = doc.get("cap")
    region = doc.get("region")
    if (cap is None) == (region is None):
        raise UsageError("give exactly one of cap or region")
    if cap is not None:
        try:
            return Cap.from_center_radius(
                LatLng(float(cap["lat"]), float(cap["lng"])),
                float(cap["radius_m"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"bad cap: {exc}") from exc
    return _polygon_from_geojson(region)


def _tools_params(doc: dict, default: CoveringParams) -> CoveringParams:
    given = doc.get("params") or {}
    if not isinstance(given, dict):
        raise UsageError("params must be an object")
    try:
        return CoveringParams(
            max_cells=int(given.get("max_cells", default.max_cells)),
            min_level=int(given.get("min_level", default.min_level)),
            max_level=int(given.get("max_level", default.max_level)),
            mode=given.get("mode", default.mode),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def tools_cover(doc: dict) -> dict:
    return cover_doc(_tools_region(doc), _tools_params(doc, CoveringParams()))


def tools_zonefile(doc: dict) -> dict:
    record = doc.get("record") or {}
    rtype, value = record.get("type"), record.get("value")
    if rtype not in ("MCNAME", "MNS") or not value:
        raise UsageError('record must be {"type": "MCNAME"|"MNS", "value": ...}')
    text = zonefile_text(
        _tools_region(doc), FlameRecord(rtype, str(value)),
        suffix=str(doc.get("suffix", DEFAULT_SUFFIX)),
        ttl=int(doc.get("ttl", 300)),
        params=_tools_params(doc, DEFAULT_REGISTRATION_COVERING))
    return {"zone": text}


def tools_queryset(doc: dict) -> dict:
    try:
        loc = CoarseLocation(
            LatLng(float(doc["lat"]), float(doc["lng"])),
            float(doc["radius_m"]))
        cfg = QueryConfig(
            child_levels=int(doc.get("child_levels", 0)),
            suffix=str(doc.get("suffix", DEFAULT_SUFFIX)))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    return queryset_doc(loc, cfg)


class _ToolsHandler(BaseHTTPRequestHandler):
    server_version = "flamekit-tools/1"
    protocol_version = "HTTP/1.1"

    def _send(self, status: int, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _error(self, status: int, message: str) -> None:
        self._send(status, _doc_bytes({"error": message}))

    def do_OPTIONS(self):  # noqa: N802  (http.server API)
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_POST(self):  # noqa: N802
        if self.path not in _TOOLS_ROUTES:
            self._error(404, f"unknown route {self.path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length))
            if not isinstance(doc, dict):
                raise UsageError("body must be a JSON object")
            handler = {"/cover": tools_cover,
                       "/zonefile": tools_zonefile,
                       "/queryset": tools_queryset}[self.path]
            result = handler(doc)
        except json.JSONDecodeError as exc:
            self._error(400, f"not valid JSON: {exc}")
            return
        except UsageError as exc:
            self._error(400, str(exc))
            return
        self._send(200, _doc_bytes(result))

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)


class _ToolsHttpd(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128


class ToolsServer:
    """JSON endpoints over the same builders the CLI prints from."""

    def __init__(self, endpoint: tuple[str, int]):
        self._httpd = _ToolsHttpd(endpoint, _ToolsHandler)
        self.endpoint: tuple[str, int] = self._httpd.server_address[:2]
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name="tools-api", daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self.endpoint
        return f"http://{host}:{port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._thread.join(timeout=5.0)
        self._httpd.server_close()

    def __enter__(self) -> "ToolsServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _cmd_serve_tools(args) -> int:
    with ToolsServer(_parse_endpoint(args.listen)) as server:
        _announce("tools", server.endpoint, routes=list(_TOOLS_ROUTES))
        _block_until_interrupt()
    return 0


# ------------------------------------------------------------------ main

def _add_covering_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-cells", type=int, default=None)
    p.add_argument("--min-level", type=int, default=None)
    p.add_argument("--max-level", type=int, default=None)
    p.add_argument("--mode", choices=("interior", "exterior"), default=None)


def _add_region_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cap", metavar="LAT,LNG,RADIUS_M", default=None)
    p.add_argument("--region", metavar="GEOJSON_FILE", default=None)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--suffix", default=DEFAULT_SUFFIX)
    common.add_argument("--resolver", metavar="HOST:PORT", default=None)
    common.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    common.add_argument("--seed", type=int, default=None)

    parser = argparse.ArgumentParser(
        prog="flamekit",
        description="Geo-domain tooling: coverings, zones, servers, simulation.")
    parser.add_argument("--version", action="version",
                        version=f"flamekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cover", parents=[common],
                       help="cover a cap or polygon with cells")
    _add_region_flags(p)
    _add_covering_flags(p)
    p.set_defaults(fn=_cmd_cover)

    p = sub.add_parser("zonefile", parents=[common],
                       help="registration zone text for a region")
    _add_region_flags(p)
    _add_covering_flags(p)
    p.add_argument("--mcname", metavar="URL", default=None)
    p.add_argument("--mns", metavar="HOST:PORT", default=None)
    p.add_argument("--ttl", type=int, default=300)
    p.set_defaults(fn=_cmd_zonefile)

    p = sub.add_parser("serve-dns", parents=[common],
                       help="authoritative DNS over UDP")
    p.add_argument("--zone", action="append", required=True,
                   metavar="ZONE_FILE")
    p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    p.set_defaults(fn=_cmd_serve_dns)

    p = sub.add_parser("serve-map", parents=[common],
                       help="map server over HTTP")
    p.add_argument("--map", required=True, metavar="MAP_JSON")
    p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    p.set_defaults(fn=_cmd_serve_map)

    p = sub.add_parser("simulate", parents=[common],
                       help="run a scenario and write reports")
    p.add_argument("--scenario", required=True, metavar="SCENARIO_JSON")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--mode", choices=("client", "discovery"),
                   default="client")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("route", parents=[common],
                       help="stitch waypoint graphs and route")
    p.add_argument("--maps", metavar="DIR", default=None)
    p.add_argument("--at", metavar="LAT,LNG,RADIUS_M", default=None,
                   help="discover map servers for this location instead "
                        "of reading files (needs --resolver)")
    p.add_argument("--child-levels", type=int, default=0)
    p.add_argument("--from", dest="src", required=True, metavar="WAYPOINT")
    p.add_argument("--to", dest="dst", required=True, metavar="WAYPOINT")
    p.set_defaults(fn=_cmd_route)

    p = sub.add_parser("serve-tools", parents=[common],
                       help="JSON tools API for interactive frontends")
    p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    p.set_defaults(fn=_cmd_serve_tools)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DiscoveryError, MapApiError, HarnessError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
