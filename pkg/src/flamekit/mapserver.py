"""Map server: landmark localization and waypoint serving over HTTP.

A map file bundles everything one server needs: a landmark table for
localization, a waypoint graph for navigation, and an optional geodetic
region used only when registering the server under geo-domains.  Landmark
data never leaves the server; responses carry poses and waypoints only.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .cells import LatLng, Polygon
from .posemath import DegenerateGeometryError, PointCorrespondences, Pose, kabsch

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
CUE_LANDMARKS_V1 = "landmark-observations/v1"

# Confidence scale when a map does not pin one down: exp(-rmsd / 0.05 m)
# drops below 0.5 once residuals pass ~3.5 cm, which matches what indoor
# visual maps tolerate before poses drift visibly.
DEFAULT_SIGMA_M = 0.05

Vec3 = tuple[float, float, float]


class MapFileError(ValueError):
    """Raised when a map file fails schema or consistency checks."""


class MapApiError(RuntimeError):
    """Transport or protocol failure talking to a map server."""


def _vec3(value) -> Vec3:
    x, y, z = value
    return (float(x), float(y), float(z))


@dataclass(frozen=True)
class Waypoint:
    name: str
    position: Vec3
    meta: tuple[tuple[str, str], ...] = ()

    def meta_dict(self) -> dict[str, str]:
        return dict(self.meta)


@dataclass(frozen=True)
class MapFile:
    """Immutable in-memory form of one server's map."""

    map_id: str
    landmarks: tuple[tuple[str, Vec3], ...]
    waypoints: tuple[Waypoint, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()
    frame_note: str = ""
    region: tuple[tuple[float, float], ...] | None = None
    confidence_sigma_m: float = DEFAULT_SIGMA_M

    def __post_init__(self):
        if not self.map_id:
            raise MapFileError("map_id must be non-empty")
        if len(self.landmarks) < 3:
            raise MapFileError("a map needs at least 3 landmarks to localize against")
        ids = [lid for lid, _ in self.landmarks]
        if len(set(ids)) != len(ids):
            raise MapFileError("duplicate landmark id")
        names = [w.name for w in self.waypoints]
        if len(set(names)) != len(names):
            raise MapFileError("duplicate waypoint name")
        known = set(names)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise MapFileError(f"edge ({a}, {b}) references an unknown waypoint")
        if self.confidence_sigma_m <= 0:
            raise MapFileError("confidence_sigma_m must be positive")
        if self.region is not None and len(self.region) < 3:
            raise MapFileError("region needs at least 3 vertices")

    def landmark_index(self) -> dict[str, Vec3]:
        return dict(self.landmarks)

    def waypoint(self, name: str) -> Waypoint:
        for w in self.waypoints:
            if w.name == name:
                return w
        raise KeyError(name)

    def region_polygon(self) -> Polygon:
        if self.region is None:
            raise MapFileError(f"map {self.map_id} has no region")
        return Polygon([LatLng(lat, lng) for lat, lng in self.region])

    def to_json(self) -> str:
        doc: dict = {
            "v": PROTOCOL_VERSION,
            "map_id": self.map_id,
            "frame_note": self.frame_note,
            "confidence_sigma_m": self.confidence_sigma_m,
            "landmarks": [
                {"id": lid, "position": list(pos)} for lid, pos in self.landmarks
            ],
            "waypoints": [
                {"name": w.name, "position": list(w.position), "meta": w.meta_dict()}
                for w in self.waypoints
            ],
            "edges": [list(e) for e in self.edges],
        }
        if self.region is not None:
            doc["region"] = {"vertices": [list(v) for v in self.region]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MapFile":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MapFileError(f"not valid JSON: {exc}") from exc
        try:
            _validator().validate(doc)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise MapFileError(f"schema violation at /{path}: {exc.message}") from exc
        region = None
        if "region" in doc:
            region = tuple(
                (float(lat), float(lng)) for lat, lng in doc["region"]["vertices"]
            )
        return cls(
            map_id=doc["map_id"],
            landmarks=tuple(
                (lm["id"], _vec3(lm["position"])) for lm in doc["landmarks"]
            ),
            waypoints=tuple(
                Waypoint(
                    name=w["name"],
                    position=_vec3(w["position"]),
                    meta=tuple(sorted(w.get("meta", {}).items())),
                )
                for w in doc["waypoints"]
            ),
            edges=tuple((a, b) for a, b in doc["edges"]),
            frame_note=doc.get("frame_note", ""),
            region=region,
            confidence_sigma_m=float(doc.get("confidence_sigma_m", DEFAULT_SIGMA_M)),
        )


_SCHEMA_VALIDATOR: jsonschema.Draft202012Validator | None = None


def _validator() -> jsonschema.Draft202012Validator:
    global _SCHEMA_VALIDATOR
    if _SCHEMA_VALIDATOR is None:
        text = (
            resources.files("flamekit") / "schemas" / "mapfile.schema.json"
        ).read_text()
        _SCHEMA_VALIDATOR = jsonschema.Draft202012Validator(json.loads(text))
    return _SCHEMA_VALIDATOR


def load_map(path: str | Path) -> MapFile:
    return MapFile.from_json(Path(path).read_text())


def save_map(map_file: MapFile, path: str | Path) -> None:
    Path(path).write_text(map_file.to_json())


@dataclass(frozen=True)
class LocationCues:
    """Landmark observations expressed in the device frame."""

    observations: tuple[tuple[str, Vec3], ...]
    timestamp: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "observations": [
                {"id": lid, "position": list(pos)} for lid, pos in self.observations
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LocationCues":
        obs = tuple(
            (str(o["id"]), _vec3(o["position"])) for o in obj.get("observations", ())
        )
        return cls(observations=obs, timestamp=float(obj.get("timestamp", 0.0)))


@dataclass(frozen=True)
class LocalizeResult:
    """Outcome of one localization attempt.

    ``pose`` is the device pose in the map frame when localization worked
    and None otherwise.  A failed attempt is an ordinary result, not an
    exception: the server answered, it just could not place the device.
    """

    pose: Pose | None
    confidence: float
    matched_count: int
    rmsd_m: float | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.pose is not None


def localize(cues: LocationCues, map_file: MapFile) -> LocalizeResult:
    """Estimate the device pose from landmark correspondences.

    Observation ids are intersected with the map's landmark table; three
    matches are the minimum for a rigid fit.  Confidence decays with the
    fit residual: exp(-rmsd / sigma), clamped to [0, 1].
    """
    index = map_file.landmark_index()
    device_pts = []
    map_pts = []
    for lid, pos in cues.observations:
        hit = index.get(lid)
        if hit is not None:
            device_pts.append(pos)
            map_pts.append(hit)
    matched = len(device_pts)
    if matched < 3:
        return LocalizeResult(
            pose=None, confidence=0.0, matched_count=matched,
            error="insufficient-matches",
        )
    pairs = PointCorrespondences(np.asarray(device_pts), np.asarray(map_pts))
    try:
        pose, rmsd = kabsch(pairs)
    except DegenerateGeometryError:
        return LocalizeResult(
            pose=None, confidence=0.0, matched_count=matched,
            error="degenerate-geometry",
        )
    confidence = min(1.0, max(0.0, float(np.exp(-rmsd / map_file.confidence_sigma_m))))
    return LocalizeResult(
        pose=pose, confidence=confidence, matched_count=matched, rmsd_m=rmsd,
    )


def capabilities(map_file: MapFile) -> dict:
    return {
        "v": PROTOCOL_VERSION,
        "map_id": map_file.map_id,
        "cue_types": [CUE_LANDMARKS_V1],
        "waypoints_available": bool(map_file.waypoints),
    }


def waypoint_graph(map_file: MapFile) -> dict:
    """Public navigation view of a map.  Carries no landmark data."""
    return {
        "v": PROTOCOL_VERSION,
        "map_id": map_file.map_id,
        "frame_note": map_file.frame_note,
        "waypoints": [
            {"name": w.name, "position": list(w.position), "meta": w.meta_dict()}
            for w in map_file.waypoints
        ],
        "edges": [list(e) for e in map_file.edges],
    }


def _encode(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode() + b"\n"


def _localize_body(result: LocalizeResult) -> dict:
    body: dict = {
        "v": PROTOCOL_VERSION,
        "ok": result.ok,
        "confidence": result.confidence,
        "matched_count": result.matched_count,
    }
    if result.ok:
        body["pose"] = result.pose.to_json()
        body["rmsd_m"] = result.rmsd_m
    else:
        body["error"] = result.error
    return body


class _Handler(BaseHTTPRequestHandler):
    # Set by the owning MapServer; handlers run one per request thread.
    server_version = "flamekit-map/1"
    protocol_version = "HTTP/1.1"

    def _send(self, status: int, payload: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _error(self, status: int, code: str, detail: str | None = None) -> None:
        body = {"v": PROTOCOL_VERSION, "error": code}
        if detail:
            body["detail"] = detail
        self.owner._bump("errors")
        self._send(status, _encode(body))

    @property
    def owner(self) -> "MapServer":
        return self.server.owner  # type: ignore[attr-defined]

    def do_GET(self):  # noqa: N802  (http.server API)
        self.owner._bump("requests")
        if self.path == "/capabilities":
            self._send(200, self.owner.capability_bytes)
        elif self.path == "/waypoints":
            self._send(200, self.owner.waypoint_bytes)
        else:
            self._error(404, "not-found")

    def do_POST(self):  # noqa: N802
        self.owner._bump("requests")
        if self.path != "/localize":
            self._error(404, "not-found")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            doc = json.loads(raw)
            if not isinstance(doc, dict):
                raise ValueError("body must be a JSON object")
            cues = LocationCues.from_json_obj(doc.get("cues", doc))
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            self._error(400, "bad-request", str(exc))
            return
        result = localize(cues, self.owner.map_file)
        self.owner._bump("localizations")
        self._send(200, _encode(_localize_body(result)))

    def log_message(self, fmt, *args):  # keep request spam out of stderr
        log.debug("%s " + fmt, self.address_string(), *args)


class _Httpd(ThreadingHTTPServer):
    daemon_threads = True
    request_queue_size = 128    # 50 clients connecting at once must not be reset


class MapServer:
    """Serves one map over a small JSON-over-HTTP API.

    Routes: GET /capabilities, POST /localize, GET /waypoints.  The
    capability and waypoint bodies are rendered once at startup so every
    request returns identical bytes.
    """

    def __init__(self, endpoint: tuple[str, int], map_file: MapFile):
        self.map_file = map_file
        self.capability_bytes = _encode(capabilities(map_file))
        self.waypoint_bytes = _encode(waypoint_graph(map_file))
        self._counters: dict[str, int] = {
            "requests": 0, "localizations": 0, "errors": 0,
        }
        self._lock = threading.Lock()
        self._httpd = _Httpd(endpoint, _Handler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self.endpoint: tuple[str, int] = self._httpd.server_address[:2]
        self._thread = threading.Thread(
            target=self._httpd.serve_forever, name=f"map-{map_file.map_id}", daemon=True
        )
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self.endpoint
        return f"http://{host}:{port}"

    def _bump(self, key: str) -> None:
        with self._lock:
            self._counters[key] += 1

    def stats(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def close(self) -> None:
        self._httpd.shutdown()
        self._thread.join(timeout=5.0)
        self._httpd.server_close()

    def __enter__(self) -> "MapServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(endpoint: tuple[str, int], map_file: MapFile) -> MapServer:
    """Start a map server; endpoint port 0 picks a free port."""
    return MapServer(endpoint, map_file)


class MapApi:
    """Typed client for one map server endpoint."""

    def __init__(self, url: str, *, timeout: float = 2.0):
        self.url = url.rstrip("/")
        self.timeout = timeout

    def _request(self, path: str, body: bytes | None = None) -> dict:
        req = urllib.request.Request(
            self.url + path,
            data=body,
            headers={"Content-Type": "application/json"} if body else {},
            method="POST" if body is not None else "GET",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                detail = json.loads(exc.read()).get("error", "")
            except Exception:
                detail = ""
            raise MapApiError(f"{self.url}{path}: HTTP {exc.code} {detail}") from exc
        except (urllib.error.URLError, socket.timeout, OSError, ValueError) as exc:
            raise MapApiError(f"{self.url}{path}: {exc}") from exc

    def capabilities(self) -> dict:
        return self._request("/capabilities")

    def waypoints(self) -> dict:
        return self._request("/waypoints")

    def localize(self, cues: LocationCues) -> LocalizeResult:
        body = _encode({"v": PROTOCOL_VERSION, "cues": cues.to_json_obj()})
        doc = self._request("/localize", body)
        if doc.get("ok"):
            pose = Pose.from_json(doc["pose"])
            return LocalizeResult(
                pose=pose,
                confidence=float(doc["confidence"]),
                matched_count=int(doc["matched_count"]),
                rmsd_m=float(doc["rmsd_m"]),
            )
        return LocalizeResult(
            pose=None,
            confidence=float(doc.get("confidence", 0.0)),
            matched_count=int(doc.get("matched_count", 0)),
            error=doc.get("error", "localization-failed"),
        )
