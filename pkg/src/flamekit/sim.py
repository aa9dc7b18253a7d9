"""Deterministic campus simulation: real servers, synthetic world.

The harness builds a small world (maps with ground-truth poses, a device
walking between them, coarse location fixes on a phone-like refresh
schedule), boots the actual nameserver and map servers on loopback, and
drives the actual client. Randomness flows from one seed and the
resolver runs on a simulated clock, so two runs of the same world
produce byte-identical metrics; only wall-clock latencies (kept out of
the report) differ.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cells import EARTH_RADIUS_M, CellId, LatLng
from .client import ClientConfig, FlameClient, StepInput
from .discovery import DiscoveryError, Resolver
from .dnswire import FlameRecord, format_flame_record
from .geodomains import (
    CoarseLocation,
    QueryConfig,
    ZoneRecord,
    cell_to_geodomain,
    default_soa,
    query_set,
    render_zone,
    zone_records,
)
from .mapserver import LocationCues, MapFile, Waypoint, serve as serve_map
from .nameserver import NameServer, load_zone
from .posemath import Pose

WARMUP_STEPS = 5
# 95% of a 2-D isotropic Gaussian falls within sqrt(chi2_0.95(2)) sigma
_R95_SIGMA = math.sqrt(5.991464547107979)


class HarnessError(RuntimeError):
    """A simulation component failed to start or a world is unusable."""


def world_to_latlng(origin: tuple[float, float], x: float, y: float) -> LatLng:
    """East/north meters around `origin` to geodetic, tangent-plane flat."""
    lat0, lng0 = origin
    lat = lat0 + math.degrees(y / EARTH_RADIUS_M)
    lng = lng0 + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return LatLng(lat, lng)


@dataclass(frozen=True)
class SimMap:
    """One venue: its map file, ground-truth frame, and footprint."""

    map_file: MapFile
    pose: Pose                       # G_m: map frame -> world frame
    center_xy: tuple[float, float]
    radius_m: float

    @property
    def map_id(self) -> str:
        return self.map_file.map_id

    def contains_xy(self, x: float, y: float) -> bool:
        return math.dist((x, y), self.center_xy) <= self.radius_m

    def landmark_world(self) -> list[tuple[str, np.ndarray]]:
        return [(lid, self.pose.transform_point(np.asarray(pos)))
                for lid, pos in self.map_file.landmarks]


@dataclass(frozen=True)
class WorldSpec:
    rng_seed: int
    origin: tuple[float, float]              # lat, lng of world (0, 0)
    maps: tuple[SimMap, ...]
    trajectory: tuple[tuple[float, Pose], ...]   # strictly increasing t
    suffix: str = "flame.test"
    r_vis_m: float = 10.0
    obs_noise_m: float = 0.0
    outdoor_r95_m: tuple[float, float] = (5.0, 30.0)
    indoor_r95_m: tuple[float, float] = (15.0, 60.0)
    # coarse fixes arrive like a phone location API: a new sample when the
    # device has moved enough or the last one has aged out, else the
    # previous fix repeats
    fix_refresh_m: float = 5.0
    fix_refresh_s: float = 45.0
    vio_offset: Pose = field(default_factory=Pose.identity)
    vio_drift_per_m: float = 0.0
    nameservers: int = 1
    soa_minimum_s: int = 300
    txt_ttl_s: int = 300

    def __post_init__(self):
        if not self.maps:
            raise HarnessError("a world needs at least one map")
        ids = [m.map_id for m in self.maps]
        if len(set(ids)) != len(ids):
            raise HarnessError("duplicate map id")
        times = [t for t, _ in self.trajectory]
        if len(times) < 2 or any(b <= a for a, b in zip(times, times[1:])):
            raise HarnessError("trajectory timestamps must strictly increase")
        if self.nameservers not in (1, 2):
            raise HarnessError("nameservers must be 1 or 2")
        for m in self.maps:
            if m.map_file.region is None:
                raise HarnessError(f"map {m.map_id} has no region to register")

    def pose_at(self, t: float) -> Pose:
        for ts, pose in self.trajectory:
            if ts == t:
                return pose
        raise HarnessError(f"no trajectory sample at t={t}")

    def indoor_at(self, x: float, y: float) -> bool:
        return any(m.contains_xy(x, y) for m in self.maps)

    def best_map_at(self, x: float, y: float, z: float = 0.0) -> str | None:
        """Ground truth: containing region with the most visible landmarks."""
        best: tuple[int, str] | None = None
        device = np.array([x, y, z])
        for m in self.maps:
            if not m.contains_xy(x, y):
                continue
            visible = sum(
                1 for _, world_pos in m.landmark_world()
                if float(np.linalg.norm(world_pos - device)) <= self.r_vis_m)
            # most landmarks wins; ties go to the lexically first map
            if best is None or (-visible, m.map_id) < (-best[0], best[1]):
                best = (visible, m.map_id)
        return None if best is None else best[1]

    def to_json(self) -> str:
        doc = {
            "v": 1,
            "rng_seed": self.rng_seed,
            "origin": {"lat": self.origin[0], "lng": self.origin[1]},
            "suffix": self.suffix,
            "r_vis_m": self.r_vis_m,
            "obs_noise_m": self.obs_noise_m,
            "outdoor_r95_m": list(self.outdoor_r95_m),
            "indoor_r95_m": list(self.indoor_r95_m),
            "fix_refresh_m": self.fix_refresh_m,
            "fix_refresh_s": self.fix_refresh_s,
            "vio_offset": self.vio_offset.to_json(),
            "vio_drift_per_m": self.vio_drift_per_m,
            "nameservers": self.nameservers,
            "soa_minimum_s": self.soa_minimum_s,
            "txt_ttl_s": self.txt_ttl_s,
            "maps": [
                {
                    "map": json.loads(m.map_file.to_json()),
                    "pose": m.pose.to_json(),
                    "center_xy": list(m.center_xy),
                    "radius_m": m.radius_m,
                }
                for m in self.maps
            ],
            "trajectory": [
                {"t": t, "pose": pose.to_json()} for t, pose in self.trajectory
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "WorldSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise HarnessError(f"scenario is not valid JSON: {exc}") from exc
        try:
            _validator().validate(doc)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise HarnessError(
                f"scenario schema violation at /{path}: {exc.message}") from exc
        maps = tuple(
            SimMap(
                map_file=MapFile.from_json(json.dumps(entry["map"])),
                pose=Pose.from_json(entry["pose"]),
                center_xy=tuple(float(v) for v in entry["center_xy"]),
                radius_m=float(entry["radius_m"]),
            )
            for entry in doc["maps"]
        )
        return cls(
            rng_seed=int(doc["rng_seed"]),
            origin=(float(doc["origin"]["lat"]), float(doc["origin"]["lng"])),
            maps=maps,
            trajectory=tuple(
                (float(s["t"]), Pose.from_json(s["pose"]))
                for s in doc["trajectory"]
            ),
            suffix=doc.get("suffix", "flame.test"),
            r_vis_m=float(doc.get("r_vis_m", 10.0)),
            obs_noise_m=float(doc.get("obs_noise_m", 0.0)),
            outdoor_r95_m=tuple(doc.get("outdoor_r95_m", (5.0, 30.0))),
            indoor_r95_m=tuple(doc.get("indoor_r95_m", (15.0, 60.0))),
            fix_refresh_m=float(doc.get("fix_refresh_m", 5.0)),
            fix_refresh_s=float(doc.get("fix_refresh_s", 45.0)),
            vio_offset=Pose.from_json(doc["vio_offset"])
            if "vio_offset" in doc else Pose.identity(),
            vio_drift_per_m=float(doc.get("vio_drift_per_m", 0.0)),
            nameservers=int(doc.get("nameservers", 1)),
            soa_minimum_s=int(doc.get("soa_minimum_s", 300)),
            txt_ttl_s=int(doc.get("txt_ttl_s", 300)),
        )


_SCHEMA_VALIDATOR: jsonschema.Draft202012Validator | None = None


def _validator() -> jsonschema.Draft202012Validator:
    global _SCHEMA_VALIDATOR
    if _SCHEMA_VALIDATOR is None:
        from importlib import resources
        text = (
            resources.files("flamekit") / "schemas" / "worldspec.schema.json"
        ).read_text()
        _SCHEMA_VALIDATOR = jsonschema.Draft202012Validator(json.loads(text))
    return _SCHEMA_VALIDATOR


def load_world(path: str | Path) -> WorldSpec:
    return WorldSpec.from_json(Path(path).read_text())


def save_world(world: WorldSpec, path: str | Path) -> None:
    Path(path).write_text(world.to_json())


def _region_polygon_xy(origin, center_xy, radius_m, n=16):
    """Counter-clockwise geodetic ring approximating a ground disc."""
    cx, cy = center_xy
    verts = []
    for k in range(n):
        a = 2.0 * math.pi * k / n
        ll = world_to_latlng(origin, cx + radius_m * math.cos(a),
                             cy + radius_m * math.sin(a))
        verts.append((ll.lat, ll.lng))
    return tuple(verts)


def make_campus_world(
    seed: int = 11,
    *,
    n_maps: int = 4,
    steps: int = 500,
    spacing_m: float = 40.0,
    map_radius_m: float = 22.0,
    speed_mps: float = 1.2,
    step_interval_s: float = 2.0,
    dwell_s: float = 120.0,
    obs_noise_m: float = 0.0,
    vio_drift_per_m: float = 0.0,
    nameservers: int = 1,
    origin: tuple[float, float] = (40.4433, -79.9436),
) -> WorldSpec:
    """The standard evaluation world: venues in a row, device pacing them.

    Adjacent venue discs overlap slightly, landmarks line the walking path
    in two offset rows, and neighboring maps share a door waypoint at the
    overlap midpoint so stitched navigation can cross every boundary. The
    device walks center to center at speed_mps and dwells dwell_s at each,
    the usual rhythm of someone actually using the thing.
    """
    rng = np.random.default_rng(seed)
    maps = []
    for k in range(n_maps):
        cx = spacing_m * k
        g = Pose.from_axis_angle(
            (0.0, 0.0, 1.0), float(rng.uniform(-math.pi, math.pi)),
            (cx + float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)),
             float(rng.uniform(-0.5, 0.5))))
        inv = g.inverse()
        landmarks = []
        for dx in (-12.0, -6.0, 0.0, 6.0, 12.0):
            for dy, dz in ((-3.0, 0.0), (3.0, 0.0), (-3.0, 2.5), (3.0, 2.5)):
                world_pos = np.array([cx + dx, dy, dz])
                lid = f"m{k}-{len(landmarks):03d}"
                landmarks.append(
                    (lid, tuple(float(v) for v in inv.transform_point(world_pos))))
        waypoints = []
        edges = []
        center_wp = f"m{k}/center"
        waypoints.append(Waypoint(
            center_wp, tuple(float(v) for v in inv.transform_point(
                np.array([cx, 0.0, 0.0])))))
        # two doors per shared wall, asymmetric so the short way through
        # is unique and a route oracle has real alternatives to reject
        for other, wall_x in ((k - 1, cx - spacing_m / 2.0),
                              (k + 1, cx + spacing_m / 2.0)):
            if not 0 <= other < n_maps:
                continue
            lo, hi = sorted((k, other))
            for side, dy in (("n", 5.0), ("s", -8.0)):
                door = f"door-{lo}{hi}{side}"
                pos = np.array([wall_x, dy, 0.0])
                waypoints.append(Waypoint(
                    door, tuple(float(v) for v in inv.transform_point(pos))))
                edges.append((center_wp, door))
        map_file = MapFile(
            map_id=f"m{k}",
            landmarks=tuple(landmarks),
            waypoints=tuple(waypoints),
            edges=tuple(edges),
            frame_note=f"venue m{k}, meters, z up",
            region=_region_polygon_xy(origin, (cx, 0.0), map_radius_m),
        )
        maps.append(SimMap(map_file=map_file, pose=g,
                           center_xy=(cx, 0.0), radius_m=map_radius_m))

    # visit the venue centers back and forth, walking between them and
    # dwelling at each: trace cadence is one sample per step_interval_s
    meters_per_step = speed_mps * step_interval_s
    dwell_samples = max(1, int(round(dwell_s / step_interval_s)))
    centers = [spacing_m * k for k in range(n_maps)]
    order = centers + centers[-2::-1] if n_maps > 1 else centers
    trajectory = []
    x, yaw, idx = centers[0], 0.0, 0

    def emit(px, pyaw):
        trajectory.append(
            (len(trajectory) * step_interval_s,
             Pose.from_axis_angle((0.0, 0.0, 1.0), pyaw, (px, 0.0, 0.0))))

    while len(trajectory) < steps:
        for _ in range(dwell_samples):
            emit(x, yaw)
            if len(trajectory) >= steps:
                break
        idx = (idx + 1) % len(order)
        target = order[idx]
        while x != target and len(trajectory) < steps:
            yaw = 0.0 if target > x else math.pi
            step = min(meters_per_step, abs(target - x))
            x += step if target > x else -step
            emit(x, yaw)

    vio_offset = Pose.from_axis_angle(
        (0.0, 0.0, 1.0), float(rng.uniform(-math.pi, math.pi)),
        (float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)), 0.0))
    return WorldSpec(
        rng_seed=seed,
        origin=origin,
        maps=tuple(maps),
        trajectory=tuple(trajectory),
        obs_noise_m=obs_noise_m,
        vio_offset=vio_offset,
        vio_drift_per_m=vio_drift_per_m,
        nameservers=nameservers,
    )


def synthesize_cues(world: WorldSpec, t: float, map_id: str,
                    rng: np.random.Generator | None = None) -> LocationCues:
    """Landmarks of one map visible from the device at time t.

    Positions come out in the device frame: X(t)^-1 applied to the world
    position G_m(p). Observation noise is added only when `rng` is given.
    """
    device = world.pose_at(t)
    inv = device.inverse()
    sm = next((m for m in world.maps if m.map_id == map_id), None)
    if sm is None:
        raise HarnessError(f"unknown map {map_id!r}")
    obs = []
    for lid, world_pos in sm.landmark_world():
        if float(np.linalg.norm(world_pos - device.t)) > world.r_vis_m:
            continue
        p = inv.transform_point(world_pos)
        if rng is not None and world.obs_noise_m > 0.0:
            p = p + rng.normal(scale=world.obs_noise_m, size=3)
        obs.append((lid, tuple(float(v) for v in p)))
    return LocationCues(observations=tuple(obs), timestamp=t)


@dataclass(frozen=True)
class StepMetrics:
    step: int
    t: float
    lat: float
    lng: float
    radius_m: float
    indoor: bool
    query_total: int
    query_uncached: int
    hit_ratio: float | None
    rediscovered: bool
    active_map: str | None
    best_map: str | None
    ok: bool
    confidence: float | None
    scores: dict[str, float | None]

    def to_json_obj(self) -> dict:
        return {
            "step": self.step, "t": self.t,
            "lat": self.lat, "lng": self.lng, "radius_m": self.radius_m,
            "indoor": self.indoor,
            "query_total": self.query_total,
            "query_uncached": self.query_uncached,
            "hit_ratio": self.hit_ratio,
            "rediscovered": self.rediscovered,
            "active_map": self.active_map,
            "best_map": self.best_map,
            "ok": self.ok,
            "confidence": self.confidence,
            "scores": self.scores,
        }


@dataclass(frozen=True)
class MetricsReport:
    seed: int
    world_hash: str
    mode: str                       # "client" or "discovery"
    steps: tuple[StepMetrics, ...]

    def aggregates(self) -> dict:
        queried = [s for s in self.steps if s.query_total > 0]
        totals = sorted(s.query_total for s in queried)
        uncached = sorted(s.query_uncached for s in queried)
        post = list(self.steps[WARMUP_STEPS:])
        ratios = [s.hit_ratio for s in post
                  if s.query_total > 0 and s.hit_ratio is not None]
        agg: dict = {
            "steps": len(self.steps),
            "queried_steps": len(queried),
            "median_query_total": _median(totals),
            "median_query_uncached": _median(uncached),
            "first_step_fully_uncached": bool(
                self.steps and self.steps[0].query_total > 0
                and self.steps[0].query_uncached == self.steps[0].query_total),
            "hit_ratio_ge_09_share": (
                sum(1 for r in ratios if r >= 0.9) / len(ratios) if ratios else None),
            "rediscoveries": sum(1 for s in self.steps if s.rediscovered),
        }
        if self.mode == "client":
            scored = [s for s in post if s.best_map is not None]
            agg["selection_accuracy"] = (
                sum(1 for s in scored if s.active_map == s.best_map) / len(scored)
                if scored else None)
            lags = self.boundary_lags()
            agg["boundary_lags"] = lags
            agg["max_boundary_lag"] = max(lags) if lags else 0
        return agg

    def boundary_lags(self) -> list[int]:
        """Steps between each ground-truth best-map change and the next
        rediscovery."""
        lags = []
        for k in range(1, len(self.steps)):
            prev, cur = self.steps[k - 1], self.steps[k]
            if cur.best_map is None or prev.best_map is None:
                continue
            if cur.best_map == prev.best_map:
                continue
            lag = None
            for j in range(k, len(self.steps)):
                if self.steps[j].rediscovered:
                    lag = j - k
                    break
            if lag is not None:
                lags.append(lag)
        return lags

    def to_json(self) -> str:
        doc = {
            "v": 1,
            "seed": self.seed,
            "world_hash": self.world_hash,
            "mode": self.mode,
            "aggregates": self.aggregates(),
            "steps": [s.to_json_obj() for s in self.steps],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _median(sorted_values) -> float | None:
    if not sorted_values:
        return None
    n = len(sorted_values)
    mid = n // 2
    if n % 2:
        return float(sorted_values[mid])
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2.0


def world_hash(world: WorldSpec) -> str:
    return hashlib.sha256(world.to_json().encode()).hexdigest()[:16]


class SimClock:
    """Manually advanced monotonic clock for cache TTLs."""

    def __init__(self, start: float = 0.0):
        self.t = float(start)

    def now(self) -> float:
        return self.t

    def advance(self, dt: float) -> None:
        self.t += dt


def _boot_nameservers(world: WorldSpec, url_by_map: dict[str, str]):
    records: list[ZoneRecord] = []
    for sm in world.maps:
        records += zone_records(
            sm.map_file.region_polygon(),
            FlameRecord("MCNAME", url_by_map[sm.map_id]),
            suffix=world.suffix, ttl=world.txt_ttl_s)
    soa = default_soa(world.suffix, minimum=world.soa_minimum_s)
    servers = []
    try:
        if world.nameservers == 1:
            zone = load_zone(render_zone(world.suffix, records, soa=soa))
            servers.append(NameServer(("127.0.0.1", 0), [zone], workers=2))
            return servers, servers[0].endpoint
        # split: everything under the campus-level cell moves to a second
        # server reached through an MNS referral
        c0 = world.maps[0].center_xy
        ll = world_to_latlng(world.origin, c0[0], c0[1])
        deleg = cell_to_geodomain(
            CellId.from_latlng(ll.lat, ll.lng, 12), world.suffix).name()
        tail = "." + deleg
        sub = [r for r in records if r.owner == deleg or r.owner.endswith(tail)]
        top = [r for r in records if not (r.owner == deleg or r.owner.endswith(tail))]
        child = NameServer(
            ("127.0.0.1", 0),
            [load_zone(render_zone(
                deleg, sub,
                soa=default_soa(deleg, minimum=world.soa_minimum_s)))],
            workers=2)
        servers.append(child)
        mns = ZoneRecord(deleg, world.txt_ttl_s, format_flame_record(
            FlameRecord("MNS", f"127.0.0.1:{child.endpoint[1]}")))
        parent = NameServer(
            ("127.0.0.1", 0),
            [load_zone(render_zone(world.suffix, top + [mns], soa=soa))],
            workers=2)
        servers.append(parent)
        return servers, parent.endpoint
    except Exception:
        for s in servers:
            s.close()
        raise


class _Running:
    """Booted components for one simulation; closes everything on exit."""

    def __init__(self, world: WorldSpec, *, with_map_servers: bool):
        self.world = world
        self.map_servers = {}
        self.nameservers = []
        try:
            if with_map_servers:
                for sm in world.maps:
                    self.map_servers[sm.map_id] = serve_map(
                        ("127.0.0.1", 0), sm.map_file)
                url_by_map = {mid: srv.url for mid, srv in self.map_servers.items()}
            else:
                # discovery replay never contacts map servers; stable fake
                # urls keep the report reproducible
                url_by_map = {sm.map_id: f"http://{sm.map_id}.campus.example/api"
                              for sm in world.maps}
            self.url_by_map = url_by_map
            self.map_by_url = {u: m for m, u in url_by_map.items()}
            self.nameservers, self.dns_endpoint = _boot_nameservers(
                world, url_by_map)
        except HarnessError:
            self.close()
            raise
        except Exception as exc:
            self.close()
            raise HarnessError(f"component startup failed: {exc}") from exc

    def close(self):
        for s in self.map_servers.values():
            s.close()
        for s in self.nameservers:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _FixModel:
    """Coarse fixes on a phone schedule: refresh after enough movement or
    age, repeat the previous fix otherwise. Draw order per refresh is
    fixed (r95, then dx, dy) so runs replay identically."""

    def __init__(self, world: WorldSpec, rng: np.random.Generator):
        self.world = world
        self.rng = rng
        self.fix: CoarseLocation | None = None
        self.fix_xy: tuple[float, float] | None = None
        self.fix_t = 0.0

    def sample(self, t: float, pose: Pose) -> tuple[CoarseLocation, bool]:
        x, y = float(pose.t[0]), float(pose.t[1])
        indoor = self.world.indoor_at(x, y)
        stale = (
            self.fix is None
            or math.dist((x, y), self.fix_xy) >= self.world.fix_refresh_m
            or t - self.fix_t >= self.world.fix_refresh_s)
        if stale:
            band = (self.world.indoor_r95_m if indoor
                    else self.world.outdoor_r95_m)
            r95 = float(self.rng.uniform(band[0], band[1]))
            dx, dy = self.rng.normal(scale=r95 / _R95_SIGMA, size=2)
            ll = world_to_latlng(self.world.origin, x + float(dx),
                                 y + float(dy))
            self.fix = CoarseLocation(ll, r95)
            self.fix_xy = (x, y)
            self.fix_t = t
        return self.fix, indoor


def _vio_pose(world: WorldSpec, pose: Pose, traveled_m: float) -> Pose:
    v = world.vio_offset.compose(pose)
    if world.vio_drift_per_m > 0.0:
        drift = world.vio_drift_per_m * traveled_m
        return Pose(v.q, v.t + np.array([drift, 0.0, 0.0]))
    return v


def run(world: WorldSpec, *, client_cfg: ClientConfig | None = None,
        query_cfg: QueryConfig | None = None,
        event_log=None) -> MetricsReport:
    """Drive the client over the trajectory against live servers."""
    cfg = client_cfg if client_cfg is not None else ClientConfig()
    rng = np.random.default_rng(world.rng_seed)
    clock = SimClock()
    steps: list[StepMetrics] = []
    fixes = _FixModel(world, rng)
    with _Running(world, with_map_servers=True) as running, \
            Resolver(running.dns_endpoint, clock=clock.now) as resolver:
        traveled = 0.0
        prev_pose = None
        with FlameClient(resolver, cfg, query_cfg=query_cfg,
                         event_log=event_log) as client:
            for k, (t, pose) in enumerate(world.trajectory):
                clock.t = t
                if prev_pose is not None:
                    traveled += float(np.linalg.norm(pose.t - prev_pose.t))
                prev_pose = pose
                coarse, indoor = fixes.sample(t, pose)
                obs = []
                for sm in world.maps:
                    obs.extend(synthesize_cues(
                        world, t, sm.map_id,
                        rng=rng if world.obs_noise_m > 0 else None).observations)
                cues = LocationCues(observations=tuple(obs), timestamp=t)
                before = resolver.stats()
                result = client.step(StepInput(
                    timestamp=t, coarse=coarse, cues=cues,
                    vio_pose=_vio_pose(world, pose, traveled)))
                after = resolver.stats()
                wire = after["wire_queries"] - before["wire_queries"]
                hits = after["cache_hits"] - before["cache_hits"]
                total = wire + hits
                steps.append(StepMetrics(
                    step=k, t=t,
                    lat=coarse.center.lat, lng=coarse.center.lng,
                    radius_m=coarse.error_radius_m, indoor=indoor,
                    query_total=total, query_uncached=wire,
                    hit_ratio=(hits / total) if total else None,
                    rediscovered=result.rediscovered,
                    active_map=running.map_by_url.get(result.active_url),
                    best_map=world.best_map_at(
                        float(pose.t[0]), float(pose.t[1]), float(pose.t[2])),
                    ok=result.ok,
                    confidence=result.confidence,
                    scores={running.map_by_url.get(u, u): s
                            for u, s in result.scores.items()},
                ))
    return MetricsReport(seed=world.rng_seed, world_hash=world_hash(world),
                         mode="client", steps=tuple(steps))


def replay_discovery(world: WorldSpec,
                     query_cfg: QueryConfig | None = None) -> MetricsReport:
    """Resolve the full query set at every trajectory step (no client).

    Mirrors replaying recorded coarse-location traces through discovery
    alone: per-step geo-domain counts and cache behavior, driven by the
    simulated clock so TTL expiry happens on schedule.
    """
    rng = np.random.default_rng(world.rng_seed)
    clock = SimClock()
    steps: list[StepMetrics] = []
    fixes = _FixModel(world, rng)
    with _Running(world, with_map_servers=False) as running, \
            Resolver(running.dns_endpoint, clock=clock.now) as resolver:
        for k, (t, pose) in enumerate(world.trajectory):
            clock.t = t
            coarse, indoor = fixes.sample(t, pose)
            before = resolver.stats()
            try:
                found = resolver.discover(coarse, query_cfg)
                urls = [d.url for d in found]
            except DiscoveryError:
                urls = []
            after = resolver.stats()
            wire = after["wire_queries"] - before["wire_queries"]
            hits = after["cache_hits"] - before["cache_hits"]
            total = wire + hits
            best = world.best_map_at(
                float(pose.t[0]), float(pose.t[1]), float(pose.t[2]))
            steps.append(StepMetrics(
                step=k, t=t,
                lat=coarse.center.lat, lng=coarse.center.lng,
                radius_m=coarse.error_radius_m, indoor=indoor,
                query_total=total, query_uncached=wire,
                hit_ratio=(hits / total) if total else None,
                rediscovered=True,
                active_map=None,
                best_map=best,
                ok=bool(urls),
                confidence=None,
                scores={},
            ))
    return MetricsReport(seed=world.rng_seed, world_hash=world_hash(world),
                         mode="discovery", steps=tuple(steps))


def query_set_size(world: WorldSpec, coarse: CoarseLocation,
                   query_cfg: QueryConfig | None = None) -> int:
    return len(query_set(coarse, query_cfg if query_cfg else QueryConfig()))


def report(metrics: MetricsReport, out_dir: str | Path,
           formats: tuple[str, ...] = ("csv", "json")) -> list[Path]:
    """Write summaries and per-figure data under a run directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def emit(path: Path, text: str) -> None:
        path.write_text(text)
        written.append(path)

    if "json" in formats:
        emit(out / "metrics.json", metrics.to_json())
        emit(out / "summary.json", json.dumps(
            metrics.aggregates(), indent=2, sort_keys=True) + "\n")
    if "csv" in formats:
        with (out / "steps.csv").open("w", newline="") as fp:
            w = csv.writer(fp)
            w.writerow(["step", "t", "lat", "lng", "radius_m", "indoor",
                        "query_total", "query_uncached", "hit_ratio",
                        "rediscovered", "active_map", "best_map", "ok",
                        "confidence"])
            for s in metrics.steps:
                w.writerow([s.step, s.t, s.lat, s.lng, s.radius_m,
                            int(s.indoor), s.query_total, s.query_uncached,
                            "" if s.hit_ratio is None else s.hit_ratio,
                            int(s.rediscovered), s.active_map or "",
                            s.best_map or "", int(s.ok),
                            "" if s.confidence is None else s.confidence])
        written.append(out / "steps.csv")
        with (out / "fig_geodomains_per_step.csv").open("w", newline="") as fp:
            w = csv.writer(fp)
            w.writerow(["step", "total", "uncached"])
            for s in metrics.steps:
                w.writerow([s.step, s.query_total, s.query_uncached])
        written.append(out / "fig_geodomains_per_step.csv")
        with (out / "fig_hit_ratio_hist.csv").open("w", newline="") as fp:
            w = csv.writer(fp)
            w.writerow(["bin_low", "bin_high", "count"])
            ratios = [s.hit_ratio for s in metrics.steps[WARMUP_STEPS:]
                      if s.hit_ratio is not None]
            edges = [k / 20.0 for k in range(21)]
            for lo, hi in zip(edges, edges[1:]):
                count = sum(1 for r in ratios
                            if (lo <= r < hi) or (hi == 1.0 and r == 1.0))
                w.writerow([lo, hi, count])
        written.append(out / "fig_hit_ratio_hist.csv")
        with (out / "fig_selection_timeline.csv").open("w", newline="") as fp:
            w = csv.writer(fp)
            w.writerow(["step", "active_map", "best_map", "rediscovered"])
            for s in metrics.steps:
                w.writerow([s.step, s.active_map or "", s.best_map or "",
                            int(s.rediscovered)])
        written.append(out / "fig_selection_timeline.csv")
    manifest = {
        "seed": metrics.seed,
        "world_hash": metrics.world_hash,
        "mode": metrics.mode,
        "steps": len(metrics.steps),
        "flamekit_version": __version__,
        "files": sorted(p.name for p in written),
    }
    emit(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return written
