"""Client loop: discover map servers, localize, switch when quality drops.

The client holds one active server at a time and localizes against it
every step.  Quality is judged two ways: when local odometry (VIO) is
available, the smoothed disagreement between odometry displacement and
server-pose displacement; otherwise the server's own confidence.  The
moment the active server stops being acceptable the next step runs a full
rediscovery: resolve geo-domains, negotiate capabilities, localize against
every compatible server in parallel, and keep the best one.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .discovery import DiscoveryError, FilterPolicy, Resolver
from .geodomains import CoarseLocation, QueryConfig
from .mapserver import CUE_LANDMARKS_V1, LocationCues, LocalizeResult, MapApi
from .posemath import Pose, relative_displacement

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientConfig:
    query_interval_s: float = 2.0
    ema_alpha: float = 0.3
    error_threshold_m: float = 1.0
    confidence_threshold: float = 0.5
    localize_timeout_s: float = 2.0
    max_workers: int = 8


def error_score(prev_vio: Pose, cur_vio: Pose,
                prev_server: Pose, cur_server: Pose) -> float:
    """Disagreement between odometry and server motion, meters.

    Both pose pairs describe the same physical displacement in different
    frames; rigid frames preserve distance, so the two magnitudes match
    whenever both systems track well.
    """
    d_local = relative_displacement(prev_vio, cur_vio)
    d_server = relative_displacement(prev_server, cur_server)
    return abs(d_local - d_server)


@dataclass
class ServerTrack:
    """Per-server quality state; survives across rediscoveries."""

    url: str
    ema_error_m: float | None = None
    confidence: float | None = None
    pose: Pose | None = None
    vio_at_pose: Pose | None = None
    ok: bool = False
    transport_failed: bool = False

    def observe(self, result: LocalizeResult, vio: Pose | None,
                alpha: float) -> None:
        self.transport_failed = False
        self.ok = result.ok
        self.confidence = result.confidence
        if not result.ok:
            return
        if vio is not None and self.pose is not None and self.vio_at_pose is not None:
            e = error_score(self.vio_at_pose, vio, self.pose, result.pose)
            if self.ema_error_m is None:
                self.ema_error_m = e
            else:
                a = alpha
                self.ema_error_m = a * e + (1.0 - a) * self.ema_error_m
        self.pose = result.pose
        self.vio_at_pose = vio


@dataclass(frozen=True)
class StepInput:
    timestamp: float
    coarse: CoarseLocation
    cues: LocationCues
    vio_pose: Pose | None = None


@dataclass(frozen=True)
class StepResult:
    step: int
    active_url: str | None
    pose: Pose | None
    confidence: float | None
    rediscovered: bool
    scores: dict[str, float | None]
    wire_queries: int
    errors: tuple[str, ...] = ()
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.pose is not None


def waypoint_to_app_frame(waypoint_pos, server_pose: Pose,
                          app_pose: Pose) -> np.ndarray:
    """Re-express a map-frame waypoint in the app (odometry) frame.

    `server_pose` and `app_pose` are the same device instant seen from the
    map frame and the app frame; their relative transform carries any
    map-frame point across.
    """
    return app_pose.compose(server_pose.inverse()).transform_point(waypoint_pos)


class FlameClient:
    """State machine that keeps a device localized against the best server."""

    def __init__(
        self,
        resolver: Resolver,
        cfg: ClientConfig | None = None,
        *,
        query_cfg: QueryConfig | None = None,
        policy: FilterPolicy | None = None,
        api_factory=MapApi,
        event_log=None,
    ):
        self.cfg = cfg if cfg is not None else ClientConfig()
        self.resolver = resolver
        self.query_cfg = query_cfg
        self.policy = policy
        self._api_factory = api_factory
        self._apis: dict[str, object] = {}
        self.tracks: dict[str, ServerTrack] = {}
        self.active_url: str | None = None
        self._event_log = event_log
        self._step = 0
        self._pool = ThreadPoolExecutor(
            max_workers=self.cfg.max_workers, thread_name_prefix="localize")
        self._lock = threading.Lock()

    def close(self) -> None:
        self._pool.shutdown(wait=False)

    def __enter__(self) -> "FlameClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _api(self, url: str):
        api = self._apis.get(url)
        if api is None:
            api = self._api_factory(url)
            self._apis[url] = api
        return api

    def _acceptable(self, track: ServerTrack | None, have_vio: bool) -> bool:
        if track is None or track.transport_failed or not track.ok:
            return False
        if have_vio and track.ema_error_m is not None:
            return track.ema_error_m <= self.cfg.error_threshold_m
        if track.confidence is not None:
            return track.confidence >= self.cfg.confidence_threshold
        return False

    def _localize_one(self, url: str, cues: LocationCues,
                      vio: Pose | None, errors: list[str]) -> LocalizeResult | None:
        track = self.tracks.setdefault(url, ServerTrack(url=url))
        try:
            result = self._api(url).localize(cues)
        except Exception as exc:
            with self._lock:
                track.transport_failed = True
                track.ok = False
                errors.append(f"{url}: {exc}")
            return None
        with self._lock:
            track.observe(result, vio, self.cfg.ema_alpha)
        return result

    def _rediscover(self, inp: StepInput, errors: list[str]) -> list[str]:
        """Resolve geo-domains and return urls that speak our cue type."""
        try:
            found = self.resolver.discover(inp.coarse, self.query_cfg, self.policy)
        except DiscoveryError as exc:
            errors.append(f"discovery: {exc}")
            return []
        for w in found.warnings:
            log.debug("discovery warning: %s", w)
        compatible = []

        def negotiate(url: str) -> bool:
            try:
                caps = self._api(url).capabilities()
            except Exception as exc:
                errors.append(f"{url}: {exc}")
                return False
            return CUE_LANDMARKS_V1 in caps.get("cue_types", ())

        urls = [d.url for d in found]
        for url, good in zip(urls, self._pool.map(negotiate, urls)):
            if good:
                compatible.append(url)
        return compatible

    def _select(self, candidates: list[str]) -> str | None:
        scored = []
        for url in candidates:
            track = self.tracks.get(url)
            if track is None or not track.ok:
                continue
            ema = track.ema_error_m
            conf = track.confidence if track.confidence is not None else 0.0
            scored.append((ema if ema is not None else float("inf"), -conf, url))
        if not scored:
            return None
        return min(scored)[2]

    def step(self, inp: StepInput) -> StepResult:
        started = time.perf_counter()
        idx = self._step
        self._step += 1
        errors: list[str] = []
        wire_before = self.resolver.stats()["wire_queries"]
        have_vio = inp.vio_pose is not None
        active = self.tracks.get(self.active_url) if self.active_url else None

        rediscovered = False
        if self._acceptable(active, have_vio):
            self._localize_one(self.active_url, inp.cues, inp.vio_pose, errors)
        else:
            rediscovered = True
            candidates = self._rediscover(inp, errors)
            futures = [
                self._pool.submit(
                    self._localize_one, url, inp.cues, inp.vio_pose, errors)
                for url in candidates
            ]
            for f in futures:
                f.result()
            chosen = self._select(candidates)
            if chosen is not None:
                self.active_url = chosen

        track = self.tracks.get(self.active_url) if self.active_url else None
        pose = track.pose if track is not None and track.ok else None
        confidence = track.confidence if track is not None else None
        result = StepResult(
            step=idx,
            active_url=self.active_url,
            pose=pose,
            confidence=confidence,
            rediscovered=rediscovered,
            scores={u: t.ema_error_m for u, t in self.tracks.items()},
            wire_queries=self.resolver.stats()["wire_queries"] - wire_before,
            errors=tuple(errors),
            elapsed_ms=(time.perf_counter() - started) * 1e3,
        )
        self._log_step(inp, result)
        return result

    def _log_step(self, inp: StepInput, result: StepResult) -> None:
        if self._event_log is None:
            return
        record = {
            "step": result.step,
            "t": inp.timestamp,
            "rediscovered": result.rediscovered,
            "active": result.active_url,
            "ok": result.ok,
            "confidence": result.confidence,
            "scores": result.scores,
            "wire_queries": result.wire_queries,
            "elapsed_ms": round(result.elapsed_ms, 3),
        }
        if result.pose is not None:
            record["pose"] = result.pose.to_json()
        if result.errors:
            record["errors"] = list(result.errors)
        self._event_log.write(json.dumps(record, sort_keys=True) + "\n")
