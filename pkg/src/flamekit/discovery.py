"""Resolver that turns a coarse location into map-server descriptors.

Issues the geo-domain query set in parallel over DNS, caches positive and
negative answers (RFC 2308 style), follows MNS delegation chains depth
first, and filters the resulting MCNAME descriptors through an
application-supplied policy. Every wire query and cache hit is appended
to an optional JSON-lines trace so evaluation runs can be replayed.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, IO, Iterator, Sequence
from urllib.parse import urlsplit

from .dnswire import (
    RCODE_NOERROR,
    RCODE_NXDOMAIN,
    TYPE_SOA,
    TYPE_TXT,
    DnsMessage,
    DnsWireError,
    FlameRecord,
    FlameRecordError,
    decode_message,
    encode_query,
    parse_flame_record,
)
from .geodomains import CoarseLocation, GeoDomain, QueryConfig, query_set

log = logging.getLogger(__name__)

Endpoint = tuple[str, int]
Transport = Callable[[bytes, Endpoint, float], bytes]

MAX_TTL_S = 86400.0  # clamp: nothing is trusted for more than a day


class TransientResolveError(Exception):
    """Query failed in a way that must not be cached (timeout, SERVFAIL)."""


class DiscoveryError(Exception):
    """Every query in a discovery round failed; `causes` maps name to reason."""

    def __init__(self, causes: dict[str, str]):
        self.causes = dict(causes)
        shown = [f"{n}: {why}" for n, why in list(self.causes.items())[:5]]
        if len(self.causes) > 5:
            shown.append(f"... {len(self.causes) - 5} more")
        super().__init__(
            f"all {len(self.causes)} discovery queries failed ({'; '.join(shown)})"
        )


@dataclass(frozen=True)
class MapServerDescriptor:
    """One discovered map server and where it came from."""

    url: str
    source_domain: GeoDomain
    delegation_path: tuple[str, ...] = ()
    discovered_at: float = 0.0

    def __post_init__(self):
        parts = urlsplit(self.url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise ValueError(f"bad map server url: {self.url!r}")

    @property
    def host(self) -> str:
        return urlsplit(self.url).hostname or ""


@dataclass(frozen=True)
class FilterPolicy:
    """Client-side trust decisions: DNS-suffix allowlist plus a predicate.

    An empty allowlist admits every host. The predicate must be pure; it
    sees the full descriptor, so it can reject e.g. delegated servers.
    """

    suffix_allowlist: tuple[str, ...] = ()
    predicate: Callable[[MapServerDescriptor], bool] | None = None

    def admits(self, desc: MapServerDescriptor) -> bool:
        if self.suffix_allowlist:
            host = desc.host
            ok = any(
                host == s or host.endswith("." + s) for s in self.suffix_allowlist
            )
            if not ok:
                return False
        return self.predicate(desc) if self.predicate is not None else True


def apply_policy(
    descriptors: Sequence[MapServerDescriptor], policy: FilterPolicy
) -> list[MapServerDescriptor]:
    return [d for d in descriptors if policy.admits(d)]


@dataclass(frozen=True)
class ResolveResult:
    records: tuple[FlameRecord, ...]
    rcode: int
    negative: bool
    cache_hit: bool


@dataclass(frozen=True)
class DiscoveryResult:
    """Descriptors in deterministic order plus any partial-failure warnings."""

    descriptors: tuple[MapServerDescriptor, ...]
    warnings: tuple[str, ...] = ()

    def __iter__(self) -> Iterator[MapServerDescriptor]:
        return iter(self.descriptors)

    def __len__(self) -> int:
        return len(self.descriptors)

    def __getitem__(self, i):
        return self.descriptors[i]


@dataclass
class _CacheEntry:
    records: tuple[FlameRecord, ...]
    rcode: int
    negative: bool
    ttl: float
    inserted_at: float


def _endpoint_of(target: str) -> Endpoint:
    host, _, port = target.partition(":")
    return (host, int(port) if port else 53)


def _endpoint_str(endpoint: Endpoint) -> str:
    return f"{endpoint[0]}:{endpoint[1]}"


def _udp_transport(payload: bytes, endpoint: Endpoint, timeout: float) -> bytes:
    """One UDP exchange; ignores datagrams whose id differs from the query."""
    want_id = payload[:2]
    deadline = time.monotonic() + timeout
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.sendto(payload, endpoint)
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError(f"no answer from {_endpoint_str(endpoint)}")
            s.settimeout(remaining)
            try:
                data, _ = s.recvfrom(4096)
            except socket.timeout:
                raise TimeoutError(
                    f"no answer from {_endpoint_str(endpoint)}"
                ) from None
            if data[:2] == want_id:
                return data


class Resolver:
    """Caching geo-domain resolver with MNS delegation following.

    The cache is keyed by (endpoint, name, qtype): a parent nameserver
    legitimately answers NXDOMAIN for names that a delegated server holds,
    so negative entries must never leak across endpoints. `clock` exists
    so tests and the trace harness can drive TTL arithmetic exactly.
    """

    def __init__(
        self,
        endpoint: Endpoint,
        *,
        timeout: float = 2.0,
        retries: int = 1,
        max_depth: int = 4,
        ttl_clamp: float = MAX_TTL_S,
        clock: Callable[[], float] = time.monotonic,
        transport: Transport | None = None,
        trace: IO[str] | None = None,
        max_workers: int = 64,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.max_depth = max_depth
        self.ttl_clamp = ttl_clamp
        self._clock = clock
        self._transport = transport if transport is not None else _udp_transport
        self._trace = trace
        self._cache: dict[tuple[Endpoint, str, int], _CacheEntry] = {}
        self._lock = threading.Lock()
        self._stats = {"wire_queries": 0, "cache_hits": 0, "transient_failures": 0}
        self._pool = ThreadPoolExecutor(
            max_workers=max_workers, thread_name_prefix="resolve"
        )

    def stats(self) -> dict[str, int]:
        with self._lock:
            return dict(self._stats)

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    def __enter__(self) -> "Resolver":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _log(self, name, endpoint, rcode, latency_s, cache_hit, error=None):
        if self._trace is None:
            return
        line = {
            "name": name,
            "endpoint": _endpoint_str(endpoint),
            "rcode": rcode,
            "latency_ms": round(latency_s * 1e3, 6),
            "cache_hit": cache_hit,
        }
        if error is not None:
            line["error"] = error
        text = json.dumps(line, separators=(",", ":")) + "\n"
        with self._lock:
            self._trace.write(text)

    def _bump(self, key: str) -> None:
        with self._lock:
            self._stats[key] += 1

    def _exchange(self, name: str, endpoint: Endpoint) -> DnsMessage:
        payload = encode_query(name, TYPE_TXT)
        last = "timeout"
        for _ in range(self.retries + 1):
            self._bump("wire_queries")
            try:
                raw = self._transport(payload, endpoint, self.timeout)
                resp = decode_message(raw)
            except (TimeoutError, OSError) as exc:
                last = str(exc) or "timeout"
                continue
            except DnsWireError as exc:
                last = f"malformed response: {exc}"
                continue
            if resp.id != int.from_bytes(payload[:2], "big"):
                last = "response id mismatch"
                continue
            q = resp.question
            if q is None or q.name.lower() != name.lower():
                last = "response question mismatch"
                continue
            return resp
        self._bump("transient_failures")
        raise TransientResolveError(f"{name} @ {_endpoint_str(endpoint)}: {last}")

    def resolve_txt(self, name: str, endpoint: Endpoint | None = None) -> ResolveResult:
        """TXT lookup through the cache; raises TransientResolveError only.

        NXDOMAIN and NODATA answers are cached for min(SOA MINIMUM, SOA
        record TTL). Timeouts and server failures are never cached.
        """
        ep = endpoint if endpoint is not None else self.endpoint
        key = (ep, name.lower(), TYPE_TXT)
        now = self._clock()
        with self._lock:
            entry = self._cache.get(key)
            if entry is not None and now < entry.inserted_at + entry.ttl:
                self._stats["cache_hits"] += 1
                hit = ResolveResult(entry.records, entry.rcode, entry.negative, True)
            else:
                hit = None
        if hit is not None:
            self._log(name, ep, hit.rcode, 0.0, True)
            return hit

        start = self._clock()
        try:
            resp = self._exchange(name, ep)
        except TransientResolveError as exc:
            self._log(name, ep, None, self._clock() - start, False, error=str(exc))
            raise
        latency = self._clock() - start

        if resp.rcode not in (RCODE_NOERROR, RCODE_NXDOMAIN):
            # SERVFAIL, REFUSED and friends are retryable conditions, never cached.
            self._bump("transient_failures")
            self._log(name, ep, resp.rcode, latency, False, error="server failure")
            raise TransientResolveError(
                f"{name} @ {_endpoint_str(ep)}: rcode {resp.rcode}"
            )

        txt = [rr for rr in resp.answers if rr.rtype == TYPE_TXT]
        if resp.rcode == RCODE_NOERROR and txt:
            records = []
            for rr in txt:
                try:
                    rec = parse_flame_record(rr.rdata)
                except FlameRecordError as exc:
                    log.warning("ignoring malformed flame TXT at %s: %s", name, exc)
                    continue
                if rec is not None:
                    records.append(rec)
            ttl = min(rr.ttl for rr in txt)
            result = ResolveResult(tuple(records), resp.rcode, False, False)
        else:
            # Negative answer: TTL comes from the SOA, absent SOA means
            # the response is not cacheable at all (RFC 2308 section 5).
            soas = [rr for rr in resp.authority if rr.rtype == TYPE_SOA]
            ttl = min(soas[0].ttl, soas[0].rdata.minimum) if soas else 0
            result = ResolveResult((), resp.rcode, True, False)

        ttl = min(float(ttl), self.ttl_clamp)
        if ttl > 0:
            entry = _CacheEntry(result.records, result.rcode, result.negative, ttl, now)
            with self._lock:
                self._cache[key] = entry
        self._log(name, ep, resp.rcode, latency, False)
        return result

    def _resolve_batch(
        self, domains: Sequence[GeoDomain], endpoint: Endpoint
    ) -> list[tuple[GeoDomain, ResolveResult | TransientResolveError]]:
        futures = [
            self._pool.submit(self.resolve_txt, d.name(), endpoint) for d in domains
        ]
        out = []
        for dom, fut in zip(domains, futures):
            try:
                out.append((dom, fut.result()))
            except TransientResolveError as exc:
                out.append((dom, exc))
        return out

    def discover(
        self,
        loc: CoarseLocation,
        cfg: QueryConfig | None = None,
        policy: FilterPolicy | None = None,
    ) -> DiscoveryResult:
        """Resolve the query set for `loc` into filtered map-server descriptors.

        MNS answers are followed depth first: the delegated server is asked
        the same geo-domain plus every queried descendant of it. Cycles are
        broken on (endpoint, name) pairs, depth is capped at `max_depth`.
        """
        cfg = cfg if cfg is not None else QueryConfig()
        policy = policy if policy is not None else FilterPolicy()
        domains = query_set(loc, cfg)
        found: dict[str, MapServerDescriptor] = {}
        warnings: list[str] = []
        root_failures: dict[str, str] = {}
        visited: set[tuple[Endpoint, str]] = set()

        def rank(d: MapServerDescriptor):
            return (
                -d.source_domain.level(),
                d.source_domain.name(),
                len(d.delegation_path),
            )

        def add(dom: GeoDomain, url: str, path: tuple[str, ...]) -> None:
            try:
                desc = MapServerDescriptor(url, dom, path, self._clock())
            except ValueError as exc:
                warnings.append(str(exc))
                return
            prev = found.get(url)
            if prev is None or rank(desc) < rank(prev):
                found[url] = desc

        def walk(
            endpoint: Endpoint, subset: Sequence[GeoDomain], path: tuple[str, ...]
        ) -> None:
            referrals: list[tuple[GeoDomain, str]] = []
            for dom, outcome in self._resolve_batch(subset, endpoint):
                if isinstance(outcome, TransientResolveError):
                    if not path:
                        root_failures[dom.name()] = str(outcome)
                    warnings.append(str(outcome))
                    continue
                for rec in outcome.records:
                    if rec.kind == "MCNAME":
                        add(dom, rec.target, path)
                    else:
                        referrals.append((dom, rec.target))
            for dom, target in referrals:
                try:
                    next_ep = _endpoint_of(target)
                except ValueError:
                    warnings.append(f"bad MNS target {target!r} at {dom.name()}")
                    continue
                if len(path) >= self.max_depth:
                    warnings.append(
                        f"delegation depth limit ({self.max_depth}) at {dom.name()}"
                    )
                    continue
                key = (next_ep, dom.name())
                if key in visited:
                    warnings.append(f"delegation cycle at {dom.name()} via {target}")
                    continue
                visited.add(key)
                descend = [
                    d
                    for d in domains
                    if d.labels[len(d.labels) - len(dom.labels) :] == dom.labels
                ]
                walk(next_ep, descend, path + (target,))

        walk(self.endpoint, domains, ())
        if root_failures and len(root_failures) == len(domains):
            raise DiscoveryError(root_failures)

        ordered = sorted(
            found.values(), key=lambda d: (-d.source_domain.level(), d.url)
        )
        return DiscoveryResult(
            descriptors=tuple(apply_policy(ordered, policy)),
            warnings=tuple(warnings),
        )
