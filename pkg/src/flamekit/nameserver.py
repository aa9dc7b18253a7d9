"""Authoritative DNS server for geo-domain TXT records.

Loads a master-file subset ($ORIGIN, $TTL, SOA, TXT), answers exact-match
TXT queries over UDP, and returns RFC 2308 negative answers (NXDOMAIN or
NODATA carrying the zone SOA) so resolvers can cache nonexistence. Zones
are immutable after load; a reload is an atomic swap of the zone value.
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

from .dnswire import (
    CLASS_IN,
    RCODE_FORMERR,
    RCODE_NOERROR,
    RCODE_NXDOMAIN,
    RCODE_REFUSED,
    RCODE_SERVFAIL,
    TYPE_SOA,
    TYPE_TXT,
    DnsMessage,
    DnsWireError,
    FlameRecordError,
    ResourceRecord,
    SoaData,
    decode_message,
    encode_message,
    encode_name,
    parse_flame_record,
)

log = logging.getLogger(__name__)

# Responses to distinct names are id/flag-independent, so the server keeps
# encoded answers around. Bounded so random-name floods cannot grow memory.
_RESPONSE_CACHE_MAX = 8192


class ZoneLoadError(Exception):
    """Zone file rejected; `line` is 1-based when the error is positional."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Zone:
    """One authoritative zone: origin, its SOA, and exact-match records.

    `records` maps lowercase owner names to the TXT records at that owner,
    in file order. `names` additionally holds empty non-terminals (owners
    that exist only as ancestors of longer owners) so that answer() can
    distinguish NODATA from NXDOMAIN.
    """

    origin: str
    soa: SoaData
    soa_ttl: int
    records: Mapping[str, tuple[ResourceRecord, ...]]
    names: frozenset[str]
    default_ttl: int = 300

    def negative_ttl(self) -> int:
        # RFC 2308 3.1: cacheable for min(SOA MINIMUM, SOA record TTL).
        return min(self.soa.minimum, self.soa_ttl)

    def contains(self, name: str) -> bool:
        name = name.lower()
        return name == self.origin or name.endswith("." + self.origin)

    def lookup(self, name: str, rtype: int) -> tuple[ResourceRecord, ...]:
        name = name.lower()
        if rtype == TYPE_SOA and name == self.origin:
            soa_rr = ResourceRecord(self.origin, TYPE_SOA, self.soa_ttl, self.soa)
            return (soa_rr,)
        return tuple(r for r in self.records.get(name, ()) if r.rtype == rtype)

    def has_name(self, name: str) -> bool:
        return name.lower() in self.names


def _tokenize(line: str, lineno: int) -> list[tuple[str, bool]]:
    """Split a zone line into (text, was_quoted) tokens.

    Quotes delimit single tokens, a bare ; starts a comment, and there is
    no escape syntax (the renderer refuses rdata containing quotes).
    """
    tokens: list[tuple[str, bool]] = []
    i, n = 0, len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
        elif ch == ";":
            break
        elif ch == '"':
            end = line.find('"', i + 1)
            if end < 0:
                raise ZoneLoadError("unterminated quoted string", lineno)
            tokens.append((line[i + 1 : end], True))
            i = end + 1
        elif ch == "(":
            raise ZoneLoadError("multi-line records are not supported", lineno)
        else:
            j = i
            while j < n and line[j] not in ' \t;"(':
                j += 1
            tokens.append((line[i:j], False))
            i = j
    return tokens


def _parse_name(token: str, origin: str, lineno: int) -> str:
    if token == "@":
        return origin
    name = token[:-1] if token.endswith(".") else f"{token}.{origin}"
    try:
        encode_name(name)
    except DnsWireError as exc:
        raise ZoneLoadError(f"bad name {token!r}: {exc}", lineno) from exc
    return name.lower()


def _parse_ttl(token: str, lineno: int) -> int:
    if not token.isdigit():
        raise ZoneLoadError(f"bad TTL {token!r}", lineno)
    ttl = int(token)
    if ttl > 2**31 - 1:
        raise ZoneLoadError(f"TTL {ttl} out of range", lineno)
    return ttl


def load_zone(text: str) -> Zone:
    """Parse master-file text into a Zone.

    Raises ZoneLoadError (with a line number) for syntax errors, owners
    outside the origin, or a missing/duplicate SOA. FLAME TXT grammar
    problems are logged as warnings, not errors: foreign TXT records are
    allowed to coexist with flame1 ones.
    """
    origin: str | None = None
    default_ttl = 300
    soa: SoaData | None = None
    soa_ttl = 0
    records: dict[str, list[ResourceRecord]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokenize(raw, lineno)
        if not tokens:
            continue
        head, head_quoted = tokens[0]
        if head_quoted:
            raise ZoneLoadError("owner name cannot be quoted", lineno)

        if head == "$ORIGIN":
            if len(tokens) != 2 or not tokens[1][0].endswith("."):
                raise ZoneLoadError("$ORIGIN needs one absolute name", lineno)
            origin = tokens[1][0][:-1].lower()
            try:
                encode_name(origin)
            except DnsWireError as exc:
                raise ZoneLoadError(f"bad origin: {exc}", lineno) from exc
            continue
        if head == "$TTL":
            if len(tokens) != 2:
                raise ZoneLoadError("$TTL needs one value", lineno)
            default_ttl = _parse_ttl(tokens[1][0], lineno)
            continue
        if head.startswith("$"):
            raise ZoneLoadError(f"unsupported directive {head}", lineno)

        if origin is None:
            raise ZoneLoadError("record before $ORIGIN", lineno)
        owner = _parse_name(head, origin, lineno)
        if owner != origin and not owner.endswith("." + origin):
            raise ZoneLoadError(f"owner {owner!r} outside origin {origin!r}", lineno)

        # Optional TTL and class, in either order, then the record type.
        idx = 1
        ttl = default_ttl
        for _ in range(2):
            if idx >= len(tokens):
                break
            tok, quoted = tokens[idx]
            if quoted:
                break
            if tok.isdigit():
                ttl = _parse_ttl(tok, lineno)
                idx += 1
            elif tok.upper() == "IN":
                idx += 1
            else:
                break
        if idx >= len(tokens):
            raise ZoneLoadError("record is missing a type", lineno)
        rtype_token, rtype_quoted = tokens[idx]
        if rtype_quoted:
            raise ZoneLoadError("record type cannot be quoted", lineno)
        rtype = rtype_token.upper()
        rdata_tokens = tokens[idx + 1 :]

        if rtype == "SOA":
            if soa is not None:
                raise ZoneLoadError("duplicate SOA", lineno)
            if owner != origin:
                raise ZoneLoadError("SOA owner must be the origin", lineno)
            if len(rdata_tokens) != 7 or any(q for _, q in rdata_tokens):
                raise ZoneLoadError("SOA needs mname rname and five integers", lineno)
            mname = _parse_name(rdata_tokens[0][0], origin, lineno)
            rname = _parse_name(rdata_tokens[1][0], origin, lineno)
            fields = [_parse_ttl(t, lineno) for t, _ in rdata_tokens[2:]]
            soa = SoaData(mname, rname, *fields)
            soa_ttl = ttl
        elif rtype == "TXT":
            if not rdata_tokens:
                raise ZoneLoadError("TXT record has no strings", lineno)
            strings = []
            for tok, _ in rdata_tokens:
                try:
                    data = tok.encode("ascii")
                except UnicodeEncodeError:
                    raise ZoneLoadError("TXT string is not ASCII", lineno) from None
                if len(data) > 255:
                    raise ZoneLoadError("TXT string exceeds 255 octets", lineno)
                strings.append(data)
            try:
                parse_flame_record(tuple(strings))
            except FlameRecordError as exc:
                log.warning("line %d: flame TXT record looks wrong: %s", lineno, exc)
            rr = ResourceRecord(owner, TYPE_TXT, ttl, tuple(strings))
            records.setdefault(owner, []).append(rr)
        else:
            raise ZoneLoadError(f"unsupported record type {rtype_token!r}", lineno)

    if origin is None:
        raise ZoneLoadError("zone has no $ORIGIN")
    if soa is None:
        raise ZoneLoadError("zone has no SOA record")

    names = {origin}
    for owner in records:
        walk = owner
        while walk != origin:
            names.add(walk)
            walk = walk.split(".", 1)[1]
    return Zone(
        origin=origin,
        soa=soa,
        soa_ttl=soa_ttl,
        records={k: tuple(v) for k, v in records.items()},
        names=frozenset(names),
        default_ttl=default_ttl,
    )


def _negative_soa(zone: Zone) -> ResourceRecord:
    return ResourceRecord(zone.origin, TYPE_SOA, zone.negative_ttl(), zone.soa)


def answer(query: DnsMessage, zone: Zone) -> DnsMessage:
    """Build the authoritative response to one query against one zone.

    Existing owner with matching records answers with AA=1; an existing
    owner without the queried type is NODATA (NOERROR, empty answer, SOA
    in authority); a nonexistent owner under the origin is NXDOMAIN with
    the SOA; names outside the zone are REFUSED.
    """
    q = query.question
    if q is None:
        raise ValueError("query has no question")
    resp = DnsMessage(
        id=query.id, qr=True, rd=query.rd, rcode=RCODE_NOERROR, question=q
    )
    if q.qclass != CLASS_IN or not zone.contains(q.name):
        resp.rcode = RCODE_REFUSED
        return resp

    resp.aa = True
    found = zone.lookup(q.name, q.qtype)
    if found:
        # Echo the query's spelling in the answer owner names.
        resp.answers = [replace(rr, owner=q.name) for rr in found]
    elif zone.has_name(q.name):
        resp.authority = [_negative_soa(zone)]
    else:
        resp.rcode = RCODE_NXDOMAIN
        resp.authority = [_negative_soa(zone)]
    return resp


class NameServer:
    """Threaded UDP listener answering from an immutable set of zones.

    Workers share one socket; each datagram is handled in isolation, so a
    malformed or crashing request never disturbs the others. Counters are
    cumulative since start().
    """

    def __init__(
        self,
        endpoint: tuple[str, int],
        zones: Iterable[Zone],
        *,
        workers: int = 4,
    ):
        zone_list = list(zones)
        if not zone_list:
            raise ValueError("need at least one zone")
        self._zones = {z.origin: z for z in zone_list}
        if len(self._zones) != len(zone_list):
            raise ValueError("duplicate zone origin")
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            self._sock.bind(endpoint)
        except OSError:
            self._sock.close()
            raise
        self._sock.settimeout(0.5)
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self._counters = {
            "received": 0,
            "answered": 0,
            "nxdomain": 0,
            "refused": 0,
            "malformed": 0,
        }
        self._cache: dict[tuple[str, int, int], bytes] = {}
        self._threads = [
            threading.Thread(target=self._run, name=f"dns-worker-{i}", daemon=True)
            for i in range(max(1, workers))
        ]
        for t in self._threads:
            t.start()

    @property
    def endpoint(self) -> tuple[str, int]:
        return self._sock.getsockname()

    def stats(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def _bump(self, key: str) -> None:
        with self._lock:
            self._counters[key] += 1

    def _zone_for(self, name: str) -> Zone | None:
        labels = name.lower().split(".")
        for i in range(len(labels)):
            zone = self._zones.get(".".join(labels[i:]))
            if zone is not None:
                return zone
        return None

    def _respond(self, query: DnsMessage) -> bytes:
        q = query.question
        if q is None:
            err = DnsMessage(id=query.id, qr=True, rd=query.rd, rcode=RCODE_FORMERR)
            return encode_message(err)
        key = (q.name, q.qtype, q.qclass)
        blob = self._cache.get(key)
        if blob is None:
            zone = self._zone_for(q.name)
            if zone is None:
                resp = DnsMessage(
                    id=0, qr=True, rcode=RCODE_REFUSED, question=q
                )
            else:
                resp = answer(query, zone)
                resp.id = 0
                resp.rd = False
            blob = encode_message(resp)
            if len(self._cache) < _RESPONSE_CACHE_MAX:
                self._cache[key] = blob
        if blob[3] & 0x0F == RCODE_NXDOMAIN:
            self._bump("nxdomain")
        elif blob[3] & 0x0F == RCODE_REFUSED:
            self._bump("refused")
        out = bytearray(blob)
        out[:2] = query.id.to_bytes(2, "big")
        if query.rd:
            out[2] |= 0x01
        return bytes(out)

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                data, addr = self._sock.recvfrom(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            self._bump("received")
            try:
                query = decode_message(data)
                if query.qr:
                    continue  # never answer answers; avoids reflection loops
                payload = self._respond(query)
            except DnsWireError:
                self._bump("malformed")
                continue
            except Exception:
                log.exception("request handling failed")
                err = DnsMessage(id=0, qr=True, rcode=RCODE_SERVFAIL)
                err.id = int.from_bytes(data[:2], "big") if len(data) >= 2 else 0
                payload = encode_message(err)
            try:
                self._sock.sendto(payload, addr)
                self._bump("answered")
            except OSError:
                pass

    def close(self) -> None:
        self._stop.set()
        for t in self._threads:
            t.join(timeout=2.0)
        self._sock.close()

    def __enter__(self) -> "NameServer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(
    endpoint: tuple[str, int], zones: Iterable[Zone], *, workers: int = 4
) -> NameServer:
    """Bind a UDP endpoint and start answering; returns the server handle."""
    return NameServer(endpoint, zones, workers=workers)
