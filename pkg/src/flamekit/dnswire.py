"""RFC 1035 wire codec (subset) and the flame TXT record grammar.

Covers exactly what geo-domain discovery needs: queries and responses
carrying TXT and SOA records, name-compression pointers on decode, and a
total decoder (arbitrary bytes yield either a DnsMessage or DnsWireError,
never a crash). Unknown record types pass through with opaque rdata.

The flame grammar packs service records into ordinary TXT strings:

    flame1 MCNAME <map-server base url>
    flame1 MNS <delegated nameserver host[:port]>

The version token comes first and separators are single spaces. TXT records
that do not start with `flame1` belong to other applications and are
skipped, not rejected.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from urllib.parse import urlsplit

__all__ = [
    "TYPE_TXT", "TYPE_SOA", "CLASS_IN",
    "RCODE_NOERROR", "RCODE_SERVFAIL", "RCODE_NXDOMAIN", "RCODE_REFUSED",
    "DnsWireError", "FlameRecordError",
    "Question", "SoaData", "ResourceRecord", "DnsMessage", "FlameRecord",
    "encode_name", "encode_query", "encode_message", "decode_message",
    "parse_flame_record", "format_flame_record",
]

TYPE_TXT = 16
TYPE_SOA = 6
CLASS_IN = 1

RCODE_NOERROR = 0
RCODE_FORMERR = 1
RCODE_SERVFAIL = 2
RCODE_NXDOMAIN = 3
RCODE_REFUSED = 5

_MAX_NAME_OCTETS = 255
_MAX_LABEL_OCTETS = 63
_HEADER = struct.Struct(">HHHHHH")
_SOA_TAIL = struct.Struct(">IIIII")


class DnsWireError(ValueError):
    """Message violates the wire format (encode or decode)."""


class FlameRecordError(ValueError):
    """TXT string claims to be a flame record but breaks the grammar."""


@dataclass(frozen=True)
class Question:
    name: str
    qtype: int
    qclass: int = CLASS_IN


@dataclass(frozen=True)
class SoaData:
    mname: str
    rname: str
    serial: int
    refresh: int
    retry: int
    expire: int
    minimum: int


@dataclass(frozen=True)
class ResourceRecord:
    owner: str
    rtype: int
    ttl: int
    # TXT: tuple of character-strings (bytes); SOA: SoaData;
    # anything else: raw rdata bytes, preserved opaquely
    rdata: object
    rclass: int = CLASS_IN


@dataclass
class DnsMessage:
    id: int = 0
    qr: bool = False
    aa: bool = False
    tc: bool = False
    rd: bool = False
    ra: bool = False
    rcode: int = RCODE_NOERROR
    question: Question | None = None
    answers: list[ResourceRecord] = field(default_factory=list)
    authority: list[ResourceRecord] = field(default_factory=list)
    additional: list[ResourceRecord] = field(default_factory=list)


def encode_name(name: str) -> bytes:
    """Wire-encode a dotted name (trailing dot optional, no compression)."""
    name = name.rstrip(".")
    out = bytearray()
    if name:
        for label in name.split("."):
            try:
                raw = label.encode("ascii")
            except UnicodeEncodeError:
                raise DnsWireError(f"non-ascii label in {name!r}") from None
            if not 1 <= len(raw) <= _MAX_LABEL_OCTETS:
                raise DnsWireError(
                    f"label length {len(raw)} outside 1..63 in {name!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > _MAX_NAME_OCTETS:
        raise DnsWireError(f"name exceeds 255 octets: {name!r}")
    return bytes(out)


def _read_name(data: bytes, offset: int) -> tuple[str, int]:
    """Decode a possibly compressed name; returns (name, next offset)."""
    labels = []
    total = 0
    end = None   # set when the first pointer is followed
    seen = set()
    while True:
        if offset in seen:
            raise DnsWireError("compression pointer loop")
        seen.add(offset)
        if offset >= len(data):
            raise DnsWireError("name runs past end of message")
        length = data[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(data):
                raise DnsWireError("truncated compression pointer")
            if end is None:
                end = offset + 2
            offset = ((length & 0x3F) << 8) | data[offset + 1]
            continue
        if length & 0xC0:
            raise DnsWireError(f"reserved label type 0x{length:02x}")
        offset += 1
        if length == 0:
            break
        if offset + length > len(data):
            raise DnsWireError("label runs past end of message")
        total += length + 1
        if total > _MAX_NAME_OCTETS:
            raise DnsWireError("name exceeds 255 octets")
        labels.append(data[offset:offset + length].decode("latin-1"))
        offset += length
    return ".".join(labels), end if end is not None else offset


def _encode_rdata(record: ResourceRecord) -> bytes:
    if record.rtype == TYPE_TXT:
        strings = record.rdata
        if not strings:
            raise DnsWireError("TXT record needs at least one string")
        out = bytearray()
        for cs in strings:
            if isinstance(cs, str):
                try:
                    cs = cs.encode("ascii")
                except UnicodeEncodeError:
                    raise DnsWireError(
                        f"non-ascii TXT string {cs!r}") from None
            if len(cs) > 255:
                raise DnsWireError(
                    f"TXT character-string exceeds 255 octets ({len(cs)})")
            out.append(len(cs))
            out += cs
        return bytes(out)
    if record.rtype == TYPE_SOA:
        soa = record.rdata
        return (encode_name(soa.mname) + encode_name(soa.rname)
                + _SOA_TAIL.pack(soa.serial, soa.refresh, soa.retry,
                                 soa.expire, soa.minimum))
    if isinstance(record.rdata, (bytes, bytearray)):
        return bytes(record.rdata)
    raise DnsWireError(f"cannot encode rdata for rtype {record.rtype}")


def _decode_rdata(data: bytes, offset: int, rtype: int,
                  rdlength: int) -> object:
    end = offset + rdlength
    if rtype == TYPE_TXT:
        strings = []
        pos = offset
        while pos < end:
            n = data[pos]
            pos += 1
            if pos + n > end:
                raise DnsWireError("TXT character-string overruns rdata")
            strings.append(bytes(data[pos:pos + n]))
            pos += n
        if not strings:
            raise DnsWireError("empty TXT rdata")
        return tuple(strings)
    if rtype == TYPE_SOA:
        mname, pos = _read_name(data, offset)
        rname, pos = _read_name(data, pos)
        if pos + _SOA_TAIL.size > end:
            raise DnsWireError("SOA rdata too short")
        return SoaData(mname, rname, *_SOA_TAIL.unpack_from(data, pos))
    return bytes(data[offset:end])


def _encode_record(record: ResourceRecord) -> bytes:
    rdata = _encode_rdata(record)
    return (encode_name(record.owner)
            + struct.pack(">HHIH", record.rtype, record.rclass,
                          record.ttl, len(rdata))
            + rdata)


def encode_message(msg: DnsMessage) -> bytes:
    flags = ((msg.qr << 15) | (msg.aa << 10) | (msg.tc << 9)
             | (msg.rd << 8) | (msg.ra << 7) | (msg.rcode & 0xF))
    if not 0 <= msg.id <= 0xFFFF:
        raise DnsWireError(f"message id out of range: {msg.id}")
    out = bytearray(_HEADER.pack(
        msg.id, flags, 1 if msg.question else 0,
        len(msg.answers), len(msg.authority), len(msg.additional)))
    if msg.question:
        out += encode_name(msg.question.name)
        out += struct.pack(">HH", msg.question.qtype, msg.question.qclass)
    for section in (msg.answers, msg.authority, msg.additional):
        for record in section:
            out += _encode_record(record)
    return bytes(out)


def encode_query(name: str, qtype: int, msg_id: int | None = None) -> bytes:
    """Build a recursion-desired query; msg_id defaults to a fresh random."""
    if msg_id is None:
        msg_id = random.getrandbits(16)
    return encode_message(DnsMessage(
        id=msg_id, rd=True, question=Question(name, qtype)))


def decode_message(data: bytes) -> DnsMessage:
    """Total decoder: returns a DnsMessage or raises DnsWireError."""
    try:
        return _decode(bytes(data))
    except DnsWireError:
        raise
    except (struct.error, IndexError, OverflowError) as exc:
        raise DnsWireError(f"malformed message: {exc}") from None


def _decode(data: bytes) -> DnsMessage:
    if len(data) < _HEADER.size:
        raise DnsWireError(f"message too short: {len(data)} octets")
    msg_id, flags, qdcount, ancount, nscount, arcount = _HEADER.unpack_from(
        data, 0)
    msg = DnsMessage(
        id=msg_id,
        qr=bool(flags & 0x8000), aa=bool(flags & 0x0400),
        tc=bool(flags & 0x0200), rd=bool(flags & 0x0100),
        ra=bool(flags & 0x0080), rcode=flags & 0xF)
    offset = _HEADER.size
    if qdcount > 1:
        raise DnsWireError(f"multiple questions unsupported ({qdcount})")
    if qdcount:
        name, offset = _read_name(data, offset)
        if offset + 4 > len(data):
            raise DnsWireError("truncated question")
        qtype, qclass = struct.unpack_from(">HH", data, offset)
        offset += 4
        msg.question = Question(name, qtype, qclass)
    for count, section in ((ancount, msg.answers),
                           (nscount, msg.authority),
                           (arcount, msg.additional)):
        for _ in range(count):
            owner, offset = _read_name(data, offset)
            if offset + 10 > len(data):
                raise DnsWireError("truncated record header")
            rtype, rclass, ttl, rdlength = struct.unpack_from(
                ">HHIH", data, offset)
            offset += 10
            if offset + rdlength > len(data):
                raise DnsWireError("record rdata overruns message")
            rdata = _decode_rdata(data, offset, rtype, rdlength)
            offset += rdlength
            section.append(ResourceRecord(owner, rtype, ttl, rdata, rclass))
    return msg


@dataclass(frozen=True)
class FlameRecord:
    kind: str      # "MCNAME" or "MNS"
    target: str    # MCNAME: base URL; MNS: host[:port]


def _validate_mcname_target(target: str) -> None:
    parts = urlsplit(target)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise FlameRecordError(f"MCNAME target is not an http(s) URL: "
                               f"{target!r}")


def _validate_mns_target(target: str) -> None:
    host, sep, port = target.rpartition(":")
    if not sep:
        host = target
    elif not (port.isdigit() and 1 <= int(port) <= 65535):
        raise FlameRecordError(f"MNS port invalid: {target!r}")
    if not host or not all(
            c.isalnum() or c in ".-" for c in host):
        raise FlameRecordError(f"MNS host invalid: {target!r}")


def parse_flame_record(txt_strings) -> FlameRecord | None:
    """Parse one TXT record's character-strings as a flame record.

    Returns None when the record belongs to some other application
    (missing `flame1` prefix); raises FlameRecordError when it claims the
    prefix but breaks the grammar.
    """
    joined = bytearray()
    for cs in txt_strings:
        if isinstance(cs, str):
            try:
                cs = cs.encode("ascii")
            except UnicodeEncodeError:
                return None
        joined += cs
    try:
        text = joined.decode("ascii")
    except UnicodeDecodeError:
        return None
    if text != "flame1" and not text.startswith("flame1 "):
        return None
    parts = text.split(" ")
    if len(parts) != 3 or not all(parts):
        raise FlameRecordError(
            f"expected 'flame1 <KIND> <target>', got {text!r}")
    _, kind, target = parts
    if kind == "MCNAME":
        _validate_mcname_target(target)
    elif kind == "MNS":
        _validate_mns_target(target)
    else:
        raise FlameRecordError(f"unknown flame record kind {kind!r}")
    return FlameRecord(kind, target)


def format_flame_record(record: FlameRecord) -> str:
    return f"flame1 {record.kind} {record.target}"
