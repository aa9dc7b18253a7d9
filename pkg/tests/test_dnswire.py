import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flamekit.dnswire import (
    CLASS_IN,
    RCODE_NXDOMAIN,
    TYPE_SOA,
    TYPE_TXT,
    DnsMessage,
    DnsWireError,
    FlameRecord,
    FlameRecordError,
    Question,
    ResourceRecord,
    SoaData,
    decode_message,
    encode_message,
    encode_name,
    encode_query,
    format_flame_record,
    parse_flame_record,
)


class TestNames:
    def test_simple_roundtrip(self):
        wire = encode_name("5.flame.test")
        assert wire == b"\x015\x05flame\x04test\x00"

    def test_trailing_dot_and_root(self):
        assert encode_name("flame.test.") == encode_name("flame.test")
        assert encode_name("") == b"\x00"
        assert encode_name(".") == b"\x00"

    def test_label_length_limits(self):
        encode_name("a" * 63 + ".test")
        with pytest.raises(DnsWireError):
            encode_name("a" * 64 + ".test")
        with pytest.raises(DnsWireError):
            encode_name("a..b")

    def test_total_length_limit(self):
        name = ".".join(["a" * 60] * 4)        # 244 octets with framing
        encode_name(name)
        with pytest.raises(DnsWireError):
            encode_name(".".join(["a" * 60] * 5))

    def test_non_ascii_rejected(self):
        with pytest.raises(DnsWireError):
            encode_name("héllo.test")


class TestQueries:
    def test_query_roundtrip(self):
        wire = encode_query("5.flame.test", TYPE_TXT, msg_id=0x4242)
        msg = decode_message(wire)
        assert msg.id == 0x4242
        assert msg.rd and not msg.qr
        assert msg.question == Question("5.flame.test", TYPE_TXT, CLASS_IN)
        assert msg.answers == []

    def test_fresh_ids_vary(self):
        ids = {decode_message(encode_query("x.test", TYPE_TXT)).id
               for _ in range(64)}
        assert len(ids) > 1

    def test_geo_domain_roundtrip_bulk(self):
        rng = random.Random(99)
        for _ in range(1000):
            depth = rng.randrange(0, 28)
            labels = [str(rng.randrange(4)) for _ in range(depth)]
            labels.append(str(rng.randrange(6)))
            name = ".".join(labels) + ".loc.arpa"
            msg = decode_message(encode_query(name, TYPE_TXT, msg_id=7))
            assert msg.question.name == name


def soa_fixture():
    return SoaData("ns1.flame.test", "admin.flame.test",
                   2026010100, 3600, 600, 86400, 30)


class TestMessageRoundtrip:
    def test_full_response(self):
        msg = DnsMessage(
            id=77, qr=True, aa=True, rd=True, ra=False,
            question=Question("3.5.flame.test", TYPE_TXT),
            answers=[
                ResourceRecord("3.5.flame.test", TYPE_TXT, 300,
                               (b"flame1 MCNAME https://maps.a.example",)),
                ResourceRecord("3.5.flame.test", TYPE_TXT, 300,
                               (b"flame1 MNS ns.b.example:5353",)),
            ],
            authority=[ResourceRecord("flame.test", TYPE_SOA, 30,
                                      soa_fixture())])
        assert decode_message(encode_message(msg)) == msg

    def test_nxdomain_with_soa(self):
        msg = DnsMessage(
            id=1, qr=True, aa=True, rcode=RCODE_NXDOMAIN,
            question=Question("9.flame.test", TYPE_TXT),
            authority=[ResourceRecord("flame.test", TYPE_SOA, 30,
                                      soa_fixture())])
        back = decode_message(encode_message(msg))
        assert back == msg
        assert back.rcode == RCODE_NXDOMAIN

    def test_unknown_rtype_is_opaque(self):
        msg = DnsMessage(
            id=2, qr=True,
            question=Question("x.test", 1),
            answers=[ResourceRecord("x.test", 1, 60, b"\x7f\x00\x00\x01")])
        assert decode_message(encode_message(msg)) == msg

    def test_multiple_txt_records_all_surface(self):
        answers = [
            ResourceRecord("5.flame.test", TYPE_TXT, 300,
                           (f"flame1 MCNAME https://m{i}.example".encode(),))
            for i in range(4)
        ]
        msg = DnsMessage(id=3, qr=True,
                         question=Question("5.flame.test", TYPE_TXT),
                         answers=answers)
        back = decode_message(encode_message(msg))
        assert len(back.answers) == 4
        kinds = [parse_flame_record(r.rdata) for r in back.answers]
        assert [k.target for k in kinds] == [
            f"https://m{i}.example" for i in range(4)]

    @given(st.integers(0, 0xFFFF), st.booleans(), st.booleans(),
           st.booleans(), st.booleans(), st.integers(0, 15),
           st.lists(st.lists(st.binary(min_size=0, max_size=255),
                             min_size=1, max_size=3),
                    max_size=4))
    @settings(max_examples=200, deadline=None)
    def test_generated_roundtrip(self, mid, qr, aa, rd, ra, rcode, txts):
        msg = DnsMessage(
            id=mid, qr=qr, aa=aa, rd=rd, ra=ra, rcode=rcode,
            question=Question("7.3.flame.test", TYPE_TXT),
            answers=[ResourceRecord("7.3.flame.test", TYPE_TXT, 60,
                                    tuple(strings)) for strings in txts],
            authority=[ResourceRecord("flame.test", TYPE_SOA, 30,
                                      soa_fixture())])
        assert decode_message(encode_message(msg)) == msg


class TestDecoderRobustness:
    def test_compressed_owner_name(self):
        # hand-assembled response: answer owner and SOA names point back
        # at the question name (offset 12; 'flame.test' starts at 14)
        txt = b"flame1 MNS ns.example:5300"
        wire = struct.pack(">HHHHHH", 0x1234, 0x8400, 1, 1, 1, 0)
        wire += b"\x015\x05flame\x04test\x00" + struct.pack(">HH", TYPE_TXT,
                                                            CLASS_IN)
        wire += b"\xc0\x0c" + struct.pack(">HHIH", TYPE_TXT, CLASS_IN, 300,
                                          len(txt) + 1)
        wire += bytes([len(txt)]) + txt
        soa_rdata = (b"\x03ns1\xc0\x0e" + b"\x05admin\xc0\x0e"
                     + struct.pack(">IIIII", 1, 2, 3, 4, 5))
        wire += b"\xc0\x0e" + struct.pack(">HHIH", TYPE_SOA, CLASS_IN, 30,
                                          len(soa_rdata))
        wire += soa_rdata

        msg = decode_message(wire)
        assert msg.question.name == "5.flame.test"
        assert msg.answers[0].owner == "5.flame.test"
        assert msg.answers[0].rdata == (txt,)
        soa = msg.authority[0]
        assert soa.owner == "flame.test"
        assert soa.rdata == SoaData("ns1.flame.test", "admin.flame.test",
                                    1, 2, 3, 4, 5)

    def test_pointer_loop_rejected(self):
        wire = struct.pack(">HHHHHH", 1, 0, 1, 0, 0, 0) + b"\xc0\x0c"
        with pytest.raises(DnsWireError):
            decode_message(wire)
        wire = struct.pack(">HHHHHH", 1, 0, 1, 0, 0, 0) + b"\xc0\x0e\xc0\x0c"
        with pytest.raises(DnsWireError):
            decode_message(wire)

    def test_every_prefix_is_handled(self):
        msg = DnsMessage(
            id=5, qr=True, question=Question("1.2.flame.test", TYPE_TXT),
            answers=[ResourceRecord("1.2.flame.test", TYPE_TXT, 60,
                                    (b"flame1 MNS h:1",))],
            authority=[ResourceRecord("flame.test", TYPE_SOA, 30,
                                      soa_fixture())])
        wire = encode_message(msg)
        for cut in range(len(wire)):
            try:
                decode_message(wire[:cut])
            except DnsWireError:
                pass

    def test_random_fuzz_total(self):
        rng = random.Random(1337)
        for _ in range(10000):
            blob = rng.randbytes(rng.randrange(0, 64))
            try:
                decode_message(blob)
            except DnsWireError:
                pass

    def test_mutation_fuzz_total(self):
        wire = bytearray(encode_message(DnsMessage(
            id=9, qr=True, question=Question("5.flame.test", TYPE_TXT),
            answers=[ResourceRecord("5.flame.test", TYPE_TXT, 60,
                                    (b"flame1 MNS h:1",))])))
        rng = random.Random(4)
        for _ in range(10000):
            blob = bytearray(wire)
            for _ in range(rng.randrange(1, 4)):
                blob[rng.randrange(len(blob))] = rng.randrange(256)
            try:
                decode_message(bytes(blob))
            except DnsWireError:
                pass


class TestFlameGrammar:
    def test_mcname(self):
        rec = parse_flame_record((b"flame1 MCNAME https://maps.cs.example",))
        assert rec == FlameRecord("MCNAME", "https://maps.cs.example")

    def test_mns_with_and_without_port(self):
        rec = parse_flame_record((b"flame1 MNS ns1.example:5353",))
        assert rec == FlameRecord("MNS", "ns1.example:5353")
        rec = parse_flame_record((b"flame1 MNS ns1.example",))
        assert rec == FlameRecord("MNS", "ns1.example")

    def test_foreign_txt_skipped(self):
        assert parse_flame_record((b"v=spf1 include:_spf.example ~all",)) \
            is None
        assert parse_flame_record((b"flame2 MCNAME https://x",)) is None
        assert parse_flame_record((b"",)) is None
        assert parse_flame_record((b"\xff\xfe",)) is None

    def test_split_character_strings_join(self):
        rec = parse_flame_record((b"flame1 MCN", b"AME https://m.example"))
        assert rec == FlameRecord("MCNAME", "https://m.example")

    def test_malformed_flame_records_raise(self):
        for bad in [
            b"flame1",
            b"flame1 MCNAME",
            b"flame1 MCNAME ftp://x.example",
            b"flame1 MCNAME not-a-url",
            b"flame1 MNS ",
            b"flame1 MNS host:notaport",
            b"flame1 MNS host:99999",
            b"flame1 MNS bad host",
            b"flame1 CNAME x.example",
            b"flame1  MCNAME https://x.example",
        ]:
            with pytest.raises(FlameRecordError):
                parse_flame_record((bad,))

    def test_format_roundtrip(self):
        for rec in [FlameRecord("MCNAME", "http://localhost:8111"),
                    FlameRecord("MNS", "127.0.0.1:5301")]:
            assert parse_flame_record((format_flame_record(rec),)) == rec
