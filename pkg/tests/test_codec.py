import math
from fractions import Fraction

import numpy as np
import pytest

from raes.analysis import classify_nodes
from raes.codec import (
    CompressedEncoding,
    cost_report,
    decode_execution,
    encode_execution,
    encoding_from_bytes,
    encoding_to_bytes,
    parse_encoding,
    read_encoding,
    savings_bound,
    savings_bound_by_components,
    write_encoding,
)
from raes.codec.ledger import SECTIONS
from raes.errors import DecodeError, InvalidParameter, PreconditionError
from raes.graph import gen_complete
from raes.protocol import RaesParams, fresh_tape, run_raes

from codec_cases import terminated_cases
from oracles import gamma_string

# Hand encoding of the K_4 vector with S = {1, 2, 3}; w = 2.
HAND_FIELDS = {
    "table1": gamma_string(3) + "11",  # rank 3 of {1,2,3} among 3-subsets of 4
    "table2_upper": "00" * 4,  # node 0's draws 0,0,0,0
    "node1": gamma_string(2) + "1"  # l=2, accepted position {1}
    + gamma_string(1)  # no link leaves S
    + "0"  # 1->2, rank 0 in [2, 3]
    + gamma_string(1) + "1"  # no rank bits; one rejection, critical
    + "0000",  # unused draws 0, 0
    "node2": gamma_string(3) + "10"  # l=3, accepted position {2}
    + gamma_string(1)
    + "1"  # 2->3, rank 1 in [1, 3]
    + gamma_string(1) + "10"  # critical in round 1, semi-saturated in round 2
    + "00",
    "node3": gamma_string(4) + "11"  # l=4, accepted position {3}
    + gamma_string(2)  # one link leaves S; rank of {0} in C(1,1) takes 0 bits
    + "00"  # raw draw 0 -> node 0
    + gamma_string(2) + "100" + "1",  # one rank bit: node 2 is index 1 of SS_3 = {1, 2}
    "table3": gamma_string(2) + "00" + gamma_string(1) * 3,  # C_1 = {0}, then empty
}


def bits(enc, spans):
    return "".join("".join(map(str, enc.bits[a:b])) for a, b in spans)


def test_hand_vector_fields(hand):
    g, params, tape, res = hand
    enc, rep = encode_execution(g, params, tape, res.trace, [1, 2, 3])
    expected = "".join(HAND_FIELDS.values())
    assert "".join(map(str, enc.bits)) == expected
    assert len(enc.bits) == 64
    assert bits(enc, enc.sections["table1"]) == HAND_FIELDS["table1"]
    assert bits(enc, enc.sections["table3"]) == HAND_FIELDS["table3"]
    assert bits(enc, [enc.sections["field4"][2]]) == "0101001"
    layout = parse_encoding(g, enc).rows[3]
    assert layout.categories == [1, 0, 0]
    back, trace = decode_execution(g, enc)
    assert back == tape
    assert trace.rounds == res.trace.rounds
    assert (enc.n, enc.w, enc.d, enc.cd, enc.T, enc.s) == (4, 2, 1, 1, 4, 3)


def test_hand_vector_costs(hand):
    g, params, tape, res = hand
    rep = cost_report(g, res.trace, [1, 2, 3], 0.0)
    assert rep.cost_S == pytest.approx(2 * math.log2(3) + 2, abs=1e-9)
    assert rep.cost_S == pytest.approx(5.170, abs=5e-4)
    assert rep.stream_length == 64
    assert rep.audit_ok()
    assert rep.eps == Fraction(1, 3)
    assert rep.savings == pytest.approx(rep.savings_components, rel=1e-9)
    assert rep.raw_total == pytest.approx(16 * math.log2(3))
    assert rep.hypotheses == {"d_at_least_44": False, "c_large_enough": False, "lambda_small_enough": True}


def test_single_node_all_links_leave(hand):
    g, params, tape, res = hand
    enc, rep = encode_execution(g, params, tape, res.trace, [3])
    assert rep.eps == 1
    layout = parse_encoding(g, enc).rows[3]
    assert layout.out_positions == [0]
    assert decode_execution(g, enc)[0] == tape


def test_refusals(hand):
    g, params, tape, res = hand
    with pytest.raises(InvalidParameter):
        encode_execution(g, params, tape, res.trace, [])
    with pytest.raises(InvalidParameter):
        encode_execution(g, params, tape, res.trace, [0, 1, 2, 3])
    g16 = gen_complete(16)
    p = RaesParams(3, Fraction(1, 3), 1)
    t = fresh_tape(g16, p, 0)
    nt = run_raes(g16, p, t)
    with pytest.raises(PreconditionError):
        encode_execution(g16, p, t, nt.trace, [0, 1])
    with pytest.raises(PreconditionError):
        cost_report(g16, nt.trace, [0, 1], 0.0)


def test_trace_must_match_tape(hand):
    g, params, tape, res = hand
    other = fresh_tape(g, RaesParams(1, Fraction(3), 4), 0)
    with pytest.raises(InvalidParameter):
        encode_execution(g, params, other, res.trace, [1, 2])


def _flip_table3_count(enc):
    # table 3 starts with gamma(c_1 + 1); replace it by a huge count
    start = enc.sections["table3"][0][0]
    return CompressedEncoding(enc.n, enc.w, enc.d, enc.cd, enc.T, enc.s, enc.bits[:start] + (0,) * 6 + (1,) * 7)


def test_corruptions_raise_decode_error(hand):
    g, params, tape, res = hand
    enc, _ = encode_execution(g, params, tape, res.trace, [1, 2, 3])
    with pytest.raises(DecodeError, match="table3"):
        decode_execution(g, _flip_table3_count(enc))
    with pytest.raises(DecodeError):
        decode_execution(g, CompressedEncoding(4, 2, 1, 1, 4, 3, enc.bits[:-3]))
    with pytest.raises(DecodeError, match="trailing"):
        decode_execution(g, CompressedEncoding(4, 2, 1, 1, 4, 3, enc.bits + (0,)))
    with pytest.raises(DecodeError, match="header"):
        decode_execution(gen_complete(5), enc)
    # every single-bit flip is either rejected or decodes to a different tape
    for i in range(len(enc.bits)):
        flipped = list(enc.bits)
        flipped[i] ^= 1
        bad = CompressedEncoding(4, 2, 1, 1, 4, 3, tuple(flipped))
        try:
            got, _ = decode_execution(g, bad)
        except DecodeError:
            continue
        assert got != tape


def test_roundtrip_and_audit_random():
    for fam, g, params, tape, trace, s_set in terminated_cases(120, seed=1):
        enc, rep = encode_execution(g, params, tape, trace, s_set)
        back, tr2 = decode_execution(g, enc)
        assert back == tape, (fam, g.n, params, s_set)
        assert tr2.rounds == trace.rounds
        assert sum(enc.section_bits().values()) == len(enc.bits) == rep.stream_length
        assert enc.section_bits() == rep.actual
        assert rep.audit_ok(), rep.audit()
        for sec in SECTIONS:
            assert rep.fractional[sec] >= 0
        layout = parse_encoding(g, enc)
        cls = classify_nodes(g, trace, s_set)
        for v, row in layout.rows.items():
            assert row.categories == [int(c) for _, c in cls.categories[v]]
        for t, crit in enumerate(layout.critical, start=1):
            assert set(crit) == set(cls.critical[t - 1]) if t <= trace.num_rounds else not crit
        assert rep.savings == pytest.approx(rep.savings_components, rel=1e-9, abs=1e-9)


def test_savings_closed_form_against_components():
    for n, s, d, eps, delta, T in [(100, 10, 44, 0.01, 80, 12), (10**6, 1000, 50, 0.001, 9 * 10**5, 30)]:
        a = savings_bound(n, s, d, eps)
        b = savings_bound_by_components(n, s, d, eps, delta, T)
        assert a == pytest.approx(b, rel=1e-9)
    ls = math.log2(10)
    assert savings_bound(100, 10, 44, 0.0) == pytest.approx(-30 * ls + 0.5 * 440 * ls - 0.25 * 440)


def test_file_roundtrip(tmp_path, hand):
    g, params, tape, res = hand
    enc, _ = encode_execution(g, params, tape, res.trace, [1, 2, 3])
    blob = encoding_to_bytes(enc)
    assert blob[:6] == b"RAESC1"
    assert blob[6:30] == b"".join(x.to_bytes(4, "big") for x in (4, 2, 1, 1, 4, 3))
    # 64 bits + 5 pad + 3-bit suffix = 9 bytes, last three bits hold 5
    assert len(blob) == 30 + 9 and blob[-1] & 0b111 == 5
    p = tmp_path / "e.raesc"
    write_encoding(enc, p)
    again = read_encoding(p)
    assert again == enc
    write_encoding(again, p)
    assert p.read_bytes() == blob
    assert decode_execution(g, again)[0] == tape


@pytest.mark.parametrize("length", range(0, 17))
def test_file_padding_all_residues(length):
    enc = CompressedEncoding(4, 2, 1, 1, 4, 3, tuple((i * 7 + 3) % 2 for i in range(length)))
    blob = encoding_to_bytes(enc)
    assert (len(blob) - 30) * 8 == length + 3 + (-(length + 3) % 8)
    assert encoding_from_bytes(blob) == enc


def test_file_errors():
    with pytest.raises(DecodeError, match="magic"):
        encoding_from_bytes(b"NOTRAES" + bytes(40))
    enc = CompressedEncoding(4, 2, 1, 1, 4, 3, (1, 0, 1))
    blob = bytearray(encoding_to_bytes(enc))
    blob[-1] |= 0b00010000  # dirty a padding bit
    with pytest.raises(DecodeError):
        encoding_from_bytes(bytes(blob))
    with pytest.raises(DecodeError):
        encoding_from_bytes(encoding_to_bytes(enc)[:30])


def test_encode_is_deterministic(hand):
    g, params, tape, res = hand
    a, _ = encode_execution(g, params, tape, res.trace, [1, 2, 3])
    b, _ = encode_execution(g, params, tape, res.trace, [3, 2, 1])
    assert a.bits == b.bits
    assert np.array_equal(decode_execution(g, a)[0].draws, tape.draws)
