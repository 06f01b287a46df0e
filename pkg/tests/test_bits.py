import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from raes.bits import BitReader, BitWriter, gamma_length, width_for
from raes.errors import DecodeError, InvalidParameter

from oracles import gamma_string


def bits_str(bw: BitWriter) -> str:
    return "".join(map(str, bw.bits()))


@pytest.mark.parametrize("x,code", [(1, "1"), (3, "011"), (5, "00101")])
def test_gamma_vectors(x, code):
    bw = BitWriter()
    bw.write_gamma(x)
    assert bits_str(bw) == code
    assert gamma_length(x) == len(code)


@given(st.integers(min_value=1, max_value=2**70))
def test_gamma_matches_oracle_and_inverts(x):
    bw = BitWriter()
    bw.write_gamma(x)
    assert bits_str(bw) == gamma_string(x)
    assert len(bw) == 2 * (x.bit_length() - 1) + 1
    assert BitReader(bw.bits()).read_gamma() == x


def test_gamma_concatenation_is_prefix_free():
    rng = random.Random(3)
    xs = [rng.randint(1, 10_000) for _ in range(500)]
    bw = BitWriter()
    for x in xs:
        bw.write_gamma(x)
    br = BitReader(bw.bits())
    assert [br.read_gamma() for _ in xs] == xs
    assert br.remaining() == 0


def test_gamma_rejects_zero_and_malformed():
    with pytest.raises(InvalidParameter):
        BitWriter().write_gamma(0)
    with pytest.raises(DecodeError):
        BitReader((0, 0, 0)).read_gamma()


@pytest.mark.parametrize("count,width", [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1024, 10), (1025, 11)])
def test_width_for_is_ceil_log2(count, width):
    assert width_for(count) == width


def test_uint_roundtrip_and_section_bound():
    bw = BitWriter()
    bw.write_uint(5, 3)
    bw.write_uint(0, 0)
    bw.write_uint(1023, 10)
    assert bits_str(bw) == "101" + "1" * 10
    br = BitReader(bw.bits(), 0, 3, "demo")
    assert br.read_uint(3) == 5
    with pytest.raises(DecodeError, match=r"\[demo\]"):
        br.read_uint(1)


def test_uint_overflow_refused():
    with pytest.raises(InvalidParameter):
        BitWriter().write_uint(8, 3)


def test_bytes_roundtrip_is_msb_first():
    bw = BitWriter()
    bw.write_bits([1, 0, 1])
    assert bw.to_bytes() == bytes([0b10100000])
    br = BitReader.from_bytes(bytes([0b10100000]), 3)
    assert [br.read_bit() for _ in range(3)] == [1, 0, 1]
