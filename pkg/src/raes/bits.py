"""Bit-level writer/reader, Elias gamma, and fixed-width fields (MSB first)."""

from __future__ import annotations

from .errors import DecodeError, InvalidParameter

__all__ = ["BitWriter", "BitReader", "gamma_length", "width_for"]


def width_for(count: int) -> int:
    """Bits needed to write one of ``count`` equally likely values: ceil(log2 count)."""
    if count < 1:
        raise InvalidParameter(f"cannot index into an empty range (count={count})")
    return (count - 1).bit_length()


def gamma_length(x: int) -> int:
    return 2 * (x.bit_length() - 1) + 1


class BitWriter:
    def __init__(self) -> None:
        self._bits: list[int] = []

    def __len__(self) -> int:
        return len(self._bits)

    def write_bit(self, bit: int) -> None:
        self._bits.append(1 if bit else 0)

    def write_bits(self, bits) -> None:
        self._bits.extend(1 if b else 0 for b in bits)

    def write_uint(self, value: int, width: int) -> None:
        if value < 0 or value >> width:
            raise InvalidParameter(f"value {value} does not fit in {width} bits")
        self._bits.extend((value >> i) & 1 for i in range(width - 1, -1, -1))

    def write_gamma(self, x: int) -> None:
        if x < 1:
            raise InvalidParameter(f"Elias gamma needs x >= 1 (got {x})")
        nbits = x.bit_length()
        self._bits.extend([0] * (nbits - 1))
        self.write_uint(x, nbits)

    def bits(self) -> tuple[int, ...]:
        return tuple(self._bits)

    def to_bytes(self) -> bytes:
        """Pack into bytes, zero-padding the final byte."""
        out = bytearray((len(self._bits) + 7) // 8)
        for i, b in enumerate(self._bits):
            if b:
                out[i >> 3] |= 0x80 >> (i & 7)
        return bytes(out)


class BitReader:
    """Cursor over a bit sequence. ``end`` bounds reads to one section."""

    def __init__(self, bits, start: int = 0, end: int | None = None, section: str | None = None):
        self._bits = bits
        self.pos = start
        self.end = len(bits) if end is None else end
        self.section = section

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None) -> BitReader:
        bits = [(byte >> (7 - k)) & 1 for byte in data for k in range(8)]
        if nbits is not None:
            bits = bits[:nbits]
        return cls(bits)

    def remaining(self) -> int:
        return self.end - self.pos

    def _need(self, k: int) -> None:
        if self.pos + k > self.end:
            raise DecodeError(f"truncated: need {k} bits at offset {self.pos}, section ends at {self.end}", self.section)

    def read_bit(self) -> int:
        self._need(1)
        b = self._bits[self.pos]
        self.pos += 1
        return b

    def read_uint(self, width: int) -> int:
        self._need(width)
        v = 0
        for b in self._bits[self.pos : self.pos + width]:
            v = (v << 1) | b
        self.pos += width
        return v

    def read_gamma(self) -> int:
        zeros = 0
        while True:
            self._need(1)
            if self._bits[self.pos]:
                break
            zeros += 1
            self.pos += 1
        return self.read_uint(zeros + 1)

    def sub(self, length: int, section: str | None = None) -> BitReader:
        """Carve the next ``length`` bits off as their own bounded reader."""
        self._need(length)
        r = BitReader(self._bits, self.pos, self.pos + length, section or self.section)
        self.pos += length
        return r
