"""On-disk container for a compressed execution encoding.

    bytes 0..5    magic b"RAESC1"
    bytes 6..29   n, w, d, cd, T, s as unsigned 32-bit big-endian integers
    bytes 30..    payload: the bitstream, then p zero bits, then p as a 3-bit
                  field, where 0 <= p < 8 is the least value making the
                  payload a whole number of bytes

A reader recovers the stream length as 8 * len(payload) - 3 - p.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..bits import BitReader, BitWriter
from ..errors import DecodeError
from .execution import CompressedEncoding

__all__ = ["MAGIC", "encoding_to_bytes", "encoding_from_bytes", "write_encoding", "read_encoding"]

MAGIC = b"RAESC1"
_HEADER = struct.Struct(">6I")


def encoding_to_bytes(enc: CompressedEncoding) -> bytes:
    pad = -(len(enc.bits) + 3) % 8
    bw = BitWriter()
    bw.write_bits(enc.bits)
    bw.write_uint(0, pad)
    bw.write_uint(pad, 3)
    head = _HEADER.pack(enc.n, enc.w, enc.d, enc.cd, enc.T, enc.s)
    return MAGIC + head + bw.to_bytes()


def encoding_from_bytes(data: bytes) -> CompressedEncoding:
    if data[: len(MAGIC)] != MAGIC:
        raise DecodeError("bad magic, not an encoding file", "file")
    start = len(MAGIC) + _HEADER.size
    if len(data) < start + 1:
        raise DecodeError("file shorter than its header", "file")
    n, w, d, cd, T, s = _HEADER.unpack(data[len(MAGIC) : start])
    bits = tuple(int(b) for b in np.unpackbits(np.frombuffer(data[start:], dtype=np.uint8)))
    total = len(bits)
    pad = BitReader(bits, total - 3, total, "file").read_uint(3)
    length = total - 3 - pad
    if length < 0:
        raise DecodeError(f"pad length {pad} exceeds payload", "file")
    if any(bits[length : total - 3]):
        raise DecodeError("nonzero padding bits", "file")
    return CompressedEncoding(n=n, w=w, d=d, cd=cd, T=T, s=s, bits=bits[:length])


def write_encoding(enc: CompressedEncoding, path: str | Path) -> None:
    Path(path).write_bytes(encoding_to_bytes(enc))


def read_encoding(path: str | Path) -> CompressedEncoding:
    return encoding_from_bytes(Path(path).read_bytes())
