"""Lossless compressed encodings of RAES executions."""

from ..bits import BitReader, BitWriter, gamma_length, width_for
from .execution import CompressedEncoding, decode_execution, encode_execution, parse_encoding
from .ledger import CostReport, cost_report, savings_bound, savings_bound_by_components
from .subsets import subset_rank, subset_unrank

__all__ = [
    "BitReader",
    "BitWriter",
    "gamma_length",
    "width_for",
    "CompressedEncoding",
    "encode_execution",
    "decode_execution",
    "parse_encoding",
    "CostReport",
    "cost_report",
    "savings_bound",
    "savings_bound_by_components",
    "subset_rank",
    "subset_unrank",
]

from .witness import WitnessStream, decode_termination_witness, encode_termination_witness  # noqa: E402

__all__ += ["WitnessStream", "encode_termination_witness", "decode_termination_witness"]

from .fileformat import encoding_from_bytes, encoding_to_bytes, read_encoding, write_encoding  # noqa: E402

__all__ += ["encoding_to_bytes", "encoding_from_bytes", "write_encoding", "read_encoding"]
