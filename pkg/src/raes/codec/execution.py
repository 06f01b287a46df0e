"""Compressed encoding of a terminated execution relative to a node set S.

Stream layout (all fields MSB first):

    Table 1        gamma(s), rank of S among s-subsets of V
    Table 2 upper  every node outside S: its d*T draws, w bits each
    Table 2 rows   for each v in S, ascending:
        Field 1    gamma(l_v), rank of the accepted positions among l_v requests
        Field 2    gamma(k_v + 1), rank of the out-of-S positions among the d accepted
        Field 3    per accepted request in tape order: raw draw if it left S,
                   else its rank among v's neighbors inside S
        Field 4    gamma(L + 1) with L the length of the rank part, one category
                   bit per rejected request (1 = critical), then per rejected
                   request its rank in C_t or SS_t of the round it was issued
        Field 5    the d*T - l_v unused draws, raw
    Table 3        for t = 1..T: gamma(c_t + 1), rank of C_t among c_t-subsets of V

``w = ceil(log2 Delta)``. The length prefix in Field 4 makes every row
parseable before the replay, which is what fixes the widths of the ranks.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np

from ..analysis import classify_nodes
from ..bits import BitReader, BitWriter, width_for
from ..errors import DecodeError, InternalError, InvalidParameter, PreconditionError
from ..graph import Graph
from ..protocol import Execution, ExecutionTrace, RaesParams, RandomTape, run_raes
from .ledger import SECTIONS, CostReport, _requests_by_node, cost_report
from .subsets import subset_rank, subset_unrank

__all__ = ["CompressedEncoding", "RowLayout", "encode_execution", "decode_execution", "parse_encoding"]


@dataclass(frozen=True)
class CompressedEncoding:
    n: int
    w: int
    d: int
    cd: int
    T: int
    s: int
    bits: tuple[int, ...]
    sections: dict[str, list[tuple[int, int]]] = field(default_factory=dict, compare=False)

    def section_bits(self) -> dict[str, int]:
        return {name: sum(b - a for a, b in spans) for name, spans in self.sections.items()}

    @property
    def params(self) -> RaesParams:
        return RaesParams(self.d, Fraction(self.cd, self.d), self.T)


@dataclass
class RowLayout:
    """Parsed, not yet replayed, contents of one Table-2 row."""

    node: int
    ell: int
    accepted_positions: list[int]
    out_positions: list[int]  # indices into accepted_positions
    accepted_dest: list[int]
    categories: list[int]
    ranks: BitReader
    unused: list[int]


def _in_s_neighbors(g: Graph, v: int, in_s: frozenset[int]) -> list[int]:
    return [u for u in g.adjacency[v] if u in in_s]


def encode_execution(
    g: Graph,
    params: RaesParams,
    tape: RandomTape,
    trace: ExecutionTrace,
    s_set: Iterable[int],
    lambda2_plus: float = 0.0,
) -> tuple[CompressedEncoding, CostReport]:
    if trace.terminated_at is None:
        raise PreconditionError("only executions that terminate within T rounds can be encoded")
    replay = run_raes(g, params, tape)
    if not isinstance(replay, Execution) or replay.trace.rounds != trace.rounds:
        raise InvalidParameter("trace is not the execution produced by this tape")
    cls = classify_nodes(g, trace, s_set)
    s_nodes = sorted(cls.s_set)
    in_s = cls.s_set
    n, d, cd, T = g.n, params.d, params.capacity, params.max_rounds
    w = width_for(g.delta)
    rows = tape.rows()
    bw = BitWriter()
    sections: dict[str, list[tuple[int, int]]] = {name: [] for name in SECTIONS}

    def mark(name: str, start: int) -> None:
        sections[name].append((start, len(bw)))

    # Table 1
    start = len(bw)
    bw.write_gamma(len(s_nodes))
    bw.write_uint(subset_rank(n, s_nodes), width_for(comb(n, len(s_nodes))))
    mark("table1", start)

    # Table 2, upper part
    start = len(bw)
    for u in range(n):
        if u not in in_s:
            for draw in rows[u]:
                bw.write_uint(draw, w)
    mark("table2_upper", start)

    per_node = _requests_by_node(trace, s_nodes)
    sorted_c = [sorted(cr) for cr in cls.critical]
    sorted_ss = [sorted(ss) for ss in cls.semi_saturated]
    for v in s_nodes:
        reqs = per_node[v]
        ell = len(reqs)
        acc_pos = [i for i, (_, _, ok) in enumerate(reqs) if ok]
        acc_dst = [reqs[i][1] for i in acc_pos]
        out_idx = [j for j, dst in enumerate(acc_dst) if dst not in in_s]

        start = len(bw)
        bw.write_gamma(ell)
        bw.write_uint(subset_rank(ell, acc_pos), width_for(comb(ell, d)))
        mark("field1", start)

        start = len(bw)
        bw.write_gamma(len(out_idx) + 1)
        bw.write_uint(subset_rank(d, out_idx), width_for(comb(d, len(out_idx))))
        mark("field2", start)

        start = len(bw)
        inner = _in_s_neighbors(g, v, in_s)
        inner_w = width_for(len(inner)) if inner else 0
        for j, pos in enumerate(acc_pos):
            if j in out_idx:
                bw.write_uint(rows[v][pos], w)
            else:
                bw.write_uint(inner.index(acc_dst[j]), inner_w)
        mark("field3", start)

        start = len(bw)
        rank_part = BitWriter()
        category_bits = []
        rejected = [(t, dst) for t, dst, ok in reqs if not ok]
        if len(rejected) != len(cls.categories[v]):
            raise InternalError(f"classification of node {v} does not cover its rejected requests")
        for (t, dst), (t2, is_crit) in zip(rejected, cls.categories[v]):
            if t != t2:
                raise InternalError(f"classification order mismatch for node {v}")
            pool = sorted_c[t - 1] if is_crit else sorted_ss[t - 1]
            category_bits.append(1 if is_crit else 0)
            rank_part.write_uint(pool.index(dst), width_for(len(pool)))
        bw.write_gamma(len(rank_part) + 1)
        bw.write_bits(category_bits)
        bw.write_bits(rank_part.bits())
        mark("field4", start)

        start = len(bw)
        for draw in rows[v][ell:]:
            bw.write_uint(draw, w)
        mark("field5", start)

    start = len(bw)
    for t in range(1, T + 1):
        crit = sorted_c[t - 1] if t <= trace.num_rounds else []
        bw.write_gamma(len(crit) + 1)
        bw.write_uint(subset_rank(n, crit), width_for(comb(n, len(crit))))
    mark("table3", start)

    enc = CompressedEncoding(n, w, d, cd, T, len(s_nodes), bw.bits(), sections)
    report = cost_report(g, trace, s_nodes, lambda2_plus, classification=cls)
    if enc.section_bits() != report.actual:
        raise InternalError(f"measured section sizes {enc.section_bits()} disagree with ledger {report.actual}")
    return enc, report


@dataclass
class ParsedEncoding:
    s_nodes: list[int]
    upper: dict[int, list[int]]
    rows: dict[int, RowLayout]
    critical: list[list[int]]
    sections: dict[str, list[tuple[int, int]]]


def parse_encoding(g: Graph, enc: CompressedEncoding) -> ParsedEncoding:
    """Split the stream into tables and rows; the Field-4 ranks stay unread."""
    n, d, T, w = enc.n, enc.d, enc.T, enc.w
    if n != g.n:
        raise DecodeError(f"encoding is for n={n}, graph has n={g.n}", "header")
    if w != width_for(g.delta):
        raise DecodeError(f"draw width {w} does not match graph degree {g.delta}", "header")
    if d < 1 or T < 1 or enc.cd < 1:
        raise DecodeError("header parameters must be positive", "header")
    delta = g.delta
    br = BitReader(enc.bits)
    sections: dict[str, list[tuple[int, int]]] = {name: [] for name in SECTIONS}

    def read_draw(section: str) -> int:
        x = br.read_uint(w)
        if x >= delta:
            raise DecodeError(f"draw {x} is not a neighbor index (delta={delta})", section)
        return x

    start = br.pos
    br.section = "table1"
    s = br.read_gamma()
    if not 1 <= s < n:
        raise DecodeError(f"set size {s} must lie in 1..{n - 1}", "table1")
    if enc.s and s != enc.s:
        raise DecodeError(f"header says s={enc.s}, table 1 says s={s}", "table1")
    s_nodes = subset_unrank(n, s, _read_rank(br, comb(n, s), "table1"))
    in_s = frozenset(s_nodes)
    sections["table1"].append((start, br.pos))

    start = br.pos
    br.section = "table2_upper"
    upper = {u: [read_draw("table2_upper") for _ in range(d * T)] for u in range(n) if u not in in_s}
    sections["table2_upper"].append((start, br.pos))

    rows: dict[int, RowLayout] = {}
    for v in s_nodes:
        start = br.pos
        br.section = "field1"
        ell = br.read_gamma()
        if not d <= ell <= d * T:
            raise DecodeError(f"node {v}: request count {ell} outside {d}..{d * T}", "field1")
        acc_pos = subset_unrank(ell, d, _read_rank(br, comb(ell, d), "field1"))
        sections["field1"].append((start, br.pos))

        start = br.pos
        br.section = "field2"
        k_out = br.read_gamma() - 1
        if k_out > d:
            raise DecodeError(f"node {v}: {k_out} links leaving S but only {d} accepted", "field2")
        out_idx = subset_unrank(d, k_out, _read_rank(br, comb(d, k_out), "field2"))
        sections["field2"].append((start, br.pos))

        start = br.pos
        br.section = "field3"
        inner = _in_s_neighbors(g, v, in_s)
        outs = set(out_idx)
        acc_dst = []
        for j in range(d):
            if j in outs:
                dst = g.adjacency[v][read_draw("field3")]
                if dst in in_s:
                    raise DecodeError(f"node {v}: link marked as leaving S points to {dst} in S", "field3")
            else:
                if not inner:
                    raise DecodeError(f"node {v} has no neighbor inside S for an inner link", "field3")
                idx = br.read_uint(width_for(len(inner)))
                if idx >= len(inner):
                    raise DecodeError(f"node {v}: inner rank {idx} >= {len(inner)}", "field3")
                dst = inner[idx]
            acc_dst.append(dst)
        sections["field3"].append((start, br.pos))

        start = br.pos
        br.section = "field4"
        rank_len = br.read_gamma() - 1
        cats = [br.read_bit() for _ in range(ell - d)]
        ranks = br.sub(rank_len, "field4")
        sections["field4"].append((start, br.pos))

        start = br.pos
        br.section = "field5"
        unused = [read_draw("field5") for _ in range(d * T - ell)]
        sections["field5"].append((start, br.pos))
        rows[v] = RowLayout(v, ell, acc_pos, out_idx, acc_dst, cats, ranks, unused)

    start = br.pos
    br.section = "table3"
    critical = []
    for _ in range(T):
        ct = br.read_gamma() - 1
        if ct > n:
            raise DecodeError(f"critical set size {ct} exceeds n={n}", "table3")
        critical.append(subset_unrank(n, ct, _read_rank(br, comb(n, ct), "table3")))
    sections["table3"].append((start, br.pos))
    if br.remaining():
        raise DecodeError(f"{br.remaining()} trailing bits after table 3", "table3")
    return ParsedEncoding(s_nodes, upper, rows, critical, sections)


def _read_rank(br: BitReader, count: int, section: str) -> int:
    rank = br.read_uint(width_for(count))
    if rank >= count:
        raise DecodeError(f"rank {rank} overflows C = {count}", section)
    return rank


def decode_execution(g: Graph, enc: CompressedEncoding) -> tuple[RandomTape, ExecutionTrace]:
    """Rebuild the tape round by round from the stream and the graph alone."""
    parsed = parse_encoding(g, enc)
    n, d, cap, T = enc.n, enc.d, enc.cd, enc.T
    params = enc.params
    in_s = frozenset(parsed.s_nodes)
    adj, pos_of = g.adjacency, g.position
    d_out = [0] * n
    d_in = [0] * n
    cursor = [0] * n
    s_draws: dict[int, list[int]] = {v: [] for v in parsed.s_nodes}
    acc_index = {v: {p: j for j, p in enumerate(row.accepted_positions)} for v, row in parsed.rows.items()}
    rejected_seen = dict.fromkeys(parsed.s_nodes, 0)

    for t in range(1, T + 1):
        if all(x == d for x in d_out):
            break
        # (source, destination, position in the source's request sequence)
        requests: list[tuple[int, int, int]] = []
        from_outside = [0] * n
        for u, draws in parsed.upper.items():
            k = d - d_out[u]
            for draw in draws[cursor[u] : cursor[u] + k]:
                requests.append((u, adj[u][draw], -1))
                from_outside[adj[u][draw]] += 1
            cursor[u] += k
        ss = sorted(w for w in range(n) if 2 * (d_in[w] + from_outside[w]) >= cap)
        crit = parsed.critical[t - 1]
        for v in parsed.s_nodes:
            row = parsed.rows[v]
            k = d - d_out[v]
            if cursor[v] + k > row.ell:
                raise DecodeError(f"node {v} issues more than its {row.ell} recorded requests", "replay")
            for p in range(cursor[v], cursor[v] + k):
                j = acc_index[v].get(p)
                if j is not None:
                    dst = row.accepted_dest[j]
                else:
                    i = rejected_seen[v]
                    rejected_seen[v] += 1
                    pool = crit if row.categories[i] else ss
                    if not pool:
                        raise DecodeError(f"round {t}: node {v} rejected into an empty class", "field4")
                    idx = row.ranks.read_uint(width_for(len(pool)))
                    if idx >= len(pool):
                        raise DecodeError(f"node {v}: rank {idx} >= class size {len(pool)}", "field4")
                    dst = pool[idx]
                if dst not in pos_of[v]:
                    raise DecodeError(f"node {v}: decoded destination {dst} is not a neighbor", "replay")
                s_draws[v].append(pos_of[v][dst])
                requests.append((v, dst, p))
            cursor[v] += k
        received = [0] * n
        for _, dst, _ in requests:
            received[dst] += 1
        accepts = [received[w] <= cap - d_in[w] for w in range(n)]
        observed_crit = sorted(
            w for w in range(n) if 2 * (d_in[w] + from_outside[w]) < cap and d_in[w] + received[w] > cap
        )
        if observed_crit != crit:
            raise DecodeError(f"round {t}: table 3 lists {crit}, replay finds {observed_crit}", "replay")
        for v, dst, p in requests:
            if p >= 0 and (p in acc_index[v]) != accepts[dst]:
                raise DecodeError(f"round {t}: outcome of node {v}'s request {p} disagrees with field 1", "replay")
            if accepts[dst]:
                d_out[v] += 1
                d_in[dst] += 1

    if any(x != d for x in d_out):
        raise DecodeError("replay did not terminate within T rounds", "replay")
    for v, row in parsed.rows.items():
        if cursor[v] != row.ell:
            raise DecodeError(f"node {v} used {cursor[v]} requests, field 1 says {row.ell}", "replay")
        if row.ranks.remaining():
            raise DecodeError(f"node {v}: {row.ranks.remaining()} unread rank bits", "field4")
    draws = np.zeros((n, d * T), dtype=np.int64)
    for u, row_draws in parsed.upper.items():
        draws[u] = row_draws
    for v, row in parsed.rows.items():
        draws[v] = s_draws[v] + row.unused
    tape = RandomTape(draws, g.delta)
    result = run_raes(g, params, tape)
    if not isinstance(result, Execution):
        raise DecodeError("decoded tape does not terminate", "replay")
    return tape, result.trace
