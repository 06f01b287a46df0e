"""Compressed witness that one node is still short of d links after t rounds.

Layout: 32-bit d, capacity, T; then node v in ceil(log2 n) bits; the full
rows of every other node, raw; for v: gamma(l_v), gamma(d' + 1), rank of
the d' accepted positions among its l_v requests, the accepted draws raw,
each rejected destination as a rank inside that round's overloaded set,
and finally v's remaining draws raw.

A rejected request of v in round r hit a node w whose load, counting every
other node's requests plus the x_r requests v sent that round, exceeded the
capacity. That candidate set is computable by the decoder before it reads
v's rejected destinations.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from ..bits import BitReader, BitWriter, width_for
from ..errors import DecodeError, InternalError, InvalidParameter, PreconditionError
from ..graph import Graph
from ..protocol import RaesParams, RandomTape, run_raes
from .subsets import subset_rank, subset_unrank

__all__ = ["WitnessStream", "encode_termination_witness", "decode_termination_witness", "overloaded_set"]

@dataclass(frozen=True)
class WitnessStream:
    bits: tuple[int, ...]
    node: int
    round: int
    ell: int
    accepted: int

    def __len__(self) -> int:
        return len(self.bits)


def overloaded_set(g: Graph, v: int, d_in: list[int], others: list[int], rejected_by_v: int, cap: int) -> list[int]:
    return [w for w in g.adjacency[v] if d_in[w] + others[w] + rejected_by_v > cap]


def encode_termination_witness(g: Graph, params: RaesParams, tape: RandomTape, v: int, t: int) -> WitnessStream:
    n, d, cap, T = g.n, params.d, params.capacity, params.max_rounds
    if not 0 <= v < n:
        raise InvalidParameter(f"node {v} out of range")
    if not 1 <= t <= T:
        raise InvalidParameter(f"round {t} outside 1..{T}")
    trace = run_raes(g, params, tape).trace
    if t > trace.num_rounds or trace.d_out[t - 1][v] >= d:
        raise PreconditionError(f"node {v} already has {d} accepted links by round {t}")
    rows = tape.rows()
    w = width_for(g.delta)
    mine = [(r, req.dst, req.accepted) for r, rnd in enumerate(trace.rounds[:t], 1) for req in rnd if req.src == v]
    ell = len(mine)
    acc_pos = [i for i, (_, _, ok) in enumerate(mine) if ok]

    bw = BitWriter()
    for x in (d, cap, T):
        bw.write_uint(x, 32)
    bw.write_uint(v, width_for(n))
    for u in range(n):
        if u != v:
            for draw in rows[u]:
                bw.write_uint(draw, w)
    bw.write_gamma(ell)
    bw.write_gamma(len(acc_pos) + 1)
    bw.write_uint(subset_rank(ell, acc_pos), width_for(comb(ell, len(acc_pos))))
    for i in acc_pos:
        bw.write_uint(rows[v][i], w)
    for r in range(1, t + 1):
        rnd = trace.rounds[r - 1]
        rejected = [req.dst for req in rnd if req.src == v and not req.accepted]
        if not rejected:
            continue
        others = [0] * n
        for req in rnd:
            if req.src != v:
                others[req.dst] += 1
        pool = overloaded_set(g, v, list(trace.d_in_before(r)), others, len(rejected), cap)
        for dst in rejected:
            if dst not in pool:
                raise InternalError(f"rejected destination {dst} missing from overloaded set in round {r}")
            bw.write_uint(pool.index(dst), width_for(len(pool)))
    for draw in rows[v][ell:]:
        bw.write_uint(draw, w)
    return WitnessStream(bw.bits(), v, t, ell, len(acc_pos))


def decode_termination_witness(g: Graph, stream: WitnessStream | tuple[int, ...]) -> RandomTape:
    bits = stream.bits if isinstance(stream, WitnessStream) else tuple(stream)
    n, delta = g.n, g.delta
    w = width_for(delta)
    adj, pos_of = g.adjacency, g.position
    br = BitReader(bits, section="header")
    d, cap, T = (br.read_uint(32) for _ in range(3))
    if d < 1 or T < 1 or cap < 1:
        raise DecodeError("header parameters must be positive", "header")
    v = br.read_uint(width_for(n))
    if v >= n:
        raise DecodeError(f"node id {v} out of range", "header")

    br.section = "others"
    rows: dict[int, list[int]] = {}
    for u in range(n):
        if u != v:
            row = [br.read_uint(w) for _ in range(d * T)]
            if any(x >= delta for x in row):
                raise DecodeError(f"row of node {u} holds a draw >= delta", "others")
            rows[u] = row
    br.section = "node"
    ell = br.read_gamma()
    acc = br.read_gamma() - 1
    if not acc < d or ell > d * T or acc > ell:
        raise DecodeError(f"inconsistent counts l_v={ell}, d'={acc}", "node")
    acc_pos = subset_unrank(ell, acc, _rank(br, comb(ell, acc)))
    acc_draws = {}
    for p in acc_pos:
        x = br.read_uint(w)
        if x >= delta:
            raise DecodeError("accepted draw out of range", "node")
        acc_draws[p] = x
    acc_set = set(acc_pos)

    d_out, d_in, cursor = [0] * n, [0] * n, [0] * n
    v_draws: list[int] = []
    t = 0
    while cursor[v] < ell:
        t += 1
        if t > T:
            raise DecodeError("replay ran past T rounds", "replay")
        requests: list[tuple[int, int, int]] = []
        others = [0] * n
        for u in range(n):
            if u == v:
                continue
            k = d - d_out[u]
            for draw in rows[u][cursor[u] : cursor[u] + k]:
                requests.append((u, adj[u][draw], -1))
                others[adj[u][draw]] += 1
            cursor[u] += k
        k = d - d_out[v]
        if k == 0:
            raise DecodeError(f"node {v} finished before issuing {ell} requests", "replay")
        if cursor[v] + k > ell:
            raise DecodeError("request count does not end on a round boundary", "replay")
        mine = range(cursor[v], cursor[v] + k)
        n_rej = sum(1 for p in mine if p not in acc_set)
        pool = overloaded_set(g, v, d_in, others, n_rej, cap) if n_rej else []
        for p in mine:
            if p in acc_set:
                draw = acc_draws[p]
            else:
                if not pool:
                    raise DecodeError("rejected request with an empty overloaded set", "node")
                idx = br.read_uint(width_for(len(pool)))
                if idx >= len(pool):
                    raise DecodeError(f"overloaded rank {idx} >= {len(pool)}", "node")
                draw = pos_of[v][pool[idx]]
            v_draws.append(draw)
            requests.append((v, adj[v][draw], p))
        cursor[v] += k
        received = [0] * n
        for _, dst, _ in requests:
            received[dst] += 1
        accepts = [received[x] <= cap - d_in[x] for x in range(n)]
        for u, dst, p in requests:
            ok = accepts[dst]
            if p >= 0 and ok != (p in acc_set):
                raise DecodeError(f"round {t}: outcome of request {p} disagrees with the encoding", "replay")
            if ok:
                d_out[u] += 1
                d_in[dst] += 1
    if d_out[v] != acc:
        raise DecodeError(f"replay gives node {v} {d_out[v]} links, encoding says {acc}", "replay")
    br.section = "tail"
    tail = [br.read_uint(w) for _ in range(d * T - ell)]
    if any(x >= delta for x in tail):
        raise DecodeError("unused draw out of range", "tail")
    if br.remaining():
        raise DecodeError(f"{br.remaining()} trailing bits", "tail")
    draws = np.zeros((n, d * T), dtype=np.int64)
    for u, row in rows.items():
        draws[u] = row
    draws[v] = v_draws + tail
    return RandomTape(draws, delta)


def _rank(br: BitReader, count: int) -> int:
    r = br.read_uint(width_for(count))
    if r >= count:
        raise DecodeError(f"rank {r} overflows C = {count}", br.section)
    return r
