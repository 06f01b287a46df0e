"""Tape-driven simulation of the RAES link-request protocol.

Every node owns a row of ``d*T`` draws; a draw ``i`` sends a request to the
``i``-th entry of the node's sorted adjacency list. With the tape fixed the
whole execution is a pure function of ``(graph, params, tape)``.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .bits import BitReader, BitWriter, width_for
from .errors import DecodeError, InternalError, InvalidParameter
from .graph import Graph

__all__ = [
    "RaesParams",
    "RandomTape",
    "Request",
    "ExecutionTrace",
    "SubgraphH",
    "RunStats",
    "Execution",
    "NotTerminated",
    "fresh_tape",
    "run_raes",
    "unsettled_after",
    "termination_round_bound",
    "expected_requests_bound",
]


@dataclass(frozen=True)
class RaesParams:
    d: int
    c: Fraction
    max_rounds: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", Fraction(self.c))
        if self.d < 1:
            raise InvalidParameter("d must be >= 1")
        if self.max_rounds < 1:
            raise InvalidParameter("max_rounds must be >= 1")
        cd = self.c * self.d
        if cd.denominator != 1 or cd < 1:
            raise InvalidParameter(f"c*d must be a positive integer (c={self.c}, d={self.d})")

    @property
    def capacity(self) -> int:
        return int(self.c * self.d)

    @property
    def draws_per_node(self) -> int:
        return self.d * self.max_rounds

    def expansion_hypotheses(self, alpha: Fraction) -> dict[str, bool]:
        """Advisory: degree and capacity conditions under which expansion is guaranteed asymptotically."""
        log_c = math.log(self.c)
        return {
            "d_at_least_44": self.d >= 44,
            "c_large_enough": log_c >= max(2 * math.log(2 / alpha), math.log(10) + 10 * self.d),
        }

    def to_dict(self) -> dict:
        return {"d": self.d, "c": str(self.c), "max_rounds": self.max_rounds}

    @classmethod
    def from_dict(cls, doc: dict) -> RaesParams:
        return cls(int(doc["d"]), Fraction(str(doc["c"])), int(doc["max_rounds"]))


@dataclass(frozen=True, eq=False)
class RandomTape:
    """``draws[v, k]`` is the k-th neighbor index node ``v`` may consume."""

    draws: np.ndarray
    delta: int

    def __post_init__(self) -> None:
        arr = np.array(self.draws, dtype=np.int64)
        if arr.ndim != 2:
            raise InvalidParameter("tape must be a 2-D array (nodes x draws)")
        if arr.size and (arr.min() < 0 or arr.max() >= self.delta):
            raise InvalidParameter(f"tape draws must lie in [0, {self.delta})")
        arr.flags.writeable = False
        object.__setattr__(self, "draws", arr)

    @property
    def n(self) -> int:
        return self.draws.shape[0]

    @property
    def length(self) -> int:
        return self.draws.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RandomTape):
            return NotImplemented
        return self.delta == other.delta and np.array_equal(self.draws, other.draws)

    def rows(self) -> list[list[int]]:
        return self.draws.tolist()

    # JSON / packed binary forms. Header is (n, d, T, delta).

    def to_json(self, d: int, max_rounds: int) -> str:
        self._check_shape(d, max_rounds)
        doc = {"n": self.n, "d": d, "T": max_rounds, "delta": self.delta, "draws": self.rows()}
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> tuple[RandomTape, int, int]:
        try:
            doc = json.loads(text)
            n, d, T, delta = (int(doc[k]) for k in ("n", "d", "T", "delta"))
            draws = doc["draws"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidParameter(f"malformed tape JSON: {exc}") from exc
        if len(draws) != n or any(len(row) != d * T for row in draws):
            raise InvalidParameter(f"tape JSON does not hold {n} rows of {d * T} draws")
        return cls(np.array(draws, dtype=np.int64).reshape(n, d * T), delta), d, T

    def to_bytes(self, d: int, max_rounds: int) -> bytes:
        self._check_shape(d, max_rounds)
        w = width_for(self.delta)
        bw = BitWriter()
        for v in (self.n, d, max_rounds, self.delta):
            bw.write_uint(v, 32)
        for draw in self.draws.ravel().tolist():
            bw.write_uint(draw, w)
        return bw.to_bytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple[RandomTape, int, int]:
        br = BitReader.from_bytes(data)
        br.section = "tape"
        n, d, T, delta = (br.read_uint(32) for _ in range(4))
        w = width_for(delta)
        total = n * d * T
        if br.remaining() < total * w or br.remaining() - total * w >= 8:
            raise DecodeError(f"packed tape length does not match header (n={n}, d={d}, T={T})", "tape")
        draws = [br.read_uint(w) for _ in range(total)]
        return cls(np.array(draws, dtype=np.int64).reshape(n, d * T), delta), d, T

    def _check_shape(self, d: int, max_rounds: int) -> None:
        if self.length != d * max_rounds:
            raise InvalidParameter(f"tape rows hold {self.length} draws, expected d*T={d * max_rounds}")


class Request(NamedTuple):
    src: int
    dst: int
    accepted: bool


@dataclass
class ExecutionTrace:
    """Round-by-round record. ``rounds[t-1]`` holds round ``t``'s requests,
    grouped by source node in node order and by tape order within a node."""

    n: int
    params: RaesParams
    rounds: list[tuple[Request, ...]]
    d_out: list[tuple[int, ...]]
    d_in: list[tuple[int, ...]]
    terminated_at: int | None

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def requests_made(self) -> list[int]:
        ell = [0] * self.n
        for rnd in self.rounds:
            for r in rnd:
                ell[r.src] += 1
        return ell

    def d_out_before(self, t: int) -> tuple[int, ...]:
        return (0,) * self.n if t == 1 else self.d_out[t - 2]

    def d_in_before(self, t: int) -> tuple[int, ...]:
        return (0,) * self.n if t == 1 else self.d_in[t - 2]

    def to_json(self, seed: int | None = None) -> str:
        doc = {
            "params": {**self.params.to_dict(), "n": self.n, "seed": seed},
            "rounds": [[{"from": r.src, "to": r.dst, "accepted": r.accepted} for r in rnd] for rnd in self.rounds],
            "terminated_at": self.terminated_at,
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> tuple[ExecutionTrace, int | None]:
        """Rebuild a trace (and its recorded seed); degree columns are recomputed."""
        try:
            doc = json.loads(text)
            params = RaesParams.from_dict(doc["params"])
            n = int(doc["params"]["n"])
            seed = doc["params"].get("seed")
            raw_rounds = doc["rounds"]
            terminated_at = doc["terminated_at"]
            rounds = [
                tuple(Request(int(r["from"]), int(r["to"]), bool(r["accepted"])) for r in rnd) for rnd in raw_rounds
            ]
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidParameter(f"malformed trace JSON: {exc}") from exc
        d_out, d_in = [], []
        out, inc = [0] * n, [0] * n
        for rnd in rounds:
            for r in rnd:
                if r.accepted:
                    out[r.src] += 1
                    inc[r.dst] += 1
            d_out.append(tuple(out))
            d_in.append(tuple(inc))
        return cls(n, params, rounds, d_out, d_in, terminated_at), seed


@dataclass
class SubgraphH:
    """Undirected multigraph of accepted links; ``edges`` keeps (requester, acceptor, round)."""

    n: int
    edges: list[tuple[int, int, int]]

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for u, v, _ in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def out_degrees(self) -> list[int]:
        out = [0] * self.n
        for u, _, _ in self.edges:
            out[u] += 1
        return out

    def multiplicity(self, simple: bool = False) -> list[Counter]:
        """Per-node neighbor counters; ``simple`` collapses parallel edges."""
        adj = [Counter() for _ in range(self.n)]
        for u, v, _ in self.edges:
            adj[u][v] += 1
            adj[v][u] += 1
        if simple:
            for c in adj:
                for k in c:
                    c[k] = 1
        return adj

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted((min(u, v), max(u, v)) for u, v, _ in self.edges)

    def to_json(self) -> str:
        doc = {"n": self.n, "edges": [[u, v, t] for u, v, t in self.edges]}
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> SubgraphH:
        """Edges are ``[requester, acceptor, round]`` triples."""
        try:
            doc = json.loads(text)
            n = int(doc["n"])
            edges = [(int(u), int(v), int(t)) for u, v, t in doc["edges"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise InvalidParameter(f"malformed subgraph JSON: {exc}") from exc
        for u, v, t in edges:
            if not (0 <= u < n and 0 <= v < n) or u == v or t < 1:
                raise InvalidParameter(f"bad subgraph edge {[u, v, t]} for n={n}")
        return cls(n, edges)


@dataclass
class RunStats:
    rounds_used: int
    total_requests: int
    unsettled: list[int]
    requests_per_node: list[int]

    @property
    def total_messages(self) -> int:
        # one request plus one 1-bit accept/reject reply
        return 2 * self.total_requests

    def to_dict(self) -> dict:
        return {
            "rounds_used": self.rounds_used,
            "total_requests": self.total_requests,
            "total_messages": self.total_messages,
            "unsettled": self.unsettled,
            "requests_per_node": self.requests_per_node,
        }


@dataclass
class Execution:
    trace: ExecutionTrace
    h: SubgraphH
    stats: RunStats
    terminated = True


@dataclass
class NotTerminated:
    trace: ExecutionTrace
    stats: RunStats
    terminated = False


def fresh_tape(g: Graph, params: RaesParams, seed: int) -> RandomTape:
    if g.delta < 1:
        raise InvalidParameter("graph has no edges to draw from")
    rng = np.random.default_rng(seed)
    return RandomTape(rng.integers(0, g.delta, size=(g.n, params.draws_per_node)), g.delta)


def run_raes(g: Graph, params: RaesParams, tape: RandomTape) -> Execution | NotTerminated:
    n, d, cap, T = g.n, params.d, params.capacity, params.max_rounds
    if tape.n != n or tape.delta != g.delta or tape.length != params.draws_per_node:
        raise InvalidParameter(
            f"tape shape {tape.n}x{tape.length} (delta={tape.delta}) does not match "
            f"graph n={g.n}, delta={g.delta} and d*T={params.draws_per_node}"
        )
    rows = tape.rows()
    adj = g.adjacency
    d_out = [0] * n
    d_in = [0] * n
    cursor = [0] * n
    rounds: list[tuple[Request, ...]] = []
    out_hist: list[tuple[int, ...]] = []
    in_hist: list[tuple[int, ...]] = []
    h_edges: list[tuple[int, int, int]] = []
    unsettled: list[int] = []
    terminated_at = None

    for t in range(1, T + 1):
        # Phase 1: every unfinished node issues its missing requests at once.
        issued: list[tuple[int, int]] = []
        received = [0] * n
        for v in range(n):
            k = d - d_out[v]
            if k == 0:
                continue
            pos = cursor[v]
            if pos + k > len(rows[v]):
                raise InternalError(f"tape of node {v} exhausted in round {t}")
            for draw in rows[v][pos : pos + k]:
                w = adj[v][draw]
                issued.append((v, w))
                received[w] += 1
            cursor[v] = pos + k
        # Phase 2: each recipient accepts everything or nothing.
        accepts = [received[w] <= cap - d_in[w] for w in range(n)]
        record = []
        for v, w in issued:
            ok = accepts[w]
            record.append(Request(v, w, ok))
            if ok:
                d_out[v] += 1
                d_in[w] += 1
                h_edges.append((v, w, t))
        for w in range(n):
            if d_in[w] > cap:
                raise InternalError(f"node {w} exceeded capacity in round {t}")
        rounds.append(tuple(record))
        out_hist.append(tuple(d_out))
        in_hist.append(tuple(d_in))
        unsettled.append(n * d - sum(d_out))
        if unsettled[-1] == 0:
            terminated_at = t
            break

    trace = ExecutionTrace(n, params, rounds, out_hist, in_hist, terminated_at)
    stats = RunStats(len(rounds), sum(cursor), unsettled, cursor)
    if terminated_at is None:
        return NotTerminated(trace, stats)
    return Execution(trace, SubgraphH(n, h_edges), stats)


def unsettled_after(trace: ExecutionTrace, t: int) -> int:
    """Links still missing at the end of round ``t`` (``t = 0`` is the start)."""
    if not 0 <= t <= trace.num_rounds:
        raise InvalidParameter(f"round {t} outside 0..{trace.num_rounds}")
    d = trace.params.d
    if t == 0:
        return trace.n * d
    return trace.n * d - sum(trace.d_out[t - 1])


def termination_round_bound(n: int, alpha: Fraction | float, c: Fraction | float, beta: float = 3.0) -> float:
    """``beta * log n / log(alpha*c)``; requires ``alpha*c > 1``."""
    ac = float(alpha) * float(c)
    if ac <= 1:
        raise InvalidParameter("the round bound needs alpha*c > 1")
    return beta * math.log(n) / math.log(ac)


def expected_requests_bound(n: int, d: int, alpha: Fraction | float, c: Fraction | float) -> float:
    """``(alpha*c / (alpha*c - 1)) * n * d``, the expected total request count bound."""
    ac = float(alpha) * float(c)
    if ac <= 1:
        raise InvalidParameter("the request bound needs alpha*c > 1")
    return ac / (ac - 1) * n * d
