"""Regular input graphs, generators and spectral quantities.

Adjacency lists are stored sorted; the position of a neighbor inside its
list is the local neighbor numbering used by the tape and by the codec.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConvergenceFailure, GenerationFailure, InvalidParameter

__all__ = [
    "Graph",
    "SpectralResult",
    "CutCount",
    "gen_complete",
    "gen_complete_bipartite",
    "gen_random_regular",
    "gen_circulant",
    "close_offsets",
    "second_eigenvalue",
    "edge_count",
    "mixing_bound",
    "graph_to_json",
    "graph_from_json",
    "read_graph",
    "write_graph",
]


@dataclass(frozen=True)
class Graph:
    n: int
    delta: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidParameter("graph needs at least one node")
        if len(self.adjacency) != self.n:
            raise InvalidParameter(f"expected {self.n} adjacency lists, got {len(self.adjacency)}")
        for v, nbrs in enumerate(self.adjacency):
            if len(nbrs) != self.delta:
                raise InvalidParameter(f"node {v} has degree {len(nbrs)}, expected {self.delta}")
            prev = -1
            for u in nbrs:
                if not 0 <= u < self.n:
                    raise InvalidParameter(f"node {v} lists out-of-range neighbor {u}")
                if u == v:
                    raise InvalidParameter(f"self-loop at node {v}")
                if u <= prev:
                    raise InvalidParameter(f"adjacency of node {v} is not strictly increasing")
                prev = u
        for v, nbrs in enumerate(self.adjacency):
            for u in nbrs:
                if v not in self.position[u]:
                    raise InvalidParameter(f"edge {v}-{u} is not symmetric")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Graph:
        lists: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise InvalidParameter(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise InvalidParameter(f"self-loop at node {u}")
            if v in lists[u]:
                raise InvalidParameter(f"duplicate edge ({u}, {v})")
            lists[u].add(v)
            lists[v].add(u)
        degrees = {len(s) for s in lists}
        if len(degrees) != 1:
            raise InvalidParameter(f"graph is not regular (degrees {sorted(degrees)})")
        delta = degrees.pop()
        return cls(n, delta, tuple(tuple(sorted(s)) for s in lists))

    @property
    def alpha(self) -> Fraction:
        return Fraction(self.delta, self.n)

    @cached_property
    def position(self) -> tuple[dict[int, int], ...]:
        """``position[v][u]`` is the local index of ``u`` in ``v``'s adjacency."""
        return tuple({u: i for i, u in enumerate(nbrs)} for nbrs in self.adjacency)

    @cached_property
    def neighbor_array(self) -> np.ndarray:
        arr = np.array(self.adjacency, dtype=np.int64).reshape(self.n, self.delta)
        arr.flags.writeable = False
        return arr

    def edges(self) -> list[tuple[int, int]]:
        return [(v, u) for v, nbrs in enumerate(self.adjacency) for u in nbrs if v < u]

    def num_edges(self) -> int:
        return self.n * self.delta // 2

    def is_connected(self) -> bool:
        seen = bytearray(self.n)
        seen[0] = 1
        stack = [0]
        while stack:
            v = stack.pop()
            for u in self.adjacency[v]:
                if not seen[u]:
                    seen[u] = 1
                    stack.append(u)
        return all(seen)


@dataclass(frozen=True)
class SpectralResult:
    lambda2: float
    iterations: int
    residual: float

    @property
    def lambda2_plus(self) -> float:
        return max(self.lambda2, 0.0)


@dataclass(frozen=True)
class CutCount:
    e_uw: int


# -- generators ---------------------------------------------------------------


def gen_complete(n: int) -> Graph:
    if n < 2:
        raise InvalidParameter("complete graph needs n >= 2")
    return Graph(n, n - 1, tuple(tuple(u for u in range(n) if u != v) for v in range(n)))


def gen_complete_bipartite(m: int) -> Graph:
    """K_{m,m} with sides ``0..m-1`` and ``m..2m-1``."""
    if m < 1:
        raise InvalidParameter("complete bipartite graph needs m >= 1")
    left = tuple(range(m))
    right = tuple(range(m, 2 * m))
    return Graph(2 * m, m, tuple(right if v < m else left for v in range(2 * m)))


def _pair_stubs(n: int, delta: int, rng: np.random.Generator, budget: int) -> set[tuple[int, int]] | None:
    # Configuration model: shuffle the stub multiset, keep the simple pairs,
    # reshuffle only the leftovers. Restart when the leftovers cannot be paired.
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(n), delta)
    for _ in range(budget):
        if stubs.size == 0:
            return edges
        rng.shuffle(stubs)
        leftover: list[int] = []
        for a, b in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            e = (a, b) if a < b else (b, a)
            if a != b and e not in edges:
                edges.add(e)
            else:
                leftover.extend((a, b))
        if len(leftover) == stubs.size and not _pairable(leftover, edges):
            return None
        stubs = np.array(leftover, dtype=np.int64)
    return None


def _pairable(stubs: list[int], edges: set[tuple[int, int]]) -> bool:
    nodes = sorted(set(stubs))
    for i, a in enumerate(nodes):
        for b in nodes[i + 1 :]:
            if (a, b) not in edges:
                return True
    return False


def gen_random_regular(n: int, delta: int, seed: int, max_attempts: int = 200) -> Graph:
    """Simple ``delta``-regular graph on ``n`` nodes, deterministic in ``seed``.

    Dense requests (``delta > (n-1)/2``) are generated as the complement of a
    sparse one, which keeps the rejection rate of the pairing low. The result
    is close to, but not exactly, uniform over regular graphs.
    """
    if n < 1 or delta < 0:
        raise InvalidParameter("n must be positive and delta non-negative")
    if delta >= n:
        raise InvalidParameter(f"delta must be < n (got delta={delta}, n={n})")
    if (n * delta) % 2:
        raise InvalidParameter(f"nΔ must be even (n={n}, delta={delta})")
    rng = np.random.default_rng(seed)
    complement = delta > (n - 1) // 2
    target = n - 1 - delta if complement else delta
    for _ in range(max_attempts):
        edges = _pair_stubs(n, target, rng, budget=50 * max(target, 1) + 50)
        if edges is None:
            continue
        if complement:
            edges = {(u, v) for u in range(n) for v in range(u + 1, n) if (u, v) not in edges}
        return Graph.from_edges(n, edges)
    raise GenerationFailure(
        f"no simple {delta}-regular graph on {n} nodes after {max_attempts} attempts; try another seed"
    )


def gen_circulant(n: int, offsets: Iterable[int]) -> Graph:
    offs = list(offsets)
    if len(set(offs)) != len(offs):
        raise InvalidParameter("duplicate offsets")
    for o in offs:
        if not 1 <= o <= n - 1:
            raise InvalidParameter(f"offset {o} outside 1..{n - 1}")
    oset = set(offs)
    missing = sorted({(n - o) % n for o in oset} - oset)
    if missing:
        raise InvalidParameter(f"offsets not closed under negation mod {n}; missing {missing}")
    return Graph(n, len(oset), tuple(tuple(sorted((v + o) % n for o in oset)) for v in range(n)))


def close_offsets(n: int, offsets: Iterable[int]) -> list[int]:
    """Smallest offset set containing ``offsets`` that is closed under ``o -> n - o``."""
    oset = set()
    for o in offsets:
        if not 1 <= o <= n - 1:
            raise InvalidParameter(f"offset {o} outside 1..{n - 1}")
        oset |= {o, n - o}
    return sorted(oset)


# -- spectral ------------------------------------------------------------------


def second_eigenvalue(
    g: Graph,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    seed: int = 0,
    stagnation_window: int = 500,
) -> SpectralResult:
    """Second-largest signed adjacency eigenvalue by deflated power iteration.

    Iterates on ``A + delta*I`` (spectrum inside ``[0, 2*delta]``) with the
    all-ones direction projected out, so the dominant remaining eigenvalue is
    ``lambda2 + delta`` even for bipartite graphs. ``residual`` is
    ``||Bx - mu x||`` for the returned unit vector ``x``.
    """
    n, delta = g.n, g.delta
    if n < 2:
        raise InvalidParameter("second eigenvalue needs n >= 2")
    nbr = g.neighbor_array
    rng = np.random.default_rng(seed)

    def apply(x: np.ndarray) -> np.ndarray:
        return x[nbr].sum(axis=1) + delta * x

    def start() -> np.ndarray:
        x = rng.standard_normal(n)
        x -= x.mean()
        return x / np.linalg.norm(x)

    x = start()
    best = (math.inf, float("nan"))
    since_improved = 0
    for it in range(1, max_iters + 1):
        y = apply(x)
        mu = float(x @ y)
        residual = float(np.linalg.norm(y - mu * x))
        if residual <= tol:
            return SpectralResult(mu - delta, it, residual)
        if residual < best[0] * (1 - 1e-12):
            best = (residual, mu - delta)
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= stagnation_window:
                x = start()
                since_improved = 0
                continue
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0.0:
            # x lay in the kernel of B restricted to ones-perp: lambda2 = -delta.
            return SpectralResult(-float(delta), it, 0.0)
        x = y / norm
    raise ConvergenceFailure(
        f"power iteration did not reach tol={tol} in {max_iters} iterations",
        estimate=best[1],
        residual=best[0],
        iterations=max_iters,
    )


def _as_set(g: Graph, nodes: Iterable[int]) -> frozenset[int]:
    s = frozenset(nodes)
    for v in s:
        if not 0 <= v < g.n:
            raise InvalidParameter(f"node id {v} out of range for n={g.n}")
    return s


def edge_count(g: Graph, u_set: Iterable[int], w_set: Iterable[int]) -> CutCount:
    """Edges with one endpoint in U and the other in W, each edge counted once."""
    u, w = _as_set(g, u_set), _as_set(g, w_set)
    total = 0
    for a, b in g.edges():
        if (a in u and b in w) or (a in w and b in u):
            total += 1
    return CutCount(total)


def mixing_bound(g: Graph, s_set: Sequence[int] | frozenset[int], lambda2_plus: float | Fraction) -> float | Fraction:
    """One-sided mixing bound ``(delta*s^2/n + lambda+ * s) / 2`` on e(S,S)."""
    s = len(_as_set(g, s_set))
    if s == 0:
        raise InvalidParameter("S must be nonempty")
    if lambda2_plus < 0:
        raise InvalidParameter("lambda2_plus must be non-negative")
    if isinstance(lambda2_plus, (int, Fraction)):
        return (Fraction(g.delta * s * s, g.n) + lambda2_plus * s) / 2
    return 0.5 * (g.delta * s * s / g.n + lambda2_plus * s)


# -- JSON ---------------------------------------------------------------------


def graph_to_json(g: Graph) -> str:
    doc = {"n": g.n, "delta": g.delta, "edges": [list(e) for e in g.edges()]}
    return json.dumps(doc, separators=(",", ":")) + "\n"


def graph_from_json(text: str) -> Graph:
    try:
        doc = json.loads(text)
        n, delta, edges = int(doc["n"]), int(doc["delta"]), doc["edges"]
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidParameter(f"malformed graph JSON: {exc}") from exc
    pairs = [tuple(e) for e in edges]
    for e in pairs:
        if len(e) != 2 or e[0] >= e[1]:
            raise InvalidParameter(f"edge {list(e)} must be a pair [u, v] with u < v")
    if pairs != sorted(pairs):
        raise InvalidParameter("edges must be sorted lexicographically")
    g = Graph.from_edges(n, pairs) if pairs else Graph(n, 0, tuple(() for _ in range(n)))
    if g.delta != delta:
        raise InvalidParameter(f"declared delta={delta} but edges give degree {g.delta}")
    return g


def write_graph(g: Graph, path: str | Path) -> None:
    Path(path).write_text(graph_to_json(g))


def read_graph(path: str | Path) -> Graph:
    return graph_from_json(Path(path).read_text())
