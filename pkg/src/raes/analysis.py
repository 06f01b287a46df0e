"""Expansion measurements on H and per-round node classification for a set S."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numba
import numpy as np

from .errors import ClassificationViolation, InvalidParameter, SizeLimitError
from .graph import Graph
from .protocol import ExecutionTrace, SubgraphH

__all__ = [
    "CutFractions",
    "ExpansionReport",
    "NodeClassification",
    "cut_fractions",
    "exact_expansion",
    "sampled_expansion",
    "spectral_expansion_lower_bound",
    "classify_nodes",
    "EXHAUSTIVE_LIMIT",
]

EXHAUSTIVE_LIMIT = 24


def _proper_subset(n: int, s_set: Iterable[int]) -> frozenset[int]:
    s = frozenset(s_set)
    if not s:
        raise InvalidParameter("S must be nonempty")
    if len(s) >= n:
        raise InvalidParameter("S must be a proper subset of V")
    for v in s:
        if not 0 <= v < n:
            raise InvalidParameter(f"node id {v} out of range for n={n}")
    return s


# -- cut fractions --------------------------------------------------------------


@dataclass(frozen=True)
class CutFractions:
    s_set: frozenset[int]
    delta_v: dict[int, Fraction]
    eps_v: dict[int, Fraction]

    @property
    def s(self) -> int:
        return len(self.s_set)

    @property
    def delta(self) -> Fraction:
        return sum(self.delta_v.values(), Fraction(0)) / self.s

    @property
    def eps(self) -> Fraction:
        return sum(self.eps_v.values(), Fraction(0)) / self.s


def cut_fractions(g: Graph, h: SubgraphH, s_set: Iterable[int], d: int) -> CutFractions:
    """delta_v = e_G(v, V-S)/Delta and eps_v = (v's own accepted links leaving S)/d."""
    s = _proper_subset(g.n, s_set)
    out_links = Counter(u for u, w, _ in h.edges if u in s and w not in s)
    delta_v = {v: Fraction(sum(1 for u in g.adjacency[v] if u not in s), g.delta) for v in sorted(s)}
    eps_v = {v: Fraction(out_links[v], d) for v in sorted(s)}
    return CutFractions(s, delta_v, eps_v)


# -- expansion ------------------------------------------------------------------


@dataclass(frozen=True)
class ExpansionReport:
    value: float
    witness_set: tuple[int, ...] | None
    method: str  # "exact" | "sampled" | "spectral-lower-bound"
    quantity: str = "edge-expansion"
    cut: int | None = None
    volume: int | None = None
    disconnected: bool = False

    @property
    def ratio(self) -> Fraction | None:
        if self.cut is None or not self.volume:
            return None
        return Fraction(self.cut, self.volume)


def _csr(h: SubgraphH, simple: bool) -> tuple[np.ndarray, np.ndarray]:
    mult = h.multiplicity(simple=simple)
    indptr = np.zeros(h.n + 1, dtype=np.int64)
    flat: list[int] = []
    for v, nbrs in enumerate(mult):
        for u in sorted(nbrs):
            flat.extend([u] * nbrs[u])
        indptr[v + 1] = len(flat)
    return indptr, np.array(flat, dtype=np.int64)


def _components(indptr: np.ndarray, indices: np.ndarray) -> list[list[int]]:
    n = len(indptr) - 1
    label = [-1] * n
    comps: list[list[int]] = []
    for root in range(n):
        if label[root] >= 0:
            continue
        label[root] = len(comps)
        comp, stack = [root], [root]
        while stack:
            v = stack.pop()
            for u in indices[indptr[v] : indptr[v + 1]]:
                if label[u] < 0:
                    label[u] = label[root]
                    comp.append(int(u))
                    stack.append(int(u))
        comps.append(sorted(comp))
    return comps


def _is_connected_multigraph(indptr: np.ndarray, indices: np.ndarray) -> bool:
    return len(_components(indptr, indices)) == 1


def _disconnected_report(indptr: np.ndarray, indices: np.ndarray, method: str) -> ExpansionReport | None:
    """Zero expansion witnessed by the smallest component, or None when connected."""
    comps = _components(indptr, indices)
    if len(comps) == 1:
        return None
    comp = min(comps, key=lambda c: (len(c), c))
    vol = int(sum(indptr[v + 1] - indptr[v] for v in comp))
    return ExpansionReport(0.0, tuple(comp), method, cut=0, volume=vol, disconnected=True)


@numba.njit(cache=True)
def _lex_less(a: int, b: int) -> bool:
    # Sorted-tuple lexicographic order on bitmask sets.
    if a == b:
        return False
    diff = a ^ b
    low = diff & -diff
    above = ~((low << 1) - 1)
    if a & low:
        # a holds the first differing element; b wins only if it is a prefix of a
        return (b & above) != 0
    return (a & above) == 0


@numba.njit(cache=True)
def _gray_min(indptr, indices, n):
    deg = indptr[1:] - indptr[:-1]
    inset = np.zeros(n, dtype=np.bool_)
    half = n // 2
    mask = 0
    size = 0
    vol = 0
    cut = 0
    best_cut = -1
    best_vol = 1
    best_mask = 0
    for i in range(1, 1 << n):
        # flip the lowest set bit of i (Gray code step)
        j = 0
        x = i
        while (x & 1) == 0:
            x >>= 1
            j += 1
        inner = 0
        for k in range(indptr[j], indptr[j + 1]):
            if inset[indices[k]]:
                inner += 1
        if inset[j]:
            inset[j] = False
            size -= 1
            vol -= deg[j]
            cut += 2 * inner - deg[j]
            mask ^= 1 << j
        else:
            inset[j] = True
            size += 1
            vol += deg[j]
            cut += deg[j] - 2 * inner
            mask ^= 1 << j
        if size == 0 or size > half or vol == 0:
            continue
        lhs = cut * best_vol
        rhs = best_cut * vol
        if best_cut < 0 or lhs < rhs or (lhs == rhs and _lex_less(mask, best_mask)):
            best_cut = cut
            best_vol = vol
            best_mask = mask
    return best_cut, best_vol, best_mask


def _mask_to_tuple(mask: int, n: int) -> tuple[int, ...]:
    return tuple(v for v in range(n) if mask >> v & 1)


def exact_expansion(h: SubgraphH, limit: int = EXHAUSTIVE_LIMIT, simple: bool = False) -> ExpansionReport:
    """Exhaustive minimum of e(U, V-U)/vol(U) over nonempty U with |U| <= n/2.

    Subsets are visited in Gray-code order with incremental cut and volume
    updates. Parallel edges count with multiplicity unless ``simple``.
    """
    n = h.n
    if n > limit:
        raise SizeLimitError(
            f"exact expansion is limited to n <= {limit} (got n={n}); use sampled or spectral mode"
        )
    if n < 2:
        raise InvalidParameter("expansion needs n >= 2")
    indptr, indices = _csr(h, simple)
    split = _disconnected_report(indptr, indices, "exact")
    if split is not None:
        return split
    cut, vol, mask = _gray_min(indptr, indices, n)
    if cut < 0:
        raise InvalidParameter("every candidate set has zero volume")
    return ExpansionReport(
        cut / vol,
        _mask_to_tuple(int(mask), n),
        "exact",
        cut=int(cut),
        volume=int(vol),
    )


def _cut_vol(indptr: np.ndarray, indices: np.ndarray, members: np.ndarray) -> tuple[int, int]:
    inside = np.zeros(len(indptr) - 1, dtype=bool)
    inside[members] = True
    vol = int((indptr[members + 1] - indptr[members]).sum())
    cut = 0
    for v in members:
        nb = indices[indptr[v] : indptr[v + 1]]
        cut += int((~inside[nb]).sum())
    return cut, vol


def sampled_expansion(h: SubgraphH, trials: int, seed: int, simple: bool = False) -> ExpansionReport:
    """Minimum over all singletons plus ``trials`` random sets: an upper bound on the true value.

    A disconnected H is flagged, and the value drops to 0 once a sampled set
    happens to be a union of components.
    """
    if trials < 1:
        raise InvalidParameter("trials must be >= 1")
    n = h.n
    if n < 2:
        raise InvalidParameter("expansion needs n >= 2")
    indptr, indices = _csr(h, simple)
    rng = np.random.default_rng(seed)
    best: tuple[int, int, tuple[int, ...]] | None = None

    def consider(members: np.ndarray) -> None:
        nonlocal best
        cut, vol = _cut_vol(indptr, indices, members)
        if vol == 0:
            return
        key = tuple(sorted(int(v) for v in members))
        if best is None or cut * best[1] < best[0] * vol or (cut * best[1] == best[0] * vol and key < best[2]):
            best = (cut, vol, key)

    for v in range(n):
        consider(np.array([v]))
    for _ in range(trials):
        k = int(rng.integers(1, n // 2 + 1))
        consider(np.sort(rng.choice(n, size=k, replace=False)))
    if best is None:  # no edges at all
        return _disconnected_report(indptr, indices, "sampled")
    cut, vol, key = best
    return ExpansionReport(
        cut / vol,
        key,
        "sampled",
        cut=cut,
        volume=vol,
        disconnected=not _is_connected_multigraph(indptr, indices),
    )


def spectral_expansion_lower_bound(h: SubgraphH, simple: bool = False) -> ExpansionReport:
    """Cheeger bound: half the second normalized-Laplacian eigenvalue.

    The value lower-bounds the conductance e(U, V-U)/min(vol U, vol(V-U)),
    which is what ``quantity`` reports.
    """
    n = h.n
    indptr, indices = _csr(h, simple)
    if n < 2 or not _is_connected_multigraph(indptr, indices):
        return ExpansionReport(0.0, None, "spectral-lower-bound", quantity="conductance", disconnected=True)
    a = np.zeros((n, n))
    for v in range(n):
        np.add.at(a[v], indices[indptr[v] : indptr[v + 1]], 1.0)
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - inv_sqrt[:, None] * a * inv_sqrt[None, :]
    lam2 = float(np.linalg.eigvalsh(lap)[1])
    return ExpansionReport(max(lam2, 0.0) / 2, None, "spectral-lower-bound", quantity="conductance")


# -- semi-saturated / critical classification -----------------------------------


@dataclass
class NodeClassification:
    """Per-round SS_t / C_t and the tallies of rejected requests issued from S.

    ``categories[v]`` lists ``(round, is_critical)`` for each of v's rejected
    requests in the order v issued them.
    """

    n: int
    capacity: int
    d: int
    s_set: frozenset[int]
    semi_saturated: list[frozenset[int]]
    critical: list[frozenset[int]]
    rc: list[dict[int, int]]
    rss: dict[int, int]
    categories: dict[int, list[tuple[int, bool]]] = field(default_factory=dict)

    def c_t(self, t: int) -> int:
        return len(self.critical[t - 1])

    def bounds_hold(self) -> bool:
        # |SS_t| <= 2n/c and |C_t| <= n/c, in integers: c = capacity/d
        nd = self.n * self.d
        return all(
            len(ss) * self.capacity <= 2 * nd and len(cr) * self.capacity <= nd
            for ss, cr in zip(self.semi_saturated, self.critical)
        )

    def critical_load_holds(self) -> bool:
        # sum_v rc_t(v) > (cd/2) * c_t whenever c_t > 0
        return all(
            not cr or 2 * sum(rc.values()) > self.capacity * len(cr) for cr, rc in zip(self.critical, self.rc)
        )


def classify_nodes(g: Graph, trace: ExecutionTrace, s_set: Iterable[int]) -> NodeClassification:
    n = g.n
    s = _proper_subset(n, s_set)
    cap = trace.params.capacity
    ss_rounds: list[frozenset[int]] = []
    cr_rounds: list[frozenset[int]] = []
    rc_rounds: list[dict[int, int]] = []
    rss = {v: 0 for v in sorted(s)}
    categories: dict[int, list[tuple[int, bool]]] = {v: [] for v in sorted(s)}
    for t, rnd in enumerate(trace.rounds, start=1):
        acc = trace.d_in_before(t)
        from_outside = [0] * n
        total = [0] * n
        for r in rnd:
            total[r.dst] += 1
            if r.src not in s:
                from_outside[r.dst] += 1
        ss = frozenset(w for w in range(n) if 2 * (acc[w] + from_outside[w]) >= cap)
        cr = frozenset(w for w in range(n) if w not in ss and acc[w] + total[w] > cap)
        rc: dict[int, int] = {}
        for r in rnd:
            if r.accepted or r.src not in s:
                continue
            if r.dst in cr:
                rc[r.src] = rc.get(r.src, 0) + 1
                categories[r.src].append((t, True))
            elif r.dst in ss:
                rss[r.src] += 1
                categories[r.src].append((t, False))
            else:
                raise ClassificationViolation(
                    f"round {t}: rejected request {r.src}->{r.dst} is neither semi-saturated nor critical"
                )
        ss_rounds.append(ss)
        cr_rounds.append(cr)
        rc_rounds.append(rc)
    return NodeClassification(n, cap, trace.params.d, s, ss_rounds, cr_rounds, rc_rounds, rss, categories)
