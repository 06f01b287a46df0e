"""Bit-cost bookkeeping for the compressed execution encoding.

Two ledgers are kept side by side: the fractional costs (what an ideal
coder would pay, logs not rounded) and the actual widths written by the
encoder. The audit checks actual <= fractional + an itemized slack.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

from ..analysis import NodeClassification, classify_nodes
from ..bits import gamma_length, width_for
from ..errors import PreconditionError
from ..graph import Graph
from ..protocol import ExecutionTrace

__all__ = ["SECTIONS", "CostReport", "cost_report", "savings_bound", "savings_bound_by_components", "lg"]

SECTIONS = ("table1", "table2_upper", "field1", "field2", "field3", "field4", "field5", "table3")


def lg(x: float | int | Fraction) -> float:
    """log2 with counts below 1 floored to 0 bits."""
    return math.log2(x) if x >= 1 else 0.0


def _xlog_inv(x: float) -> float:
    return 0.0 if x <= 0 else x * math.log2(1 / x)


def savings_bound(n: int, s: int, d: int, eps: float) -> float:
    """Closed-form lower bound on bits saved for a non-expanding set of size s."""
    ls = math.log2(n / s)
    return -3 * s * ls + (1 - 13 * _xlog_inv(eps)) / 2 * d * s * ls - (0.25 + 2 * eps) * d * s


def savings_bound_by_components(n: int, s: int, d: int, eps: float, delta: int, rounds: int) -> float:
    """Same bound, assembled as raw bits of S minus the bounded cost of its rows."""
    ld = math.log2(delta)
    ls = math.log2(n / s)
    raw = d * s * rounds * ld
    rows = math.fsum(
        [
            3 * s * ls,
            d * s * ld,
            -(1 - 13 * _xlog_inv(eps)) / 2 * d * s * ls,
            2 * eps * d * s,
            ld * s * (d * rounds - d),
            d * s / 4,
        ]
    )
    return raw - rows


@dataclass
class CostReport:
    n: int
    s: int
    d: int
    capacity: int
    delta: int
    rounds: int
    eps: Fraction
    fractional: dict[str, float]
    actual: dict[str, int]
    slack: dict[str, float]
    framing: dict[str, int]
    unused: float
    raw_total: float
    savings: float
    savings_components: float
    hypotheses: dict[str, bool] = field(default_factory=dict)

    # named views of the fractional formulas
    @property
    def cost_S(self) -> float:
        return self.fractional["table1"]

    @property
    def cost_A(self) -> float:
        return self.fractional["field1"]

    @property
    def cost_cut(self) -> float:
        return self.fractional["field2"]

    @property
    def cost_dest_acc(self) -> float:
        return self.fractional["field3"]

    @property
    def cost_dest_rej(self) -> float:
        return self.fractional["field4"]

    @property
    def cost_C(self) -> float:
        return self.fractional["table3"]

    @property
    def stream_length(self) -> int:
        return sum(self.actual.values())

    @property
    def raw_bits(self) -> int:
        """Uncompressed tape size with whole-bit draw fields."""
        return self.n * self.d * self.rounds * width_for(self.delta)

    def audit(self) -> dict[str, tuple[int, float, bool]]:
        out = {}
        for sec in SECTIONS:
            budget = self.fractional[sec] + self.slack[sec]
            out[sec] = (self.actual[sec], budget, self.actual[sec] <= budget + 1e-9)
        return out

    def audit_ok(self) -> bool:
        return all(ok for _, _, ok in self.audit().values())

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "s": self.s,
            "d": self.d,
            "cd": self.capacity,
            "delta": self.delta,
            "T": self.rounds,
            "eps": float(self.eps),
            "fractional": self.fractional,
            "actual": self.actual,
            "slack": self.slack,
            "framing": self.framing,
            "stream_length": self.stream_length,
            "unused": self.unused,
            "raw_total": self.raw_total,
            "raw_bits": self.raw_bits,
            "savings": self.savings,
            "savings_components": self.savings_components,
            "hypotheses": self.hypotheses,
        }


def _requests_by_node(trace: ExecutionTrace, nodes: Iterable[int]) -> dict[int, list[tuple[int, int, bool]]]:
    wanted = set(nodes)
    out: dict[int, list[tuple[int, int, bool]]] = {v: [] for v in sorted(wanted)}
    for t, rnd in enumerate(trace.rounds, start=1):
        for r in rnd:
            if r.src in wanted:
                out[r.src].append((t, r.dst, r.accepted))
    return out


def cost_report(
    g: Graph,
    trace: ExecutionTrace,
    s_set: Iterable[int],
    lambda2_plus: float,
    classification: NodeClassification | None = None,
    target_eps: float | None = None,
) -> CostReport:
    if trace.terminated_at is None:
        raise PreconditionError("cost accounting needs an execution that terminated within T rounds")
    params = trace.params
    n, d, cd, T, delta = g.n, params.d, params.capacity, params.max_rounds, g.delta
    cls = classification or classify_nodes(g, trace, s_set)
    s_nodes = sorted(cls.s_set)
    s = len(s_nodes)
    in_s = cls.s_set
    w = width_for(delta)
    ld = math.log2(delta)
    per_node = _requests_by_node(trace, s_nodes)
    c = Fraction(cd, d)
    rounds_run = trace.num_rounds
    c_t = [cls.c_t(t) if t <= rounds_run else 0 for t in range(1, T + 1)]

    frac = dict.fromkeys(SECTIONS, 0.0)
    act = dict.fromkeys(SECTIONS, 0)
    slack = dict.fromkeys(SECTIONS, 0.0)
    framing = {"field4_length_prefix": 0}

    frac["table1"] = 2 * lg(s) + lg(comb(n, s))
    act["table1"] = gamma_length(s) + width_for(comb(n, s))
    slack["table1"] = 2.0

    upper_draws = (n - s) * d * T
    frac["table2_upper"] = upper_draws * ld
    act["table2_upper"] = upper_draws * w
    slack["table2_upper"] = upper_draws * (w - ld)

    eps_sum = Fraction(0)
    unused_bits = 0.0
    ell_all = trace.requests_made()
    for v in range(n):
        unused_bits += (d * T - ell_all[v]) * ld

    for v in s_nodes:
        reqs = per_node[v]
        ell = len(reqs)
        accepted = [dst for _, dst, ok in reqs if ok]
        if len(accepted) != d:
            raise PreconditionError(f"node {v} has {len(accepted)} accepted requests, expected {d}")
        k_out = sum(1 for dst in accepted if dst not in in_s)
        eps_sum += Fraction(k_out, d)
        deg_s = sum(1 for u in g.adjacency[v] if u in in_s)  # (1 - delta_v) * Delta

        frac["field1"] += 2 * lg(ell) + lg(comb(ell, d))
        act["field1"] += gamma_length(ell) + width_for(comb(ell, d))
        slack["field1"] += 2.0

        frac["field2"] += 2 * lg(k_out) + lg(comb(d, k_out))
        act["field2"] += gamma_length(k_out + 1) + width_for(comb(d, k_out))
        slack["field2"] += 4.0  # gamma +1, shift +2, rank ceiling +1

        frac["field3"] += (d - k_out) * lg(deg_s) + k_out * ld
        act["field3"] += k_out * w + ((d - k_out) * width_for(deg_s) if d > k_out else 0)
        slack["field3"] += k_out * (w - ld) + (d - k_out)

        rss = cls.rss[v]
        rc_cost = 0.0
        rank_bits = 0
        for t, is_crit in cls.categories[v]:
            if is_crit:
                rc_cost += lg(c_t[t - 1])
                rank_bits += width_for(c_t[t - 1])
            else:
                rank_bits += width_for(len(cls.semi_saturated[t - 1]))
        rejected = ell - d
        frac["field4"] += rejected + rss * lg(2 * n / c) + rc_cost
        prefix = gamma_length(rank_bits + 1)
        act["field4"] += prefix + rejected + rank_bits
        framing["field4_length_prefix"] += prefix
        slack["field4"] += prefix + rejected

        spare = d * T - ell
        frac["field5"] += spare * ld
        act["field5"] += spare * w
        slack["field5"] += spare * (w - ld)

    for ct in c_t:
        frac["table3"] += 2 * lg(ct) + lg(comb(n, ct))
        act["table3"] += gamma_length(ct + 1) + width_for(comb(n, ct))
        slack["table3"] += 4.0

    eps = eps_sum / s
    alpha = Fraction(delta, n)
    target = float(eps) if target_eps is None else target_eps
    log_c = math.log(float(c))
    hypotheses = {
        "d_at_least_44": d >= 44,
        "c_large_enough": log_c >= max(2 * math.log(2 / float(alpha)), math.log(10) + 10 * d),
        "lambda_small_enough": lambda2_plus <= target * float(alpha) ** 2 * delta,
    }
    return CostReport(
        n=n,
        s=s,
        d=d,
        capacity=cd,
        delta=delta,
        rounds=T,
        eps=eps,
        fractional=frac,
        actual=act,
        slack=slack,
        framing=framing,
        unused=unused_bits,
        raw_total=n * d * T * ld,
        savings=savings_bound(n, s, d, float(eps)),
        savings_components=savings_bound_by_components(n, s, d, float(eps), delta, T),
        hypotheses=hypotheses,
    )
