"""Batch trials of RAES over a parameter grid, emitted as a flat stats table."""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from functools import lru_cache

from .analysis import exact_expansion, sampled_expansion, spectral_expansion_lower_bound
from .errors import InvalidParameter, RaesError
from .graph import Graph, close_offsets, gen_circulant, gen_complete, gen_complete_bipartite, gen_random_regular
from .protocol import RaesParams, expected_requests_bound, fresh_tape, run_raes, termination_round_bound

__all__ = [
    "FAMILIES",
    "EXPANSION_MODES",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "TrialRow",
    "build_graph",
    "run_trial",
    "run_experiment",
    "rows_to_csv",
    "rows_to_json",
    "rows_from_csv",
    "summarize",
    "thread_cap",
]

FAMILIES = ("complete", "bipartite", "regular", "circulant")
EXPANSION_MODES = ("none", "exact", "sampled", "spectral")
CSV_COLUMNS = (
    "family", "n", "delta", "d", "c", "seed", "rounds", "total_requests",
    "min_deg", "max_deg", "expansion", "expansion_method", "status",
)  # fmt: skip


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    n: tuple[int, ...]
    d: int
    c: Fraction
    max_rounds: int = 64
    trials: int = 1
    seed: int = 0
    delta: int | None = None
    offsets: tuple[int, ...] = ()
    expansion: str = "none"
    sample_trials: int = 2000

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", Fraction(self.c))
        object.__setattr__(self, "n", tuple(int(x) for x in self.n))
        object.__setattr__(self, "offsets", tuple(int(x) for x in self.offsets))
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.expansion not in EXPANSION_MODES:
            raise InvalidParameter(f"unknown expansion mode {self.expansion!r}")
        if not self.n:
            raise InvalidParameter("at least one n is required")
        if self.trials < 1:
            raise InvalidParameter("trials must be >= 1")
        if self.family == "regular" and self.delta is None:
            raise InvalidParameter("family 'regular' needs delta")
        if self.family == "circulant" and not self.offsets:
            raise InvalidParameter("family 'circulant' needs offsets")
        if self.family == "bipartite" and any(x % 2 for x in self.n):
            raise InvalidParameter("family 'bipartite' needs even n")
        RaesParams(self.d, self.c, self.max_rounds)

    @property
    def params(self) -> RaesParams:
        return RaesParams(self.d, self.c, self.max_rounds)

    @property
    def seeds(self) -> range:
        return range(self.seed, self.seed + self.trials)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c"] = str(self.c)
        out["n"] = list(self.n)
        out["offsets"] = list(self.offsets)
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        unknown = set(doc) - set(known)
        if unknown:
            raise InvalidParameter(f"unknown config keys: {', '.join(sorted(unknown))}")
        if isinstance(known.get("n"), int):
            known["n"] = (known["n"],)
        return cls(**known)


@dataclass(frozen=True)
class TrialRow:
    family: str
    n: int
    delta: int
    d: int
    c: str
    seed: int
    rounds: int
    total_requests: int
    min_deg: int | None
    max_deg: int | None
    expansion: float | None
    expansion_method: str
    status: str = "terminated"
    extra: dict = field(default_factory=dict, compare=False)

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in CSV_COLUMNS}


@lru_cache(maxsize=32)
def _fixed_graph(family: str, n: int, offsets: tuple[int, ...]) -> Graph:
    if family == "complete":
        return gen_complete(n)
    if family == "bipartite":
        return gen_complete_bipartite(n // 2)
    return gen_circulant(n, close_offsets(n, offsets))


def build_graph(cfg: ExperimentConfig, n: int, seed: int) -> Graph:
    if cfg.family == "regular":
        return gen_random_regular(n, cfg.delta, seed)
    return _fixed_graph(cfg.family, n, cfg.offsets)


def _expansion(cfg: ExperimentConfig, h, seed: int):
    if cfg.expansion == "exact":
        return exact_expansion(h)
    if cfg.expansion == "sampled":
        return sampled_expansion(h, cfg.sample_trials, seed)
    return spectral_expansion_lower_bound(h)


def run_trial(cfg: ExperimentConfig, n: int, seed: int) -> TrialRow:
    base = dict(family=cfg.family, n=n, d=cfg.d, c=str(cfg.c), seed=seed)
    try:
        g = build_graph(cfg, n, seed)
        params = cfg.params
        res = run_raes(g, params, fresh_tape(g, params, seed))
    except RaesError as exc:
        return TrialRow(**base, delta=cfg.delta or 0, rounds=0, total_requests=0, min_deg=None, max_deg=None,
                        expansion=None, expansion_method="none", status=f"error: {exc}")  # fmt: skip
    stats = res.stats
    if not res.terminated:
        return TrialRow(**base, delta=g.delta, rounds=stats.rounds_used, total_requests=stats.total_requests,
                        min_deg=None, max_deg=None, expansion=None, expansion_method="none",
                        status="not-terminated")  # fmt: skip
    degs = res.h.degrees()
    value, method, extra = None, "none", {}
    if cfg.expansion != "none":
        try:
            rep = _expansion(cfg, res.h, seed)
            value, method = float(rep.value), rep.method
            extra = {"witness": list(rep.witness_set or ()), "disconnected": rep.disconnected}
        except RaesError as exc:
            method = f"failed: {exc}"
    return TrialRow(**base, delta=g.delta, rounds=stats.rounds_used, total_requests=stats.total_requests,
                    min_deg=min(degs), max_deg=max(degs), expansion=value, expansion_method=method,
                    extra=extra)  # fmt: skip


def thread_cap() -> int:
    raw = os.environ.get("RAES_THREADS")
    if raw:
        try:
            val = int(raw)
        except ValueError as exc:
            raise InvalidParameter(f"RAES_THREADS must be an integer, got {raw!r}") from exc
        if val < 1:
            raise InvalidParameter("RAES_THREADS must be >= 1")
        return val
    return os.cpu_count() or 1


def _run_task(task: tuple[ExperimentConfig, int, int]) -> TrialRow:
    return run_trial(*task)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list[TrialRow]:
    """All (n, seed) trials of ``cfg``, sorted by (n, seed) whatever the execution order."""
    tasks = [(cfg, n, s) for n in cfg.n for s in cfg.seeds]
    workers = min(workers or thread_cap(), len(tasks))
    if workers <= 1:
        rows = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    return sorted(rows, key=lambda r: (r.n, r.seed))


def rows_to_csv(rows: list[TrialRow]) -> str:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    wr.writeheader()
    for r in rows:
        rec = r.as_record()
        wr.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})
    return buf.getvalue()


def rows_from_csv(text: str) -> list[dict]:
    ints = ("n", "delta", "d", "seed", "rounds", "total_requests", "min_deg", "max_deg")
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        doc: dict = dict(rec)
        for k in ints:
            doc[k] = int(rec[k]) if rec[k] != "" else None
        doc["expansion"] = float(rec["expansion"]) if rec["expansion"] != "" else None
        out.append(doc)
    return out


def rows_to_json(rows: list[TrialRow], cfg: ExperimentConfig | None = None) -> str:
    doc = {"rows": [r.as_record() for r in rows]}
    if cfg is not None:
        doc = {"config": cfg.to_dict(), **doc}
    return json.dumps(doc, indent=1) + "\n"


def summarize(rows: list[TrialRow], cfg: ExperimentConfig) -> list[dict]:
    """Per-n aggregates next to the round and work bounds they are checked against."""
    out = []
    for n in cfg.n:
        group = [r for r in rows if r.n == n]
        done = [r for r in group if r.status == "terminated"]
        entry: dict = {"family": cfg.family, "n": n, "trials": len(group), "terminated": len(done)}
        if group and group[0].delta:
            alpha = Fraction(group[0].delta, n)
            entry["delta"] = group[0].delta
            if alpha * cfg.c > 1:
                entry["round_bound"] = termination_round_bound(n, alpha, cfg.c)
                entry["work_bound"] = expected_requests_bound(n, cfg.d, alpha, cfg.c)
        if done:
            reqs = [r.total_requests for r in done]
            entry.update(
                max_rounds=max(r.rounds for r in done),
                mean_rounds=statistics.fmean(r.rounds for r in done),
                mean_requests=statistics.fmean(reqs),
                max_requests=max(reqs),
                min_deg=min(r.min_deg for r in done),
                max_deg=max(r.max_deg for r in done),
            )
            exp = [r.expansion for r in done if r.expansion is not None]
            if exp:
                entry["expansion_min"] = min(exp)
                entry["expansion_positive_fraction"] = sum(1 for x in exp if x > 0) / len(exp)
        out.append(entry)
    return out

