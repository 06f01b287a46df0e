"""Command-line front end: ``raes <command> ...``.

Every option can also come from a JSON file given with ``--config``; keys
are the option names with dashes replaced by underscores. Flags on the
command line win over the file. ``--save-config`` writes the effective
settings so the run can be repeated exactly.

Exit codes: 0 success, 1 usage or validation error, 2 the protocol did not
terminate within its round budget, 3 internal consistency failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import analysis, codec, experiment
from .errors import InternalError, InvalidParameter, RaesError
from .graph import (
    Graph,
    close_offsets,
    gen_circulant,
    gen_complete,
    gen_complete_bipartite,
    gen_random_regular,
    graph_to_json,
    read_graph,
    second_eigenvalue,
    write_graph,
)
from .protocol import (
    ExecutionTrace,
    RaesParams,
    RandomTape,
    SubgraphH,
    fresh_tape,
    run_raes,
)

EXIT_OK, EXIT_INVALID, EXIT_NOT_TERMINATED, EXIT_INTERNAL = 0, 1, 2, 3

# Built-in defaults, applied after the config file and the flags.
DEFAULTS: dict[str, dict] = {
    "generate": {"seed": 0, "output": "-"},
    "run": {"seed": 0, "max_rounds": 64, "out_dir": "."},
    "analyze": {"mode": "exact", "trials": 2000, "seed": 0},
    "codec encode": {},
    "codec decode": {},
    "codec verify": {},
    "codec cost": {},
    "experiment": {"max_rounds": 64, "trials": 1, "seed": 0, "sample_trials": 2000},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2, which is reserved here
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"expected a number like 4 or 3/2, got {text!r}") from exc


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file supplying option values")
    p.add_argument("--save-config", help="write the effective options as JSON and continue")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="raes", description="RAES protocol simulator, analysis and codec")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a regular graph as JSON")
    _common(p)
    p.add_argument("--family", choices=experiment.FAMILIES)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int, help="side size for bipartite (default n/2)")
    p.add_argument("--delta", type=int)
    p.add_argument("--offsets", type=_int_list)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")

    p = sub.add_parser("run", help="simulate RAES on a graph")
    _common(p)
    p.add_argument("-g", "--graph")
    p.add_argument("--d", type=int)
    p.add_argument("--c", type=_fraction)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--tape", help="replay a tape file (JSON or packed binary) instead of drawing one")
    p.add_argument("--out-dir", help="directory for trace.json, h.json, stats.json, tape.json")

    p = sub.add_parser("analyze", help="spectral data of G, expansion of H, node classes for a set")
    _common(p)
    p.add_argument("-g", "--graph")
    p.add_argument("--h", help="subgraph file written by run")
    p.add_argument("--trace", help="trace file written by run (needed with --set)")
    p.add_argument("--tape", help="tape file for a trace without a recorded seed")
    p.add_argument("--set", type=_int_list, help="node set S for cut fractions and classification")
    p.add_argument("--mode", choices=("exact", "sampled", "spectral"))
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--simple", action="store_true", default=None, help="collapse parallel edges")

    p = sub.add_parser("codec", help="compressed encodings of executions")
    csub = p.add_subparsers(dest="codec_command", required=True, parser_class=_Parser)
    for name, helptext in (
        ("encode", "encode a terminated execution relative to a set S"),
        ("verify", "encode, decode and compare against the original tape"),
        ("cost", "print the cost ledger"),
    ):
        q = csub.add_parser(name, help=helptext)
        _common(q)
        q.add_argument("-g", "--graph")
        q.add_argument("--trace")
        q.add_argument("--tape", help="tape file; defaults to redrawing from the seed stored in the trace")
        q.add_argument("--set", type=_int_list)
        if name == "encode":
            q.add_argument("-o", "--output")
    q = csub.add_parser("decode", help="recover the tape and trace from an encoding file")
    _common(q)
    q.add_argument("-g", "--graph")
    q.add_argument("-i", "--input")
    q.add_argument("--tape-out")
    q.add_argument("--trace-out")

    p = sub.add_parser("experiment", help="batch trials, CSV/JSON stats table")
    esub = p.add_subparsers(dest="experiment_kind", required=True, parser_class=_Parser)
    for kind in ("termination", "workload", "expansion"):
        q = esub.add_parser(kind)
        _common(q)
        q.add_argument("--family", choices=experiment.FAMILIES)
        q.add_argument("--n", type=_int_list)
        q.add_argument("--delta", type=int)
        q.add_argument("--offsets", type=_int_list)
        q.add_argument("--d", type=int)
        q.add_argument("--c", type=_fraction)
        q.add_argument("--max-rounds", type=int)
        q.add_argument("--trials", type=int)
        q.add_argument("--seed", type=int)
        q.add_argument("--expansion", choices=experiment.EXPANSION_MODES)
        q.add_argument("--sample-trials", type=int)
        q.add_argument("--csv")
        q.add_argument("--json")
        q.add_argument("--workers", type=int, help="parallel trials (capped by RAES_THREADS)")
    return top


_CONTROL = {"command", "codec_command", "experiment_kind", "config", "save_config"}


def _settings(args: argparse.Namespace, key: str) -> dict:
    flags = {k: v for k, v in vars(args).items() if k not in _CONTROL}
    merged = dict(DEFAULTS.get(key.split()[0] if key.startswith("experiment") else key, {}))
    if key == "experiment expansion":
        merged["expansion"] = "exact"
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise InvalidParameter(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidParameter("config file must hold a JSON object")
        unknown = set(doc) - set(flags)
        if unknown:
            raise InvalidParameter(f"unknown config keys for '{key}': {', '.join(sorted(unknown))}")
        for k, v in doc.items():
            if k in ("n", "offsets", "set") and isinstance(v, str):
                v = _int_list(v)
            merged[k] = Fraction(str(v)) if k == "c" else v
    merged.update({k: v for k, v in flags.items() if v is not None})
    for k in flags:
        merged.setdefault(k, None)
    if args.save_config:
        serial = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in merged.items() if v is not None}
        Path(args.save_config).write_text(json.dumps(serial, indent=1, sort_keys=True) + "\n")
    return merged


def _need(opts: dict, *names: str) -> None:
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise InvalidParameter("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _emit(text: str, dest: str | None) -> None:
    if dest in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _load_tape(path: str) -> tuple[RandomTape, int, int]:
    data = Path(path).read_bytes()
    if data[:1] in (b"{", b" ", b"\n"):
        return RandomTape.from_json(data.decode())
    return RandomTape.from_bytes(data)


def _load_trace(path: str) -> tuple[ExecutionTrace, int | None]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidParameter(f"cannot read trace {path}: {exc}") from exc
    return ExecutionTrace.from_json(text)


def _load_graph(path: str) -> Graph:
    try:
        return read_graph(path)
    except OSError as exc:
        raise InvalidParameter(f"cannot read graph {path}: {exc}") from exc


def _tape_for_trace(g: Graph, trace: ExecutionTrace, seed: int | None, tape_path: str | None) -> RandomTape:
    """The tape behind ``trace``; a trace that the tape does not reproduce is rejected."""
    if tape_path:
        tape, d, T = _load_tape(tape_path)
        if (d, T) != (trace.params.d, trace.params.max_rounds):
            raise InvalidParameter(f"tape is for d={d}, T={T}; trace has d={trace.params.d}, T={trace.params.max_rounds}")
    elif seed is not None:
        tape = fresh_tape(g, trace.params, seed)
    else:
        raise InvalidParameter("trace has no recorded seed; pass --tape")
    replay = run_raes(g, trace.params, tape).trace
    if replay.rounds != trace.rounds or replay.terminated_at != trace.terminated_at:
        raise InvalidParameter("trace does not match the execution of its tape on this graph")
    return tape


# -- commands ---------------------------------------------------------------


def cmd_generate(o: dict) -> int:
    _need(o, "family", "n")
    fam, n = o["family"], o["n"]
    if fam == "complete":
        g = gen_complete(n)
    elif fam == "bipartite":
        m = o["m"] if o["m"] is not None else n // 2
        if 2 * m != n:
            raise InvalidParameter(f"bipartite graph needs n = 2m, got n={n}, m={m}")
        g = gen_complete_bipartite(m)
    elif fam == "regular":
        _need(o, "delta")
        g = gen_random_regular(n, o["delta"], o["seed"])
    else:
        _need(o, "offsets")
        g = gen_circulant(n, close_offsets(n, o["offsets"]))
    if o["output"] in (None, "-"):
        sys.stdout.write(graph_to_json(g))
    else:
        write_graph(g, o["output"])
        print(f"wrote {o['output']}: n={g.n} delta={g.delta} edges={g.num_edges()}", file=sys.stderr)
    return EXIT_OK


def cmd_run(o: dict) -> int:
    _need(o, "graph", "c")
    g = _load_graph(o["graph"])
    if o["tape"]:
        tape, d, T = _load_tape(o["tape"])
        if o["d"] is not None and o["d"] != d:
            raise InvalidParameter(f"--d {o['d']} disagrees with the tape's d={d}")
        seed = None
    else:
        _need(o, "d")
        d, T = o["d"], o["max_rounds"]
        seed = o["seed"]
    params = RaesParams(d, o["c"], T)
    if o["tape"] is None:
        tape = fresh_tape(g, params, seed)
    elif o["max_rounds"] is not None and o["max_rounds"] < T:
        # a shorter budget replays only the first rounds of the tape
        T = o["max_rounds"]
        params = RaesParams(d, o["c"], T)
        tape = RandomTape(tape.draws[:, : d * T], tape.delta)
    res = run_raes(g, params, tape)
    out = Path(o["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.json").write_text(res.trace.to_json(seed))
    (out / "tape.json").write_text(tape.to_json(d, T))
    stats = {"seed": seed, "terminated": res.terminated, **res.stats.to_dict(), "params": params.to_dict()}
    if res.terminated:
        (out / "h.json").write_text(res.h.to_json())
        degs = res.h.degrees()
        stats.update(min_deg=min(degs), max_deg=max(degs))
    (out / "stats.json").write_text(json.dumps(stats, sort_keys=True) + "\n")
    if not res.terminated:
        unfinished = sum(1 for x in res.trace.d_out[-1] if x < d) if res.trace.d_out else g.n
        print(f"not terminated after {T} rounds: {unfinished} nodes short of {d} links", file=sys.stderr)
        return EXIT_NOT_TERMINATED
    print(f"terminated in {res.stats.rounds_used} rounds, {res.stats.total_requests} requests")
    return EXIT_OK


def _report_dict(rep: analysis.ExpansionReport) -> dict:
    return {
        "value": float(rep.value),
        "method": rep.method,
        "quantity": rep.quantity,
        "witness": list(rep.witness_set) if rep.witness_set is not None else None,
        "cut": rep.cut,
        "volume": rep.volume,
        "disconnected": rep.disconnected,
    }


def cmd_analyze(o: dict) -> int:
    _need(o, "graph")
    g = _load_graph(o["graph"])
    sp = second_eigenvalue(g)
    out: dict = {"graph": {"n": g.n, "delta": g.delta, "lambda2": sp.lambda2, "lambda2_plus": sp.lambda2_plus,
                           "residual": sp.residual, "iterations": sp.iterations}}  # fmt: skip
    h, trace, res = None, None, None
    if o["trace"]:
        trace, seed = _load_trace(o["trace"])
        res = run_raes(g, trace.params, _tape_for_trace(g, trace, seed, o["tape"]))
        h = res.h if res.terminated else None
    if o["h"]:
        h = SubgraphH.from_json(Path(o["h"]).read_text())
        if h.n != g.n:
            raise InvalidParameter(f"subgraph has n={h.n}, graph has n={g.n}")
    if h is not None:
        simple = bool(o["simple"])
        if o["mode"] == "exact":
            if g.n > analysis.EXHAUSTIVE_LIMIT:
                raise InvalidParameter(
                    f"exact expansion is limited to n <= {analysis.EXHAUSTIVE_LIMIT} (got n={g.n}); "
                    "use --mode sampled or --mode spectral"
                )
            rep = analysis.exact_expansion(h, simple=simple)
        elif o["mode"] == "sampled":
            rep = analysis.sampled_expansion(h, o["trials"], o["seed"], simple=simple)
        else:
            rep = analysis.spectral_expansion_lower_bound(h, simple=simple)
        degs = h.degrees()
        out["h"] = {"edges": len(h.edges), "min_deg": min(degs), "max_deg": max(degs), "expansion": _report_dict(rep)}
    if o["set"] is not None:
        if trace is None:
            raise InvalidParameter("--set needs --trace")
        cls = analysis.classify_nodes(g, trace, o["set"])
        rounds = []
        for t in range(1, trace.num_rounds + 1):
            rounds.append({"t": t, "SS": sorted(cls.semi_saturated[t - 1]), "C": sorted(cls.critical[t - 1])})
        out["classification"] = {
            "rounds": rounds,
            "rss": {str(k): v for k, v in cls.rss.items()},
            "bounds_hold": cls.bounds_hold(),
        }
        if res.terminated:
            cf = analysis.cut_fractions(g, res.h, o["set"], trace.params.d)
            out["cut_fractions"] = {"delta": str(cf.delta), "eps": str(cf.eps)}
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _encode_from(o: dict):
    _need(o, "graph", "trace", "set")
    g = _load_graph(o["graph"])
    trace, seed = _load_trace(o["trace"])
    tape = _tape_for_trace(g, trace, seed, o["tape"])
    lam = second_eigenvalue(g).lambda2_plus
    enc, rep = codec.encode_execution(g, trace.params, tape, trace, o["set"], lambda2_plus=lam)
    return g, tape, enc, rep


def _cost_lines(rep: codec.CostReport) -> list[str]:
    lines = [f"{'section':<14}{'actual':>10}{'formula':>12}{'slack':>10}  ok"]
    for sec, (act, budget, ok) in rep.audit().items():
        lines.append(f"{sec:<14}{act:>10}{rep.fractional[sec]:>12.3f}{rep.slack[sec]:>10.3f}  {'yes' if ok else 'NO'}")
    lines.append(f"stream length {rep.stream_length} bits; raw tape {rep.raw_bits} bits ({rep.raw_total:.3f} ideal)")
    lines.append(f"savings bound {rep.savings:.6f} (eps={float(rep.eps):.6f})")
    return lines


def cmd_codec(sub: str, o: dict) -> int:
    if sub == "decode":
        _need(o, "graph", "input")
        g = _load_graph(o["graph"])
        enc = codec.read_encoding(o["input"])
        tape, trace = codec.decode_execution(g, enc)
        if o["tape_out"]:
            Path(o["tape_out"]).write_text(tape.to_json(enc.d, enc.T))
        if o["trace_out"]:
            Path(o["trace_out"]).write_text(trace.to_json())
        if not (o["tape_out"] or o["trace_out"]):
            sys.stdout.write(tape.to_json(enc.d, enc.T))
        return EXIT_OK
    g, tape, enc, rep = _encode_from(o)
    if sub == "encode":
        _need(o, "output")
        codec.write_encoding(enc, o["output"])
        print(f"wrote {o['output']}: {len(enc.bits)} bits (raw tape {rep.raw_bits} bits)")
        return EXIT_OK
    if sub == "cost":
        print("\n".join(_cost_lines(rep)))
        print(json.dumps(rep.to_dict(), indent=1, default=str))
        return EXIT_OK
    back = codec.encoding_from_bytes(codec.encoding_to_bytes(enc))
    decoded, _ = codec.decode_execution(g, back)
    if decoded != tape:
        raise InternalError("decoded tape differs from the original")
    if not rep.audit_ok():
        raise InternalError("cost audit failed: " + "; ".join(_cost_lines(rep)))
    print("ROUNDTRIP OK")
    print(f"stream {rep.stream_length} bits, raw {rep.raw_bits} bits, savings {rep.savings:.6f}")
    return EXIT_OK


def cmd_experiment(kind: str, o: dict) -> int:
    _need(o, "family", "n", "d", "c")
    fields = experiment.ExperimentConfig.__dataclass_fields__
    cfg = experiment.ExperimentConfig(**{k: v for k, v in o.items() if k in fields and v is not None})
    rows = experiment.run_experiment(cfg, workers=o["workers"])
    if o["csv"]:
        Path(o["csv"]).write_text(experiment.rows_to_csv(rows))
    if o["json"]:
        Path(o["json"]).write_text(experiment.rows_to_json(rows, cfg))
    if not (o["csv"] or o["json"]):
        sys.stdout.write(experiment.rows_to_csv(rows))
    summary = experiment.summarize(rows, cfg)
    for entry in summary:
        if kind == "termination" and "round_bound" in entry and "max_rounds" in entry:
            entry["within_round_bound"] = entry["max_rounds"] <= entry["round_bound"]
        if kind == "workload" and "work_bound" in entry and "mean_requests" in entry:
            entry["mean_within_work_bound"] = entry["mean_requests"] <= entry["work_bound"]
    print(json.dumps({"kind": kind, "summary": summary}, indent=1), file=sys.stderr)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "codec":
            return cmd_codec(args.codec_command, _settings(args, f"codec {args.codec_command}"))
        if args.command == "experiment":
            return cmd_experiment(args.experiment_kind, _settings(args, f"experiment {args.experiment_kind}"))
        opts = _settings(args, args.command)
        return {"generate": cmd_generate, "run": cmd_run, "analyze": cmd_analyze}[args.command](opts)
    except (InternalError, AssertionError) as exc:
        print(f"raes: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (RaesError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"raes: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
