"""Command-line front end: ``pdb check|query|mp|hypergraph``.

Exit codes: 0 success / consistent / membership holds, 1 inconsistent or
membership fails, 2 consistency unknown (world budget), 3 some query
interval unknown, 64 bad input.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .consistency import Outcome, check_consistency
from .constraint_lang import ParseError, parse_constraints, parse_query
from .exact_lp import DEFAULT_BUDGET
from .grounding import build_conflict_hypergraph, format_set, reduce_probabilistic_constraints, sort_nodes
from .hypergraph_analysis import classify_component, components
from .model import LoadError, format_value, load_instance, to_rational
from .query_eval import COMBINE_MODES, InconsistentInstance, answer_query

EXIT_OK, EXIT_FALSE, EXIT_UNKNOWN, EXIT_QUERY_UNKNOWN, EXIT_USAGE = 0, 1, 2, 3, 64


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    schema: Path
    data: list
    constraints: Optional[Path] = None
    query: Optional[Path] = None
    budget: int = DEFAULT_BUDGET
    combine: str = "frechet"
    fmt: str = "text"


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _data_sources(specs: Sequence[str]) -> list:
    out = []
    for spec in specs:
        if "=" in spec:
            rel, path = spec.split("=", 1)
        else:
            rel, path = Path(spec).stem, spec
        out.append((rel, _read(Path(path))))
    return out


def load(config: RunConfig):
    schema_text = _read(config.schema)
    instance = load_instance(schema_text, _data_sources(config.data))
    ics = parse_constraints(_read(config.constraints), instance.schemas) if config.constraints else []
    query = parse_query(_read(config.query), instance.schemas) if config.query else None
    return instance, ics, query


def _emit(lines, out) -> None:
    for line in lines:
        print(line, file=out)


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def cmd_check(config: RunConfig, explain: bool = False, certificate: bool = False, out=sys.stdout) -> int:
    instance, ics, _ = load(config)
    verdict = check_consistency(instance, ics, budget=config.budget, certificate=certificate)
    if config.fmt == "json-lines":
        for r in verdict.reports:
            _emit([_json({
                "component": r.component_id,
                "nodes": list(r.nodes),
                "shape": r.shape,
                "rule": r.rule,
                "outcome": r.outcome.value,
                "violated": str(r.violated) if r.violated else None,
            })], out)
        _emit([_json({"verdict": verdict.outcome.value, "summary": verdict.summary()})], out)
    elif config.fmt == "tsv":
        for r in verdict.reports:
            _emit(["\t".join([str(r.component_id), ",".join(r.nodes), r.shape, r.rule, r.outcome.value,
                              str(r.violated) if r.violated else ""])], out)
        _emit([f"verdict\t{verdict.outcome.value}"], out)
    else:
        _emit([verdict.summary()], out)
        if explain:
            for r in verdict.reports:
                _emit([r.describe()] + [f"  {c}" for c in r.conditions], out)
    if certificate:
        for r in verdict.reports:
            if r.certificate is not None:
                _emit([f"component {r.component_id}:"] + [f"  {ln}" for ln in r.certificate.format_lines()], out)
    return {Outcome.CONSISTENT: EXIT_OK, Outcome.INCONSISTENT: EXIT_FALSE, Outcome.UNKNOWN: EXIT_UNKNOWN}[verdict.outcome]


def format_answer(values) -> str:
    return ",".join(format_value(v) for v in values) if values else "true"


def cmd_query(config: RunConfig, out=sys.stdout, err=sys.stderr) -> int:
    instance, ics, query = load(config)
    if query is None:
        raise UsageError("query needs --query FILE")
    try:
        answers = answer_query(instance, ics, query, combine=config.combine, budget=config.budget)
    except InconsistentInstance as exc:
        print(f"error: {exc}", file=err)
        return EXIT_FALSE if exc.verdict.outcome == Outcome.INCONSISTENT else EXIT_UNKNOWN
    for a in answers:
        lo = "?" if a.interval is None else str(a.interval.lo)
        hi = "?" if a.interval is None else str(a.interval.hi)
        if config.fmt == "json-lines":
            _emit([_json({"answer": [format_value(v) for v in a.values], "pmin": lo, "pmax": hi,
                          "status": a.status})], out)
        else:
            row = f"{format_answer(a.values)}\t{lo}\t{hi}"
            if config.fmt == "text" and a.status != "exact":
                row += f"\t({a.status})"
            _emit([row], out)
    return EXIT_QUERY_UNKNOWN if answers.has_unknown else EXIT_OK


def cmd_mp(config: RunConfig, answer: Optional[str], k1: str, k2: str, out=sys.stdout, err=sys.stderr) -> int:
    instance, ics, query = load(config)
    if query is None:
        raise UsageError("mp needs --query FILE")
    lo, hi = _threshold(k1), _threshold(k2)
    if lo > hi:
        raise UsageError("k1 must not exceed k2")
    try:
        answers = answer_query(instance, ics, query, combine=config.combine, budget=config.budget)
    except InconsistentInstance as exc:
        print(f"error: {exc}", file=err)
        return EXIT_FALSE if exc.verdict.outcome == Outcome.INCONSISTENT else EXIT_UNKNOWN
    wanted = [] if answer in (None, "", "true") else [s.strip() for s in answer.split(",")]
    match = next((a for a in answers if [format_value(v) for v in a.values] == wanted), None)
    if match is None or match.interval is None:
        holds = False
    else:
        holds = match.interval.lo >= lo and match.interval.hi <= hi
    if config.fmt == "json-lines":
        _emit([_json({"answer": wanted, "k1": str(lo), "k2": str(hi), "holds": holds})], out)
    else:
        _emit(["true" if holds else "false"], out)
    return EXIT_OK if holds else EXIT_FALSE


def _threshold(text: str) -> Fraction:
    try:
        value = to_rational(text)
    except (LoadError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= value <= 1:
        raise UsageError(f"threshold {value} outside [0,1]")
    return value


def cmd_hypergraph(config: RunConfig, out=sys.stdout) -> int:
    instance, ics, _ = load(config)
    h = build_conflict_hypergraph(instance, ics)
    reduced = reduce_probabilistic_constraints(h)
    if config.fmt == "tsv":
        _emit([",".join(sort_nodes(e)) for e in h.edges], out)
        return EXIT_OK
    comps = components(reduced)
    if config.fmt == "json-lines":
        for e in h.edges:
            _emit([_json({"edge": sort_nodes(e), "constraints": list(h.provenance.get(e, ())),
                          "p": str(h.edge_probability(e))})], out)
        for i, c in enumerate(comps, start=1):
            s = classify_component(c)
            _emit([_json({
                "component": i, "shape": s.shape.value, "nodes": list(c.nodes), "edges": len(c.edges),
                "order": [sort_nodes(e) for e in s.order] if s.order else None,
                "parts": [sort_nodes(p) for p in s.partition] if s.partition else None,
            })], out)
        return EXIT_OK
    for e in h.edges:
        names = ",".join(h.provenance.get(e, ())) or "-"
        _emit([f"edge {names}: {', '.join(sort_nodes(e))} [p={h.edge_probability(e)}]"], out)
    _emit([f"components: {len(comps)}"], out)
    for i, c in enumerate(comps, start=1):
        _emit([f"component {i} {format_set(c.nodes)}: {classify_component(c).describe()}"], out)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--schema", required=True, type=Path, help="schema file")
    common.add_argument("--data", required=True, nargs="+", metavar="D",
                        help="CSV files, as Relation=path or path named after the relation")
    common.add_argument("--constraints", type=Path, help="constraint file")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="largest component, in tuples, solved by the world LP")
    common.add_argument("--format", dest="fmt", choices=("text", "tsv", "json-lines"), default="text")

    p = argparse.ArgumentParser(prog="pdb", description="Consistency checking and cautious query answering "
                                "over probabilistic databases with denial constraints.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="decide consistency")
    c.add_argument("--explain", action="store_true", help="print every component's rule and conditions")
    c.add_argument("--certificate", action="store_true", help="print a model per component")
    for name in ("query", "mp"):
        q = sub.add_parser(name, parents=[common], help="answer a query" if name == "query" else "membership test")
        q.add_argument("--query", required=True, type=Path, help="query file")
        q.add_argument("--combine", choices=COMBINE_MODES, default="frechet")
        if name == "mp":
            q.add_argument("--k1", required=True)
            q.add_argument("--k2", required=True)
            q.add_argument("--answer", help="comma-separated answer values; omit for a boolean query")
    sub.add_parser("hypergraph", parents=[common], help="show conflicting sets and components")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="warning: %(message)s", stream=sys.stderr)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.budget < 1:
        print("error: --budget must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    config = RunConfig(args.schema, args.data, args.constraints, getattr(args, "query", None),
                       args.budget, getattr(args, "combine", "frechet"), args.fmt)
    try:
        if args.command == "check":
            return cmd_check(config, args.explain, args.certificate)
        if args.command == "query":
            return cmd_query(config)
        if args.command == "mp":
            return cmd_mp(config, args.answer, args.k1, args.k2)
        return cmd_hypergraph(config)
    except (UsageError, LoadError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
