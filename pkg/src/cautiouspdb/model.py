"""Schemas, probabilistic tuples and instances.

Every probability is an exact ``fractions.Fraction``. Text is the only
accepted input for probabilities; Python floats are refused.
"""
from __future__ import annotations

import csv
import io
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence, TextIO, Union

log = logging.getLogger(__name__)

Rational = Fraction

KINDS = ("string", "integer", "rational")
_KIND_ALIASES = {
    "string": "string",
    "str": "string",
    "text": "string",
    "integer": "integer",
    "int": "integer",
    "rational": "rational",
    "rational-number": "rational",
    "number": "rational",
}


class LoadError(ValueError):
    """Raised for malformed schema or data input."""


def to_rational(value) -> Fraction:
    """Exact conversion of an int, Fraction or numeric string."""
    if isinstance(value, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(value, float):
        raise TypeError("floats are rejected; pass text such as '3/4' or '0.75'")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?(/\d+)?", text):
            raise LoadError(f"not an exact number: {value!r}")
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise LoadError(f"not an exact number: {value!r}") from exc
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def natural_key(name: str):
    """Sort key that orders t2 before t10."""
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", name))


@dataclass(frozen=True)
class ProbabilityBound:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        lo, hi = to_rational(self.lo), to_rational(self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if not (0 <= lo <= 1 and 0 <= hi <= 1):
            raise LoadError(f"probability outside [0,1]: {lo}..{hi}")
        if lo > hi:
            raise LoadError(f"empty probability range: {lo} > {hi}")

    @classmethod
    def point(cls, p) -> "ProbabilityBound":
        p = to_rational(p)
        return cls(p, p)

    @classmethod
    def parse(cls, text: str) -> "ProbabilityBound":
        text = text.strip()
        if ".." in text:
            lo, hi = text.split("..", 1)
            return cls(to_rational(lo), to_rational(hi))
        return cls.point(text)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __str__(self) -> str:
        if self.is_point:
            return str(self.lo)
        return f"{self.lo}..{self.hi}"


# A [pmin, pmax] answer interval has the same shape and invariants.
ProbabilityInterval = ProbabilityBound


@dataclass(frozen=True)
class RelationSchema:
    name: str
    attributes: tuple  # of (name, kind)

    def __post_init__(self):
        names = [a for a, _ in self.attributes]
        if len(set(names)) != len(names):
            raise LoadError(f"duplicate attribute in relation {self.name}")
        for a, kind in self.attributes:
            if kind not in KINDS:
                raise LoadError(f"unknown kind {kind!r} for {self.name}.{a}")
            if a == "p":
                raise LoadError("'p' is reserved for the probability column")

    @property
    def arity(self) -> int:
        return len(self.attributes)

    @property
    def attribute_names(self) -> tuple:
        return tuple(a for a, _ in self.attributes)

    def kind(self, position: int) -> str:
        return self.attributes[position][1]

    def convert(self, raw: Sequence[str]) -> tuple:
        if len(raw) != self.arity:
            raise LoadError(
                f"arity mismatch for {self.name}: expected {self.arity} values, got {len(raw)}"
            )
        return tuple(parse_value(v, k) for v, (_, k) in zip(raw, self.attributes))

    def __str__(self) -> str:
        attrs = ", ".join(f"{a}:{k}" for a, k in self.attributes)
        return f"relation {self.name}({attrs})"


def parse_value(text, kind: str):
    if kind == "string":
        return str(text)
    if kind == "integer":
        if isinstance(text, int) and not isinstance(text, bool):
            return text
        try:
            return int(str(text).strip())
        except ValueError as exc:
            raise LoadError(f"not an integer: {text!r}") from exc
    return to_rational(text)


def format_value(value) -> str:
    return str(value)


@dataclass(frozen=True)
class PTuple:
    tuple_id: str
    relation: str
    values: tuple
    prob: ProbabilityBound

    def __str__(self) -> str:
        vals = ", ".join(format_value(v) for v in self.values)
        return f"{self.tuple_id} = {self.relation}({vals}) [p={self.prob}]"


@dataclass(frozen=True)
class PDBInstance:
    schemas: Mapping[str, RelationSchema]
    tuples: tuple = ()
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        seen_facts = set()
        by_id = {}
        for t in self.tuples:
            if t.relation not in self.schemas:
                raise LoadError(f"unknown relation {t.relation!r}")
            if len(t.values) != self.schemas[t.relation].arity:
                raise LoadError(f"arity mismatch for tuple {t.tuple_id}")
            if t.tuple_id in by_id:
                raise LoadError(f"duplicate tuple id {t.tuple_id}")
            fact = (t.relation, t.values)
            if fact in seen_facts:
                raise LoadError(f"duplicate deterministic tuple in {t.relation}: {t.values}")
            seen_facts.add(fact)
            by_id[t.tuple_id] = t
        self._by_id.clear()
        self._by_id.update(by_id)

    def __len__(self) -> int:
        return len(self.tuples)

    def __iter__(self) -> Iterator[PTuple]:
        return iter(self.tuples)

    def get(self, tuple_id: str) -> PTuple:
        try:
            return self._by_id[tuple_id]
        except KeyError:
            raise KeyError(f"unknown tuple id {tuple_id!r}") from None

    def relation(self, name: str) -> list:
        return [t for t in self.tuples if t.relation == name]

    def marginals(self) -> dict:
        return {t.tuple_id: t.prob for t in self.tuples}

    @classmethod
    def from_rows(cls, schemas: Iterable[RelationSchema], rows: Iterable) -> "PDBInstance":
        """Build an instance from ``(relation, values, probability)`` triples.

        Ids follow the global load order (t1, t2, ...); zero-probability rows
        keep their slot so the numbering matches row positions.
        """
        schema_map = {s.name: s for s in schemas}
        tuples = []
        for k, (rel, values, prob) in enumerate(rows, start=1):
            if rel not in schema_map:
                raise LoadError(f"unknown relation {rel!r}")
            bound = prob if isinstance(prob, ProbabilityBound) else _as_bound(prob)
            if bound.hi == 0:
                log.warning("dropping zero-probability tuple t%d of %s", k, rel)
                continue
            tuples.append(PTuple(f"t{k}", rel, schema_map[rel].convert(list(values)), bound))
        return cls(schema_map, tuple(tuples))


def _as_bound(prob) -> ProbabilityBound:
    if isinstance(prob, str):
        return ProbabilityBound.parse(prob)
    return ProbabilityBound.point(prob)


def marginal(instance: PDBInstance, tuple_id: str) -> ProbabilityBound:
    return instance.get(tuple_id).prob


def det(instance: PDBInstance) -> list:
    """The deterministic facts ``(relation, values)``, one per tuple."""
    return [(t.relation, t.values) for t in instance.tuples]


_SCHEMA_LINE = re.compile(r"relation\s+([A-Za-z_]\w*)\s*\((.*)\)\s*$")


def parse_schema(text: str) -> dict:
    schemas = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SCHEMA_LINE.match(line)
        if not m:
            raise LoadError(f"schema line {lineno}: expected 'relation Name(attr:kind, ...)'")
        name, body = m.group(1), m.group(2).strip()
        attrs = []
        for part in filter(None, (p.strip() for p in body.split(","))):
            if ":" not in part:
                raise LoadError(f"schema line {lineno}: attribute {part!r} lacks a kind")
            a, k = (s.strip() for s in part.split(":", 1))
            if k.lower() not in _KIND_ALIASES:
                raise LoadError(f"schema line {lineno}: unknown kind {k!r}")
            attrs.append((a, _KIND_ALIASES[k.lower()]))
        if not attrs:
            raise LoadError(f"schema line {lineno}: relation {name} has no attributes")
        if name in schemas:
            raise LoadError(f"schema line {lineno}: relation {name} declared twice")
        schemas[name] = RelationSchema(name, tuple(attrs))
    return schemas


def _csv_rows(source: Union[str, TextIO, Iterable]) -> Iterator[list]:
    if isinstance(source, str):
        source = io.StringIO(source)
    lines = (ln for ln in source if ln.strip() and not ln.lstrip().startswith("#"))
    for row in csv.reader(lines, skipinitialspace=True):
        yield [c.strip() for c in row]


def load_instance(schema_text: str, data_sources: Iterable) -> PDBInstance:
    """Load an instance from schema text and ``(relation, csv stream)`` pairs.

    Each CSV starts with a header naming the attributes in declared order
    followed by ``p``.
    """
    schemas = parse_schema(schema_text)
    rows = []
    for rel, stream in data_sources:
        if rel not in schemas:
            raise LoadError(f"data for undeclared relation {rel!r}")
        schema = schemas[rel]
        it = _csv_rows(stream)
        header = next(it, None)
        if header is None:
            continue
        expected = list(schema.attribute_names) + ["p"]
        if header != expected:
            raise LoadError(f"{rel}: header {header} does not match {expected}")
        for lineno, row in enumerate(it, start=2):
            if len(row) != len(expected):
                raise LoadError(
                    f"{rel} row {lineno}: arity mismatch, expected {len(expected)} fields, got {len(row)}"
                )
            rows.append((rel, row[:-1], ProbabilityBound.parse(row[-1])))
    return PDBInstance.from_rows(schemas.values(), rows)


def dump_relation(instance: PDBInstance, relation: str) -> str:
    """Serialize one relation back to the CSV format read by load_instance."""
    schema = instance.schemas[relation]
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(schema.attribute_names) + ["p"])
    for t in instance.relation(relation):
        w.writerow([format_value(v) for v in t.values] + [str(t.prob)])
    return out.getvalue()


class Interpretation(dict):
    """Sparse map from possible worlds (frozensets of tuple ids) to probabilities."""

    def mass(self, predicate=None) -> Fraction:
        return sum((p for w, p in self.items() if predicate is None or predicate(w)), Fraction(0))

    def marginal_of(self, tuple_id: str) -> Fraction:
        return self.mass(lambda w: tuple_id in w)

    def violations(self, marginals: Mapping[str, ProbabilityBound], edges=()) -> list:
        """Human-readable list of broken invariants; empty when valid."""
        problems = []
        if any(p < 0 for p in self.values()):
            problems.append("negative world probability")
        if self.mass() != 1:
            problems.append(f"total mass {self.mass()} != 1")
        for tid, bound in marginals.items():
            m = self.marginal_of(tid)
            if not bound.lo <= m <= bound.hi:
                problems.append(f"marginal of {tid} is {m}, expected {bound}")
        for w, p in self.items():
            if p > 0 and any(e <= w for e in edges):
                problems.append(f"world {sorted(w, key=natural_key)} violates a constraint")
        return problems

    def format_lines(self) -> list:
        lines = []
        items = sorted(self.items(), key=lambda kv: (len(kv[0]), sorted(map(natural_key, kv[0]))))
        for w, p in items:
            if p:
                inner = ", ".join(sorted(w, key=natural_key))
                lines.append(f"{{{inner}}}: {p}")
        return lines
