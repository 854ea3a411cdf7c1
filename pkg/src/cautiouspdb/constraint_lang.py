"""Denial constraints and conjunctive queries: AST, parser, printer, classes.

Constraint lines look like::

    ic: ![Room(x1,x2,x3,"Std",x4), Room(x5,x2,x6,"Suite",x7), x3 > x6]
    soft [p=1/2]: ![R(x,y), R(x,z), y != z]

and query lines like::

    q(x) := Room(x,"1",p,"Std","Sea"), p > 100
"""
from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

from .model import RelationSchema, to_rational

log = logging.getLogger(__name__)


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Const:
    value: Union[str, int, Fraction]

    @property
    def kind(self) -> str:
        return "string" if isinstance(self.value, str) else "number"

    def __str__(self):
        if isinstance(self.value, str):
            escaped = self.value.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return str(self.value)


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple

    def variables(self) -> list:
        return [t for t in self.terms if isinstance(t, Var)]

    def __str__(self):
        return f"{self.relation}({', '.join(map(str, self.terms))})"


OPS = ("!=", "<=", ">=", "=", "<", ">")


@dataclass(frozen=True)
class BuiltinPredicate:
    left: Term
    op: str
    right: Term

    def variables(self) -> list:
        return [t for t in (self.left, self.right) if isinstance(t, Var)]

    @property
    def constant_only(self) -> bool:
        return not self.variables()

    def holds(self, a, b) -> bool:
        return compare(a, self.op, b)

    def __str__(self):
        return f"{self.left} {self.op} {self.right}"


def compare(a, op: str, b) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    if op == ">=":
        return a >= b
    raise ValueError(op)


@dataclass(frozen=True)
class DenialConstraint:
    name: str
    atoms: tuple
    builtins: tuple = ()
    probability: Fraction = Fraction(1)

    @property
    def arity(self) -> int:
        return len(self.atoms)

    @property
    def relations(self) -> frozenset:
        return frozenset(a.relation for a in self.atoms)

    @property
    def degenerate(self) -> bool:
        """True when some builtin compares two constants."""
        return any(b.constant_only for b in self.builtins)

    def __str__(self):
        head = self.name if self.probability == 1 else f"{self.name} [p={self.probability}]"
        body = ", ".join([str(a) for a in self.atoms] + [str(b) for b in self.builtins])
        return f"{head}: ![{body}]"


@dataclass(frozen=True)
class ConjunctiveQuery:
    name: str
    head: tuple  # of Var
    atoms: tuple
    builtins: tuple = ()

    @property
    def existential(self) -> tuple:
        seen = []
        for a in self.atoms:
            for v in a.variables():
                if v not in self.head and v not in seen:
                    seen.append(v)
        return tuple(seen)

    @property
    def projection_free(self) -> bool:
        return not self.existential

    @property
    def is_boolean(self) -> bool:
        return not self.head

    def __str__(self):
        body = ", ".join([str(a) for a in self.atoms] + [str(b) for b in self.builtins])
        return f"{self.name}({', '.join(map(str, self.head))}) := {body}"


# ---------------------------------------------------------------- tokenizer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*"|'(?:[^'\\]|\\.)*')
  | (?P<number>-?\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<op>!=|<=|>=|:=|≠|≤|≥|=|<|>)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(),:\[\]!])
    """,
    re.VERBOSE,
)
_UNICODE_OPS = {"≠": "!=", "≤": "<=", "≥": ">="}


def _tokenize(text: str) -> list:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        value = m.group(kind)
        if kind == "op":
            value = _UNICODE_OPS.get(value, value)
        tokens.append((kind, value))
    tokens.append(("end", ""))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self, offset=0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.next()
        if tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of line'!r}")
        return tok

    def at(self, value) -> bool:
        return self.peek()[1] == value

    def done(self) -> bool:
        return self.peek()[0] == "end"

    def term(self) -> Term:
        kind, value = self.next()
        if kind == "ident":
            if value[0].isupper():
                raise ParseError(f"variables must start lowercase: {value!r}")
            return Var(value)
        if kind == "string":
            body = value[1:-1]
            return Const(re.sub(r"\\(.)", r"\1", body))
        if kind == "number":
            num = to_rational(value)
            return Const(int(num) if num.denominator == 1 and "." not in value and "/" not in value else num)
        raise ParseError(f"expected a term, found {value or 'end of line'!r}")

    def literal(self):
        """An atom ``Rel(t, ...)`` or a builtin ``t op t``."""
        kind, value = self.peek()
        if kind == "ident" and self.peek(1)[1] == "(":
            self.next()
            self.expect("(")
            terms = []
            if not self.at(")"):
                terms.append(self.term())
                while self.at(","):
                    self.next()
                    terms.append(self.term())
            self.expect(")")
            return Atom(value, tuple(terms))
        left = self.term()
        kind, op = self.next()
        if kind != "op" or op == ":=":
            raise ParseError(f"expected a comparison operator, found {op or 'end of line'!r}")
        return BuiltinPredicate(left, op, self.term())

    def body(self, closing: Optional[str]) -> tuple:
        atoms, builtins = [], []
        while True:
            lit = self.literal()
            (atoms if isinstance(lit, Atom) else builtins).append(lit)
            if self.at(","):
                self.next()
                continue
            break
        if closing:
            self.expect(closing)
        return tuple(atoms), tuple(builtins)


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out).strip()


def parse_constraint(line: str, schemas: Optional[Mapping[str, RelationSchema]] = None,
                     default_name: str = "ic") -> DenialConstraint:
    p = _Parser(line)
    name, prob = default_name, Fraction(1)
    if p.peek()[0] == "ident" and p.peek(1)[1] in (":", "["):
        name = p.next()[1]
        if p.at("["):
            p.next()
            key = p.next()
            if key != ("ident", "p"):
                raise ParseError("expected [p=...] after the constraint name")
            p.expect("=")
            kind, value = p.next()
            if kind != "number":
                raise ParseError("constraint probability must be a number")
            prob = to_rational(value)
            if not 0 <= prob <= 1:
                raise ParseError(f"constraint probability {prob} outside [0,1]")
            p.expect("]")
        p.expect(":")
    p.expect("!")
    p.expect("[")
    atoms, builtins = p.body("]")
    if not p.done():
        raise ParseError(f"trailing input {p.peek()[1]!r}")
    c = DenialConstraint(name, atoms, builtins, prob)
    _check_body(c.atoms, c.builtins, schemas, f"constraint {name}")
    if c.degenerate:
        log.warning("constraint %s compares two constants", name)
    return c


def parse_constraints(text: str, schemas: Optional[Mapping[str, RelationSchema]] = None) -> list:
    """Parse a constraint file, one constraint per non-empty line."""
    out, names = [], set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        try:
            c = parse_constraint(line, schemas, default_name=f"ic{len(out) + 1}")
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if c.name in names:
            raise ParseError(f"line {lineno}: duplicate constraint name {c.name!r}")
        names.add(c.name)
        out.append(c)
    return out


def parse_query(text: str, schemas: Optional[Mapping[str, RelationSchema]] = None) -> ConjunctiveQuery:
    lines = [_strip_comment(ln) for ln in text.splitlines()]
    line = " ".join(ln for ln in lines if ln)
    p = _Parser(line)
    kind, name = p.next()
    if kind != "ident":
        raise ParseError("a query starts with its name, e.g. q(x) := ...")
    head = []
    if p.at("("):
        p.next()
        if not p.at(")"):
            while True:
                t = p.term()
                if not isinstance(t, Var):
                    raise ParseError("query head may only contain variables")
                head.append(t)
                if not p.at(","):
                    break
                p.next()
        p.expect(")")
    p.expect(":=")
    atoms, builtins = p.body(None)
    if not p.done():
        raise ParseError(f"trailing input {p.peek()[1]!r}")
    if not atoms:
        raise ParseError("a query needs at least one atom")
    if len(set(head)) != len(head):
        raise ParseError("repeated head variable")
    q = ConjunctiveQuery(name, tuple(head), atoms, builtins)
    bound = {v for a in atoms for v in a.variables()}
    for v in head:
        if v not in bound:
            raise ParseError(f"head variable {v} does not occur in any atom")
    _check_body(atoms, builtins, schemas, f"query {name}")
    return q


def _check_body(atoms, builtins, schemas, what: str) -> None:
    if not atoms:
        raise ParseError(f"{what}: at least one relation atom is required")
    bound = {v for a in atoms for v in a.variables()}
    for b in builtins:
        for v in b.variables():
            if v not in bound:
                raise ParseError(f"{what}: variable {v} in '{b}' is not bound by any atom")
    if schemas is None:
        return
    kinds = {}
    for a in atoms:
        schema = schemas.get(a.relation)
        if schema is None:
            raise ParseError(f"{what}: unknown relation {a.relation!r}")
        if len(a.terms) != schema.arity:
            raise ParseError(
                f"{what}: {a.relation} has arity {schema.arity}, atom has {len(a.terms)} terms"
            )
        for pos, t in enumerate(a.terms):
            kind = _family(schema.kind(pos))
            if isinstance(t, Const):
                if t.kind != kind:
                    raise ParseError(f"{what}: constant {t} does not fit {a.relation} position {pos + 1}")
            else:
                prev = kinds.setdefault(t, kind)
                if prev != kind:
                    raise ParseError(f"{what}: variable {t} used at string and numeric positions")
    for b in builtins:
        sides = [kinds[t] if isinstance(t, Var) else t.kind for t in (b.left, b.right)]
        if sides[0] != sides[1]:
            raise ParseError(f"{what}: '{b}' compares a string with a number")


def _family(kind: str) -> str:
    return "string" if kind == "string" else "number"


# ---------------------------------------------------------- classification

class Tag(str, enum.Enum):
    FD = "FD"
    BINARY_EGD = "BinaryEGD"
    JOIN_FREE = "JoinFree"
    GENERAL = "GeneralDenial"


@dataclass(frozen=True)
class FDSpec:
    """A functional dependency lhs -> rhs, positions are 0-based."""
    relation: str
    lhs: tuple
    rhs: tuple

    def key(self, values: Sequence) -> tuple:
        return tuple(values[i] for i in self.lhs)

    def dependent(self, values: Sequence) -> tuple:
        return tuple(values[i] for i in self.rhs)

    def describe(self, schema: Optional[RelationSchema] = None) -> str:
        names = schema.attribute_names if schema else None
        fmt = (lambda ps: ",".join(names[i] for i in ps)) if names else (lambda ps: ",".join(f"#{i + 1}" for i in ps))
        return f"{self.relation}: {fmt(self.lhs) or '{}'} -> {fmt(self.rhs)}"


@dataclass(frozen=True)
class ConstraintClass:
    tag: Tag
    arity: int
    join_free: bool
    fd: Optional[FDSpec] = None

    def __str__(self):
        extra = f" {self.fd.describe()}" if self.fd else ""
        jf = " join-free" if self.join_free and self.tag != Tag.JOIN_FREE else ""
        return f"{self.tag.value}{extra} arity={self.arity}{jf}"


def is_join_free(c: DenialConstraint) -> bool:
    owner = {}
    for i, a in enumerate(c.atoms):
        for v in a.variables():
            if owner.setdefault(v, i) != i:
                return False
    return all(any(isinstance(t, Const) for t in (b.left, b.right)) for b in c.builtins)


def is_binary_egd(c: DenialConstraint) -> bool:
    return c.arity == 2 and all(b.op == "!=" for b in c.builtins)


def fd_of(c: DenialConstraint) -> Optional[FDSpec]:
    """Recognize ``R(..x..,a,..) , R(..x..,b,..) , a != b`` shapes."""
    if not is_binary_egd(c) or len(c.builtins) != 1:
        return None
    a1, a2 = c.atoms
    if a1.relation != a2.relation or len(a1.terms) != len(a2.terms):
        return None
    for a in (a1, a2):
        vs = a.variables()
        if len(vs) != len(a.terms) or len(set(vs)) != len(vs):
            return None
    pos1 = {v: i for i, v in enumerate(a1.terms)}
    pos2 = {v: i for i, v in enumerate(a2.terms)}
    shared = set(pos1) & set(pos2)
    if any(pos1[v] != pos2[v] for v in shared):
        return None
    b = c.builtins[0]
    l, r = b.left, b.right
    if l in pos2 and r in pos1 and not (l in pos1 or r in pos2):
        l, r = r, l
    if l not in pos1 or r not in pos2 or l in shared or r in shared:
        return None
    if pos1[l] != pos2[r]:
        return None
    lhs = tuple(sorted(pos1[v] for v in shared))
    return FDSpec(a1.relation, lhs, (pos1[l],))


def classify(c: DenialConstraint) -> ConstraintClass:
    jf = is_join_free(c)
    fd = fd_of(c)
    if fd is not None:
        return ConstraintClass(Tag.FD, c.arity, jf, fd)
    if is_binary_egd(c):
        return ConstraintClass(Tag.BINARY_EGD, c.arity, jf)
    if jf:
        return ConstraintClass(Tag.JOIN_FREE, c.arity, True)
    return ConstraintClass(Tag.GENERAL, c.arity, False)


class SetClass(str, enum.Enum):
    ONE_FD_PER_RELATION = "OneFDPerRelation"
    DISJOINT_JOINFREE_OR_BEGD = "DisjointJoinFreeOrBEGD"
    GENERAL = "General"


def merged_fds(ics: Sequence[DenialConstraint]) -> Optional[dict]:
    """Map relation -> FDSpec when every constraint is an FD and each relation
    carries FDs with a single left-hand side; their right-hand sides are merged
    into one value-tuple dependency. None otherwise."""
    out = {}
    for c in ics:
        fd = classify(c).fd
        if fd is None or c.probability != 1:
            return None
        prev = out.get(fd.relation)
        if prev is None:
            out[fd.relation] = fd
        elif prev.lhs != fd.lhs:
            return None
        else:
            out[fd.relation] = FDSpec(fd.relation, fd.lhs, tuple(sorted(set(prev.rhs) | set(fd.rhs))))
    return out


def classify_set(ics: Sequence[DenialConstraint]) -> SetClass:
    if merged_fds(ics) is not None:
        return SetClass.ONE_FD_PER_RELATION
    seen = set()
    for c in ics:
        cls = classify(c)
        if not (cls.join_free or cls.tag in (Tag.FD, Tag.BINARY_EGD)):
            return SetClass.GENERAL
        if c.probability != 1 or seen & c.relations:
            return SetClass.GENERAL
        seen |= c.relations
    return SetClass.DISJOINT_JOINFREE_OR_BEGD
