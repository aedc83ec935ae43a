"""Parser for the VNNLIB subset of SMT-LIB2.

Only the fragment used by typical safety properties is accepted: real-valued
``X_i`` / ``Y_j`` declarations and assertions built from ``and``, ``or``,
``<=`` and ``>=`` over linear terms. Numerals are kept as exact
:class:`fractions.Fraction` values; conversion to binary64 happens later, at
the sampling and inference boundary.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

__all__ = [
    "SpecError",
    "SpecSyntaxError",
    "UndeclaredVariable",
    "EmptySpec",
    "UnboundedInput",
    "InfeasibleBounds",
    "VarKind",
    "Variable",
    "Relation",
    "LinearAtom",
    "Atom",
    "And",
    "Or",
    "Formula",
    "SpecFile",
    "Box",
    "tokenize",
    "read_sexprs",
    "parse_spec",
    "load_spec",
    "format_spec",
    "iter_atoms",
    "extract_input_box",
    "has_complex_input_disjunction",
]


class SpecError(Exception):
    """Base class for VNNLIB parsing and interpretation errors."""


class SpecSyntaxError(SpecError):
    pass


class UndeclaredVariable(SpecError):
    pass


class EmptySpec(SpecError):
    pass


class UnboundedInput(SpecError):
    pass


class InfeasibleBounds(SpecError):
    pass


class VarKind(enum.Enum):
    INPUT = "X"
    OUTPUT = "Y"


@dataclass(frozen=True)
class Variable:
    kind: VarKind
    index: int

    @property
    def name(self) -> str:
        return f"{self.kind.value}_{self.index}"

    def __str__(self) -> str:
        return self.name

    def __lt__(self, other):
        if not isinstance(other, Variable):
            return NotImplemented
        return (self.kind.value, self.index) < (other.kind.value, other.index)


class Relation(enum.Enum):
    LE = "<="
    GE = ">="


@dataclass(frozen=True)
class LinearAtom:
    """``sum(c_v * v) <relation> constant`` with exact rational data.

    ``coefficients`` is stored as a tuple of ``(Variable, Fraction)`` pairs
    sorted by variable, so atoms hash and compare structurally.
    """

    coefficients: tuple[tuple[Variable, Fraction], ...]
    relation: Relation
    constant: Fraction

    @property
    def variables(self) -> tuple[Variable, ...]:
        return tuple(v for v, _ in self.coefficients)

    def coefficient_map(self) -> dict[Variable, Fraction]:
        return dict(self.coefficients)

    def __str__(self) -> str:
        terms = " + ".join(f"{c}*{v}" for v, c in self.coefficients)
        return f"{terms} {self.relation.value} {self.constant}"


@dataclass(frozen=True)
class Atom:
    atom: LinearAtom


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]


Formula = Union[Atom, And, Or]


@dataclass(frozen=True)
class SpecFile:
    input_count: int
    output_count: int
    assertion: And


@dataclass(frozen=True)
class Box:
    """Axis-aligned box of binary64 input bounds."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have the same length")
        for a, b in zip(self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("box bounds must be finite")
            if a > b:
                raise ValueError(f"empty box dimension [{a}, {b}]")

    @classmethod
    def from_arrays(cls, lo, hi) -> "Box":
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x) -> bool:
        return all(a <= float(v) <= b for a, v, b in zip(self.lo, x, self.hi))


# -- tokenizer / reader ------------------------------------------------------

_TOKEN_RE = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")
_VAR_RE = re.compile(r"^([XY])_(0|[1-9][0-9]*)$")
_NUM_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")

# Top-level commands that carry no constraint and are skipped.
_IGNORED_COMMANDS = {"check-sat", "get-model", "exit", "set-logic", "set-info", "set-option"}


def tokenize(text: str) -> Iterator[tuple[str, int]]:
    """Yield ``(token, line_number)``; comments and whitespace are dropped."""
    line = 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any character
            raise SpecSyntaxError(f"line {line}: cannot tokenize {text[pos]!r}")
        tok = m.group(0)
        if not (tok[0].isspace() or tok[0] == ";"):
            yield tok, line
        line += tok.count("\n")
        pos = m.end()


def read_sexprs(text: str) -> list:
    """Read every top-level s-expression; atoms are kept as strings."""
    stack: list[list] = [[]]
    opened: list[int] = []
    for tok, line in tokenize(text):
        if tok == "(":
            stack.append([])
            opened.append(line)
        elif tok == ")":
            if len(stack) == 1:
                raise SpecSyntaxError(f"line {line}: unbalanced ')'")
            done = stack.pop()
            opened.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SpecSyntaxError(f"line {opened[-1]}: unclosed '('")
    return stack[0]


# -- linear terms ------------------------------------------------------------

class _Linear:
    """Affine form ``sum(coef * var) + const`` used during normalization."""

    __slots__ = ("coef", "const")

    def __init__(self, coef=None, const=Fraction(0)):
        self.coef: dict[Variable, Fraction] = dict(coef or {})
        self.const = Fraction(const)

    def is_constant(self) -> bool:
        return not any(self.coef.values())

    def scaled(self, k: Fraction) -> "_Linear":
        return _Linear({v: c * k for v, c in self.coef.items()}, self.const * k)

    def plus(self, other: "_Linear") -> "_Linear":
        coef = dict(self.coef)
        for v, c in other.coef.items():
            coef[v] = coef.get(v, Fraction(0)) + c
        return _Linear(coef, self.const + other.const)


class _Reader:
    def __init__(self):
        self.declared: dict[Variable, None] = {}

    def variable(self, name: str) -> Variable:
        m = _VAR_RE.match(name)
        if m is None:
            raise SpecSyntaxError(f"unknown identifier {name!r}")
        var = Variable(VarKind(m.group(1)), int(m.group(2)))
        if var not in self.declared:
            raise UndeclaredVariable(f"{name} used before declare-const")
        return var

    def declare(self, args: list) -> None:
        if len(args) != 2 or not isinstance(args[0], str) or args[1] != "Real":
            raise SpecSyntaxError(f"malformed declare-const {args!r}")
        m = _VAR_RE.match(args[0])
        if m is None:
            raise SpecSyntaxError(f"variable name {args[0]!r} is not X_<i> or Y_<j>")
        var = Variable(VarKind(m.group(1)), int(m.group(2)))
        if var in self.declared:
            raise SpecSyntaxError(f"duplicate declaration of {var}")
        self.declared[var] = None

    def term(self, expr) -> _Linear:
        if isinstance(expr, str):
            if _NUM_RE.match(expr):
                return _Linear(const=Fraction(expr))
            var = self.variable(expr)
            return _Linear({var: Fraction(1)})
        if not expr or not isinstance(expr[0], str):
            raise SpecSyntaxError(f"malformed term {expr!r}")
        op, args = expr[0], expr[1:]
        if not args:
            raise SpecSyntaxError(f"operator {op!r} needs arguments")
        parts = [self.term(a) for a in args]
        if op == "+":
            out = _Linear()
            for p in parts:
                out = out.plus(p)
            return out
        if op == "-":
            if len(parts) == 1:
                return parts[0].scaled(Fraction(-1))
            out = parts[0]
            for p in parts[1:]:
                out = out.plus(p.scaled(Fraction(-1)))
            return out
        if op == "*":
            out = _Linear(const=Fraction(1))
            for p in parts:
                if p.is_constant():
                    out = out.scaled(p.const)
                elif out.is_constant():
                    out = p.scaled(out.const)
                else:
                    raise SpecSyntaxError(f"non-linear term {_show(expr)}")
            return out
        raise SpecSyntaxError(f"unknown operator {op!r} in term")

    def formula(self, expr) -> Formula:
        if isinstance(expr, str) or not expr or not isinstance(expr[0], str):
            raise SpecSyntaxError(f"expected a formula, got {_show(expr)}")
        op, args = expr[0], expr[1:]
        if op in ("and", "or"):
            if not args:
                raise SpecSyntaxError(f"empty ({op})")
            children = tuple(self.formula(a) for a in args)
            return And(children) if op == "and" else Or(children)
        if op in ("<=", ">="):
            if len(args) != 2:
                raise SpecSyntaxError(f"({op} ...) takes exactly two arguments")
            diff = self.term(args[0]).plus(self.term(args[1]).scaled(Fraction(-1)))
            coef = tuple(sorted((v, c) for v, c in diff.coef.items() if c != 0))
            if not coef:
                raise SpecSyntaxError(f"atom without variables: {_show(expr)}")
            return Atom(LinearAtom(coef, Relation(op), -diff.const))
        raise SpecSyntaxError(f"unsupported formula operator {op!r}")


def _show(expr) -> str:
    if isinstance(expr, str):
        return expr
    return "(" + " ".join(_show(e) for e in expr) + ")"


def parse_spec(text: str) -> SpecFile:
    reader = _Reader()
    asserts: list[Formula] = []
    for form in read_sexprs(text):
        if isinstance(form, str) or not form or not isinstance(form[0], str):
            raise SpecSyntaxError(f"unexpected top-level form {_show(form)}")
        head = form[0]
        if head == "declare-const":
            reader.declare(form[1:])
        elif head == "assert":
            if len(form) != 2:
                raise SpecSyntaxError("assert takes exactly one formula")
            asserts.append(reader.formula(form[1]))
        elif head in _IGNORED_COMMANDS:
            continue
        else:
            raise SpecSyntaxError(f"unsupported command {head!r}")

    counts = {}
    for kind in VarKind:
        idx = sorted(v.index for v in reader.declared if v.kind is kind)
        if idx != list(range(len(idx))):
            raise SpecSyntaxError(f"{kind.value}_ indices must be 0..n-1 without gaps")
        counts[kind] = len(idx)
    if counts[VarKind.INPUT] == 0 or counts[VarKind.OUTPUT] == 0:
        raise SpecSyntaxError("at least one X_ and one Y_ variable must be declared")
    if not asserts:
        raise EmptySpec("specification contains no assertions")
    return SpecFile(counts[VarKind.INPUT], counts[VarKind.OUTPUT], And(tuple(asserts)))


def load_spec(path) -> SpecFile:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


# -- printing ----------------------------------------------------------------

def _fmt_number(q: Fraction) -> str:
    # Values built from decimal literals with + - * always have 2^a 5^b
    # denominators, so an exact decimal rendering exists.
    sign = q < 0
    q = abs(q)
    den = q.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise ValueError(f"{q} has no finite decimal expansion")
    digits = max(twos, fives)
    scaled = q * 10**digits
    assert scaled.denominator == 1
    s = str(scaled.numerator).rjust(digits + 1, "0")
    text = s[: len(s) - digits] + "." + (s[len(s) - digits:] or "0")
    return f"(- {text})" if sign else text


def _fmt_atom(atom: LinearAtom) -> str:
    terms = []
    for v, c in atom.coefficients:
        terms.append(v.name if c == 1 else f"(* {_fmt_number(c)} {v.name})")
    lhs = terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"
    return f"({atom.relation.value} {lhs} {_fmt_number(atom.constant)})"


def _fmt_formula(f: Formula) -> str:
    if isinstance(f, Atom):
        return _fmt_atom(f.atom)
    op = "and" if isinstance(f, And) else "or"
    return f"({op} " + " ".join(_fmt_formula(c) for c in f.children) + ")"


def format_spec(spec: SpecFile) -> str:
    """Render ``spec`` as VNNLIB text that parses back to the same AST."""
    lines = [f"(declare-const X_{i} Real)" for i in range(spec.input_count)]
    lines += [f"(declare-const Y_{j} Real)" for j in range(spec.output_count)]
    lines += [f"(assert {_fmt_formula(c)})" for c in spec.assertion.children]
    return "\n".join(lines) + "\n"


# -- queries -----------------------------------------------------------------

def iter_atoms(f: Formula) -> Iterator[LinearAtom]:
    if isinstance(f, Atom):
        yield f.atom
    else:
        for c in f.children:
            yield from iter_atoms(c)


def _conjunct_atoms(f: Formula) -> Iterator[LinearAtom]:
    # Atoms reachable from the root through And nodes only.
    if isinstance(f, Atom):
        yield f.atom
    elif isinstance(f, And):
        for c in f.children:
            yield from _conjunct_atoms(c)


def _round_up(q: Fraction) -> float:
    v = float(q)
    return math.nextafter(v, math.inf) if Fraction(v) < q else v


def _round_down(q: Fraction) -> float:
    v = float(q)
    return math.nextafter(v, -math.inf) if Fraction(v) > q else v


def extract_input_box(spec: SpecFile) -> Box:
    """Tightest box given by single-input conjunct atoms with coefficient +-1.

    Bounds are rounded inward to binary64 so every box point satisfies the
    exact rational atoms.
    """
    n = spec.input_count
    lo: list[Fraction | None] = [None] * n
    hi: list[Fraction | None] = [None] * n
    for atom in _conjunct_atoms(spec.assertion):
        if len(atom.coefficients) != 1:
            continue
        var, c = atom.coefficients[0]
        if var.kind is not VarKind.INPUT or abs(c) != 1:
            continue
        bound = atom.constant / c
        is_upper = (atom.relation is Relation.LE) == (c > 0)
        i = var.index
        if is_upper:
            hi[i] = bound if hi[i] is None else min(hi[i], bound)
        else:
            lo[i] = bound if lo[i] is None else max(lo[i], bound)

    out_lo, out_hi = [], []
    for i in range(n):
        if lo[i] is None or hi[i] is None:
            raise UnboundedInput(f"X_{i} lacks a finite lower or upper bound")
        if lo[i] > hi[i]:
            raise InfeasibleBounds(f"X_{i}: lower bound {lo[i]} > upper bound {hi[i]}")
        a, b = _round_up(lo[i]), _round_down(hi[i])
        if a > b:
            # a single non-representable point; keep the nearest float
            a = b = float(lo[i])
        out_lo.append(a)
        out_hi.append(b)
    return Box(tuple(out_lo), tuple(out_hi))


def has_complex_input_disjunction(spec: SpecFile) -> bool:
    """True iff some Or node has an input-variable atom anywhere below it."""

    def visit(f: Formula, under_or: bool) -> bool:
        if isinstance(f, Atom):
            return under_or and any(v.kind is VarKind.INPUT for v in f.atom.variables)
        inner = under_or or isinstance(f, Or)
        return any(visit(c, inner) for c in f.children)

    return visit(spec.assertion, False)
