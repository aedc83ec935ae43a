"""Three-valued interval satisfiability and concrete point checks.

Both evaluators work in exact rational arithmetic over the binary64 values
they are given, so interval refutation and point evaluation always agree on
degenerate intervals and a refuted formula can never be satisfied by a point
of the boxes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from . import onnx_runtime
from .vnnlib import And, Atom, Box, Formula, LinearAtom, Or, Relation, SpecFile, Variable, VarKind

__all__ = [
    "MissingVariable",
    "Interval",
    "TruthValue",
    "VerdictKind",
    "UnknownReason",
    "Verdict",
    "eval_atom_interval",
    "eval_formula_interval",
    "eval_point",
    "build_env",
    "decide",
]


class MissingVariable(KeyError):
    pass


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo > self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")


class TruthValue(enum.IntEnum):
    ALWAYS_FALSE = 0
    INDETERMINATE = 1
    ALWAYS_TRUE = 2


class VerdictKind(enum.Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    UNKNOWN = "unknown"


class UnknownReason(enum.Enum):
    COMPLEX_DISJUNCTION = "ComplexDisjunction"
    INCONCLUSIVE = "Inconclusive"
    UNSUPPORTED_MODEL = "UnsupportedModel"
    INVALID_SPEC = "InvalidSpec"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    reason: UnknownReason | None = None

    @classmethod
    def holds(cls) -> "Verdict":
        return cls(VerdictKind.HOLDS)

    @classmethod
    def violated(cls, x, y) -> "Verdict":
        return cls(VerdictKind.VIOLATED, np.asarray(x, float), np.asarray(y, float))

    @classmethod
    def unknown(cls, reason: UnknownReason) -> "Verdict":
        return cls(VerdictKind.UNKNOWN, reason=reason)

    def __str__(self) -> str:
        return self.kind.value


def eval_atom_interval(atom: LinearAtom, env: Mapping[Variable, Interval]) -> TruthValue:
    lo = hi = Fraction(0)
    for var, c in atom.coefficients:
        try:
            iv = env[var]
        except KeyError:
            raise MissingVariable(var.name) from None
        a, b = Fraction(iv.lo), Fraction(iv.hi)
        if c >= 0:
            lo += c * a
            hi += c * b
        else:
            lo += c * b
            hi += c * a
    k = atom.constant
    if atom.relation is Relation.LE:
        if hi <= k:
            return TruthValue.ALWAYS_TRUE
        if lo > k:
            return TruthValue.ALWAYS_FALSE
    else:
        if lo >= k:
            return TruthValue.ALWAYS_TRUE
        if hi < k:
            return TruthValue.ALWAYS_FALSE
    return TruthValue.INDETERMINATE


def eval_formula_interval(f: Formula, env: Mapping[Variable, Interval]) -> TruthValue:
    if isinstance(f, Atom):
        return eval_atom_interval(f.atom, env)
    values = (eval_formula_interval(c, env) for c in f.children)
    return min(values) if isinstance(f, And) else max(values)


def _atom_at(atom: LinearAtom, x, y) -> bool:
    total = Fraction(0)
    for var, c in atom.coefficients:
        v = x[var.index] if var.kind is VarKind.INPUT else y[var.index]
        total += c * Fraction(float(v))
    if atom.relation is Relation.LE:
        return total <= atom.constant
    return total >= atom.constant


def eval_point(f: Formula, x, y) -> bool:
    """Two-valued evaluation with zero tolerance."""
    if isinstance(f, Atom):
        return _atom_at(f.atom, x, y)
    if isinstance(f, And):
        return all(eval_point(c, x, y) for c in f.children)
    return any(eval_point(c, x, y) for c in f.children)


def build_env(spec: SpecFile, box: Box, out_lo, out_hi) -> dict[Variable, Interval]:
    env = {Variable(VarKind.INPUT, i): Interval(box.lo[i], box.hi[i])
           for i in range(spec.input_count)}
    for j in range(spec.output_count):
        env[Variable(VarKind.OUTPUT, j)] = Interval(float(out_lo[j]), float(out_hi[j]))
    return env


def decide(spec: SpecFile, net, box: Box, bounds, samples) -> Verdict:
    """Interval refutation first, then a counterexample scan over the samples.

    ``bounds`` needs ``lo``/``hi`` sequences; ``samples`` is a SampleSet whose
    missing outputs are computed here, in generation order.
    """
    if spec.input_count != net.input_dim or spec.output_count != net.output_dim:
        raise ValueError(
            f"spec declares {spec.input_count}->{spec.output_count} variables, "
            f"network is {net.input_dim}->{net.output_dim}")
    env = build_env(spec, box, bounds.lo, bounds.hi)
    if eval_formula_interval(spec.assertion, env) is TruthValue.ALWAYS_FALSE:
        return Verdict.holds()
    outputs = samples.outputs
    for i, x in enumerate(samples.points):
        y = outputs[i] if outputs is not None else onnx_runtime.infer(net, x)
        if eval_point(spec.assertion, x, y):
            return Verdict.violated(x, y)
    return Verdict.unknown(UnknownReason.INCONCLUSIVE)
