"""Exact rational arithmetic with an undefined element, and weighted structures.

Everything downstream of this module computes over the lifted rationals:
ordinary `fractions.Fraction` values plus a single distinguished element ⊥
("bottom") that represents an undefined result, e.g. division by zero or a
weight looked up where none is meaningful.  ⊥ absorbs through every arithmetic
operation and sits strictly below every rational in the order.

Weighted structures are finite first-order structures whose vocabulary may,
besides relations and constants, contain weight function symbols: a weight
symbol of arity k denotes a total map from k-tuples of domain elements to
lifted rationals.  They are the data model networks get compiled into and the
logic evaluator runs over.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Union


class Bottom:
    """The undefined value ⊥.  A singleton; compare with `is BOT`."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "⊥"


BOT = Bottom()

LiftedValue = Union[Fraction, Bottom]


def rational(x) -> Fraction:
    """Convert to an exact Fraction.

    Accepts ints, Fractions, and strings ("3", "-2/5", "1.25" — decimal
    strings are exact).  Binary floats are rejected: a Python float denotes
    a base-2 approximation, and silently accepting one would contaminate an
    otherwise exact pipeline.
    """
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        raise TypeError(
            f"refusing binary float {x!r}; pass a string like '1.25' or 'p/q'"
        )
    raise TypeError(f"cannot interpret {x!r} as a rational")


def format_rational(q: Fraction) -> str:
    """Render a Fraction as 'p' or 'p/q' (lowest terms, q > 0)."""
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def ladd(a: LiftedValue, b: LiftedValue) -> LiftedValue:
    if a is BOT or b is BOT:
        return BOT
    return a + b


def lmul(a: LiftedValue, b: LiftedValue) -> LiftedValue:
    if a is BOT or b is BOT:
        return BOT
    return a * b


def ldiv(a: LiftedValue, b: LiftedValue) -> LiftedValue:
    if a is BOT or b is BOT or b == 0:
        return BOT
    return a / b


def lneg(a: LiftedValue) -> LiftedValue:
    if a is BOT:
        return BOT
    return -a


def lifted_arith(op: str, a: LiftedValue, b: LiftedValue) -> LiftedValue:
    """Apply a lifted arithmetic operation.

    op is one of 'add', 'scalar-mul', 'mul', 'div'.  ⊥ in either argument
    gives ⊥; division by zero gives ⊥; otherwise exact rational arithmetic.
    ('scalar-mul' is numerically identical to 'mul'; it exists because the
    term language distinguishes multiplication by a rational literal from
    multiplication of two sub-terms.)
    """
    if op == "add":
        return ladd(a, b)
    if op in ("mul", "scalar-mul"):
        return lmul(a, b)
    if op == "div":
        return ldiv(a, b)
    raise ValueError(f"unknown lifted operation {op!r}")


def lifted_compare(a: LiftedValue, b: LiftedValue) -> str:
    """Compare lifted values: one of 'lt', 'eq', 'gt'.

    The order is total: ⊥ is strictly below every rational, ⊥ equals ⊥,
    and rationals compare exactly.  (Consequently r < ⊥ is never true and
    ⊥ < ⊥ is never true.)
    """
    if a is BOT and b is BOT:
        return "eq"
    if a is BOT:
        return "lt"
    if b is BOT:
        return "gt"
    if a < b:
        return "lt"
    if a == b:
        return "eq"
    return "gt"


@dataclass(frozen=True)
class Vocabulary:
    """Symbols of a weighted structure.

    relations and weights map symbol name -> arity (arity 0 is allowed and
    means a weight constant); constants is a tuple of constant-symbol names.
    Names must be unique across all three kinds.
    """

    relations: Mapping[str, int] = field(default_factory=dict)
    constants: tuple = ()
    weights: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        names = list(self.relations) + list(self.constants) + list(self.weights)
        if len(names) != len(set(names)):
            raise ValueError("vocabulary symbol names must be unique across kinds")

    def all_names(self) -> set:
        return set(self.relations) | set(self.constants) | set(self.weights)


@dataclass
class WeightedStructure:
    """A finite structure interpreting a Vocabulary.

    domain: ordered tuple of element ids (any hashables).
    relations: name -> set of element tuples (arity matching the vocabulary).
    constants: name -> element.
    weights: name -> sparse map from element tuples to lifted values;
    weight_defaults: name -> value returned for tuples absent from the map,
    so weight maps are total without being materialized.
    """

    vocabulary: Vocabulary
    domain: tuple
    relations: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    weight_defaults: dict = field(default_factory=dict)

    def __post_init__(self):
        dom = set(self.domain)
        if len(dom) != len(self.domain):
            raise ValueError("domain elements must be distinct")
        for name, arity in self.vocabulary.relations.items():
            for tup in self.relations.get(name, ()):
                if len(tup) != arity or not set(tup) <= dom:
                    raise ValueError(f"bad tuple {tup} for relation {name}")
        for name in self.vocabulary.constants:
            if name not in self.constants or self.constants[name] not in dom:
                raise ValueError(f"constant {name} must name a domain element")
        for name, arity in self.vocabulary.weights.items():
            for tup in self.weights.get(name, {}):
                if len(tup) != arity or not set(tup) <= dom:
                    raise ValueError(f"bad tuple {tup} for weight {name}")
            if name not in self.weight_defaults:
                self.weight_defaults[name] = BOT

    def rel(self, name: str, tup: tuple) -> bool:
        return tup in self.relations.get(name, ())

    def const(self, name: str):
        return self.constants[name]

    def weight(self, name: str, tup: tuple) -> LiftedValue:
        m = self.weights.get(name, {})
        if tup in m:
            return m[tup]
        return self.weight_defaults[name]


def _fresh_marker_names(taken: set) -> tuple:
    left, right = "left", "right"
    while left in taken or right in taken:
        left, right = "_" + left, "_" + right
    return left, right


def disjoint_union(a: WeightedStructure, b: WeightedStructure) -> WeightedStructure:
    """Disjoint union of two weighted structures over disjoint vocabularies.

    Elements are tagged ('L', e) / ('R', e); two fresh unary marker relations
    are added that hold exactly on the respective sides.  A weight symbol of
    one side yields ⊥ on any tuple touching the other side; same-side tuples
    keep their original values (including the original default).
    """
    clash = a.vocabulary.all_names() & b.vocabulary.all_names()
    if clash:
        raise ValueError(f"vocabulary symbol clash in disjoint union: {sorted(clash)}")

    mark_a, mark_b = _fresh_marker_names(a.vocabulary.all_names() | b.vocabulary.all_names())
    tag_a = lambda e: ("L", e)
    tag_b = lambda e: ("R", e)
    domain = tuple(tag_a(e) for e in a.domain) + tuple(tag_b(e) for e in b.domain)

    relations = {
        **{n: {tuple(map(tag_a, t)) for t in a.relations.get(n, ())} for n in a.vocabulary.relations},
        **{n: {tuple(map(tag_b, t)) for t in b.relations.get(n, ())} for n in b.vocabulary.relations},
        mark_a: {(tag_a(e),) for e in a.domain},
        mark_b: {(tag_b(e),) for e in b.domain},
    }
    constants = {
        **{n: tag_a(a.constants[n]) for n in a.vocabulary.constants},
        **{n: tag_b(b.constants[n]) for n in b.vocabulary.constants},
    }

    # Materialize same-side tuples whose original default was not ⊥, so that
    # a single per-symbol default of ⊥ makes every cross-side tuple undefined
    # while same-side lookups agree with the original structure.
    def side_weights(src: WeightedStructure, tag) -> dict:
        out = {}
        for name, arity in src.vocabulary.weights.items():
            m = {}
            if src.weight_defaults.get(name, BOT) is not BOT and arity > 0:
                for tup in _tuples(src.domain, arity):
                    m[tuple(map(tag, tup))] = src.weight(name, tup)
            else:
                for tup, v in src.weights.get(name, {}).items():
                    m[tuple(map(tag, tup))] = v
                if arity == 0:
                    m[()] = src.weight(name, ())
            out[name] = m
        return out

    weights = {**side_weights(a, tag_a), **side_weights(b, tag_b)}
    vocab = Vocabulary(
        relations={**a.vocabulary.relations, **b.vocabulary.relations, mark_a: 1, mark_b: 1},
        constants=a.vocabulary.constants + b.vocabulary.constants,
        weights={**a.vocabulary.weights, **b.vocabulary.weights},
    )
    return WeightedStructure(
        vocabulary=vocab,
        domain=domain,
        relations=relations,
        constants=constants,
        weights=weights,
        weight_defaults={n: BOT for n in vocab.weights},
    )


def _tuples(domain: Iterable, arity: int):
    return itertools.product(tuple(domain), repeat=arity)
