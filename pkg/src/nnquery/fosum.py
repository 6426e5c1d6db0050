"""Sum-augmented first-order logic over weighted structures: parser + evaluator.

The logic has two mutually recursive sorts.  *Formulas* are classical
first-order formulas over the structure's relations, with standard equality
between element terms and comparisons (=, <) between weight terms; quantifiers
range over the finite domain.  *Weight terms* denote lifted rationals: ⊥,
weight-symbol applications w(s₁,…,sₖ), rational functions of sub-terms,
conditionals `if φ then t else t'`, and sums `sum{x⃗ : φ} t` over all
guard-satisfying tuples of domain elements (an empty sum is 0).

Arithmetic syntax (+, -, *, /, rational literals) is lowered at parse time
into a single rational-function node: an explicit numerator/denominator pair
of polynomials over the collected sub-terms.  A rational-function node keeps
every sub-term that appeared syntactically even when its coefficients cancel,
so that `t - t` is still ⊥ when t is ⊥ — cancellation must not launder
undefinedness into 0.

Bound variables are renamed apart during parsing, so no variable is bound
twice along any path of the returned AST.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction

from nnquery.core import BOT, LiftedValue, Vocabulary, WeightedStructure, ladd, lifted_compare


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SVar:
    """An element variable (a standard term)."""
    name: str


@dataclass(frozen=True)
class SConst:
    """A constant symbol of the vocabulary (a standard term)."""
    name: str


@dataclass(frozen=True)
class TBottom:
    """The weight term ⊥."""


@dataclass(frozen=True)
class TWeight:
    """Application w(s₁,…,sₖ) of a weight symbol to standard terms."""
    symbol: str
    args: tuple


@dataclass(frozen=True)
class TRationalFunction:
    """A fraction of two polynomials over weight sub-terms.

    `num` and `den` are polynomials stored as sorted tuples of
    (exponent-vector, coefficient) pairs; exponent vectors index into
    `subterms`.  The empty polynomial is 0; a constant is {(0,…,0): q}.
    Evaluation is ⊥ if any sub-term is ⊥ or the denominator is 0.
    """
    subterms: tuple
    num: tuple
    den: tuple


@dataclass(frozen=True)
class TIf:
    cond: "Formula"
    then: "Term"
    other: "Term"


@dataclass(frozen=True)
class TSum:
    """sum{variables : guard} body, ranging over domain tuples."""
    variables: tuple
    guard: "Formula"
    body: "Term"


@dataclass(frozen=True)
class FRel:
    symbol: str
    args: tuple


@dataclass(frozen=True)
class FEqStd:
    """Equality between standard (element) terms."""
    left: object
    right: object


@dataclass(frozen=True)
class FCompare:
    """Weight-term comparison; op is 'eq' or 'lt'."""
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class FNot:
    sub: object


@dataclass(frozen=True)
class FAnd:
    left: object
    right: object


@dataclass(frozen=True)
class FOr:
    left: object
    right: object


@dataclass(frozen=True)
class FImplies:
    left: object
    right: object


@dataclass(frozen=True)
class FExists:
    var: str
    body: object


@dataclass(frozen=True)
class FForall:
    var: str
    body: object


Term = (TBottom, TWeight, TRationalFunction, TIf, TSum)
Formula = (FRel, FEqStd, FCompare, FNot, FAnd, FOr, FImplies, FExists, FForall)


# ---------------------------------------------------------------------------
# Rational-function polynomial helpers
# ---------------------------------------------------------------------------

def poly_from_dict(d: dict) -> tuple:
    return tuple(sorted((exp, coef) for exp, coef in d.items() if coef != 0))


def poly_to_dict(p: tuple) -> dict:
    return dict(p)


def _poly_eval(p, values) -> Fraction:
    total = Fraction(0)
    for exps, coef in p:
        term = coef
        for e, v in zip(exps, values):
            if e:
                term *= v ** e
        total += term
    return total


def _poly_mul(a: dict, b: dict) -> dict:
    # exponent tuples within one rational function all have the same length
    out: dict = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, Fraction(0)) + ca * cb
    return {e: c for e, c in out.items() if c != 0}


class _RF:
    """Mutable rational-function builder used during parsing/lowering."""

    __slots__ = ("subterms", "num", "den")

    def __init__(self, subterms, num, den):
        self.subterms = subterms  # list of Term
        self.num = num            # dict exp-tuple -> Fraction
        self.den = den

    @classmethod
    def const(cls, q: Fraction) -> "_RF":
        return cls([], {(): q} if q != 0 else {}, {(): Fraction(1)})

    @classmethod
    def atom(cls, t) -> "_RF":
        return cls([t], {(1,): Fraction(1)}, {(0,): Fraction(1)})

    def _remap(self, new_subterms) -> "_RF":
        index = {t: i for i, t in enumerate(new_subterms)}
        n = len(new_subterms)

        def remap_poly(p):
            out = {}
            for exps, coef in p.items():
                e = [0] * n
                for old_i, x in enumerate(exps):
                    if x:
                        e[index[self.subterms[old_i]]] += x
                out[tuple(e)] = out.get(tuple(e), Fraction(0)) + coef
            return {e: c for e, c in out.items() if c != 0}

        return _RF(list(new_subterms), remap_poly(self.num), remap_poly(self.den))

    @staticmethod
    def _align(a: "_RF", b: "_RF"):
        merged = list(dict.fromkeys(a.subterms + b.subterms))
        return a._remap(merged), b._remap(merged)

    def add(self, other: "_RF") -> "_RF":
        a, b = _RF._align(self, other)
        num = {}
        for e, c in _poly_mul(a.num, b.den).items():
            num[e] = num.get(e, Fraction(0)) + c
        for e, c in _poly_mul(b.num, a.den).items():
            num[e] = num.get(e, Fraction(0)) + c
        num = {e: c for e, c in num.items() if c != 0}
        return _RF(a.subterms, num, _poly_mul(a.den, b.den))

    def neg(self) -> "_RF":
        return _RF(self.subterms, {e: -c for e, c in self.num.items()}, self.den)

    def mul(self, other: "_RF") -> "_RF":
        a, b = _RF._align(self, other)
        return _RF(a.subterms, _poly_mul(a.num, b.num), _poly_mul(a.den, b.den))

    def div(self, other: "_RF") -> "_RF":
        a, b = _RF._align(self, other)
        return _RF(a.subterms, _poly_mul(a.num, b.den), _poly_mul(a.den, b.num))

    def to_term(self):
        # Unwrap a bare sub-term so `w(x,u)` parses to a TWeight, not a
        # one-monomial rational function around it.
        if (
            len(self.subterms) == 1
            and self.num == {(1,): Fraction(1)}
            and self.den == {(0,): Fraction(1)}
        ):
            return self.subterms[0]
        return TRationalFunction(
            tuple(self.subterms), poly_from_dict(self.num), poly_from_dict(self.den)
        )


def _to_rf(t) -> _RF:
    if isinstance(t, TRationalFunction) and not t.subterms:
        num, den = poly_to_dict(t.num), poly_to_dict(t.den)
        if list(den) == [()]:
            return _RF.const(num.get((), Fraction(0)) / den[()])
    return _RF.atom(t)


def t_const(q) -> TRationalFunction:
    """The constant weight term q."""
    return _RF.const(Fraction(q)).to_term()


def t_add(*terms):
    """Sum of weight terms as a single rational-function node."""
    acc = _RF.const(Fraction(0))
    for t in terms:
        acc = acc.add(_to_rf(t))
    return acc.to_term()


def t_neg(term):
    return _to_rf(term).neg().to_term()


def t_mul(*terms):
    acc = _RF.const(Fraction(1))
    for t in terms:
        acc = acc.mul(_to_rf(t))
    return acc.to_term()


def t_div(a, b):
    return _to_rf(a).div(_to_rf(b)).to_term()


def t_scale(q, term):
    """Multiply a weight term by a rational literal."""
    return _RF.const(Fraction(q)).mul(_to_rf(term)).to_term()


def t_relu(term) -> TIf:
    """The conditional idiom `if 0 < t then t else 0`."""
    return TIf(FCompare("lt", t_const(0), term), term, t_const(0))


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


_KEYWORDS = {"exists", "forall", "and", "or", "not", "implies",
             "if", "then", "else", "sum", "bot"}

_VAR_RE = re.compile(r"[a-z][a-zA-Z0-9_]*\Z")

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d+|\.\d+|\d+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[(){},:=<>+\-*/])"
    r"|(?P<bad>\S))"
)


def _tokenize(text: str):
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        if m.lastgroup == "bad":
            raise ParseError(f"unexpected character {m.group('bad')!r}", m.start("bad"))
        tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
    return tokens


class _Parser:
    def __init__(self, text: str, vocab: Vocabulary):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.vocab = vocab
        self.scopes: list[dict] = []
        self.binder_names: set = set()

    # --- token utilities ---------------------------------------------------

    def _peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return ("eof", "", self.tokens[-1][2] + 1 if self.tokens else 0)

    def _next(self):
        tok = self._peek()
        self.pos += 1
        return tok

    def _expect(self, value: str):
        kind, val, at = self._next()
        if val != value:
            raise ParseError(f"expected {value!r}, found {val!r}", at)

    def _at_op(self, *values) -> bool:
        kind, val, _ = self._peek()
        return kind == "op" and val in values

    def _at_kw(self, *words) -> bool:
        kind, val, _ = self._peek()
        return kind == "ident" and val in words

    # --- scoping -----------------------------------------------------------

    def _lookup_var(self, name: str):
        for scope in reversed(self.scopes):
            if name in scope:
                return scope[name]
        return None

    def _bind(self, name: str, at: int) -> str:
        if name in _KEYWORDS:
            raise ParseError(f"keyword {name!r} cannot be a variable", at)
        if not _VAR_RE.match(name):
            raise ParseError(f"invalid variable name {name!r}", at)
        if name in self.vocab.all_names():
            raise ParseError(f"variable {name!r} shadows a vocabulary symbol", at)
        fresh = name
        k = 2
        while fresh in self.binder_names:
            fresh = f"{name}__{k}"
            k += 1
        self.binder_names.add(fresh)
        self.scopes[-1][name] = fresh
        return fresh

    # --- formulas ----------------------------------------------------------

    def parse_formula(self):
        if self._at_kw("exists", "forall"):
            _, word, _ = self._next()
            kind, name, at = self._next()
            if kind != "ident":
                raise ParseError("expected a variable after quantifier", at)
            self.scopes.append({})
            fresh = self._bind(name, at)
            body = self.parse_formula()
            self.scopes.pop()
            return FExists(fresh, body) if word == "exists" else FForall(fresh, body)
        return self._parse_implies()

    def _parse_implies(self):
        left = self._parse_or()
        if self._at_kw("implies"):
            self._next()
            return FImplies(left, self.parse_formula())
        return left

    def _parse_or(self):
        left = self._parse_and()
        while self._at_kw("or"):
            self._next()
            left = FOr(left, self._parse_and())
        return left

    def _parse_and(self):
        left = self._parse_atomf()
        while self._at_kw("and"):
            self._next()
            left = FAnd(left, self._parse_atomf())
        return left

    def _parse_atomf(self):
        if self._at_kw("not"):
            self._next()
            return FNot(self._parse_atomf())
        if self._at_kw("exists", "forall"):
            return self.parse_formula()
        if self._at_op("("):
            # Could be a parenthesized formula or a parenthesized weight term
            # beginning a comparison; try the formula reading first.
            save, depth = self.pos, len(self.scopes)
            try:
                self._next()
                inner = self.parse_formula()
                self._expect(")")
                if self._at_op("=", "<", ">", "+", "-", "*", "/"):
                    raise ParseError("parenthesized formula used as a term", self._peek()[2])
                return inner
            except ParseError:
                self.pos = save
                del self.scopes[depth:]
        return self._parse_comparison()

    def _parse_comparison(self):
        at = self._peek()[2]
        left = self._parse_expr()
        if isinstance(left, Formula):
            return left
        if not self._at_op("=", "<", ">"):
            raise ParseError("expected a comparison operator", self._peek()[2])
        _, op, opat = self._next()
        right = self._parse_expr()
        if isinstance(right, Formula):
            raise ParseError("formula on the right of a comparison", opat)
        left_std = isinstance(left, (SVar, SConst))
        right_std = isinstance(right, (SVar, SConst))
        if op == "=":
            if left_std and right_std:
                return FEqStd(left, right)
            if left_std != right_std:
                raise ParseError("cannot equate an element term with a weight term", opat)
            return FCompare("eq", left, right)
        if left_std or right_std:
            raise ParseError("order comparison requires weight terms on both sides", opat)
        if op == "<":
            return FCompare("lt", left, right)
        return FCompare("lt", right, left)

    # --- weight terms / standard terms --------------------------------------
    # _parse_expr returns an SVar/SConst (standard term), a weight Term, or a
    # Formula (relation application reached in operand position).

    def _parse_expr(self):
        return self._parse_addsub()

    def _as_rf(self, operand, at: int) -> _RF:
        if isinstance(operand, (SVar, SConst)):
            raise ParseError("element term used in arithmetic", at)
        if isinstance(operand, Formula):
            raise ParseError("formula used in arithmetic", at)
        if isinstance(operand, TRationalFunction) and not operand.subterms:
            den = poly_to_dict(operand.den)
            if list(den) == [()]:
                num = poly_to_dict(operand.num)
                q = num.get((), Fraction(0)) / den[()]
                return _RF.const(q)
        return _RF.atom(operand)

    def _parse_addsub(self):
        at = self._peek()[2]
        left = self._parse_muldiv()
        if not self._at_op("+", "-"):
            return left
        acc = self._as_rf(left, at)
        while self._at_op("+", "-"):
            _, op, opat = self._next()
            right = self._as_rf(self._parse_muldiv(), opat)
            acc = acc.add(right if op == "+" else right.neg())
        return acc.to_term()

    def _parse_muldiv(self):
        at = self._peek()[2]
        left = self._parse_unary()
        if not self._at_op("*", "/"):
            return left
        acc = self._as_rf(left, at)
        while self._at_op("*", "/"):
            _, op, opat = self._next()
            right = self._as_rf(self._parse_unary(), opat)
            acc = acc.mul(right) if op == "*" else acc.div(right)
        return acc.to_term()

    def _parse_unary(self):
        if self._at_op("-"):
            _, _, at = self._next()
            return self._as_rf(self._parse_unary(), at).neg().to_term()
        return self._parse_primary()

    def _parse_primary(self):
        kind, val, at = self._peek()
        if kind == "num":
            self._next()
            return _RF.const(Fraction(val)).to_term()
        if kind == "op" and val == "(":
            self._next()
            inner = self._parse_expr()
            self._expect(")")
            return inner
        if kind != "ident":
            raise ParseError(f"unexpected token {val!r}", at)

        if val == "bot":
            self._next()
            return TBottom()
        if val == "if":
            self._next()
            cond = self.parse_formula()
            self._expect("then")
            then = self._term_operand()
            self._expect("else")
            other = self._term_operand()
            return TIf(cond, then, other)
        if val == "sum":
            self._next()
            self._expect("{")
            self.scopes.append({})
            variables = []
            while True:
                k, name, vat = self._next()
                if k != "ident":
                    raise ParseError("expected a summation variable", vat)
                variables.append(self._bind(name, vat))
                if self._at_op(","):
                    self._next()
                    continue
                break
            self._expect(":")
            guard = self.parse_formula()
            self._expect("}")
            body = self._term_operand(tight=True)
            self.scopes.pop()
            return TSum(tuple(variables), guard, body)
        if val in _KEYWORDS:
            raise ParseError(f"unexpected keyword {val!r}", at)

        self._next()
        bound = self._lookup_var(val)
        if bound is not None:
            return SVar(bound)
        if val in self.vocab.constants:
            return SConst(val)
        if val in self.vocab.relations:
            args = self._parse_std_args(val, self.vocab.relations[val], at)
            return FRel(val, args)
        if val in self.vocab.weights:
            args = self._parse_std_args(val, self.vocab.weights[val], at)
            return TWeight(val, args)
        if not _VAR_RE.match(val):
            raise ParseError(f"unknown symbol {val!r}", at)
        return SVar(val)

    def _parse_std_args(self, symbol: str, arity: int, at: int) -> tuple:
        if not self._at_op("("):
            if arity == 0:
                return ()
            raise ParseError(f"symbol {symbol!r} expects {arity} arguments", at)
        self._expect("(")
        args = []
        if not self._at_op(")"):
            while True:
                argat = self._peek()[2]
                arg = self._parse_expr()
                if not isinstance(arg, (SVar, SConst)):
                    raise ParseError(
                        f"argument of {symbol!r} must be a variable or constant", argat
                    )
                args.append(arg)
                if self._at_op(","):
                    self._next()
                    continue
                break
        self._expect(")")
        if len(args) != arity:
            raise ParseError(
                f"symbol {symbol!r} expects {arity} arguments, got {len(args)}", at
            )
        return tuple(args)

    def _term_operand(self, tight: bool = False):
        at = self._peek()[2]
        operand = self._parse_muldiv() if tight else self._parse_expr()
        if isinstance(operand, (SVar, SConst)):
            raise ParseError("expected a weight term, found an element term", at)
        if isinstance(operand, Formula):
            raise ParseError("expected a weight term, found a formula", at)
        return operand


def parse_fosum(text: str, vocab: Vocabulary):
    """Parse `text` as a formula if possible, otherwise as a weight term.

    Variables are renamed apart; symbol arities are checked against `vocab`.
    Raises ParseError (with position) on malformed input.
    """
    p = _Parser(text, vocab)
    save = p.pos
    try:
        f = p.parse_formula()
        if p.pos != len(p.tokens):
            raise ParseError("trailing input after formula", p._peek()[2])
        return f
    except ParseError as formula_err:
        p.pos = save
        p.scopes = []
        try:
            t = p._term_operand()
            if p.pos != len(p.tokens):
                raise ParseError("trailing input after term", p._peek()[2])
            return t
        except ParseError as term_err:
            raise formula_err if formula_err.pos >= term_err.pos else term_err


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _resolve_std(s: WeightedStructure, arg, v: dict):
    if isinstance(arg, SVar):
        return v[arg.name]
    return s.const(arg.name)


def eval_weight_term(s: WeightedStructure, t, v: dict) -> LiftedValue:
    """Evaluate a weight term to a lifted rational.

    Total: all partiality (division by zero, ⊥ weights) flows through ⊥.
    Summation enumerates domain tuples in domain order; an empty sum is 0.
    """
    if isinstance(t, TBottom):
        return BOT
    if isinstance(t, TWeight):
        tup = tuple(_resolve_std(s, a, v) for a in t.args)
        return s.weight(t.symbol, tup)
    if isinstance(t, TRationalFunction):
        values = []
        for sub in t.subterms:
            val = eval_weight_term(s, sub, v)
            if val is BOT:
                return BOT
            values.append(val)
        den = _poly_eval(t.den, values)
        if den == 0:
            return BOT
        return _poly_eval(t.num, values) / den
    if isinstance(t, TIf):
        if eval_formula(s, t.cond, v):
            return eval_weight_term(s, t.then, v)
        return eval_weight_term(s, t.other, v)
    if isinstance(t, TSum):
        total: LiftedValue = Fraction(0)
        vv = dict(v)
        for tup in itertools.product(s.domain, repeat=len(t.variables)):
            for name, e in zip(t.variables, tup):
                vv[name] = e
            if eval_formula(s, t.guard, vv):
                total = ladd(total, eval_weight_term(s, t.body, vv))
                if total is BOT:
                    return BOT
        return total
    raise TypeError(f"not a weight term: {t!r}")


def eval_formula(s: WeightedStructure, f, v: dict) -> bool:
    """Evaluate a formula to a classical boolean (quantifiers over the domain)."""
    if isinstance(f, FRel):
        tup = tuple(_resolve_std(s, a, v) for a in f.args)
        return s.rel(f.symbol, tup)
    if isinstance(f, FEqStd):
        return _resolve_std(s, f.left, v) == _resolve_std(s, f.right, v)
    if isinstance(f, FCompare):
        cmp = lifted_compare(
            eval_weight_term(s, f.left, v), eval_weight_term(s, f.right, v)
        )
        return cmp == ("eq" if f.op == "eq" else "lt")
    if isinstance(f, FNot):
        return not eval_formula(s, f.sub, v)
    if isinstance(f, FAnd):
        return eval_formula(s, f.left, v) and eval_formula(s, f.right, v)
    if isinstance(f, FOr):
        return eval_formula(s, f.left, v) or eval_formula(s, f.right, v)
    if isinstance(f, FImplies):
        return (not eval_formula(s, f.left, v)) or eval_formula(s, f.right, v)
    if isinstance(f, FExists):
        vv = dict(v)
        for e in s.domain:
            vv[f.var] = e
            if eval_formula(s, f.body, vv):
                return True
        return False
    if isinstance(f, FForall):
        vv = dict(v)
        for e in s.domain:
            vv[f.var] = e
            if not eval_formula(s, f.body, vv):
                return False
        return True
    raise TypeError(f"not a formula: {f!r}")


def free_variables(node) -> set:
    """Free variable names of a term or formula."""
    if isinstance(node, SVar):
        return {node.name}
    if isinstance(node, (SConst, TBottom)):
        return set()
    if isinstance(node, (TWeight, FRel)):
        return set().union(*(free_variables(a) for a in node.args)) if node.args else set()
    if isinstance(node, TRationalFunction):
        out = set()
        for sub in node.subterms:
            out |= free_variables(sub)
        return out
    if isinstance(node, TIf):
        return free_variables(node.cond) | free_variables(node.then) | free_variables(node.other)
    if isinstance(node, TSum):
        return (free_variables(node.guard) | free_variables(node.body)) - set(node.variables)
    if isinstance(node, (FEqStd,)):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, FCompare):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, FNot):
        return free_variables(node.sub)
    if isinstance(node, (FAnd, FOr, FImplies)):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, (FExists, FForall)):
        return free_variables(node.body) - {node.var}
    raise TypeError(f"not a term or formula: {node!r}")
