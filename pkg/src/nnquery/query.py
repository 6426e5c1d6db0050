"""Linear first-order queries over networks, with one function symbol.

The query language is first-order logic over the reals with rational
linear arithmetic, comparisons, boolean connectives, quantifiers, and a
function symbol ``F`` denoting the network's input→output map.  Syntactic
sugar (``abs``, ``min``/``max``, distance helpers, inline ``F`` inside
expressions) is compiled away by normalization.

Evaluation is exact and geometric.  A query is normalized into an *ordered
prenex* form — free variables first, every f-atom of the shape
F(x_{g1},…,x_{gm}) = x_j with g1 < … < gm < j, every other atom a strict
linear constraint.  The network's piecewise-linear map contributes an
arrangement: every breakplane and every polytope component is instantiated
over all index combinations of the query variables, and the constraint
planes join in.  On the resulting cell decomposition every cell is
homogeneous for every atom, so the matrix selects a set of full-level
cells; quantifiers are then eliminated from the inside out — ∃ projects
cells to their bases, ∀ runs the complement–project–complement dual.  A
closed query ends at the origin cell (true) or the empty set (false); an
open query returns the satisfying cells at the free level with one exact
sample point each.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from fractions import Fraction

from .core import rational
from .geometry import Arrangement, build_cd, canonicalize, make_arrangement
from .linprog import affine_eval
from .network import Network
from .pwl import PwlFunction, pwl_from_network

__all__ = [
    "QueryError",
    "parse_query",
    "normalize_ordered_prenex",
    "OrderedPrenexQuery",
    "CellSet",
    "build_query_arrangement",
    "select_cells_qfree",
    "project_exists",
    "complement",
    "evaluate_query",
    "QueryResult",
]


class QueryError(ValueError):
    """Raised for malformed queries: syntax, arity, or nonlinearity."""


# ---------------------------------------------------------------------------
# Abstract syntax
# ---------------------------------------------------------------------------
# Expressions.  XLin is an eagerly-folded linear combination; the remaining
# nodes exist only until normalization removes them.


@dataclass(frozen=True)
class XLin:
    const: Fraction
    coeffs: tuple  # sorted tuple of (variable name, nonzero Fraction)


@dataclass(frozen=True)
class XAdd:
    a: object
    b: object


@dataclass(frozen=True)
class XNeg:
    a: object


@dataclass(frozen=True)
class XMul:
    a: object
    b: object


@dataclass(frozen=True)
class XDiv:
    a: object
    b: object


@dataclass(frozen=True)
class XAbs:
    a: object


@dataclass(frozen=True)
class XMin:
    a: object
    b: object


@dataclass(frozen=True)
class XMax:
    a: object
    b: object


@dataclass(frozen=True)
class XF:
    args: tuple


# Formulas.


@dataclass(frozen=True)
class PCmp:
    rel: str  # '<' '<=' '=' '>=' '>'
    lhs: object
    rhs: object


@dataclass(frozen=True)
class PFAtom:
    args: tuple  # variable names
    result: str


@dataclass(frozen=True)
class PBool:
    value: bool


@dataclass(frozen=True)
class PNot:
    body: object


@dataclass(frozen=True)
class PAnd:
    a: object
    b: object


@dataclass(frozen=True)
class POr:
    a: object
    b: object


@dataclass(frozen=True)
class PImplies:
    a: object
    b: object


@dataclass(frozen=True)
class PExists:
    var: str
    body: object


@dataclass(frozen=True)
class PForall:
    var: str
    body: object


def xlin_const(v) -> XLin:
    return XLin(rational(v), ())


def xlin_var(name: str) -> XLin:
    return XLin(Fraction(0), ((name, Fraction(1)),))


def _xlin_merge(a: XLin, b: XLin, sign: int) -> XLin:
    coeffs = dict(a.coeffs)
    for name, c in b.coeffs:
        coeffs[name] = coeffs.get(name, Fraction(0)) + sign * c
    items = tuple(sorted((n, c) for n, c in coeffs.items() if c != 0))
    return XLin(a.const + sign * b.const, items)


def _xlin_scale(a: XLin, q: Fraction) -> XLin:
    if q == 0:
        return XLin(Fraction(0), ())
    return XLin(a.const * q, tuple((n, c * q) for n, c in a.coeffs))


def _e_add(a, b):
    if isinstance(a, XLin) and isinstance(b, XLin):
        return _xlin_merge(a, b, 1)
    return XAdd(a, b)


def _e_sub(a, b):
    return _e_add(a, _e_neg(b))


def _e_neg(a):
    if isinstance(a, XLin):
        return _xlin_scale(a, Fraction(-1))
    return XNeg(a)


def _e_mul(a, b):
    if isinstance(a, XLin) and isinstance(b, XLin):
        if a.coeffs and b.coeffs:
            raise QueryError("non-linear arithmetic: variable times variable")
        if not a.coeffs:
            return _xlin_scale(b, a.const)
        return _xlin_scale(a, b.const)
    return XMul(a, b)


def _e_div(a, b):
    if isinstance(b, XLin) and not b.coeffs:
        if b.const == 0:
            raise QueryError("division by zero in query")
        if isinstance(a, XLin):
            return _xlin_scale(a, 1 / b.const)
        return XMul(XLin(1 / b.const, ()), a)
    raise QueryError("non-linear arithmetic: division by a variable expression")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_KEYWORDS = {
    "exists", "forall", "and", "or", "not",
    "F", "abs", "min", "max", "dist_linf", "dist_l1",
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>->|<=|>=|[<>=+\-*/(),;.])"
    r"|(?P<bad>\S))"
)


def _tokenize(text: str):
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        if m.group("bad"):
            raise QueryError(f"unexpected character {m.group('bad')!r} at {m.start('bad')}")
        if m.group("num"):
            out.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident"):
            out.append(("ident", m.group("ident"), m.start("ident")))
        elif m.group("op"):
            out.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _QueryParser:
    def __init__(self, text: str, m: int):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.m = m

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, val, at = self.take()
        if kind != "op" or val != op:
            raise QueryError(f"expected {op!r} at position {at}, found {val or 'end of input'!r}")

    def fail(self, message):
        _kind, val, at = self.peek()
        raise QueryError(f"{message} at position {at} (near {val or 'end of input'!r})")

    # formulas --------------------------------------------------------------

    def parse_formula(self):
        return self.parse_implies()

    def parse_implies(self):
        left = self.parse_or()
        kind, val, _ = self.peek()
        if kind == "op" and val == "->":
            self.take()
            return PImplies(left, self.parse_implies())
        return left

    def parse_or(self):
        left = self.parse_and()
        while self.peek()[:2] == ("ident", "or"):
            self.take()
            left = POr(left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_unary()
        while self.peek()[:2] == ("ident", "and"):
            self.take()
            left = PAnd(left, self.parse_unary())
        return left

    def parse_unary(self):
        kind, val, _ = self.peek()
        if kind == "ident" and val == "not":
            self.take()
            return PNot(self.parse_unary())
        if kind == "ident" and val in ("exists", "forall"):
            self.take()
            vkind, vname, vat = self.take()
            if vkind != "ident" or vname in _KEYWORDS:
                raise QueryError(f"expected a variable name after {val} at position {vat}")
            if vname.startswith("__"):
                raise QueryError("variable names starting with '__' are reserved")
            if self.peek()[:2] == ("op", "."):
                self.take()
            body = self.parse_formula()  # quantifier scope extends maximally
            return (PExists if val == "exists" else PForall)(vname, body)
        if kind == "op" and val == "(":
            # try a parenthesized formula; fall back to a comparison
            save = self.pos
            self.take()
            try:
                inner = self.parse_formula()
                self.expect_op(")")
                return inner
            except QueryError:
                self.pos = save
        return self.parse_comparison()

    def parse_comparison(self):
        lhs = self.parse_expr()
        kind, val, _ = self.peek()
        if kind == "op" and val in ("<", "<=", "=", ">=", ">"):
            self.take()
            rhs = self.parse_expr()
            return PCmp(val, lhs, rhs)
        self.fail("expected a comparison operator")

    # expressions -----------------------------------------------------------

    def parse_expr(self):
        left = self.parse_term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in ("+", "-"):
                self.take()
                right = self.parse_term()
                left = _e_add(left, right) if val == "+" else _e_sub(left, right)
            else:
                return left

    def parse_term(self):
        left = self.parse_factor()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in ("*", "/"):
                self.take()
                right = self.parse_factor()
                left = _e_mul(left, right) if val == "*" else _e_div(left, right)
            else:
                return left

    def parse_factor(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return _e_neg(self.parse_factor())
        return self.parse_primary()

    def _parse_args(self, close=")"):
        args = [self.parse_expr()]
        while self.peek()[:2] == ("op", ","):
            self.take()
            args.append(self.parse_expr())
        return args

    def parse_primary(self):
        kind, val, at = self.take()
        if kind == "num":
            return xlin_const(val)
        if kind == "op" and val == "(":
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if kind == "ident":
            if val == "F":
                self.expect_op("(")
                args = self._parse_args()
                self.expect_op(")")
                if len(args) != self.m:
                    raise QueryError(
                        f"F takes {self.m} argument(s), got {len(args)} at position {at}"
                    )
                return XF(tuple(args))
            if val == "abs":
                self.expect_op("(")
                e = self.parse_expr()
                self.expect_op(")")
                return XAbs(e)
            if val in ("min", "max"):
                self.expect_op("(")
                a = self.parse_expr()
                self.expect_op(",")
                b = self.parse_expr()
                self.expect_op(")")
                return (XMin if val == "min" else XMax)(a, b)
            if val in ("dist_linf", "dist_l1"):
                self.expect_op("(")
                left = self._parse_args()
                self.expect_op(";")
                right = self._parse_args()
                self.expect_op(")")
                if len(left) != len(right) or not left:
                    raise QueryError(f"{val} needs two equal-length coordinate lists")
                diffs = [XAbs(_e_sub(a, b)) for a, b in zip(left, right)]
                if val == "dist_l1":
                    out = diffs[0]
                    for e in diffs[1:]:
                        out = _e_add(out, e)
                    return out
                out = diffs[0]
                for e in diffs[1:]:
                    out = XMax(out, e)
                return out
            if val in _KEYWORDS:
                raise QueryError(f"keyword {val!r} cannot be used here (position {at})")
            if val.startswith("__"):
                raise QueryError("variable names starting with '__' are reserved")
            return xlin_var(val)
        raise QueryError(f"expected an expression at position {at}, found {val or 'end of input'!r}")


def parse_query(text: str, m: int):
    """Parse a query; ``m`` is the network input count (checked against F)."""
    parser = _QueryParser(text, m)
    ast = parser.parse_formula()
    if parser.peek()[0] != "eof":
        parser.fail("unexpected trailing input")
    return ast


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


class _Gensym:
    def __init__(self):
        self.n = 0

    def fresh(self, prefix: str) -> str:
        self.n += 1
        return f"__{prefix}{self.n}"


def _walk_expr(e, fn):
    """Rebuild an expression bottom-up through fn."""
    if isinstance(e, XLin):
        return fn(e)
    if isinstance(e, (XAdd, XMul, XDiv, XMin, XMax)):
        return fn(type(e)(_walk_expr(e.a, fn), _walk_expr(e.b, fn)))
    if isinstance(e, (XNeg, XAbs)):
        return fn(type(e)(_walk_expr(e.a, fn)))
    if isinstance(e, XF):
        return fn(XF(tuple(_walk_expr(a, fn) for a in e.args)))
    raise TypeError(f"not an expression: {e!r}")


def _rename_and_substitute(node, env, params, free_order, gensym):
    """α-rename bound variables apart, substitute parameters, and record
    free variables in first-appearance order."""

    def on_expr(e):
        def leaf(x):
            if not isinstance(x, XLin):
                return x
            const = x.const
            coeffs = {}
            for name, c in x.coeffs:
                if name in env:
                    coeffs[env[name]] = coeffs.get(env[name], Fraction(0)) + c
                elif name in params:
                    const += c * params[name]
                else:
                    if name not in free_order:
                        free_order.append(name)
                    coeffs[name] = coeffs.get(name, Fraction(0)) + c
            return XLin(const, tuple(sorted(coeffs.items())))

        return _walk_expr(e, leaf)

    if isinstance(node, PCmp):
        return PCmp(node.rel, on_expr(node.lhs), on_expr(node.rhs))
    if isinstance(node, PNot):
        return PNot(_rename_and_substitute(node.body, env, params, free_order, gensym))
    if isinstance(node, (PAnd, POr, PImplies)):
        return type(node)(
            _rename_and_substitute(node.a, env, params, free_order, gensym),
            _rename_and_substitute(node.b, env, params, free_order, gensym),
        )
    if isinstance(node, (PExists, PForall)):
        if node.var in params:
            raise QueryError(f"quantified variable {node.var!r} shadows a parameter")
        fresh = gensym.fresh("b")
        inner = dict(env)
        inner[node.var] = fresh
        return type(node)(
            fresh, _rename_and_substitute(node.body, inner, params, free_order, gensym)
        )
    raise TypeError(f"not a formula: {node!r}")


def _find_sugar(e):
    """Innermost sugar node (abs/min/max) whose operands are sugar-free."""
    if isinstance(e, XLin):
        return None
    children = (
        e.args if isinstance(e, XF) else (e.a,) if isinstance(e, (XNeg, XAbs)) else (e.a, e.b)
    )
    for c in children:
        found = _find_sugar(c)
        if found is not None:
            return found
    if isinstance(e, (XAbs, XMin, XMax)):
        return e
    return None


def _replace_expr(e, target, repl):
    """Replace one node (by identity) inside an expression."""
    if e is target:
        return repl
    if isinstance(e, XLin):
        return e
    if isinstance(e, (XNeg, XAbs)):
        return type(e)(_replace_expr(e.a, target, repl))
    if isinstance(e, XF):
        return XF(tuple(_replace_expr(a, target, repl) for a in e.args))
    return type(e)(
        _replace_expr(e.a, target, repl), _replace_expr(e.b, target, repl)
    )


def _desugar_atom(atom: PCmp):
    """One case-split step for the innermost abs/min/max in the atom, or
    None when the atom is sugar-free."""
    for side in ("lhs", "rhs"):
        s = _find_sugar(getattr(atom, side))
        if s is None:
            continue

        def with_slot(repl):
            if side == "lhs":
                return PCmp(atom.rel, _replace_expr(atom.lhs, s, repl), atom.rhs)
            return PCmp(atom.rel, atom.lhs, _replace_expr(atom.rhs, s, repl))

        zero = xlin_const(0)
        if isinstance(s, XAbs):
            return POr(
                PAnd(PCmp(">=", s.a, zero), with_slot(s.a)),
                PAnd(PCmp("<", s.a, zero), with_slot(_e_neg(s.a))),
            )
        if isinstance(s, XMin):
            return POr(
                PAnd(PCmp("<=", s.a, s.b), with_slot(s.a)),
                PAnd(PCmp(">", s.a, s.b), with_slot(s.b)),
            )
        # XMax
        return POr(
            PAnd(PCmp(">=", s.a, s.b), with_slot(s.a)),
            PAnd(PCmp("<", s.a, s.b), with_slot(s.b)),
        )
    return None


def _desugar(node):
    if isinstance(node, PCmp):
        step = _desugar_atom(node)
        return node if step is None else _desugar(step)
    if isinstance(node, PNot):
        return PNot(_desugar(node.body))
    if isinstance(node, (PAnd, POr, PImplies)):
        return type(node)(_desugar(node.a), _desugar(node.b))
    if isinstance(node, (PExists, PForall)):
        return type(node)(node.var, _desugar(node.body))
    return node


def _is_plain_var(e):
    return (
        isinstance(e, XLin)
        and e.const == 0
        and len(e.coeffs) == 1
        and e.coeffs[0][1] == 1
    )


def _convert_candidates(node):
    """Comparisons of the exact shape F(x⃗) = y with pairwise-distinct plain
    variables become structural f-atoms untouched by extraction."""
    if isinstance(node, PCmp):
        if node.rel == "=":
            for fe, other in ((node.lhs, node.rhs), (node.rhs, node.lhs)):
                if isinstance(fe, XF) and _is_plain_var(other):
                    if all(_is_plain_var(a) for a in fe.args):
                        names = [a.coeffs[0][0] for a in fe.args]
                        result = other.coeffs[0][0]
                        if len(set(names)) == len(names) and result not in names:
                            return PFAtom(tuple(names), result)
        return node
    if isinstance(node, PNot):
        return PNot(_convert_candidates(node.body))
    if isinstance(node, (PAnd, POr, PImplies)):
        return type(node)(_convert_candidates(node.a), _convert_candidates(node.b))
    if isinstance(node, (PExists, PForall)):
        return type(node)(node.var, _convert_candidates(node.body))
    return node


def _expr_vars(e, out: set):
    if isinstance(e, XLin):
        for name, _c in e.coeffs:
            out.add(name)
    elif isinstance(e, (XNeg, XAbs)):
        _expr_vars(e.a, out)
    elif isinstance(e, XF):
        for a in e.args:
            _expr_vars(a, out)
    else:
        _expr_vars(e.a, out)
        _expr_vars(e.b, out)
    return out


def _extractable_occurrence(node, trigger):
    """First F occurrence to pull at this anchor: an XF node with XF-free
    arguments that either meets the trigger set itself or sits inside a
    triggered occurrence.  trigger=None matches everything."""

    def from_expr(e, forced):
        if isinstance(e, XLin):
            return None
        if isinstance(e, XF):
            hit = forced or trigger is None or bool(_expr_vars(e, set()) & trigger)
            for a in e.args:
                found = from_expr(a, hit)
                if found is not None:
                    return found
            if hit and not any(_has_f(a) for a in e.args):
                return e
            return None
        if isinstance(e, (XNeg, XAbs)):
            return from_expr(e.a, forced)
        for child in (e.a, e.b):
            found = from_expr(child, forced)
            if found is not None:
                return found
        return None

    if isinstance(node, PCmp):
        found = from_expr(node.lhs, False)
        if found is not None:
            return found
        return from_expr(node.rhs, False)
    if isinstance(node, PNot):
        return _extractable_occurrence(node.body, trigger)
    if isinstance(node, (PAnd, POr)):
        found = _extractable_occurrence(node.a, trigger)
        if found is not None:
            return found
        return _extractable_occurrence(node.b, trigger)
    if isinstance(node, (PExists, PForall)):
        return _extractable_occurrence(node.body, trigger)
    return None


def _has_f(e):
    if isinstance(e, XLin):
        return False
    if isinstance(e, XF):
        return True
    if isinstance(e, (XNeg, XAbs)):
        return _has_f(e.a)
    return _has_f(e.a) or _has_f(e.b)


def _subst_occurrence(node, occ: XF, var_name: str):
    """Replace every occurrence structurally equal to occ by the variable."""

    def on_expr(e):
        def fn(x):
            if isinstance(x, XF) and x == occ:
                return xlin_var(var_name)
            return x

        return _walk_expr(e, fn)

    if isinstance(node, PCmp):
        return PCmp(node.rel, on_expr(node.lhs), on_expr(node.rhs))
    if isinstance(node, PNot):
        return PNot(_subst_occurrence(node.body, occ, var_name))
    if isinstance(node, (PAnd, POr)):
        return type(node)(
            _subst_occurrence(node.a, occ, var_name),
            _subst_occurrence(node.b, occ, var_name),
        )
    if isinstance(node, (PExists, PForall)):
        return type(node)(node.var, _subst_occurrence(node.body, occ, var_name))
    return node


def _pull_occurrences(node, trigger, gensym):
    """Extract every F occurrence anchored at this scope: identical argument
    tuples share one fresh result variable; plain-variable arguments are
    used directly, other arguments get a fresh copy with a defining
    equality.  The fresh variables are existentially quantified around the
    rewritten subformula; since the defining conjuncts pin them uniquely,
    the wrap is an equivalence in any boolean context.
    """
    trigger_set = set(trigger) if trigger is not None else None
    names = []
    defs = []
    body = node
    while True:
        occ = _extractable_occurrence(body, trigger_set)
        if occ is None:
            break
        arg_names = []
        used = set()
        for a in occ.args:
            if _is_plain_var(a) and a.coeffs[0][0] not in used:
                arg_names.append(a.coeffs[0][0])
                used.add(a.coeffs[0][0])
            else:
                z = gensym.fresh("z")
                names.append(z)
                defs.append(PCmp("=", xlin_var(z), a))
                arg_names.append(z)
                used.add(z)
                if trigger_set is not None:
                    trigger_set.add(z)
        r = gensym.fresh("r")
        names.append(r)
        defs.append(PFAtom(tuple(arg_names), r))
        if trigger_set is not None:
            trigger_set.add(r)
        body = _subst_occurrence(body, occ, r)
    if not defs:
        return node
    for d in reversed(defs):
        body = PAnd(d, body)
    for name in reversed(names):
        body = PExists(name, body)
    return body


def _extract_f_atoms(node, gensym):
    """Pull F occurrences into well-ordered f-atoms, bottom-up: each
    distinct argument tuple is extracted at the innermost quantifier
    binding one of its variables (or at the root when none is quantified),
    sharing a single fresh result across all its occurrences."""
    if isinstance(node, (PExists, PForall)):
        body = _extract_f_atoms(node.body, gensym)
        return type(node)(node.var, _pull_occurrences(body, {node.var}, gensym))
    if isinstance(node, PNot):
        return PNot(_extract_f_atoms(node.body, gensym))
    if isinstance(node, (PAnd, POr, PImplies)):
        return type(node)(
            _extract_f_atoms(node.a, gensym), _extract_f_atoms(node.b, gensym)
        )
    return node


def _strip_implies(node):
    if isinstance(node, PImplies):
        return POr(PNot(_strip_implies(node.a)), _strip_implies(node.b))
    if isinstance(node, PNot):
        return PNot(_strip_implies(node.body))
    if isinstance(node, (PAnd, POr)):
        return type(node)(_strip_implies(node.a), _strip_implies(node.b))
    if isinstance(node, (PExists, PForall)):
        return type(node)(node.var, _strip_implies(node.body))
    return node


def _prenex(node):
    """Pull quantifiers to a prefix (bound names are already distinct)."""
    if isinstance(node, PExists):
        prefix, matrix = _prenex(node.body)
        return [("exists", node.var)] + prefix, matrix
    if isinstance(node, PForall):
        prefix, matrix = _prenex(node.body)
        return [("forall", node.var)] + prefix, matrix
    if isinstance(node, PNot):
        prefix, matrix = _prenex(node.body)
        flipped = [
            ("forall" if q == "exists" else "exists", v) for q, v in prefix
        ]
        return flipped, PNot(matrix)
    if isinstance(node, (PAnd, POr)):
        pa, ma = _prenex(node.a)
        pb, mb = _prenex(node.b)
        return pa + pb, type(node)(ma, mb)
    return [], node


def _matrix_fatoms(node, out):
    if isinstance(node, PFAtom):
        out.append(node)
    elif isinstance(node, PNot):
        _matrix_fatoms(node.body, out)
    elif isinstance(node, (PAnd, POr)):
        _matrix_fatoms(node.a, out)
        _matrix_fatoms(node.b, out)
    return out


def _replace_atoms(node, mapping):
    if id(node) in mapping:
        return mapping[id(node)]
    if isinstance(node, PNot):
        return PNot(_replace_atoms(node.body, mapping))
    if isinstance(node, (PAnd, POr)):
        return type(node)(
            _replace_atoms(node.a, mapping), _replace_atoms(node.b, mapping)
        )
    return node


# Ordered matrix nodes.


@dataclass(frozen=True)
class MBool:
    value: bool


@dataclass(frozen=True)
class MAtom:
    coeffs: tuple  # (a_0..a_d), strict: a_0 + Σ a_i x_i > 0


@dataclass(frozen=True)
class MFAtom:
    args: tuple  # ascending 1-based variable indices g_1 < … < g_m
    result: int  # index j > g_m


@dataclass(frozen=True)
class MNot:
    body: object


@dataclass(frozen=True)
class MAnd:
    items: tuple


@dataclass(frozen=True)
class MOr:
    items: tuple


@dataclass(frozen=True)
class OrderedPrenexQuery:
    """Normalized query: free variables first, then the quantifier prefix;
    matrix over strict linear atoms and well-ordered f-atoms."""

    free_vars: tuple  # user names of x_1..x_k
    var_names: tuple  # names of x_1..x_d (internal names after x_k)
    prefix: tuple  # 'exists'/'forall' for x_{k+1}..x_d
    matrix: object
    f_arity: int | None


def _flatten(e):
    """Expression → (constant, {name: coeff}); rejects non-linearity."""
    if isinstance(e, XLin):
        return e.const, dict(e.coeffs)
    if isinstance(e, XAdd):
        ca, da = _flatten(e.a)
        cb, db = _flatten(e.b)
        for n, c in db.items():
            da[n] = da.get(n, Fraction(0)) + c
        return ca + cb, da
    if isinstance(e, XNeg):
        c, d = _flatten(e.a)
        return -c, {n: -v for n, v in d.items()}
    if isinstance(e, XMul):
        ca, da = _flatten(e.a)
        cb, db = _flatten(e.b)
        if da and db:
            raise QueryError("non-linear arithmetic: variable times variable")
        if not da:
            return ca * cb, {n: ca * v for n, v in db.items()}
        return ca * cb, {n: cb * v for n, v in da.items()}
    if isinstance(e, XDiv):
        cb, db = _flatten(e.b)
        if db:
            raise QueryError("non-linear arithmetic: division by a variable expression")
        if cb == 0:
            raise QueryError("division by zero in query")
        ca, da = _flatten(e.a)
        return ca / cb, {n: v / cb for n, v in da.items()}
    raise AssertionError(f"unexpected node after normalization: {e!r}")


def _lower_matrix(node, pos):
    d = len(pos)

    def vector(const, coeffs):
        vec = [const] + [Fraction(0)] * d
        for name, c in coeffs.items():
            vec[pos[name]] = c
        return tuple(vec)

    def strict(vec):
        if all(a == 0 for a in vec[1:]):
            return MBool(vec[0] > 0)
        return MAtom(vec)

    if isinstance(node, PCmp):
        cl, dl = _flatten(node.lhs)
        cr, dr = _flatten(node.rhs)
        for n, c in dr.items():
            dl[n] = dl.get(n, Fraction(0)) - c
        diff = vector(cl - cr, dl)  # lhs − rhs
        neg = tuple(-a for a in diff)
        if node.rel == ">":
            return strict(diff)
        if node.rel == "<":
            return strict(neg)
        if node.rel == ">=":
            return MNot(strict(neg))
        if node.rel == "<=":
            return MNot(strict(diff))
        return MAnd((MNot(strict(diff)), MNot(strict(neg))))
    if isinstance(node, PFAtom):
        return MFAtom(tuple(pos[a] for a in node.args), pos[node.result])
    if isinstance(node, PNot):
        return MNot(_lower_matrix(node.body, pos))
    if isinstance(node, PAnd):
        return MAnd((_lower_matrix(node.a, pos), _lower_matrix(node.b, pos)))
    if isinstance(node, POr):
        return MOr((_lower_matrix(node.a, pos), _lower_matrix(node.b, pos)))
    raise AssertionError(f"unexpected node in matrix: {node!r}")


def normalize_ordered_prenex(ast, parameters=None, free_order=None) -> OrderedPrenexQuery:
    """Bring a query into ordered prenex normal form.

    Steps: substitute parameters; case-split abs/min/max; pull F
    occurrences into well-ordered f-atoms with fresh variables; rewrite
    non-strict/equality comparisons into boolean combinations of strict
    atoms; prenex with capture-avoiding renaming; assign the total variable
    order with free variables first.  F-atoms whose variables end up
    violating the order are repaired with fresh innermost existentials.
    """
    params = {k: rational(v) for k, v in (parameters or {}).items()}
    gensym = _Gensym()
    seen_free = []
    tree = _rename_and_substitute(ast, {}, params, seen_free, gensym)
    if free_order is not None:
        missing = [v for v in seen_free if v not in free_order]
        if missing:
            raise QueryError(f"free variables not declared: {', '.join(missing)}")
        free_vars = tuple(free_order)
    else:
        free_vars = tuple(seen_free)
    tree = _desugar(tree)
    tree = _strip_implies(tree)
    tree = _convert_candidates(tree)
    tree = _extract_f_atoms(tree, gensym)
    tree = _pull_occurrences(tree, None, gensym)

    f_arity = None
    while True:
        prefix, matrix = _prenex(tree)
        order = list(free_vars) + [v for _q, v in prefix]
        pos = {name: i + 1 for i, name in enumerate(order)}
        violations = []
        for atom in _matrix_fatoms(matrix, []):
            f_arity = len(atom.args)
            idxs = [pos[a] for a in atom.args] + [pos[atom.result]]
            if any(idxs[i] >= idxs[i + 1] for i in range(len(idxs) - 1)):
                violations.append(atom)
        if not violations:
            break
        mapping = {}
        for atom in violations:
            zs = [gensym.fresh("z") for _ in atom.args]
            r = gensym.fresh("r")
            body = PAnd(PFAtom(tuple(zs), r), PCmp("=", xlin_var(r), xlin_var(atom.result)))
            for z, a in zip(reversed(zs), reversed(atom.args)):
                body = PAnd(PCmp("=", xlin_var(z), xlin_var(a)), body)
            for name in reversed(zs + [r]):
                body = PExists(name, body)
            mapping[id(atom)] = body
        tree = _replace_atoms(matrix, mapping)
        for q, v in reversed(prefix):
            tree = (PExists if q == "exists" else PForall)(v, tree)

    lowered = _lower_matrix(matrix, pos)
    return OrderedPrenexQuery(
        free_vars=free_vars,
        var_names=tuple(order),
        prefix=tuple(q for q, _v in prefix),
        matrix=lowered,
        f_arity=f_arity,
    )


# ---------------------------------------------------------------------------
# Arrangement assembly and cell selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellSet:
    level: int
    ids: frozenset


def _matrix_nodes(node):
    yield node
    if isinstance(node, MNot):
        yield from _matrix_nodes(node.body)
    elif isinstance(node, (MAnd, MOr)):
        for item in node.items:
            yield from _matrix_nodes(item)


def build_query_arrangement(f, q: OrderedPrenexQuery) -> Arrangement:
    """A_f ∪ A_ψ in R^d: all context instantiations of the PWL function's
    breakplanes (m-subsets of variables) and polytope component graphs
    ((m+1)-subsets), plus the constraint planes of the linear atoms."""
    d = len(q.var_names)
    if d < 1:
        raise ValueError("arrangement needs at least one variable")
    planes = []
    has_f = False
    for node in _matrix_nodes(q.matrix):
        if isinstance(node, MAtom):
            planes.append(node.coeffs)
        elif isinstance(node, MFAtom):
            has_f = True
    if has_f:
        if f is None:
            raise ValueError("query contains F but no function was supplied")
        m = f.m
        if d < m + 1:
            raise ValueError("not enough variables for an f-atom context")
        for h in f.breakplanes:
            for gs in itertools.combinations(range(1, d + 1), m):
                vec = [h[0]] + [Fraction(0)] * d
                for i, g in enumerate(gs, start=1):
                    vec[g] = h[i]
                planes.append(tuple(vec))
        components = []
        seen = set()
        for _pos, comp in f.polytopes:
            if comp not in seen:
                seen.add(comp)
                components.append(comp)
        for comp in components:
            for gs in itertools.combinations(range(1, d + 1), m + 1):
                vec = [comp[0]] + [Fraction(0)] * d
                for i, g in enumerate(gs[:-1], start=1):
                    vec[g] = comp[i]
                vec[gs[-1]] += Fraction(-1)
                planes.append(tuple(vec))
    return make_arrangement(d, planes)


def _cell_satisfies(f, matrix, sample) -> bool:
    if isinstance(matrix, MBool):
        return matrix.value
    if isinstance(matrix, MAtom):
        return affine_eval(matrix.coeffs, sample) > 0
    if isinstance(matrix, MFAtom):
        proj = tuple(sample[g - 1] for g in matrix.args)
        pos = ""
        for h in f.breakplanes:
            v = affine_eval(h, proj)
            pos += "+" if v > 0 else "-" if v < 0 else "="
        comp = f.component(pos)
        if comp is None:
            raise ValueError(f"function is not proper: no polytope at position {pos!r}")
        return affine_eval(comp, proj) == sample[matrix.result - 1]
    if isinstance(matrix, MNot):
        return not _cell_satisfies(f, matrix.body, sample)
    if isinstance(matrix, MAnd):
        return all(_cell_satisfies(f, item, sample) for item in matrix.items)
    if isinstance(matrix, MOr):
        return any(_cell_satisfies(f, item, sample) for item in matrix.items)
    raise AssertionError(f"unexpected matrix node: {matrix!r}")


def select_cells_qfree(cd, f, matrix) -> CellSet:
    """The set of full-level cells satisfying the quantifier-free matrix.

    Every atom is homogeneous on every cell (the decomposition is built over
    all atom planes), so sample-point evaluation decides each cell.
    """
    d = cd.d
    pool = set(cd.pools[d])
    for node in _matrix_nodes(matrix):
        if isinstance(node, MAtom) and canonicalize(node.coeffs) not in pool:
            raise ValueError("decomposition is not compatible with the query arrangement")
    ids = frozenset(
        c.id for c in cd.levels[d] if _cell_satisfies(f, matrix, c.sample)
    )
    return CellSet(level=d, ids=ids)


def project_exists(cd, s: CellSet) -> CellSet:
    """∃-step: each cell projects exactly onto its base cell."""
    if s.level < 1:
        raise ValueError("cannot project below level 0")
    return CellSet(
        level=s.level - 1, ids=frozenset(cd.index[cid].base for cid in s.ids)
    )


def complement(cd, s: CellSet) -> CellSet:
    every = frozenset(c.id for c in cd.levels[s.level])
    return CellSet(level=s.level, ids=every - s.ids)


# ---------------------------------------------------------------------------
# End-to-end evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QueryResult:
    """Outcome of evaluate_query: ``truth`` for closed queries, otherwise
    the satisfying cells at the free level with one sample point each."""

    truth: bool | None
    free_vars: tuple = ()
    cells: tuple = ()  # ((cell id, {var name: Fraction}), …)


def _const_truth(matrix) -> bool:
    if isinstance(matrix, MBool):
        return matrix.value
    if isinstance(matrix, MNot):
        return not _const_truth(matrix.body)
    if isinstance(matrix, MAnd):
        return all(_const_truth(i) for i in matrix.items)
    if isinstance(matrix, MOr):
        return any(_const_truth(i) for i in matrix.items)
    raise AssertionError("variable-free query still contains atoms")


def evaluate_query(subject, query, parameters=None, free_order=None) -> QueryResult:
    """Evaluate a query against a network or a PWL function.

    Closed queries yield a boolean; open queries yield the satisfying cells
    over the free variables, each with an exact sample point.  Queries
    without F skip function extraction and run on the constraint
    arrangement alone.
    """
    if isinstance(subject, Network):
        m = subject.inputs
    elif isinstance(subject, PwlFunction):
        m = subject.m
    else:
        raise TypeError("subject must be a Network or a PwlFunction")
    ast = parse_query(query, m) if isinstance(query, str) else query
    q = normalize_ordered_prenex(ast, parameters, free_order)

    d = len(q.var_names)
    k = len(q.free_vars)
    if d == 0:
        return QueryResult(truth=_const_truth(q.matrix))

    has_f = any(isinstance(n, MFAtom) for n in _matrix_nodes(q.matrix))
    f = None
    if has_f:
        f = subject if isinstance(subject, PwlFunction) else pwl_from_network(subject)

    arr = build_query_arrangement(f, q)
    cd = build_cd(arr)
    s = select_cells_qfree(cd, f, q.matrix)
    for quant in reversed(q.prefix):
        if quant == "exists":
            s = project_exists(cd, s)
        else:
            s = complement(cd, project_exists(cd, complement(cd, s)))
    assert s.level == k
    if k == 0:
        return QueryResult(truth=(() in s.ids))
    cells = tuple(
        (cid, dict(zip(q.free_vars, cd.index[cid].sample)))
        for cid in sorted(s.ids)
    )
    return QueryResult(truth=None, free_vars=q.free_vars, cells=cells)
