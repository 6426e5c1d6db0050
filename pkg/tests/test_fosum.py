import random
from fractions import Fraction

import pytest

from nnquery.core import BOT, Vocabulary, WeightedStructure
from nnquery.fosum import (
    FCompare,
    FEqStd,
    FExists,
    FRel,
    ParseError,
    SVar,
    TIf,
    TRationalFunction,
    TSum,
    TWeight,
    eval_formula,
    eval_weight_term,
    free_variables,
    parse_fosum,
)

VOCAB = Vocabulary(
    relations={"E": 2, "P": 1},
    constants=("in1", "out1"),
    weights={"w": 2, "b": 1, "c": 0, "val1": 0},
)


def chain_structure(n=5):
    dom = tuple(f"e{i}" for i in range(n))
    return WeightedStructure(
        vocabulary=VOCAB,
        domain=dom,
        relations={
            "E": {(dom[i], dom[i + 1]) for i in range(n - 1)},
            "P": {(dom[0],), (dom[2],)},
        },
        constants={"in1": dom[0], "out1": dom[n - 1]},
        weights={
            "w": {(dom[0], dom[1]): Fraction(2), (dom[1], dom[2]): Fraction(-1, 2)},
            "b": {(dom[i],): Fraction(i) for i in range(n - 1)},  # b(e4) stays ⊥
            "c": {(): Fraction(-3, 2)},
            "val1": {(): Fraction(1, 4)},
        },
        weight_defaults={"w": Fraction(0), "b": BOT, "c": BOT, "val1": BOT},
    )


S = chain_structure()


def test_sum_over_tautology_counts_domain():
    t = parse_fosum("sum{x : x = x} 1", VOCAB)
    assert isinstance(t, TSum)
    assert eval_weight_term(S, t, {}) == Fraction(5)


def test_empty_sum_is_zero():
    t = parse_fosum("sum{x : not x = x} 1", VOCAB)
    assert eval_weight_term(S, t, {}) == Fraction(0)


def test_multi_variable_sum_is_product_enumeration():
    t = parse_fosum("sum{x, y : x = x and y = y} 1", VOCAB)
    assert eval_weight_term(S, t, {}) == Fraction(25)


def test_relu_idiom_parses_and_evaluates():
    t = parse_fosum("if c > 0 then c else 0", VOCAB)
    assert isinstance(t, TIf)
    assert eval_weight_term(S, t, {}) == Fraction(0)  # c = -3/2
    spos = chain_structure()
    spos.weights["c"][()] = Fraction(7, 3)
    assert eval_weight_term(spos, t, {}) == Fraction(7, 3)


def test_weight_apply_under_rational_function():
    t = parse_fosum("w(in1, u) * val1", VOCAB)
    assert isinstance(t, TRationalFunction)
    assert any(isinstance(sub, TWeight) for sub in t.subterms)
    assert eval_weight_term(S, t, {"u": "e1"}) == Fraction(2) * Fraction(1, 4)


def test_division_by_zero_term_is_bottom():
    t = parse_fosum("1/0", VOCAB)
    assert eval_weight_term(S, t, {}) is BOT


def test_cancellation_does_not_launder_bottom():
    t = parse_fosum("b(u) - b(u)", VOCAB)
    assert eval_weight_term(S, t, {"u": "e4"}) is BOT  # b(e4) = ⊥
    assert eval_weight_term(S, t, {"u": "e1"}) == Fraction(0)
    t0 = parse_fosum("0 * b(u)", VOCAB)
    assert eval_weight_term(S, t0, {"u": "e4"}) is BOT


def test_exists_edge_from_input():
    f = parse_fosum("exists x E(in1, x)", VOCAB)
    assert isinstance(f, FExists)
    assert eval_formula(S, f, {}) is True
    f2 = parse_fosum("exists x E(out1, x)", VOCAB)
    assert eval_formula(S, f2, {}) is False


def test_forall_and_connectives():
    assert eval_formula(S, parse_fosum("forall x (P(x) implies exists y E(x, y))", VOCAB), {})
    assert not eval_formula(S, parse_fosum("forall x P(x)", VOCAB), {})
    assert eval_formula(S, parse_fosum("not forall x P(x) and P(in1)", VOCAB), {})


def test_weight_comparisons_use_lifted_order():
    # b(e4) is ⊥, which is strictly below every rational
    assert eval_formula(S, parse_fosum("b(u) < 0 - 100", VOCAB), {"u": "e4"})
    assert not eval_formula(S, parse_fosum("0 - 100 < b(u)", VOCAB), {"u": "e4"})
    assert eval_formula(S, parse_fosum("b(u) = bot", VOCAB), {"u": "e4"})
    assert eval_formula(S, parse_fosum("b(x) = b(y)", VOCAB), {"x": "e2", "y": "e2"})


def test_standard_vs_weight_equality_disambiguation():
    f = parse_fosum("x = in1", VOCAB)
    assert isinstance(f, FEqStd)
    assert eval_formula(S, f, {"x": "e0"})
    g = parse_fosum("c = val1", VOCAB)
    assert isinstance(g, FCompare)
    with pytest.raises(ParseError):
        parse_fosum("x = c", VOCAB)  # element term vs weight term
    with pytest.raises(ParseError):
        parse_fosum("x < y", VOCAB)  # no order on elements


def test_free_variables():
    t = parse_fosum("sum{x : E(x, y)} b(x)", VOCAB)
    assert free_variables(t) == {"y"}
    assert free_variables(parse_fosum("bot", VOCAB)) == set()
    t2 = parse_fosum("if P(z) then b(x) else 1", VOCAB)
    assert free_variables(t2) == {"z", "x"}


def test_variables_renamed_apart():
    t = parse_fosum("sum{x : exists x P(x)} 1", VOCAB)
    inner = t.guard
    assert isinstance(inner, FExists)
    assert inner.var not in t.variables
    assert free_variables(t) == set()


def test_parse_errors():
    with pytest.raises(ParseError):
        parse_fosum("E(in1)", VOCAB)  # arity mismatch
    with pytest.raises(ParseError):
        parse_fosum("Q(x)", VOCAB)  # unknown symbol
    with pytest.raises(ParseError):
        parse_fosum("sum{x : P(x)", VOCAB)  # unbalanced
    with pytest.raises(ParseError):
        parse_fosum("if P(in1) then 1", VOCAB)  # missing else
    with pytest.raises(ParseError):
        parse_fosum("w(b(x), y)", VOCAB)  # weight-term argument to a weight symbol


def test_sum_order_independence():
    t = parse_fosum("sum{x : x = x} b(x) + 0", VOCAB)
    base = eval_weight_term(chain_structure(4), t, {})
    s2 = chain_structure(4)
    s2.domain = tuple(reversed(s2.domain))
    assert eval_weight_term(s2, t, {}) == base


def _random_structure(rng):
    n = rng.randint(2, 4)
    dom = tuple(range(n))
    vocab = Vocabulary(relations={"E": 2, "P": 1}, constants=(), weights={"b": 1})
    return WeightedStructure(
        vocabulary=vocab,
        domain=dom,
        relations={
            "E": {(a, b) for a in dom for b in dom if rng.random() < 0.4},
            "P": {(a,) for a in dom if rng.random() < 0.5},
        },
        constants={},
        weights={"b": {(a,): Fraction(rng.randint(-3, 3)) for a in dom}},
        weight_defaults={"b": Fraction(0)},
    )


def _random_formula(rng, depth=2):
    if depth == 0 or rng.random() < 0.3:
        return rng.choice(["P(x)", "E(x, x)", "b(x) < 1", "0 < b(x)", "exists y E(x, y)"])
    a, b = _random_formula(rng, depth - 1), _random_formula(rng, depth - 1)
    return rng.choice([f"({a}) and ({b})", f"({a}) or ({b})", f"not ({a})"])


def test_exists_sum_duality_on_random_pairs():
    # ∃x φ(x) holds iff sum{x : φ(x)} 1 is positive.
    rng = random.Random(20260816)
    vocab = Vocabulary(relations={"E": 2, "P": 1}, constants=(), weights={"b": 1})
    for _ in range(200):
        s = _random_structure(rng)
        phi = _random_formula(rng)
        f = parse_fosum(f"exists x ({phi})", vocab)
        t = parse_fosum(f"sum{{x : {phi}}} 1", vocab)
        count = eval_weight_term(s, t, {})
        assert eval_formula(s, f, {}) == (count > 0)
