"""Tests for exact piecewise-linear extraction and its stage operations."""

import random
from fractions import Fraction

import pytest

from nnquery.network import Network, Neuron, forward, hidden_preactivations, load_network
from nnquery.pwl import (
    PwlFunction,
    init_inputs,
    pwl_eval,
    pwl_from_json,
    pwl_from_network,
    pwl_proper_check,
    pwl_restrict,
    pwl_to_json,
    relu_stage,
    scale_stage,
    sum_stage,
)

from oracles import random_network, random_point

F = Fraction


def relu_net():
    # f(x) = ReLU(x)
    return Network(
        inputs=1,
        hidden=[[Neuron(F(0), (F(1),))]],
        outputs=[Neuron(F(0), (F(1),))],
    )


def abs_net():
    # f(x) = ReLU(x) + ReLU(−x) = |x|
    return Network(
        inputs=1,
        hidden=[[Neuron(F(0), (F(1),)), Neuron(F(0), (F(-1),))]],
        outputs=[Neuron(F(0), (F(1), F(1)))],
    )


class TestStages:
    def test_init_inputs(self):
        xs = init_inputs(2)
        assert len(xs) == 2
        assert xs[0].breakplanes == ()
        assert xs[0].polytopes == (("", (F(0), F(1), F(0))),)
        assert pwl_eval(xs[1], (5, 7)) == 7

    def test_scale_keeps_planes_even_for_zero(self):
        f = relu_stage(init_inputs(1)[0])
        g = scale_stage(f, 0)
        assert g.breakplanes == f.breakplanes
        assert all(all(a == 0 for a in comp) for _p, comp in g.polytopes)

    def test_sum_requires_matching_dimensions(self):
        with pytest.raises(ValueError):
            sum_stage([init_inputs(1)[0], init_inputs(2)[0]])
        with pytest.raises(ValueError):
            sum_stage([])

    def test_relu_of_coordinate(self):
        f = relu_stage(init_inputs(1)[0])
        assert f.breakplanes == ((F(0), F(1)),)
        assert dict(f.polytopes) == {
            "-": (F(0), F(0)),
            "=": (F(0), F(0)),
            "+": (F(0), F(1)),
        }

    def test_relu_of_constant_needs_no_plane(self):
        one = PwlFunction(m=1, breakplanes=(), polytopes=(("", (F(3), F(0))),))
        assert relu_stage(one).polytopes == (("", (F(3), F(0))),)
        neg = PwlFunction(m=1, breakplanes=(), polytopes=(("", (F(-3), F(0))),))
        assert relu_stage(neg).polytopes == (("", (F(0), F(0))),)
        zero = PwlFunction(m=1, breakplanes=(), polytopes=(("", (F(0), F(0))),))
        assert relu_stage(zero).polytopes == (("", (F(0), F(0))),)


class TestExtraction:
    def test_relu_network(self):
        f = pwl_from_network(relu_net())
        assert f.breakplanes == ((F(0), F(1)),)
        assert dict(f.polytopes) == {
            "-": (F(0), F(0)),
            "=": (F(0), F(0)),
            "+": (F(0), F(1)),
        }

    def test_abs_network(self):
        f = pwl_from_network(abs_net())
        assert f.breakplanes == ((F(0), F(1)),)
        assert dict(f.polytopes) == {
            "-": (F(0), F(-1)),
            "=": (F(0), F(0)),
            "+": (F(0), F(1)),
        }

    def test_affine_network_single_polytope(self):
        net = load_network(
            '{"inputs": 2, "hidden": [], "outputs": [{"bias": "1/2", "weights": ["2", "-3"]}]}'
        )
        f = pwl_from_network(net)
        assert f.breakplanes == ()
        assert f.polytopes == (("", (F(1, 2), F(2), F(-3))),)

    def test_hidden_target_is_post_activation(self):
        net = abs_net()
        f = pwl_from_network(net, "h1_2")  # ReLU(−x)
        for x in (-3, -1, 0, 2):
            pre = hidden_preactivations(net, [x])[0][1]
            assert pwl_eval(f, (x,)) == max(pre, 0)

    def test_invalid_targets(self):
        net = relu_net()
        with pytest.raises(ValueError):
            pwl_from_network(net, "in1")
        with pytest.raises(ValueError):
            pwl_from_network(net, "h2_1")
        with pytest.raises(ValueError):
            pwl_from_network(net, "out2")

    def test_matches_forward_on_random_networks(self):
        rng = random.Random(20260816)
        for _ in range(12):
            m = rng.randint(1, 2)
            depth = rng.randint(1, 3)
            net = random_network(rng, m, depth, max_width=2)
            f = pwl_from_network(net)
            assert f.m == m
            for _ in range(8):
                x = random_point(rng, m)
                assert pwl_eval(f, x) == forward(net, x)[0]

    def test_extracted_functions_are_proper(self):
        rng = random.Random(7)
        for _ in range(6):
            net = random_network(rng, rng.randint(1, 2), rng.randint(1, 2), max_width=2)
            assert pwl_proper_check(pwl_from_network(net))


class TestEval:
    def test_eval_dimension_check(self):
        f = pwl_from_network(relu_net())
        with pytest.raises(ValueError):
            pwl_eval(f, (1, 2))

    def test_eval_missing_position_reports_improper(self):
        f = pwl_from_network(relu_net())
        broken = PwlFunction(
            m=1, breakplanes=f.breakplanes, polytopes=tuple(f.polytopes[:2])
        )
        with pytest.raises(ValueError, match="not proper"):
            # the dropped polytope is '+'
            pwl_eval(broken, (1,))


class TestProperCheck:
    def test_missing_position_fails(self):
        f = pwl_from_network(relu_net())
        broken = PwlFunction(m=1, breakplanes=f.breakplanes, polytopes=f.polytopes[:2])
        assert pwl_proper_check(broken) is False

    def test_duplicate_position_fails(self):
        f = pwl_from_network(relu_net())
        dup = PwlFunction(
            m=1, breakplanes=f.breakplanes, polytopes=f.polytopes + (f.polytopes[0],)
        )
        assert pwl_proper_check(dup) is False

    def test_unrealizable_position_fails(self):
        # two identical planes cannot have opposite signs — a position list
        # over one plane pretending to be over two distinct ones
        planes = ((F(0), F(1)), (F(-1), F(1)))  # x = 0, x = 1
        polys = (
            ("--", (F(0), F(0))),
            ("-=", (F(0), F(0))),  # x = 1 with x < 0: infeasible
            ("-+", (F(0), F(0))),
            ("=-", (F(0), F(0))),
            ("+-", (F(0), F(0))),
            ("+=", (F(0), F(0))),
            ("++", (F(0), F(0))),
        )
        f = PwlFunction(m=1, breakplanes=planes, polytopes=polys)
        assert pwl_proper_check(f) is False

    def test_discontinuity_fails(self):
        planes = ((F(0), F(1)),)
        polys = (
            ("-", (F(0), F(0))),
            ("=", (F(0), F(0))),
            ("+", (F(1), F(1))),  # jumps to 1 across x = 0
        )
        f = PwlFunction(m=1, breakplanes=planes, polytopes=polys)
        assert pwl_proper_check(f) is False

    def test_discontinuity_on_section_only(self):
        # continuous on each side but the '=' component disagrees
        planes = ((F(0), F(1)),)
        polys = (
            ("-", (F(0), F(0))),
            ("=", (F(5), F(0))),
            ("+", (F(0), F(1))),
        )
        f = PwlFunction(m=1, breakplanes=planes, polytopes=polys)
        assert pwl_proper_check(f) is False


class TestRestriction:
    def test_simple_restriction(self):
        # f(x1,x2) = ReLU(x1 + x2), fix x2 = 1 → ReLU(x1 + 1)
        net = Network(
            inputs=2,
            hidden=[[Neuron(F(0), (F(1), F(1)))]],
            outputs=[Neuron(F(0), (F(1),))],
        )
        f = pwl_from_network(net)
        g = pwl_restrict(f, {2: 1})
        assert g.m == 1
        assert g.breakplanes == ((F(1), F(1)),)
        for x in (-5, -1, Fraction(-1, 2), 0, 3):
            assert pwl_eval(g, (x,)) == max(x + 1, 0)

    def test_collapsing_planes_produce_no_ghosts(self):
        # f(x,y) = ReLU(x−y) + ReLU(x+y); at y = 0 both planes collapse to x = 0
        net = Network(
            inputs=2,
            hidden=[[Neuron(F(0), (F(1), F(-1))), Neuron(F(0), (F(1), F(1)))]],
            outputs=[Neuron(F(0), (F(1), F(1)))],
        )
        f = pwl_from_network(net)
        g = pwl_restrict(f, {2: 0})
        assert g.breakplanes == ((F(0), F(1)),)
        assert len(g.polytopes) == 3  # syntactic substitution would keep ghosts
        for x in (-2, 0, 1, Fraction(7, 3)):
            assert pwl_eval(g, (x,)) == 2 * max(x, 0)
        assert pwl_proper_check(g)

    def test_constant_plane_prunes_sides(self):
        # f(x,y) = ReLU(y): fixing y = 2 leaves the constant function 2
        net = Network(
            inputs=2,
            hidden=[[Neuron(F(0), (F(0), F(1)))]],
            outputs=[Neuron(F(0), (F(1),))],
        )
        f = pwl_from_network(net)
        g = pwl_restrict(f, {2: 2})
        assert g.breakplanes == ()
        assert g.polytopes == (("", (F(2), F(0))),)

    def test_restriction_with_sign_flip(self):
        # plane x1 − 2·x2 = 0; fixing x1 = −1 gives −1 − 2·x2 = 0, whose
        # canonical form flips orientation — signs must still be consistent
        net = Network(
            inputs=2,
            hidden=[[Neuron(F(0), (F(1), F(-2)))]],
            outputs=[Neuron(F(0), (F(1),))],
        )
        f = pwl_from_network(net)
        g = pwl_restrict(f, {1: -1})
        for y in (-3, Fraction(-1, 2), 0, 4):
            assert pwl_eval(g, (y,)) == max(-1 - 2 * y, 0)
        assert pwl_proper_check(g)

    def test_full_restriction_rejected(self):
        f = pwl_from_network(relu_net())
        with pytest.raises(ValueError, match="empty remaining dimension"):
            pwl_restrict(f, {1: 0})

    def test_bad_index_rejected(self):
        f = pwl_from_network(relu_net())
        with pytest.raises(ValueError):
            pwl_restrict(f, {2: 0})

    def test_restriction_agrees_with_forward(self):
        rng = random.Random(31)
        for _ in range(6):
            net = random_network(rng, 2, rng.randint(2, 3), max_width=2)
            f = pwl_from_network(net)
            v = random_point(rng, 1)[0]
            g = pwl_restrict(f, {1: v})
            for _ in range(6):
                y = random_point(rng, 1)[0]
                assert pwl_eval(g, (y,)) == forward(net, [v, y])[0]


class TestSerialization:
    def test_round_trip(self):
        f = pwl_from_network(abs_net())
        g = pwl_from_json(pwl_to_json(f))
        assert g == f

    def test_round_trip_random(self):
        rng = random.Random(5)
        net = random_network(rng, 2, 2, max_width=2)
        f = pwl_from_network(net)
        assert pwl_from_json(pwl_to_json(f)) == f

    def test_malformed_rejected(self):
        with pytest.raises(ValueError):
            pwl_from_json('{"inputs": 0, "breakplanes": [], "polytopes": []}')
        with pytest.raises(ValueError):
            pwl_from_json(
                '{"inputs": 1, "breakplanes": [["0", "1"]],'
                ' "polytopes": [{"position": "++", "component": ["0", "1"]}]}'
            )
