import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rlwe_cpabe.errors import CombineAborted, PolicyError, PolicySyntaxError
from rlwe_cpabe.policy import (AccessTree, Inner, Leaf, attribute_set, combine, evaluate,
                               format_policy, lagrange_at_zero, parse_policy, random_tree,
                               select_satisfying_subset, share)
from rlwe_cpabe.ring import TOY, RingElement, add, sample_uniform, scale

from conftest import evaluate_oracle, trees

Q = TOY.q


# -- parsing -----------------------------------------------------------------

def test_parse_single_leaf():
    assert parse_policy("att1") == AccessTree(Leaf(1))


def test_parse_and_desugars_to_full_threshold():
    assert parse_policy("and(att1, att2)") == AccessTree(Inner(2, (Leaf(1), Leaf(2))))


def test_parse_thresh_nested():
    tree = parse_policy("thresh(2, att1, att2, or(att3, att4))")
    assert tree.root == Inner(2, (Leaf(1), Leaf(2), Inner(1, (Leaf(3), Leaf(4)))))


def test_parse_whitespace_and_spaced_leaf():
    assert parse_policy(" or (\n att 3 ,att4 ) ") == parse_policy("or(att3,att4)")


def test_parse_names():
    tree = parse_policy("and(doctor, att2)", names={"doctor": 5})
    assert tree.root == Inner(2, (Leaf(5), Leaf(2)))


@pytest.mark.parametrize("text, line, col", [
    ("and(att1, att2", 1, 15),
    ("and(att1,\n  bogus)", 2, 3),
    ("or(att1 att2)", 1, 9),
    ("att1 $", 1, 6),
    ("", 1, 1),
])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(PolicySyntaxError) as info:
        parse_policy(text)
    assert (info.value.line, info.value.column) == (line, col)


def test_parse_rejects_bad_threshold_and_universe():
    with pytest.raises(PolicySyntaxError):
        parse_policy("thresh(3, att1, att2)")
    with pytest.raises(PolicySyntaxError):
        parse_policy("thresh(0, att1, att2)")
    with pytest.raises(PolicySyntaxError):
        parse_policy("att9", n_attrs=8)
    with pytest.raises(PolicySyntaxError):
        parse_policy("att0")


@given(trees())
def test_format_parse_round_trip(tree):
    assert parse_policy(format_policy(tree)) == tree


def test_node_invariants():
    with pytest.raises(PolicyError):
        Inner(0, (Leaf(1),))
    with pytest.raises(PolicyError):
        Inner(1, ())
    with pytest.raises(PolicyError):
        Leaf(0)
    with pytest.raises(PolicyError):
        AccessTree(Leaf(9)).validate(n_attrs=8)
    with pytest.raises(PolicyError):
        AccessTree(Inner(1, tuple(Leaf(1) for _ in range(17)))).validate(q=17)


def test_attribute_set():
    assert attribute_set([3, 1, 3]) == frozenset({1, 3})
    with pytest.raises(PolicyError):
        attribute_set([0])
    with pytest.raises(PolicyError):
        attribute_set([5], n_attrs=4)


def test_paths_are_one_based_preorder():
    tree = parse_policy("and(att1, or(att2, att3))")
    assert tree.leaf_paths() == [(1,), (2, 1), (2, 2)]
    assert tree.node_at((2, 2)) == Leaf(3)
    assert tree.depth() == 2


# -- evaluation ----------------------------------------------------------------

def test_evaluate_examples():
    assert evaluate(parse_policy("or(att1, att2)"), {2})
    assert not evaluate(parse_policy("and(att1, att2)"), {1})
    assert not evaluate(parse_policy("att1"), set())


def test_oracle_examples():
    assert evaluate_oracle("thresh(2, att1, att2, or(att3, att4))", {1, 4})
    assert not evaluate_oracle("thresh(2, att1, att2, or(att3, att4))", {3, 4})


@settings(max_examples=150)
@given(trees(), st.frozensets(st.integers(1, 8)))
def test_evaluate_matches_text_oracle(tree, att):
    assert evaluate(tree, att) == evaluate_oracle(format_policy(tree), att)


@given(trees(), st.frozensets(st.integers(1, 8)), st.frozensets(st.integers(1, 8)))
def test_evaluate_monotone(tree, a, b):
    if evaluate(tree, a):
        assert evaluate(tree, a | b)


# -- subset selection ------------------------------------------------------------

def test_select_examples():
    assert select_satisfying_subset(parse_policy("and(att1,att2)"), {1, 2}) == {(1,), (2,)}
    assert select_satisfying_subset(parse_policy("or(att1,att2)"), {1, 2}) == {(1,)}
    assert select_satisfying_subset(parse_policy("or(att1,att2)"), {3}) is None


def _children_used(tree, chosen):
    """Per inner node on a chosen path, how many of its children lie on chosen paths."""
    prefixes = {p[:d] for p in chosen for d in range(len(p) + 1)}
    used = {}
    for path, node in tree.walk():
        if isinstance(node, Inner) and path in prefixes:
            used[path] = (node.threshold, sum(path + (i,) in prefixes
                                              for i in range(1, len(node.children) + 1)))
    return used


@settings(max_examples=200)
@given(trees(), st.frozensets(st.integers(1, 8)))
def test_select_property(tree, att):
    chosen = select_satisfying_subset(tree, att)
    assert (chosen is None) == (not evaluate(tree, att))
    if chosen is None:
        return
    for path in chosen:
        assert tree.node_at(path).attribute in att
    for k, used in _children_used(tree, chosen).values():
        assert used == k


# -- lagrange ------------------------------------------------------------------

def _lagrange_fraction(indices, j):
    out = Fraction(1)
    for t, i_t in enumerate(indices):
        if t != j:
            out *= Fraction(-i_t, indices[j] - i_t)
    return out


def test_lagrange_examples():
    assert [lagrange_at_zero([1, 2], j, Q) for j in range(2)] == [2, Q - 1]
    assert lagrange_at_zero([1], 0, Q) == 1
    assert [lagrange_at_zero([1, 2, 3], j, Q) for j in range(3)] == [3, Q - 3, 1]


@given(st.lists(st.integers(1, 40), min_size=1, max_size=8, unique=True))
def test_lagrange_matches_rational_oracle(indices):
    for j in range(len(indices)):
        f = _lagrange_fraction(indices, j)
        assert lagrange_at_zero(indices, j, Q) == f.numerator * pow(f.denominator, -1, Q) % Q


def test_lagrange_rejects_duplicates():
    with pytest.raises(ValueError):
        lagrange_at_zero([1, 1], 0, Q)


# -- share / combine -------------------------------------------------------------

def test_share_single_leaf_and_or(rng):
    r = sample_uniform(TOY, rng)
    assert share(parse_policy("att1"), TOY, r, rng) == {(): r}
    assert share(parse_policy("or(att1, att2)"), TOY, r, rng) == {(1,): r, (2,): r}


def test_share_and_is_linear(rng):
    r = sample_uniform(TOY, rng)
    s = share(parse_policy("and(att1, att2)"), TOY, r, rng)
    # q(1), q(2) on a line through (0, r): 2 q(1) - q(2) = r
    assert add(scale(s[(1,)], 2), scale(s[(2,)], Q - 1)) == r
    assert combine(parse_policy("and(att1, att2)"), TOY, s) == r


def test_combine_aborts_when_unsatisfied(rng):
    tree = parse_policy("and(att1, att2)")
    s = share(tree, TOY, sample_uniform(TOY, rng), rng)
    with pytest.raises(CombineAborted):
        combine(tree, TOY, {(1,): s[(1,)]})


def test_share_round_trip_random(rng):
    for _ in range(200):
        tree = random_tree(rng, 8, max_leaves=16, max_depth=4)
        secret = sample_uniform(TOY, rng)
        shares = share(tree, TOY, secret, rng)
        assert set(shares) == set(tree.leaf_paths())
        att = {a for a in range(1, 9) if rng.random() < 0.6}
        chosen = select_satisfying_subset(tree, att)
        if chosen is not None:
            assert combine(tree, TOY, {p: shares[p] for p in chosen}) == secret


def test_combine_uses_any_satisfying_subset(rng):
    # 2-of-3: every pair reconstructs
    tree = parse_policy("thresh(2, att1, att2, att3)")
    secret = sample_uniform(TOY, rng)
    shares = share(tree, TOY, secret, rng)
    for pair in itertools.combinations(shares, 2):
        assert combine(tree, TOY, {p: shares[p] for p in pair}) == secret


def test_random_tree_bounds(rng):
    for _ in range(300):
        tree = random_tree(rng, 5, max_leaves=16, max_depth=4)
        assert len(tree.leaves()) <= 16
        assert tree.depth() <= 4
        tree.validate(n_attrs=5, q=Q)


def test_hiding_single_share_of_two_of_three():
    # one share of a 2-of-3 sharing is uniform whatever the secret
    rng = np.random.default_rng(99)
    tree = parse_policy("thresh(2, att1, att2, att3)")
    r0 = RingElement.zero(TOY)
    r1 = RingElement.constant(TOY, 1234)
    bins = 16
    counts = np.zeros((2, bins), dtype=np.int64)
    for _ in range(10_000):
        for row, secret in enumerate((r0, r1)):
            c = share(tree, TOY, secret, rng)[(2,)].coeffs[0]
            counts[row, c * bins // Q] += 1
    assert stats.chi2_contingency(counts).pvalue > 0.001
