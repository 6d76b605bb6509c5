import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfilt.conditional import cond_expect, doob_maximal
from mfilt.filtered_space import FilteredSpace, generate_dyadic
from mfilt.positive_operator import bilinear, random_coefficients
from mfilt.principal_sets import (
    UNSET,
    build_principal_tree,
    carleson_check,
    carleson_sum,
    decompose_bilinear,
    dyadic_slice,
    maximal_cover_check,
    stopping_time,
    verify_properties,
)
from mfilt.sawyer_testing import ExponentPair

from conftest import random_space

DATA = Path(__file__).parent / "data"
F9 = np.array([9.0, 1, 1, 1])
F4 = np.array([4.0, 2, 1, 1])


def random_f(rng, n, spread=3.0):
    """Nonnegative with heavy tails and some zeros, never identically zero."""
    f = np.exp(spread * rng.normal(size=n)) * (rng.random(n) < 0.75)
    f[rng.integers(n)] += 1.0
    return f


class TestDyadicSlice:
    @pytest.mark.parametrize("v,k", [(1.0, 0), (1.5, 1), (2.0, 1), (2.0001, 2), (0.5, -1),
                                     (0.75, 0), (3.0, 2), (8.0, 3), (9.0, 4), (2.0**-30, -30)])
    def test_values(self, v, k):
        assert dyadic_slice(v) == k
        assert 2.0 ** (k - 1) < v <= 2.0 ** k

    @given(st.floats(1e-300, 1e300))
    def test_bracket(self, v):
        k = int(dyadic_slice(v))
        assert math.ldexp(1.0, k - 1) < v <= math.ldexp(1.0, k)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            dyadic_slice([1.0, 0.0])


class TestStoppingTime:
    def test_stops_at_finest(self, dyad4):
        tau = stopping_time(dyad4, F9, np.ones(4, bool), 0, 2)
        assert tau.tolist() == [2, 3, 3, 3]

    def test_never(self, dyad4):
        assert stopping_time(dyad4, F4, np.ones(4, bool), 0, 1).tolist() == [3, 3, 3, 3]

    def test_zero_f(self, dyad4):
        assert stopping_time(dyad4, np.zeros(4), [2, 3], 1, -5).tolist() == [UNSET, UNSET, 3, 3]

    def test_negative_rejected(self, dyad4):
        with pytest.raises(ValueError, match="nonnegative"):
            stopping_time(dyad4, -F4, np.ones(4, bool), 0, 1)


class TestBuild:
    def test_golden_f9111(self, dyad4):
        tree = build_principal_tree(dyad4, F9, 0)
        assert tree.to_dict() == json.loads((DATA / "dyad4_f9111_tree.json").read_text())

    def test_single_node(self, dyad4):
        tree = build_principal_tree(dyad4, F4, 0)
        assert len(tree) == 1
        (root,) = tree.roots
        assert root.kappa2 == 1 and root.tau.tolist() == [3, 3, 3, 3] and not root.children

    @pytest.mark.parametrize("seed", range(5))
    def test_constant_one(self, seed):
        s = random_space(np.random.default_rng(seed))
        tree = build_principal_tree(s, np.ones(s.n_leaves), 0)
        assert len(tree) == 1 and tree.roots[0].kappa2 == 0

    def test_roots_split_by_layer(self, dyad4):
        # E_1 f = (3, 3, 0.5, 0.5): two layers at level 1, zero nowhere
        tree = build_principal_tree(dyad4, [3.0, 3.0, 0.5, 0.5], 1)
        assert sorted((P.leaves.tolist(), P.kappa2) for P in tree.roots) == [([0, 1], 2), ([2, 3], -1)]

    def test_support_only(self, dyad4):
        tree = build_principal_tree(dyad4, [0.0, 0.0, 1.0, 3.0], 1)
        assert [P.leaves.tolist() for P in tree.roots] == [[2, 3]]

    def test_rejects_zero(self, dyad4):
        with pytest.raises(ValueError):
            build_principal_tree(dyad4, np.zeros(4), 1)

    def test_rejects_negative(self, dyad4):
        with pytest.raises(ValueError):
            build_principal_tree(dyad4, -F4, 0)

    def test_deep_chain(self):
        # a point mass on a binary tree of depth 8: E_j f doubles each level
        s = generate_dyadic(8, 2)
        f = np.zeros(256)
        f[0] = 1.0
        tree = build_principal_tree(s, f, 0)
        chain = [(P.kappa1, P.kappa2) for P in tree.all_sets]
        # E_j f = 2^(j-8); stop two levels later each time
        assert chain == [(0, -8), (2, -6), (4, -4), (6, -2), (8, 0)]
        assert verify_properties(s, f, tree).passed


class TestProperties:
    def test_f9111(self, dyad4):
        rep = verify_properties(dyad4, F9, build_principal_tree(dyad4, F9))
        assert rep.passed
        assert rep.checks["half_measure"] == (True, 0.25)

    def test_f4211(self, dyad4):
        assert verify_properties(dyad4, F4, build_principal_tree(dyad4, F4)).passed

    @given(st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_random(self, seed):
        rng = np.random.default_rng(seed)
        s = random_space(rng, max_leaves=24, max_levels=7)
        f = random_f(rng, s.n_leaves)
        i0 = int(rng.integers(s.n_levels))
        if not cond_expect(s, f, i0).any():
            return
        tree = build_principal_tree(s, f, i0)
        rep = verify_properties(s, f, tree)
        assert rep.passed, rep.violations
        assert maximal_cover_check(s, f, tree) == []

    def test_detects_tampering(self, dyad4):
        tree = build_principal_tree(dyad4, F9)
        tree.roots[0].children[0].kappa2 = 3
        rep = verify_properties(dyad4, F9, tree)
        assert not rep.passed


class TestCarleson:
    def test_f4211(self, dyad4):
        tree = build_principal_tree(dyad4, F4)
        cc = carleson_check(dyad4, F4, tree, 2)
        assert cc.total == 4
        assert cc.maximal_bound == pytest.approx(66)
        assert cc.passed

    def test_f9111(self, dyad4):
        tree = build_principal_tree(dyad4, F9)
        cc = carleson_check(dyad4, F9, tree, 2)
        assert cc.total == 80
        # f* = (9, 5, 3, 3)
        assert doob_maximal(dyad4, F9).tolist() == [9, 5, 3, 3]
        assert cc.maximal_bound == pytest.approx(248)
        assert cc.passed

    @pytest.mark.parametrize("m", [0.5, 1.0, 7.0])
    def test_constant(self, m):
        s = FilteredSpace([m / 2, m / 2], ([0, 0], [0, 1]))
        tree = build_principal_tree(s, np.ones(2))
        assert carleson_sum(s, tree, 2) == pytest.approx(m / 4)

    @given(st.integers(0, 2**31), st.sampled_from([1.5, 2.0, 3.0]))
    @settings(max_examples=100, deadline=None)
    def test_bound(self, seed, p):
        rng = np.random.default_rng(seed)
        s = random_space(rng, max_leaves=24, max_levels=7)
        f = random_f(rng, s.n_leaves)
        tree = build_principal_tree(s, f)
        assert carleson_check(s, f, tree, p).passed


class TestDecomposition:
    def test_dyad4(self, dyad4, dyad4_alpha):
        d = decompose_bilinear(dyad4, dyad4_alpha, F4, np.ones(4), 0, ExponentPair(2, 2))
        assert d.lhs == 14 and d.rhs == 14
        assert d.split_F + d.split_G == 14

    def test_g_zero(self, dyad4, dyad4_alpha):
        d = decompose_bilinear(dyad4, dyad4_alpha, F9, np.zeros(4), 0, ExponentPair(2, 2))
        assert d.lhs == 0 and d.rhs == 0

    @given(st.integers(0, 2**31), st.sampled_from([(1.5, 2), (2, 2), (2, 3), (3, 3)]))
    @settings(max_examples=100, deadline=None)
    def test_random(self, seed, pq):
        rng = np.random.default_rng(seed)
        s = random_space(rng, max_leaves=24, max_levels=7)
        a = random_coefficients(s, seed)
        f = random_f(rng, s.n_leaves)
        g = random_f(rng, s.n_leaves, 1.0)
        d = decompose_bilinear(s, a, f, g, 0, ExponentPair(*pq))
        assert d.identity_holds(1e-10)
        assert d.split_holds(1e-10)
        # i0 = 0 and f >= 0: the support restriction loses nothing
        assert d.lhs == pytest.approx(bilinear(s, a, f, g), rel=1e-10)
