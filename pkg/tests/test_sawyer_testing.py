import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfilt.filtered_space import AtomSet, FilteredSpace, generate_random_tree
from mfilt.positive_operator import CoefficientFamily, random_coefficients
from mfilt.sawyer_testing import (
    ExponentPair,
    brute_force_testing,
    footnote_max_identity_check,
    normalized_forms,
    testing_constant,
)

from conftest import random_space

PAIRS = [(1.5, 2), (2, 2), (2, 3), (3, 3)]


def enumerate_sup(space, alpha, p, q):
    """Oracle: plain-Python sup of the combined form over all unions of atoms."""
    pp = p / (p - 1)
    r = max(q, pp)
    best = 0.0
    for i in range(space.n_levels):
        S = [sum(alpha.per_atom[j][space.partitions[j][x]] for j in range(i, space.n_levels))
             for x in range(space.n_leaves)]
        k = space.n_atoms[i]
        for size in range(1, k + 1):
            for atoms in itertools.combinations(range(k), size):
                leaves = [x for x in range(space.n_leaves) if space.partitions[i][x] in atoms]
                mu = sum(space.leaf_weight[x] for x in leaves)
                integral = sum(S[x] ** r * space.leaf_weight[x] for x in leaves)
                best = max(best, mu ** (1 / q - 1 / p - 1 / r) * integral ** (1 / r))
    return best


class TestExponentPair:
    def test_derived(self):
        e = ExponentPair(1.5, 2)
        assert e.pprime == pytest.approx(3)
        assert e.qprime == pytest.approx(2)
        assert e.r == pytest.approx(3)
        assert e.theta == pytest.approx(1 / 1.5 + 1 / 2)

    @pytest.mark.parametrize("p,q", [(1, 2), (3, 2), (2, math.inf), (0.5, 0.7)])
    def test_invalid(self, p, q):
        with pytest.raises(ValueError):
            ExponentPair(p, q)

    @given(st.floats(1.01, 10), st.floats(0, 10))
    def test_invariants(self, p, dq):
        e = ExponentPair(p, p + dq)
        assert e.r >= e.q and e.r >= e.pprime
        assert e.theta >= 1 - 1e-15


class TestTestingConstant:
    def test_dyad4(self, dyad4, dyad4_alpha):
        res = testing_constant(dyad4, dyad4_alpha, ExponentPair(2, 2))
        assert res.C2 == pytest.approx(math.sqrt(10) / 2, rel=1e-15)
        assert res.witness == AtomSet(0, {0})

    def test_dyad4_oracle(self, dyad4, dyad4_alpha):
        assert testing_constant(dyad4, dyad4_alpha, ExponentPair(2, 2)).C2 == pytest.approx(
            enumerate_sup(dyad4, dyad4_alpha, 2, 2), rel=1e-12)

    def test_zero(self, dyad4):
        res = testing_constant(dyad4, CoefficientFamily.zeros(dyad4), ExponentPair(2, 2))
        assert (res.C2, res.C2_q, res.C2_pprime) == (0, 0, 0)

    def test_trivial_level(self):
        s = FilteredSpace([0.25, 0.75], ([0, 0],))
        a = CoefficientFamily.from_levels(s, {0: 1.0})
        assert testing_constant(s, a, ExponentPair(2, 2)).C2 == pytest.approx(1.0, rel=1e-15)

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("p,q", PAIRS)
    def test_plain_python_oracle(self, seed, p, q):
        rng = np.random.default_rng(seed)
        s = random_space(rng, max_leaves=8)
        a = random_coefficients(s, seed)
        assert testing_constant(s, a, ExponentPair(p, q)).C2 == pytest.approx(
            enumerate_sup(s, a, p, q), rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("p,q", PAIRS)
    def test_combined_is_max_of_split(self, seed, p, q):
        rng = np.random.default_rng(seed)
        s = random_space(rng)
        e = ExponentPair(p, q)
        res = testing_constant(s, random_coefficients(s, seed), e)
        assert res.C2 == pytest.approx(max(res.C2_q, res.C2_pprime), rel=1e-12)
        forms = normalized_forms(s, random_coefficients(s, seed), e, res.witness)
        assert res.C2 == pytest.approx(max(forms["q"], forms["pprime"]), rel=1e-12)


class TestBruteForce:
    def test_dyad4(self, dyad4, dyad4_alpha):
        e = ExponentPair(2, 2)
        assert brute_force_testing(dyad4, dyad4_alpha, e).C2 == pytest.approx(
            testing_constant(dyad4, dyad4_alpha, e).C2, rel=1e-12)

    def test_tree_15_2(self):
        s = generate_random_tree(3, 8, "unit", 5)
        a = random_coefficients(s, 5)
        e = ExponentPair(1.5, 2)
        fast, slow = testing_constant(s, a, e), brute_force_testing(s, a, e)
        for x, y in ((fast.C2, slow.C2), (fast.C2_q, slow.C2_q), (fast.C2_pprime, slow.C2_pprime)):
            assert x == pytest.approx(y, rel=1e-12)

    def test_zero(self, dyad4):
        assert brute_force_testing(dyad4, CoefficientFamily.zeros(dyad4), ExponentPair(2, 2)).C2 == 0

    def test_cap(self):
        s = FilteredSpace(np.ones(21), (np.arange(21),))
        with pytest.raises(ValueError, match="20"):
            brute_force_testing(s, CoefficientFamily.from_levels(s, {0: 1.0}), ExponentPair(2, 2))


class TestScaling:
    @given(st.integers(0, 2**31), st.floats(0.01, 100), st.sampled_from(PAIRS))
    @settings(max_examples=40, deadline=None)
    def test_alpha_scaling(self, seed, c, pq):
        rng = np.random.default_rng(seed)
        s = random_space(rng)
        a = random_coefficients(s, seed)
        e = ExponentPair(*pq)
        r0, r1 = testing_constant(s, a, e), testing_constant(s, a.scaled(c), e)
        for x, y in ((r0.C2, r1.C2), (r0.C2_q, r1.C2_q), (r0.C2_pprime, r1.C2_pprime)):
            assert y == pytest.approx(c * x, rel=1e-10)

    @given(st.integers(0, 2**31), st.floats(0.01, 100), st.sampled_from(PAIRS))
    @settings(max_examples=40, deadline=None)
    def test_measure_scaling(self, seed, c, pq):
        rng = np.random.default_rng(seed)
        s = random_space(rng)
        a = random_coefficients(s, seed)
        e = ExponentPair(*pq)
        r0, r1 = testing_constant(s, a, e), testing_constant(s.scaled(c), a, e)
        assert r1.C2 == pytest.approx(c ** (1 / e.q - 1 / e.p) * r0.C2, rel=1e-10)


class TestFootnote:
    def test_dyad4(self, dyad4, dyad4_alpha):
        lhs, rhs, ok = footnote_max_identity_check(dyad4, dyad4_alpha, ExponentPair(2, 2), AtomSet(0, {0}))
        assert ok
        assert lhs == pytest.approx(math.sqrt(2.5)) and rhs == pytest.approx(math.sqrt(2.5))

    def test_constant_S(self, dyad4):
        a = CoefficientFamily.from_levels(dyad4, {2: 1.7})
        lhs, rhs, ok = footnote_max_identity_check(dyad4, a, ExponentPair(1.5, 4), AtomSet(1, {1}))
        assert ok and lhs == pytest.approx(1.7, rel=1e-14) and rhs == pytest.approx(1.7, rel=1e-14)

    @given(st.integers(0, 2**31))
    @settings(max_examples=50, deadline=None)
    def test_random_15_2(self, seed):
        rng = np.random.default_rng(seed)
        s = random_space(rng)
        a = random_coefficients(s, seed)
        i = int(rng.integers(s.n_levels))
        atoms = [k for k in range(s.n_atoms[i]) if rng.random() < 0.5] or [0]
        assert footnote_max_identity_check(s, a, ExponentPair(1.5, 2), AtomSet(i, atoms)).passed
