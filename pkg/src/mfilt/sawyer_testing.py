"""Sawyer-type testing constants of the positive operator.

For a level ``i`` and a set ``E`` in ``F_i`` write ``S_i = sum_{j>=i} alpha_j``.
Three normalized forms are tested::

    combined(E) = mu(E)^(1/q - 1/p - 1/r) * (int_E S_i^r)^(1/r)
    q_form(E)   = mu(E)^(-1/p)            * (int_E S_i^q)^(1/q)
    pp_form(E)  = mu(E)^(-1/q')           * (int_E S_i^p')^(1/p')

with ``r = max(q, p')``.  Each is ``(N(E) / mu(E)^t)^(1/s)`` for an additive
set function ``N`` and an exponent ``t >= 1``; such a ratio is maximized by a
single atom (the densest atom dominates the set's density, and
``mu(atom)^(1-t) >= mu(E)^(1-t)``).  :func:`testing_constant` uses that
reduction and :func:`brute_force_testing` enumerates every union of atoms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .conditional import integrate
from .filtered_space import AtomSet, FilteredSpace
from .positive_operator import CoefficientFamily, tail_sum

__all__ = [
    "ExponentPair",
    "TestingResult",
    "FootnoteCheck",
    "testing_constant",
    "brute_force_testing",
    "normalized_forms",
    "footnote_max_identity_check",
    "BRUTE_FORCE_MAX_ATOMS",
]

BRUTE_FORCE_MAX_ATOMS = 20
_FORMS = ("combined", "q", "pprime")


@dataclass(frozen=True)
class ExponentPair:
    """Exponents ``1 < p <= q < inf`` and the quantities derived from them."""

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if not (1 < p <= q < math.inf):
            raise ValueError(f"need 1 < p <= q < inf, got p={p}, q={q}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @property
    def pprime(self) -> float:
        return self.p / (self.p - 1)

    @property
    def qprime(self) -> float:
        return self.q / (self.q - 1)

    @property
    def r(self) -> float:
        return max(self.q, self.pprime)

    @property
    def theta(self) -> float:
        return 1 / self.p + 1 / self.qprime

    def adjoint(self) -> "ExponentPair":
        """``(q', p')``: the exponents of the adjoint estimate."""
        return ExponentPair(self.qprime, self.pprime)

    def form(self, name: str) -> tuple[float, float]:
        """``(s, e)`` such that the form is ``N_s(E)^(1/s) * mu(E)^e``."""
        if name == "combined":
            return self.r, 1 / self.q - 1 / self.p - 1 / self.r
        if name == "q":
            return self.q, -1 / self.p
        if name == "pprime":
            return self.pprime, -1 / self.qprime
        raise KeyError(name)


@dataclass(frozen=True)
class TestingResult:
    C2: float
    C2_q: float
    C2_pprime: float
    witness: AtomSet
    witness_q: AtomSet
    witness_pprime: AtomSet

    def to_dict(self) -> dict:
        def w(a: AtomSet):
            return {"level": a.level, "atoms": sorted(a.atom_ids)}

        return {
            "C2": self.C2,
            "C2_q": self.C2_q,
            "C2_pprime": self.C2_pprime,
            "witness": w(self.witness),
            "witness_q": w(self.witness_q),
            "witness_pprime": w(self.witness_pprime),
        }


def _value(n, m, s: float, e: float):
    # N = 0 gives 0 regardless of the (possibly negative) power of mu
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(n > 0, np.power(n, 1 / s) * np.power(m, e), 0.0)


def _level_data(space: FilteredSpace, alpha: CoefficientFamily, i: int, s: float):
    S = tail_sum(space, alpha, i)
    n = np.bincount(space.partitions[i], weights=space.leaf_weight * S ** s,
                    minlength=space.n_atoms[i])
    return n, space.atom_measure[i]


def _result(best: dict) -> TestingResult:
    return TestingResult(
        C2=best["combined"][0], C2_q=best["q"][0], C2_pprime=best["pprime"][0],
        witness=best["combined"][1], witness_q=best["q"][1], witness_pprime=best["pprime"][1],
    )


def testing_constant(space: FilteredSpace, alpha: CoefficientFamily,
                     exponents: ExponentPair) -> TestingResult:
    """Exact testing constants via single-atom maximization.

    Ties resolve to the lowest level, then the lowest atom id.
    """
    alpha.check(space)
    best = {name: (0.0, AtomSet(0, {0})) for name in _FORMS}
    for name in _FORMS:
        s, e = exponents.form(name)
        for i in range(space.n_levels):
            n, m = _level_data(space, alpha, i, s)
            vals = _value(n, m, s, e)
            a = int(np.argmax(vals))
            if vals[a] > best[name][0]:
                best[name] = (float(vals[a]), AtomSet(i, {a}))
    return _result(best)


def _subset_masks(k: int, chunk: int = 1 << 16):
    bits = np.arange(k)
    for start in range(1, 1 << k, chunk):
        ids = np.arange(start, min(start + chunk, 1 << k))
        yield ids, ((ids[:, None] >> bits) & 1).astype(float)


def brute_force_testing(space: FilteredSpace, alpha: CoefficientFamily,
                        exponents: ExponentPair) -> TestingResult:
    """Testing constants by enumerating every nonempty union of level atoms."""
    alpha.check(space)
    too_big = [i for i, k in enumerate(space.n_atoms) if k > BRUTE_FORCE_MAX_ATOMS]
    if too_big:
        raise ValueError(
            f"brute force capped at {BRUTE_FORCE_MAX_ATOMS} atoms per level; "
            f"levels {too_big} exceed it"
        )
    best = {name: (0.0, AtomSet(0, {0})) for name in _FORMS}
    for name in _FORMS:
        s, e = exponents.form(name)
        for i in range(space.n_levels):
            n, m = _level_data(space, alpha, i, s)
            for ids, masks in _subset_masks(space.n_atoms[i]):
                vals = _value(masks @ n, masks @ m, s, e)
                a = int(np.argmax(vals))
                if vals[a] > best[name][0]:
                    atoms = {b for b in range(space.n_atoms[i]) if ids[a] >> b & 1}
                    best[name] = (float(vals[a]), AtomSet(i, atoms))
    return _result(best)


def normalized_forms(space: FilteredSpace, alpha: CoefficientFamily,
                     exponents: ExponentPair, E: AtomSet) -> dict[str, float]:
    """The three forms evaluated at one set ``E`` in ``F_{E.level}``."""
    mask = E.mask(space)
    S = tail_sum(space, alpha, E.level)
    mu = integrate(space, mask)
    out = {}
    for name in _FORMS:
        s, e = exponents.form(name)
        out[name] = float(_value(integrate(space, S ** s, mask), mu, s, e))
    return out


class FootnoteCheck(NamedTuple):
    lhs: float
    rhs: float
    passed: bool


def footnote_max_identity_check(space: FilteredSpace, alpha: CoefficientFamily,
                                exponents: ExponentPair, E: AtomSet,
                                rtol: float = 1e-10) -> FootnoteCheck:
    """Compare ``max(M_q, M_p')`` with ``M_r`` where ``M_s`` is the power mean
    ``(avg_E S^s)^(1/s)``.

    Passes when the two agree to ``rtol`` and ``M_min(q,p') <= M_r``.
    """
    mask = E.mask(space)
    mu = integrate(space, mask)
    if mu <= 0:
        raise ValueError("E must have positive measure")
    S = tail_sum(space, alpha, E.level)

    def power_mean(s):
        return (integrate(space, S ** s, mask) / mu) ** (1 / s)

    m_q, m_pp, m_r = power_mean(exponents.q), power_mean(exponents.pprime), power_mean(exponents.r)
    lhs, rhs = max(m_q, m_pp), m_r
    low = min(m_q, m_pp)
    agree = abs(lhs - rhs) <= rtol * max(abs(lhs), abs(rhs))
    monotone = low <= rhs * (1 + rtol) + 1e-300
    return FootnoteCheck(lhs, rhs, bool(agree and monotone))
