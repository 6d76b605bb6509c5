"""Stopping times and the principal-set forest of a nonnegative function.

Starting from a level ``i0``, the first generation slices ``{E_i0 f > 0}``
into the dyadic layers ``{2^(k-1) < E_i0 f <= 2^k}``.  For a principal set
``P`` with level ``kappa1`` and layer ``kappa2`` the stopping time ``tau_P``
is the first level at which ``E_j f`` exceeds ``2^(kappa2 + 1)``; the leaves
stopped at level ``j`` are again sliced into dyadic layers of ``E_j f``, and
each nonempty slice is a child of ``P``.  Since ``kappa1`` strictly increases
along every branch the forest is finite.

The stopping level "never" is encoded as ``n_levels``, one past the last
level, so ``i < tau`` comparisons need no special case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditional import doob_maximal, integrate, lp_norm, martingale_of
from .filtered_space import FilteredSpace
from .positive_operator import CoefficientFamily
from .sawyer_testing import ExponentPair

__all__ = [
    "PrincipalSet",
    "PrincipalTree",
    "PropertyReport",
    "Decomposition",
    "CarlesonCheck",
    "dyadic_slice",
    "stopping_time",
    "build_principal_tree",
    "verify_properties",
    "carleson_sum",
    "carleson_check",
    "maximal_cover_check",
    "decompose_bilinear",
    "UNSET",
]

UNSET = -1


def dyadic_slice(v) -> np.ndarray:
    """The integer ``k`` with ``2^(k-1) < v <= 2^k``, for ``v > 0``.

    Exact: read off the binary exponent, exact powers of two go to the lower k.
    """
    v = np.asarray(v, dtype=float)
    if np.any(~(v > 0)) or np.any(~np.isfinite(v)):
        raise ValueError("dyadic_slice needs finite positive values")
    m, e = np.frexp(v)
    return np.where(m == 0.5, e - 1, e).astype(np.int64)


def _pow2(k) -> np.ndarray | float:
    return np.ldexp(1.0, k)


@dataclass(eq=False)
class PrincipalSet:
    leaves: np.ndarray
    kappa1: int
    kappa2: int
    tau: np.ndarray
    generation: int = 1
    children: list["PrincipalSet"] = field(default_factory=list)

    def mask(self, n_leaves: int) -> np.ndarray:
        m = np.zeros(n_leaves, dtype=bool)
        m[self.leaves] = True
        return m

    def measure(self, space: FilteredSpace) -> float:
        return float(space.leaf_weight[self.leaves].sum())

    def to_dict(self) -> dict:
        return {
            "leaves": self.leaves.tolist(),
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "tau": self.tau.tolist(),
            "children": [c.to_dict() for c in self.children],
        }


@dataclass(eq=False)
class PrincipalTree:
    roots: list[PrincipalSet]
    generations: list[list[PrincipalSet]]
    i0: int
    n_levels: int

    @property
    def all_sets(self) -> list[PrincipalSet]:
        return [P for gen in self.generations for P in gen]

    def __len__(self):
        return sum(len(g) for g in self.generations)

    def to_dict(self) -> dict:
        return {
            "i0": self.i0,
            "n_levels": self.n_levels,
            "tau_infinity": self.n_levels,
            "n_sets": len(self),
            "roots": [P.to_dict() for P in self.roots],
        }


def _check_nonnegative(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    return f


def _leaf_index(P, n: int) -> np.ndarray:
    P = np.asarray(P)
    if P.dtype == bool:
        if P.shape != (n,):
            raise ValueError("leaf mask has wrong length")
        return np.flatnonzero(P)
    return np.unique(P.astype(np.int64))


def stopping_time(space: FilteredSpace, f, P, kappa1: int, kappa2: int,
                  martingale: np.ndarray | None = None) -> np.ndarray:
    """First level ``j >= kappa1`` with ``E_j f > 2^(kappa2+1)``, per leaf of ``P``.

    Leaves never stopped get ``n_levels``; leaves outside ``P`` get :data:`UNSET`.
    """
    L, n = space.n_levels, space.n_leaves
    if martingale is None:
        martingale = martingale_of(space, _check_nonnegative(f))
    idx = _leaf_index(P, n)
    tau = np.full(n, UNSET, dtype=np.int64)
    tau[idx] = L
    hit = martingale[kappa1:, idx] > _pow2(kappa2 + 1)
    any_hit = hit.any(axis=0)
    tau[idx[any_hit]] = kappa1 + np.argmax(hit[:, any_hit], axis=0)
    return tau


def _slices(leaves: np.ndarray, values: np.ndarray):
    ks = dyadic_slice(values)
    for k in np.unique(ks):
        yield int(k), leaves[ks == k]


def build_principal_tree(space: FilteredSpace, f, i0: int = 0) -> PrincipalTree:
    """Construct every generation of principal sets of ``f`` from level ``i0``."""
    f = _check_nonnegative(f)
    if not 0 <= i0 < space.n_levels:
        raise ValueError(f"i0={i0} outside 0..{space.n_levels - 1}")
    mart = martingale_of(space, f)
    support = np.flatnonzero(mart[i0] > 0)
    if support.size == 0:
        raise ValueError("E_i0 f vanishes identically; no principal sets")
    L = space.n_levels

    def make(leaves, k1, k2, gen):
        tau = stopping_time(space, None, leaves, k1, k2, martingale=mart)[leaves]
        return PrincipalSet(leaves, k1, k2, tau, gen)

    roots = [make(leaves, i0, k, 1) for k, leaves in _slices(support, mart[i0, support])]
    generations = [roots]
    while True:
        nxt = []
        for P in generations[-1]:
            for j in np.unique(P.tau[P.tau < L]):
                stopped = P.leaves[P.tau == j]
                for l, leaves in _slices(stopped, mart[j, stopped]):
                    Q = make(leaves, int(j), l, P.generation + 1)
                    P.children.append(Q)
                    nxt.append(Q)
        if not nxt:
            break
        generations.append(nxt)
    return PrincipalTree(roots, generations, i0, L)


@dataclass
class PropertyReport:
    """Outcome of :func:`verify_properties`.

    ``checks`` maps a check name to ``(passed, min_slack)``; slack is relative
    and negative exactly when the check fails.
    """

    checks: dict[str, tuple[bool, float]]
    violations: list[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def verify_properties(space: FilteredSpace, f, tree: PrincipalTree,
                      rtol: float = 1e-12) -> PropertyReport:
    """Check slicing, the stopping bound, the halving of measure, and tiling."""
    f = _check_nonnegative(f)
    mart = martingale_of(space, f)
    n, L = space.n_leaves, space.n_levels
    violations: list[str] = []
    slack = {k: np.inf for k in ("slice", "stop_bound", "half_measure", "weak_11",
                                 "structure", "tiling")}

    def note(name, value, msg):
        slack[name] = min(slack[name], value)
        if value < 0:
            violations.append(msg)

    for P in tree.all_sets:
        tag = f"gen {P.generation} set (kappa1={P.kappa1}, kappa2={P.kappa2})"
        v = mart[P.kappa1, P.leaves]
        lo, hi = _pow2(P.kappa2 - 1), _pow2(P.kappa2)
        s = min(float(np.min(v - lo)), float(np.min(hi - v))) / hi
        if np.any(v <= lo) or np.any(v > hi):
            s = min(s, -1.0)
        note("slice", s, f"{tag}: E_kappa1 f leaves its dyadic layer")
        atoms = np.unique(space.partitions[P.kappa1][P.leaves])
        if np.isin(space.partitions[P.kappa1], atoms).sum() != P.leaves.size:
            note("structure", -1.0, f"{tag}: not a union of level-kappa1 atoms")

        # before stopping, E_j f stays at or below 2^(kappa2+1)
        cap = _pow2(P.kappa2 + 1)
        levels = np.arange(L)[:, None]
        running = (levels >= P.kappa1) & (levels < P.tau[None, :])
        if running.any():
            worst = float(np.max(np.where(running, mart[:, P.leaves], -np.inf)))
            note("stop_bound", (cap - worst) / cap, f"{tag}: E_j f > 2^(kappa2+1) before tau")
        if np.any(P.tau <= P.kappa1):
            note("stop_bound", -1.0, f"{tag}: tau <= kappa1")

        mu_P = P.measure(space)
        mu_ch = sum(Q.measure(space) for Q in P.children)
        note("half_measure", (mu_P / 2 - mu_ch) / mu_P,
             f"{tag}: children measure {mu_ch} > mu(P)/2 = {mu_P / 2}")
        bound = integrate(space, f, P.mask(n)) / _pow2(P.kappa2 + 1)
        if mu_ch > 0:
            note("weak_11", (bound - mu_ch) / max(bound, mu_ch) + rtol,
                 f"{tag}: children measure {mu_ch} > 2^(-kappa2-1) int_P f = {bound}")

        seen = np.zeros(n, dtype=bool)
        Pmask = P.mask(n)
        for Q in P.children:
            if not (Q.kappa1 > P.kappa1 and Q.kappa2 > P.kappa2 + 1):
                note("structure", -1.0, f"{tag}: child indices do not increase")
            if not np.all(Pmask[Q.leaves]) or np.any(seen[Q.leaves]):
                note("structure", -1.0, f"{tag}: children not disjoint subsets of P")
            seen[Q.leaves] = True
            if not np.all(P.tau[np.searchsorted(P.leaves, Q.leaves)] == Q.kappa1):
                note("structure", -1.0, f"{tag}: child not inside {{tau_P = kappa1(Q)}}")

    for g, gen in enumerate(tree.generations, start=1):
        count = np.zeros(n, dtype=np.int64)
        for P in gen:
            count[P.leaves] += 1
        if count.max(initial=0) > 1:
            note("structure", -1.0, f"generation {g} sets overlap")
    support = mart[tree.i0] > 0
    root_cover = np.zeros(n, dtype=np.int64)
    for P in tree.roots:
        root_cover[P.leaves] += 1
    if not np.array_equal(root_cover, support.astype(np.int64)):
        note("structure", -1.0, "roots do not tile {E_i0 f > 0}")

    # each (level i >= i0, support leaf) lies in exactly one P with kappa1 <= i < tau_P
    cover = np.zeros((L, n), dtype=np.int64)
    for P in tree.all_sets:
        for x, t in zip(P.leaves, P.tau):
            cover[P.kappa1:t, x] += 1
    want = np.zeros((L, n), dtype=np.int64)
    want[tree.i0:, support] = 1
    if not np.array_equal(cover, want):
        note("tiling", -1.0, "sets P cap {kappa1 <= i < tau_P} do not tile the support")

    checks = {k: (bool(v >= 0), float(v)) for k, v in slack.items()}
    return PropertyReport(checks, violations)


def carleson_sum(space: FilteredSpace, tree: PrincipalTree, p: float) -> float:
    """``sum_P mu(P) 2^(p (kappa2(P) - 1))``."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    return float(sum(P.measure(space) * 2.0 ** (p * (P.kappa2 - 1)) for P in tree.all_sets))


@dataclass(frozen=True)
class CarlesonCheck:
    total: float
    maximal_bound: float
    stated_bound: float

    @property
    def passed(self) -> bool:
        """Against twice the p-th power of the maximal function's norm."""
        return self.total <= self.maximal_bound * (1 + 1e-12)

    @property
    def stated_holds(self) -> bool:
        """Informational: against twice ``||f||_p^p`` itself."""
        return self.total <= self.stated_bound * (1 + 1e-12)


def carleson_check(space: FilteredSpace, f, tree: PrincipalTree, p: float) -> CarlesonCheck:
    window = (tree.i0, space.n_levels - 1)
    fstar = doob_maximal(space, f, window)
    return CarlesonCheck(
        carleson_sum(space, tree, p),
        2 * lp_norm(space, fstar, p) ** p,
        2 * lp_norm(space, f, p) ** p,
    )


def maximal_cover_check(space: FilteredSpace, f, tree: PrincipalTree,
                        lambdas=None) -> list[str]:
    """At each ``lam`` (default: every ``2^(kappa2-1)``) check the covering step.

    The maximal sets of ``{P : 2^(kappa2-1) > lam}`` must be disjoint, lie in
    ``{f* > lam}``, and carry at least half the total measure of the family.
    Returns violation messages.
    """
    f = _check_nonnegative(f)
    fstar = doob_maximal(space, f, (tree.i0, space.n_levels - 1))
    sets = tree.all_sets
    if lambdas is None:
        lambdas = sorted({float(_pow2(P.kappa2 - 1)) for P in sets})
        # also just below each threshold, where the family is largest
        lambdas = lambdas + [np.nextafter(x, 0.0) for x in lambdas]
    out = []
    parent_in: dict[int, bool] = {}
    for lam in lambdas:
        fam = [P for P in sets if _pow2(P.kappa2 - 1) > lam]
        members = {id(P) for P in fam}
        # along a branch kappa2 increases, so a maximal set is one whose parent is not in the family
        for P in sets:
            for Q in P.children:
                parent_in[id(Q)] = id(P) in members
        maximal = [P for P in fam if not parent_in.get(id(P), False)]
        cover = np.zeros(space.n_leaves, dtype=np.int64)
        for P in maximal:
            cover[P.leaves] += 1
        if cover.max(initial=0) > 1:
            out.append(f"lambda={lam}: maximal sets overlap")
        if np.any((cover > 0) & ~(fstar > lam)):
            out.append(f"lambda={lam}: maximal sets leave {{f* > lambda}}")
        total = sum(P.measure(space) for P in fam)
        top = sum(P.measure(space) for P in maximal)
        if total > 2 * top * (1 + 1e-12):
            out.append(f"lambda={lam}: family measure {total} > 2 * {top}")
        if top > integrate(space, fstar > lam) * (1 + 1e-12):
            out.append(f"lambda={lam}: maximal sets exceed mu(f* > lambda)")
    return out


@dataclass
class Decomposition:
    lhs: float
    rhs: float
    terms: list[tuple[int, int, int, float]]  # (generation, kappa1, kappa2, value)
    split_F: float
    split_G: float
    tree: PrincipalTree

    def identity_holds(self, rtol: float = 1e-10) -> bool:
        scale = max(abs(self.lhs), abs(self.rhs))
        return abs(self.lhs - self.rhs) <= rtol * scale

    def split_holds(self, rtol: float = 1e-10) -> bool:
        scale = max(abs(self.lhs), abs(self.split_F) + abs(self.split_G))
        return abs(self.split_F + self.split_G - self.lhs) <= rtol * scale


def decompose_bilinear(space: FilteredSpace, alpha: CoefficientFamily, f, g, i0: int,
                       exponents: ExponentPair, tree: PrincipalTree | None = None) -> Decomposition:
    """Resum ``sum_{i>=i0} int alpha_i (E_i f)(E_i g)`` over the principal sets of ``f``.

    ``lhs`` is the plain sum restricted to ``{E_i0 f > 0}``; ``rhs`` sums, for
    each principal set ``P``, the integrals over ``P cap {i < tau_P}`` for
    ``i >= kappa1(P)``.  ``split_F``/``split_G`` split ``lhs`` along
    ``F_i = {(E_i g)^q' <= (E_i f)^p}`` and its complement.
    """
    f = _check_nonnegative(f)
    g = _check_nonnegative(g)
    if tree is None:
        tree = build_principal_tree(space, f, i0)
    L = space.n_levels
    mf = martingale_of(space, f)
    mg = martingale_of(space, g)
    a = np.stack([alpha.leaf(space, i) for i in range(L)])
    # density[i, x] = alpha_i (E_i f)(E_i g) w  at leaf x
    density = a * mf * mg * space.leaf_weight
    support = mf[i0] > 0
    levels = np.arange(L)[:, None]
    active = (levels >= i0) & support[None, :]
    lhs = float(density[active].sum())

    in_F = mg ** exponents.qprime <= mf ** exponents.p
    split_F = float(density[active & in_F].sum())
    split_G = float(density[active & ~in_F].sum())

    terms = []
    for P in tree.all_sets:
        run = (levels >= P.kappa1) & (levels < P.tau[None, :])
        terms.append((P.generation, P.kappa1, P.kappa2, float(density[:, P.leaves][run].sum())))
    rhs = float(sum(t[3] for t in terms))
    return Decomposition(lhs, rhs, terms, split_F, split_G, tree)
