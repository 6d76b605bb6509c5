"""End-to-end verification of one instance, and sweeps over many.

Every check is always present in a report with status ``"pass"``,
``"fail"`` or ``"skipped"``; slacks are relative (negative means failure).
"""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import conditional as cond
from .filtered_space import AtomSet, FilteredSpace, generate_dyadic, generate_random_tree
from .norm_estimator import NormEstimate, norm_lower_bound
from .positive_operator import CoefficientFamily, random_coefficients
from .principal_sets import (
    build_principal_tree,
    carleson_check,
    decompose_bilinear,
    maximal_cover_check,
    verify_properties,
)
from .sawyer_testing import (
    ExponentPair,
    brute_force_testing,
    footnote_max_identity_check,
    normalized_forms,
    testing_constant,
)

__all__ = [
    "CHECKS",
    "CSV_COLUMNS",
    "VerificationReport",
    "verify_instance",
    "parse_shape",
    "parse_exponents",
    "make_instance",
    "sweep",
    "sweep_csv",
    "thread_count",
]

CHECKS = (
    "martingale_tower",
    "martingale_pullout",
    "martingale_selfadjoint",
    "martingale_sequence",
    "doob_weak11",
    "doob_lp",
    "atom_reduction",
    "footnote_identity",
    "principal_slice",
    "principal_iv",
    "principal_v",
    "principal_weak11",
    "principal_structure",
    "carleson",
    "maximal_cover",
    "decomposition_identity",
    "decomposition_split",
    "easy_direction",
)

CSV_COLUMNS = (
    "index", "seed", "shape", "n_leaves", "n_levels", "p", "q",
    "C2", "C2_q", "C2_pprime", "C1_lb", "ratio", "converged", "passed",
    *CHECKS,
    "ratio_min", "ratio_median", "ratio_max",
)

# default cap on atoms per level for the automatic brute-force comparison
AUTO_BRUTE_FORCE_ATOMS = 12


@dataclass
class VerificationReport:
    instance: dict
    testing: dict
    norm: NormEstimate
    checks: dict[str, tuple[str, float | None]]
    carleson: dict = field(default_factory=dict)

    @property
    def C2(self) -> float:
        return self.testing["C2"]

    @property
    def C1_lb(self) -> float:
        return self.norm.value

    @property
    def ratio(self) -> float | None:
        return self.C1_lb / self.C2 if self.C2 > 0 else None

    @property
    def passed(self) -> bool:
        return all(status != "fail" for status, _ in self.checks.values())

    def to_dict(self) -> dict:
        ratio = self.ratio
        return {
            "instance": self.instance,
            **self.testing,
            "C1_lb": self.C1_lb,
            "ratio": "undefined" if ratio is None else ratio,
            "norm": self.norm.to_dict(),
            "carleson": self.carleson,
            "checks": {k: {"status": s, "slack": _finite(v)} for k, (s, v) in self.checks.items()},
            "passed": self.passed,
        }

    def csv_row(self, index="") -> dict:
        ratio = self.ratio
        row = {
            "index": index,
            "seed": self.instance.get("seed", ""),
            "shape": self.instance.get("shape", ""),
            "n_leaves": self.instance["n_leaves"],
            "n_levels": self.instance["n_levels"],
            "p": _num(self.instance["p"]),
            "q": _num(self.instance["q"]),
            "C2": _num(self.C2),
            "C2_q": _num(self.testing["C2_q"]),
            "C2_pprime": _num(self.testing["C2_pprime"]),
            "C1_lb": _num(self.C1_lb),
            "ratio": "undefined" if ratio is None else _num(ratio),
            "converged": str(self.norm.converged).lower(),
            "passed": str(self.passed).lower(),
            "ratio_min": "", "ratio_median": "", "ratio_max": "",
        }
        row.update({k: self.checks[k][0] for k in CHECKS})
        return row


def _finite(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(x)


def _num(x) -> str:
    return repr(float(x))


class _Checks:
    def __init__(self):
        self.results: dict[str, tuple[str, float | None]] = {}

    def record(self, name: str, slack: float):
        """Fold a slack into ``name`` (the minimum over all records wins)."""
        prev = self.results.get(name, ("pass", math.inf))[1]
        slack = min(prev, float(slack))
        self.results[name] = ("pass" if slack >= 0 else "fail", slack)

    def skip(self, name: str):
        self.results[name] = ("skipped", None)


def _rel_slack(a, b, rtol):
    """``rtol`` minus the relative gap between ``a`` and ``b``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b)).max(initial=0.0)
    if scale == 0:
        return rtol
    return rtol - float(np.abs(a - b).max()) / scale


def _martingale_checks(space, rng, ck: _Checks, n_trials: int):
    L = space.n_levels
    for _ in range(n_trials):
        f = rng.normal(size=space.n_leaves)
        g = rng.normal(size=space.n_leaves)
        i, j = sorted(rng.integers(0, L, size=2))
        ck.record("martingale_tower", _rel_slack(
            cond.cond_expect(space, cond.cond_expect(space, f, j), i),
            cond.cond_expect(space, f, i), 1e-12))
        h = cond.cond_expect(space, g, i)  # F_i-measurable multiplier
        ck.record("martingale_pullout", _rel_slack(
            cond.cond_expect(space, f * h, i), h * cond.cond_expect(space, f, i), 1e-12))
        ef, eg = cond.cond_expect(space, f, i), cond.cond_expect(space, g, i)
        a, b, c = cond.inner(space, ef, g), cond.inner(space, f, eg), cond.inner(space, ef, eg)
        scale = cond.inner(space, np.abs(f), np.abs(g)) or 1.0
        ck.record("martingale_selfadjoint",
                  1e-12 - max(abs(a - b), abs(a - c)) / scale)
        seq = cond.martingale_of(space, f)
        ck.record("martingale_sequence", 0.0 if cond.verify_martingale(space, list(seq)) else -1.0)


def _doob_checks(space, rng, ck: _Checks, n_trials: int):
    for _ in range(n_trials):
        f = rng.exponential(size=space.n_leaves) * (rng.random(space.n_leaves) < 0.7)
        fstar = cond.doob_maximal(space, f)
        total = cond.integrate(space, f)
        for lam in np.unique(fstar):
            for x in (lam, np.nextafter(lam, 0.0)):
                if x > 0:
                    lhs = x * cond.integrate(space, fstar > x)
                    ck.record("doob_weak11", (total - lhs) / max(total, 1e-300) + 1e-12)
        for p in (1.5, 2.0, 3.0):
            bound = p / (p - 1) * cond.lp_norm(space, f, p)
            if bound > 0:
                ck.record("doob_lp", (bound - cond.lp_norm(space, fstar, p)) / bound)


def verify_instance(space: FilteredSpace, alpha: CoefficientFamily, exponents: ExponentPair, *,
                    f=None, g=None, i0: int = 0, seed: int = 0, restarts: int = 8,
                    iters: int = 500, tol: float = 1e-12, brute_force: bool | None = None,
                    trials: int = 4, shape: str = "") -> VerificationReport:
    """Run every check on one (space, alpha, p, q) instance.

    ``f`` and ``g`` drive the principal-set and decomposition checks and are
    drawn at random when omitted.  ``brute_force=None`` compares against the
    exhaustive oracle only when every level has at most 12 atoms.
    """
    alpha.check(space)
    if not 0 <= i0 < space.n_levels:
        raise ValueError(f"i0={i0} outside 0..{space.n_levels - 1}")
    rng = np.random.default_rng(seed)
    ck = _Checks()
    n = space.n_leaves

    _martingale_checks(space, rng, ck, trials)
    _doob_checks(space, rng, ck, trials)

    fast = testing_constant(space, alpha, exponents)
    max_atoms = max(space.n_atoms)
    run_brute = max_atoms <= AUTO_BRUTE_FORCE_ATOMS if brute_force is None else brute_force
    if run_brute:
        slow = brute_force_testing(space, alpha, exponents)
        for a, b in ((fast.C2, slow.C2), (fast.C2_q, slow.C2_q),
                     (fast.C2_pprime, slow.C2_pprime)):
            ck.record("atom_reduction", _rel_slack(a, b, 1e-12))
    else:
        ck.skip("atom_reduction")

    for i in range(space.n_levels):
        for atom in range(space.n_atoms[i]):
            res = footnote_max_identity_check(space, alpha, exponents, AtomSet(i, {atom}))
            ck.record("footnote_identity", _rel_slack(res.lhs, res.rhs, 1e-10)
                      if res.passed else -1.0)
    forms = normalized_forms(space, alpha, exponents, fast.witness)
    ck.record("footnote_identity",
              _rel_slack(fast.C2, max(forms["q"], forms["pprime"]), 1e-10))
    ck.record("footnote_identity", _rel_slack(fast.C2, max(fast.C2_q, fast.C2_pprime), 1e-10))

    if f is None:
        f = rng.exponential(size=n) * (rng.random(n) < 0.8)
        f[rng.integers(n)] += 1.0  # keep E_i0 f nonzero somewhere
    f = np.asarray(f, dtype=float)
    if g is None:
        g = rng.exponential(size=n)
    g = np.asarray(g, dtype=float)
    carleson = {}
    if np.any(f < 0):
        raise ValueError("f must be nonnegative")
    if cond.cond_expect(space, f, i0).any():
        tree = build_principal_tree(space, f, i0)
        props = verify_properties(space, f, tree)
        for name, key in (("principal_slice", "slice"), ("principal_iv", "stop_bound"),
                          ("principal_v", "half_measure"), ("principal_weak11", "weak_11")):
            ck.record(name, props.checks[key][1])
        ck.record("principal_structure", min(props.checks["structure"][1],
                                             props.checks["tiling"][1]))
        cc = carleson_check(space, f, tree, exponents.p)
        carleson = {"sum": cc.total, "maximal_bound": cc.maximal_bound,
                    "stated_bound": cc.stated_bound, "stated_bound_holds": cc.stated_holds,
                    "n_sets": len(tree)}
        ck.record("carleson", (cc.maximal_bound - cc.total) / cc.maximal_bound + 1e-12)
        ck.record("maximal_cover", -1.0 if maximal_cover_check(space, f, tree) else 0.0)
        dec = decompose_bilinear(space, alpha, f, g, i0, exponents, tree=tree)
        ck.record("decomposition_identity", _rel_slack(dec.lhs, dec.rhs, 1e-10))
        ck.record("decomposition_split", _rel_slack(dec.split_F + dec.split_G, dec.lhs, 1e-10))
    else:
        for name in ("principal_slice", "principal_iv", "principal_v", "principal_weak11",
                     "principal_structure", "carleson", "maximal_cover",
                     "decomposition_identity", "decomposition_split"):
            ck.skip(name)

    est = norm_lower_bound(space, alpha, exponents.p, exponents.q,
                           restarts=restarts, iters=iters, tol=tol, seed=seed)
    need = max(fast.C2_q, fast.C2_pprime)
    slack = (est.value - need + 1e-9 * fast.C2) / fast.C2 if fast.C2 > 0 else (0.0 if est.value >= 0 else -1.0)
    ck.record("easy_direction", slack)

    instance = {
        "seed": seed, "shape": shape, "n_leaves": n, "n_levels": space.n_levels,
        "atoms_per_level": list(space.n_atoms), "p": exponents.p, "q": exponents.q, "i0": i0,
    }
    checks = {k: ck.results[k] for k in CHECKS}
    return VerificationReport(instance, fast.to_dict(), est, checks, carleson)


# -- sweeps ------------------------------------------------------------------

DEFAULT_SHAPES = ("dyadic:2:2", "dyadic:3:2", "dyadic:2:3", "tree:3:8",
                  "tree:4:10:log-uniform", "tree:3:12:log-uniform")
DEFAULT_EXPONENTS = ("1.5:2", "2:2", "2:3", "3:3", "1.5:3")


def parse_shape(text: str) -> tuple[str, int, int, str]:
    """``dyadic:DEPTH:BRANCHING[:WEIGHTS]`` or ``tree:LEVELS:LEAVES[:WEIGHTS]``."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or parts[0] not in ("dyadic", "tree"):
        raise ValueError(f"bad shape {text!r}; use dyadic:D:B[:w] or tree:L:N[:w]")
    weights = parts[3] if len(parts) == 4 else "unit"
    return parts[0], int(parts[1]), int(parts[2]), weights


def parse_exponents(text: str) -> ExponentPair:
    """``P:Q``."""
    try:
        p, q = (float(x) for x in text.split(":"))
    except ValueError:
        raise ValueError(f"bad exponent pair {text!r}; use P:Q") from None
    return ExponentPair(p, q)


def make_instance(shape: str, seed: int) -> tuple[FilteredSpace, CoefficientFamily]:
    kind, a, b, weights = parse_shape(shape)
    ss = np.random.SeedSequence(seed)
    s_space, s_alpha = (int(x) for x in ss.generate_state(2))
    if kind == "dyadic":
        space = generate_dyadic(a, b, weights, s_space)
    else:
        space = generate_random_tree(a, b, weights, s_space)
    return space, random_coefficients(space, s_alpha)


def thread_count() -> int:
    cap = os.environ.get("MFILT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return n


def _sweep_one(args):
    index, shape, exps, seed, opts = args
    space, alpha = make_instance(shape, seed)
    return verify_instance(space, alpha, exps, seed=seed, shape=shape, **opts)


def sweep(n_instances: int, seed: int = 0, shapes=DEFAULT_SHAPES, exponents=DEFAULT_EXPONENTS,
          **opts) -> list[VerificationReport]:
    """Verify ``n_instances`` random instances, cycling over shapes x exponents.

    Instance ``k`` uses seed ``SeedSequence([seed, k])``, so results do not
    depend on the thread count.
    """
    if not shapes or not exponents:
        raise ValueError("shape and exponent grids must be nonempty")
    exps = [e if isinstance(e, ExponentPair) else parse_exponents(e) for e in exponents]
    for s in shapes:
        parse_shape(s)
    combos = [(s, e) for e in exps for s in shapes]
    jobs = []
    for k in range(n_instances):
        shape, e = combos[k % len(combos)]
        inst_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        jobs.append((k, shape, e, inst_seed, opts))
    threads = thread_count()
    if threads <= 1 or len(jobs) <= 1:
        return [_sweep_one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_sweep_one, jobs))


def sweep_csv(reports: list[VerificationReport]) -> str:
    """CSV text: one row per report plus a ``summary`` row of C1_lb/C2 stats."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for k, rep in enumerate(reports):
        writer.writerow(rep.csv_row(k))
    ratios = [r.ratio for r in reports if r.ratio is not None]
    if reports:
        row = {c: "" for c in CSV_COLUMNS}
        row["index"] = "summary"
        row["passed"] = str(all(r.passed for r in reports)).lower()
        if ratios:
            row["ratio_min"] = _num(min(ratios))
            row["ratio_median"] = _num(statistics.median(ratios))
            row["ratio_max"] = _num(max(ratios))
        writer.writerow(row)
    return buf.getvalue()
