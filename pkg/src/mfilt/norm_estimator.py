"""Lower bounds for the ``L^p -> L^q`` norm of the positive operator.

The search runs the nonlinear power map

    f  <-  normalize_p( (T (T f)^(q-1))^(1/(p-1)) )

which, for a positive operator that is self-adjoint in ``L^2(mu)``, never
decreases ``||T f||_q / ||f||_p`` (two applications of Hoelder's inequality).
Nothing guarantees the global maximizer is reached, so every value here is a
lower bound; the multistart includes the indicators of all atoms, which makes
the bound dominate the indicator-tested constants.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .conditional import lp_norm
from .filtered_space import FilteredSpace
from .positive_operator import CoefficientFamily, apply, operator_matrix
from .sawyer_testing import ExponentPair

__all__ = [
    "NormEstimate",
    "ZeroImageError",
    "objective",
    "power_step",
    "norm_lower_bound",
    "exhaustive_norm",
    "EXHAUSTIVE_MAX_LEAVES",
]

EXHAUSTIVE_MAX_LEAVES = 5


class ZeroImageError(ArithmeticError):
    """``T f`` vanishes identically, so the power map is undefined."""


@dataclass
class NormEstimate:
    value: float
    witness_f: np.ndarray
    iterations: int
    restarts: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "C1_lb": self.value,
            "witness": self.witness_f.tolist(),
            "restarts": self.restarts,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def objective(space: FilteredSpace, alpha: CoefficientFamily, f, p: float, q: float) -> float:
    """``||T f||_q / ||f||_p``."""
    nf = lp_norm(space, f, p)
    if nf == 0:
        raise ValueError("f must be nonzero")
    return float(lp_norm(space, apply(space, alpha, f), q) / nf)


def _pnorm(F, w, p):
    return (np.abs(F) ** p @ w) ** (1.0 / p)


def _normalize(F, w, p):
    n = _pnorm(F, w, p)
    return F / np.where(n > 0, n, 1.0)[..., None]


def _power(F, e):
    # scale rows to max 1 first; the map is homogeneous and this avoids overflow
    top = F.max(axis=-1, keepdims=True)
    return (F / np.where(top > 0, top, 1.0)) ** e


def _step(M, w, F, p, q):
    TF = F @ M.T
    U = _power(TF, q - 1) @ M.T
    return _normalize(_power(U, 1.0 / (p - 1)), w, p)


def _objective_batch(M, w, F, p, q):
    nf = _pnorm(F, w, p)
    return np.where(nf > 0, _pnorm(F @ M.T, w, q) / np.where(nf > 0, nf, 1.0), 0.0)


def power_step(space: FilteredSpace, alpha: CoefficientFamily, f, p: float, q: float) -> np.ndarray:
    """One application of the power map to a nonnegative ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or not f.any():
        raise ValueError("f must be nonnegative and nonzero")
    Tf = apply(space, alpha, f)
    if not Tf.any():
        raise ZeroImageError("T f vanishes identically")
    U = apply(space, alpha, _power(Tf, q - 1))
    return _normalize(_power(U, 1.0 / (p - 1)), space.leaf_weight, p)


def _multistart(M, w, F, p, q, iters, tol):
    """Iterate every row of ``F``; return (values, iterates, steps taken, converged)."""
    F = _normalize(np.clip(F, 0.0, None), w, p)
    vals = _objective_batch(M, w, F, p, q)
    done = vals <= 0  # T f = 0: nothing to iterate
    steps = 0
    for _ in range(iters):
        act = np.flatnonzero(~done)
        if act.size == 0:
            break
        steps += 1
        G = _step(M, w, F[act], p, q)
        new = _objective_batch(M, w, G, p, q)
        gain = (new - vals[act]) / vals[act]
        better = new > vals[act]
        F[act[better]] = G[better]
        vals[act[better]] = new[better]
        done[act[gain < tol]] = True
    return vals, F, steps, done


def _indicator_starts(space: FilteredSpace) -> np.ndarray:
    rows = [np.ones(space.n_leaves)]
    for i in range(space.n_levels):
        part = space.partitions[i]
        rows.extend((part == a).astype(float) for a in range(space.n_atoms[i]))
    return np.array(rows)


def norm_lower_bound(space: FilteredSpace, alpha: CoefficientFamily, p: float, q: float,
                     restarts: int = 8, iters: int = 500, tol: float = 1e-12,
                     seed: int | None = 0) -> NormEstimate:
    """Multistart power iteration for ``sup ||T f||_q / ||f||_p``.

    Starts are the constant function, the indicator of every atom at every
    level, and ``restarts`` random nonnegative vectors.  The same starts are
    also run on the adjoint problem ``L^q' -> L^p'`` (equal norm because T is
    self-adjoint) and each adjoint iterate ``g`` is carried back to the primal
    side as ``(T g)^(p'-1)``, which loses no objective value.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    exps = ExponentPair(p, q)
    alpha.check(space)
    rng = np.random.default_rng(seed)
    w = space.leaf_weight
    M = operator_matrix(space, alpha)
    starts = np.vstack([_indicator_starts(space), rng.random((restarts, space.n_leaves))])

    adj = exps.adjoint()
    _, G, adj_steps, _ = _multistart(M, w, starts.copy(), adj.p, adj.q, iters, tol)
    back = _power(G @ M.T, exps.pprime - 1)
    back[~back.any(axis=1)] = 1.0
    F0 = np.vstack([starts, back])
    vals, F, steps, done = _multistart(M, w, F0, p, q, iters, tol)

    best = int(np.argmax(vals))
    witness = F[best]
    if not witness.any():
        witness = _normalize(np.ones((1, space.n_leaves)), w, p)[0]
    witness = witness / lp_norm(space, witness, p)
    return NormEstimate(
        value=objective(space, alpha, witness, p, q),
        witness_f=witness,
        iterations=steps + adj_steps,
        restarts=F0.shape[0],
        converged=bool(done[best]),
    )


def exhaustive_norm(space: FilteredSpace, alpha: CoefficientFamily, p: float, q: float,
                    resolution: int = 24, polish_iters: int = 2000) -> float:
    """Grid search over the nonnegative simplex, polished by power iteration.

    The grid holds every ``f`` with integer entries summing to ``resolution``.
    The result is a lower bound whose gap shrinks as the grid is refined.
    """
    n = space.n_leaves
    if n > EXHAUSTIVE_MAX_LEAVES:
        raise ValueError(f"exhaustive search limited to {EXHAUSTIVE_MAX_LEAVES} leaves, got {n}")
    ExponentPair(p, q)
    alpha.check(space)
    w = space.leaf_weight
    M = operator_matrix(space, alpha)
    if not M.any():
        return 0.0
    # stars and bars: bar positions -> part sizes
    bars = np.array(list(itertools.combinations(range(resolution + n - 1), n - 1)), dtype=np.int64)
    bars = bars.reshape(-1, n - 1)
    edges = np.hstack([np.full((bars.shape[0], 1), -1), bars,
                       np.full((bars.shape[0], 1), resolution + n - 1)])
    grid = (np.diff(edges, axis=1) - 1).astype(float)
    vals = _objective_batch(M, w, grid, p, q)
    best = int(np.argmax(vals))
    polished, _, _, _ = _multistart(M, w, grid[best:best + 1].copy(), p, q, polish_iters, 0.0)
    return float(max(vals[best], polished[0]))
