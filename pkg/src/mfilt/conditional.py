"""Conditional expectations, Doob's maximal function and martingale checks.

All functions accept a leaf function of shape ``(n_leaves,)`` or a batch of
shape ``(m, n_leaves)``; the leaf axis is always last.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .filtered_space import FilteredSpace

__all__ = [
    "MartingaleSequence",
    "cond_expect",
    "martingale_of",
    "doob_maximal",
    "verify_martingale",
    "is_measurable",
    "integrate",
    "inner",
    "lp_norm",
    "level_window",
]

#: One leaf function per level, entry ``i`` constant on level-``i`` atoms.
MartingaleSequence = Sequence[np.ndarray]

REL_TOL = 1e-9
ABS_FLOOR = 1e-12


def level_window(space: FilteredSpace, window=None) -> tuple[int, int]:
    """Normalize an inclusive ``(lo, hi)`` window; ``None`` means all levels."""
    if window is None:
        return 0, space.n_levels - 1
    lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValueError(f"empty level window [{lo}, {hi}]")
    if lo < 0 or hi >= space.n_levels:
        raise ValueError(f"window [{lo}, {hi}] outside levels 0..{space.n_levels - 1}")
    return lo, hi


def _atom_sums(space: FilteredSpace, h: np.ndarray, i: int) -> np.ndarray:
    part = space.partitions[i]
    k = space.n_atoms[i]
    if h.ndim == 1:
        return np.bincount(part, weights=h, minlength=k)
    out = np.zeros(h.shape[:-1] + (k,))
    np.add.at(out, (..., part), h)
    return out


def cond_expect(space: FilteredSpace, f, i: int) -> np.ndarray:
    """E[f | F_i]: the mu-average of ``f`` over each level-``i`` atom."""
    if not 0 <= i < space.n_levels:
        raise ValueError(f"level {i} outside 0..{space.n_levels - 1}")
    f = np.asarray(f, dtype=float)
    avg = _atom_sums(space, f * space.leaf_weight, i) / space.atom_measure[i]
    return avg[..., space.partitions[i]]


def martingale_of(space: FilteredSpace, f, window=None) -> np.ndarray:
    """Stack ``E_i f`` for every level in the window, shape ``(levels, ..., n)``."""
    lo, hi = level_window(space, window)
    return np.stack([cond_expect(space, f, i) for i in range(lo, hi + 1)])


def doob_maximal(space: FilteredSpace, f, window=None) -> np.ndarray:
    """Pointwise ``max_i |E_i f|`` over an inclusive level window."""
    return np.abs(martingale_of(space, f, window)).max(axis=0)


def is_measurable(space: FilteredSpace, f, i: int, rtol: float = REL_TOL,
                  atol: float = ABS_FLOOR) -> bool:
    """True when ``f`` is constant (to tolerance) on every level-``i`` atom."""
    f = np.asarray(f, dtype=float)
    part = space.partitions[i]
    k = space.n_atoms[i]
    hi = np.full(k, -np.inf)
    lo = np.full(k, np.inf)
    np.maximum.at(hi, part, f)
    np.minimum.at(lo, part, f)
    return bool(np.all(hi - lo <= atol + rtol * np.maximum(np.abs(hi), np.abs(lo))))


def verify_martingale(space: FilteredSpace, seq: MartingaleSequence,
                      rtol: float = REL_TOL, atol: float = ABS_FLOOR) -> bool:
    """Check ``seq[i] == E_i seq[j]`` for all ``i < j`` and measurability."""
    if len(seq) != space.n_levels:
        raise ValueError(f"sequence has {len(seq)} entries, space has {space.n_levels} levels")
    seq = [np.asarray(s, dtype=float) for s in seq]
    for i, s in enumerate(seq):
        if s.shape != (space.n_leaves,) or not is_measurable(space, s, i, rtol, atol):
            return False
    for j in range(space.n_levels):
        for i in range(j):
            if not np.allclose(cond_expect(space, seq[j], i), seq[i], rtol=rtol, atol=atol):
                return False
    return True


def integrate(space: FilteredSpace, f, mask=None) -> np.ndarray | float:
    """Integral of ``f`` against mu, optionally restricted to a leaf mask."""
    h = np.asarray(f, dtype=float) * space.leaf_weight
    if mask is not None:
        h = h * np.asarray(mask, dtype=bool)
    s = h.sum(axis=-1)
    return float(s) if np.ndim(s) == 0 else s


def inner(space: FilteredSpace, f, g) -> float:
    return integrate(space, np.asarray(f, dtype=float) * np.asarray(g, dtype=float))


def lp_norm(space: FilteredSpace, f, p: float):
    """``(int |f|^p dmu)^(1/p)``; ``p = inf`` gives the sup over leaves."""
    a = np.abs(np.asarray(f, dtype=float))
    if np.isinf(p):
        return a.max(axis=-1)
    return integrate(space, a ** p) ** (1.0 / p)
