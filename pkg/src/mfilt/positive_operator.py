"""The positive operator ``T f = sum_i alpha_i E_i f`` and its relatives."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .conditional import cond_expect, integrate, level_window
from .filtered_space import FilteredSpace, SpaceFormatError, _decimal, _parse_decimal

__all__ = [
    "CoefficientFamily",
    "apply",
    "bilinear",
    "tail_sum",
    "operator_matrix",
    "random_coefficients",
    "load_alpha",
    "save_alpha",
]


@dataclass(frozen=True, eq=False)
class CoefficientFamily:
    """``alpha_i`` for each level, stored as one value per level-``i`` atom."""

    per_atom: tuple[np.ndarray, ...]

    def __post_init__(self):
        vals = tuple(np.array(a, dtype=float) for a in self.per_atom)
        for i, a in enumerate(vals):
            if a.ndim != 1:
                raise ValueError(f"alpha level {i}: expected a 1-d array")
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError(f"alpha level {i}: values must be finite and nonnegative")
            a.setflags(write=False)
        object.__setattr__(self, "per_atom", vals)

    @classmethod
    def zeros(cls, space: FilteredSpace) -> "CoefficientFamily":
        return cls(tuple(np.zeros(k) for k in space.n_atoms))

    @classmethod
    def from_levels(cls, space: FilteredSpace, levels: dict) -> "CoefficientFamily":
        """Build from ``{level: per-atom values or scalar}``; missing levels are 0."""
        out = []
        for i, k in enumerate(space.n_atoms):
            v = levels.get(i, 0.0)
            out.append(np.broadcast_to(np.asarray(v, dtype=float), (k,)).copy())
        return cls(tuple(out))

    def check(self, space: FilteredSpace) -> None:
        if len(self.per_atom) != space.n_levels:
            raise ValueError(f"alpha has {len(self.per_atom)} levels, space has {space.n_levels}")
        for i, (a, k) in enumerate(zip(self.per_atom, space.n_atoms)):
            if a.shape != (k,):
                raise ValueError(f"alpha level {i}: {a.shape[0]} values for {k} atoms")

    def leaf(self, space: FilteredSpace, i: int) -> np.ndarray:
        """``alpha_i`` as a leaf function."""
        return self.per_atom[i][space.partitions[i]]

    def scaled(self, c: float) -> "CoefficientFamily":
        return CoefficientFamily(tuple(a * c for a in self.per_atom))

    def is_zero(self) -> bool:
        return all(not a.any() for a in self.per_atom)


def apply(space: FilteredSpace, alpha: CoefficientFamily, f, window=None) -> np.ndarray:
    """``sum_{i in window} alpha_i E_i f`` pointwise (batches allowed)."""
    lo, hi = level_window(space, window)
    f = np.asarray(f, dtype=float)
    out = np.zeros(np.shape(f))
    for i in range(lo, hi + 1):
        a = alpha.leaf(space, i)
        if a.any():
            out += a * cond_expect(space, f, i)
    return out


def bilinear(space: FilteredSpace, alpha: CoefficientFamily, f, g, window=None) -> float:
    """``int sum_i alpha_i (E_i f)(E_i g) dmu``."""
    lo, hi = level_window(space, window)
    total = 0.0
    for i in range(lo, hi + 1):
        a = alpha.leaf(space, i)
        if a.any():
            total += integrate(space, a * cond_expect(space, f, i) * cond_expect(space, g, i))
    return total


def tail_sum(space: FilteredSpace, alpha: CoefficientFamily, i: int, hi: int | None = None) -> np.ndarray:
    """``S_i = sum_{j >= i} alpha_j`` as a leaf function (up to level ``hi``)."""
    lo, hi = level_window(space, (i, space.n_levels - 1 if hi is None else hi))
    out = np.zeros(space.n_leaves)
    for j in range(lo, hi + 1):
        out += alpha.leaf(space, j)
    return out


def operator_matrix(space: FilteredSpace, alpha: CoefficientFamily, window=None) -> np.ndarray:
    """Dense matrix ``M`` with ``(T f)[x] = (M @ f)[x]``.

    ``M[x, y] = sum_i alpha_i(x) 1[y ~_i x] w_y / mu(atom_i(x))``.
    """
    lo, hi = level_window(space, window)
    n = space.n_leaves
    m = np.zeros((n, n))
    w = space.leaf_weight
    for i in range(lo, hi + 1):
        a = alpha.leaf(space, i)
        if not a.any():
            continue
        part = space.partitions[i]
        same = part[:, None] == part[None, :]
        m += (a / space.atom_measure[i][part])[:, None] * same * w[None, :]
    return m


def random_coefficients(space: FilteredSpace, seed=None, zero_prob: float = 0.3,
                        scale: float = 1.0) -> CoefficientFamily:
    """Random nonnegative coefficients; each atom value is 0 with ``zero_prob``."""
    rng = np.random.default_rng(seed)
    out = []
    for k in space.n_atoms:
        v = rng.exponential(scale, size=k)
        v[rng.random(k) < zero_prob] = 0.0
        out.append(v)
    return CoefficientFamily(tuple(out))


def alpha_to_dict(alpha: CoefficientFamily) -> dict:
    return {
        "alpha": [
            {"level": i, "per_atom": [_decimal(x) for x in a]}
            for i, a in enumerate(alpha.per_atom)
            if a.any()
        ]
    }


def alpha_from_dict(space: FilteredSpace, data) -> CoefficientFamily:
    if not isinstance(data, dict) or "alpha" not in data:
        raise SpaceFormatError("missing key 'alpha'")
    entries = data["alpha"]
    if not isinstance(entries, list):
        raise SpaceFormatError("'alpha' must be a list")
    levels: dict[int, np.ndarray] = {}
    for n, e in enumerate(entries):
        if not isinstance(e, dict) or "level" not in e or "per_atom" not in e:
            raise SpaceFormatError(f"alpha[{n}]: need keys 'level' and 'per_atom'")
        i = e["level"]
        if not isinstance(i, int) or not 0 <= i < space.n_levels:
            raise SpaceFormatError(f"alpha[{n}]: level {i!r} outside 0..{space.n_levels - 1}")
        if i in levels:
            raise SpaceFormatError(f"alpha[{n}]: duplicate level {i}")
        vals = e["per_atom"]
        if not isinstance(vals, list) or len(vals) != space.n_atoms[i]:
            raise SpaceFormatError(
                f"alpha[{n}]: level {i} has {space.n_atoms[i]} atoms, got "
                f"{len(vals) if isinstance(vals, list) else type(vals).__name__}"
            )
        v = np.array([_parse_decimal(x, f"alpha[{n}].per_atom") for x in vals])
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise SpaceFormatError(f"alpha[{n}]: values must be finite and nonnegative")
        levels[i] = v
    return CoefficientFamily.from_levels(space, levels)


def load_alpha(space: FilteredSpace, path) -> CoefficientFamily:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceFormatError(f"{path}: invalid JSON ({exc})") from None
    return alpha_from_dict(space, data)


def save_alpha(alpha: CoefficientFamily, path) -> None:
    Path(path).write_text(json.dumps(alpha_to_dict(alpha), indent=1) + "\n", encoding="utf-8")
