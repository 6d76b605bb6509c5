"""Finite filtered measure spaces.

A space is a finite set of leaves (the atoms of the finest sigma-algebra),
each carrying a positive mass, together with a chain of partitions
``levels[0], ..., levels[L-1]`` where every partition refines the previous
one.  Level ``i`` generates the sigma-algebra ``F_i``; a function is
``F_i``-measurable exactly when it is constant on the atoms of level ``i``.

Partitions are stored as integer arrays ``atom_of_leaf`` so that all
averaging reduces to ``np.bincount``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "FilteredSpace",
    "AtomSet",
    "SpaceFormatError",
    "InvalidSpaceError",
    "validate",
    "measure",
    "generate_dyadic",
    "generate_random_tree",
    "load",
    "save",
    "load_function",
    "save_function",
    "WEIGHT_MODES",
]

WEIGHT_MODES = ("unit", "log-uniform")


class SpaceFormatError(ValueError):
    """Raised when a space or function file cannot be parsed."""


class InvalidSpaceError(ValueError):
    """Raised when a parsed space violates a structural invariant."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True, eq=False)
class FilteredSpace:
    """Leaf masses plus a chain of refining partitions.

    Construction does not validate; use :func:`validate` (the generators and
    :func:`load` always return valid spaces).
    """

    leaf_weight: np.ndarray
    partitions: tuple[np.ndarray, ...]

    def __post_init__(self):
        w = np.array(self.leaf_weight, dtype=float)
        parts = tuple(np.array(p, dtype=np.int64) for p in self.partitions)
        w.setflags(write=False)
        for p in parts:
            p.setflags(write=False)
        object.__setattr__(self, "leaf_weight", w)
        object.__setattr__(self, "partitions", parts)

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_weight.shape[0])

    @property
    def n_levels(self) -> int:
        return len(self.partitions)

    @cached_property
    def n_atoms(self) -> tuple[int, ...]:
        return tuple(int(p.max()) + 1 if p.size else 0 for p in self.partitions)

    @cached_property
    def atom_measure(self) -> tuple[np.ndarray, ...]:
        """Per level, the mass of every atom (indexed by atom id)."""
        return tuple(
            np.bincount(p, weights=self.leaf_weight, minlength=k)
            for p, k in zip(self.partitions, self.n_atoms)
        )

    @property
    def total_measure(self) -> float:
        return float(self.leaf_weight.sum())

    def atom_leaves(self, level: int, atom: int) -> np.ndarray:
        return np.flatnonzero(self.partitions[level] == atom)

    def scaled(self, c: float) -> "FilteredSpace":
        """Same filtration with every mass multiplied by ``c``."""
        return FilteredSpace(self.leaf_weight * c, self.partitions)

    def __eq__(self, other):
        if not isinstance(other, FilteredSpace):
            return NotImplemented
        return (
            np.array_equal(self.leaf_weight, other.leaf_weight)
            and self.n_levels == other.n_levels
            and all(np.array_equal(a, b) for a, b in zip(self.partitions, other.partitions))
        )

    __hash__ = None


@dataclass(frozen=True)
class AtomSet:
    """A set in ``F_level``, given as a union of level atoms."""

    level: int
    atom_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "atom_ids", frozenset(int(a) for a in self.atom_ids))

    def mask(self, space: FilteredSpace) -> np.ndarray:
        if not 0 <= self.level < space.n_levels:
            raise ValueError(f"level {self.level} outside 0..{space.n_levels - 1}")
        k = space.n_atoms[self.level]
        bad = [a for a in self.atom_ids if not 0 <= a < k]
        if bad:
            raise ValueError(f"unknown atom id(s) {sorted(bad)} at level {self.level}")
        return np.isin(space.partitions[self.level], list(self.atom_ids))


def validate(space: FilteredSpace) -> list[str]:
    """Return a description of every violated invariant (empty when valid)."""
    out: list[str] = []
    n = space.n_leaves
    w = space.leaf_weight
    if n < 1:
        out.append("space has no leaves")
    if w.ndim != 1:
        out.append("leaf_weight must be one-dimensional")
        return out
    for leaf in np.flatnonzero(~(np.isfinite(w) & (w > 0))):
        out.append(f"positivity: leaf {leaf} has weight {w[leaf]!r}")
    if space.n_levels < 1:
        out.append("space has no levels")
    for i, part in enumerate(space.partitions):
        if part.shape != (n,):
            out.append(f"level {i}: atom_of_leaf has length {part.shape}, expected {n}")
            continue
        if part.size and part.min() < 0:
            out.append(f"level {i}: negative atom id")
            continue
        used = np.unique(part)
        if used.size and not np.array_equal(used, np.arange(used.size)):
            missing = sorted(set(range(int(used.max()) + 1)) - set(used.tolist()))
            out.append(f"level {i}: atom ids not contiguous, empty atoms {missing}")
    for i in range(space.n_levels - 1):
        coarse, fine = space.partitions[i], space.partitions[i + 1]
        if coarse.shape != (n,) or fine.shape != (n,):
            continue
        # each fine atom must sit inside exactly one coarse atom
        pairs = np.unique(np.stack([fine, coarse]), axis=1)
        fine_ids, counts = np.unique(pairs[0], return_counts=True)
        for a in fine_ids[counts > 1]:
            out.append(
                f"refinement: level {i + 1} atom {a} meets several level {i} atoms"
            )
    return out


LeafSet = Union[AtomSet, np.ndarray, Sequence[int], Iterable[int]]


def measure(space: FilteredSpace, s: LeafSet) -> float:
    """mu(S) for an :class:`AtomSet`, a boolean leaf mask, or leaf indices."""
    if isinstance(s, AtomSet):
        return float(space.leaf_weight[s.mask(space)].sum())
    arr = np.asarray(list(s) if not isinstance(s, np.ndarray) else s)
    if arr.dtype == bool:
        if arr.shape != (space.n_leaves,):
            raise ValueError("leaf mask has wrong length")
        return float(space.leaf_weight[arr].sum())
    if arr.size == 0:
        return 0.0
    idx = np.unique(arr.astype(np.int64))
    if idx.min() < 0 or idx.max() >= space.n_leaves:
        raise ValueError("leaf index out of range")
    return float(space.leaf_weight[idx].sum())


def _weights(n: int, weight_mode: str, rng: np.random.Generator) -> np.ndarray:
    if weight_mode == "unit":
        return np.ones(n)
    if weight_mode == "log-uniform":
        return 10.0 ** rng.uniform(-3.0, 3.0, size=n)
    raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}, got {weight_mode!r}")


def _relabel(part: np.ndarray) -> np.ndarray:
    """Renumber atom ids 0..k-1 in order of first appearance along the leaves."""
    _, first, inv = np.unique(part, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.ravel()]


def generate_dyadic(depth: int, branching: int = 2, weight_mode: str = "unit",
                    seed: int | None = None) -> FilteredSpace:
    """Regular ``branching``-adic tree with ``depth + 1`` levels.

    Level 0 is trivial and level ``depth`` consists of singletons, so
    ``generate_dyadic(2, 2)`` has four leaves split as {all}, {01|23}, singletons.
    """
    if depth < 1 or branching < 2:
        raise ValueError("need depth >= 1 and branching >= 2")
    n = branching ** depth
    rng = np.random.default_rng(seed)
    leaves = np.arange(n)
    parts = tuple(leaves // branching ** (depth - i) for i in range(depth + 1))
    return FilteredSpace(_weights(n, weight_mode, rng), parts)


def generate_random_tree(n_levels: int, n_leaves: int, weight_mode: str = "unit",
                         seed: int | None = None, max_children: int = 3) -> FilteredSpace:
    """Random refining chain of partitions with irregular atom sizes.

    Level 0 has one or two atoms.  Every later level splits a random subset of
    the atoms of the previous level into 2..``max_children`` nonempty pieces;
    leaves are shuffled first, so atoms are not intervals in leaf order.
    """
    if n_levels < 1 or n_leaves < 1:
        raise ValueError("need n_levels >= 1 and n_leaves >= 1")
    if n_leaves < n_levels:
        raise ValueError(f"n_leaves ({n_leaves}) must be >= n_levels ({n_levels})")
    if max_children < 2:
        raise ValueError("max_children must be >= 2")
    rng = np.random.default_rng(seed)
    w = _weights(n_leaves, weight_mode, rng)
    perm = rng.permutation(n_leaves)

    # work in permuted order: atoms are contiguous runs [start, stop)
    k0 = 1 if n_leaves == 1 or rng.random() < 0.5 else 2
    cuts = _random_cuts(rng, 0, n_leaves, k0)
    runs = list(zip(cuts[:-1], cuts[1:]))
    parts = [_runs_to_partition(runs, perm, n_leaves)]
    for _ in range(1, n_levels):
        new_runs = []
        for a, b in runs:
            size = b - a
            if size >= 2 and rng.random() < 0.7:
                k = int(rng.integers(2, min(size, max_children) + 1))
                c = _random_cuts(rng, a, b, k)
                new_runs.extend(zip(c[:-1], c[1:]))
            else:
                new_runs.append((a, b))
        runs = new_runs
        parts.append(_runs_to_partition(runs, perm, n_leaves))
    return FilteredSpace(w, tuple(_relabel(p) for p in parts))


def _random_cuts(rng: np.random.Generator, a: int, b: int, k: int) -> list[int]:
    inner = sorted(rng.choice(np.arange(a + 1, b), size=k - 1, replace=False).tolist()) if k > 1 else []
    return [a, *inner, b]


def _runs_to_partition(runs, perm: np.ndarray, n: int) -> np.ndarray:
    part = np.empty(n, dtype=np.int64)
    for atom, (a, b) in enumerate(runs):
        part[perm[a:b]] = atom
    return part


# -- serialization ---------------------------------------------------------

def _decimal(x: float) -> str:
    # repr is the shortest string that round-trips to the same double
    return repr(float(x))


def _parse_decimal(s, what: str) -> float:
    if not isinstance(s, str):
        raise SpaceFormatError(f"{what}: expected a decimal string, got {type(s).__name__}")
    try:
        return float(s)
    except ValueError:
        raise SpaceFormatError(f"{what}: not a decimal number: {s!r}") from None


def space_to_dict(space: FilteredSpace) -> dict:
    return {
        "n_leaves": space.n_leaves,
        "leaf_weights": [_decimal(x) for x in space.leaf_weight],
        "levels": [{"atom_of_leaf": p.tolist()} for p in space.partitions],
    }


def space_from_dict(data) -> FilteredSpace:
    if not isinstance(data, dict):
        raise SpaceFormatError("space file must hold a JSON object")
    for key in ("n_leaves", "leaf_weights", "levels"):
        if key not in data:
            raise SpaceFormatError(f"missing key {key!r}")
    n = data["n_leaves"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise SpaceFormatError("'n_leaves' must be a positive integer")
    weights = data["leaf_weights"]
    if not isinstance(weights, list) or len(weights) != n:
        raise SpaceFormatError(f"'leaf_weights' must be a list of {n} decimal strings")
    w = [_parse_decimal(x, f"leaf_weights[{k}]") for k, x in enumerate(weights)]
    levels = data["levels"]
    if not isinstance(levels, list) or not levels:
        raise SpaceFormatError("'levels' must be a nonempty list")
    parts = []
    for i, lev in enumerate(levels):
        if not isinstance(lev, dict) or "atom_of_leaf" not in lev:
            raise SpaceFormatError(f"levels[{i}]: missing key 'atom_of_leaf'")
        a = lev["atom_of_leaf"]
        if (not isinstance(a, list) or len(a) != n
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in a)):
            raise SpaceFormatError(f"levels[{i}].atom_of_leaf must be {n} integers")
        parts.append(a)
    space = FilteredSpace(np.array(w), tuple(parts))
    problems = validate(space)
    if problems:
        raise InvalidSpaceError(problems)
    return space


def load(path) -> FilteredSpace:
    """Read and validate a space file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceFormatError(f"{path}: invalid JSON ({exc})") from None
    return space_from_dict(data)


def save(space: FilteredSpace, path) -> None:
    Path(path).write_text(json.dumps(space_to_dict(space), indent=1) + "\n", encoding="utf-8")


def function_to_list(values) -> list[str]:
    return [_decimal(x) for x in np.asarray(values, dtype=float)]


def function_from_list(data, n_leaves: int | None = None) -> np.ndarray:
    if not isinstance(data, list):
        raise SpaceFormatError("function file must hold a JSON array of decimal strings")
    f = np.array([_parse_decimal(x, f"value[{k}]") for k, x in enumerate(data)])
    if n_leaves is not None and f.shape[0] != n_leaves:
        raise SpaceFormatError(f"function has {f.shape[0]} values, space has {n_leaves} leaves")
    if not np.all(np.isfinite(f)):
        raise SpaceFormatError("function values must be finite")
    return f


def load_function(path, n_leaves: int | None = None) -> np.ndarray:
    """Read a leaf-function file (JSON array of decimal strings)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpaceFormatError(f"{path}: invalid JSON ({exc})") from None
    return function_from_list(data, n_leaves)


def save_function(values, path) -> None:
    Path(path).write_text(json.dumps(function_to_list(values)) + "\n", encoding="utf-8")
