import numpy as np
import pytest

from mfilt.filtered_space import FilteredSpace, generate_dyadic, generate_random_tree
from mfilt.positive_operator import CoefficientFamily

# criterion -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s.split(".")[0])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def dyad4():
    """Four unit leaves: {1234}, {12|34}, singletons."""
    return FilteredSpace(np.ones(4), ([0, 0, 0, 0], [0, 0, 1, 1], [0, 1, 2, 3]))


@pytest.fixture
def dyad4_alpha(dyad4):
    """alpha_0 = 1, alpha_1 = 1 on {12} and 0 on {34}, alpha_2 = 0."""
    return CoefficientFamily.from_levels(dyad4, {0: 1.0, 1: [1.0, 0.0]})


def random_space(rng: np.random.Generator, max_leaves: int = 12, max_levels: int = 5):
    """A random dyadic or irregular space with at most ``max_leaves`` leaves."""
    weights = "unit" if rng.random() < 0.5 else "log-uniform"
    seed = int(rng.integers(2**31))
    if rng.random() < 0.3:
        depth, branching = [(1, 2), (2, 2), (3, 2), (2, 3), (1, 3), (1, 4)][rng.integers(6)]
        if branching ** depth <= max_leaves:
            return generate_dyadic(depth, branching, weights, seed)
    n_levels = int(rng.integers(1, max_levels + 1))
    n_leaves = int(rng.integers(max(n_levels, 2), max_leaves + 1))
    return generate_random_tree(n_levels, n_leaves, weights, seed)
