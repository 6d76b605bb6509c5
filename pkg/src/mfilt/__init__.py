"""Positive operators on finite filtered measure spaces.

Conditional expectations along a finite filtration, the operator
``T f = sum_i alpha_i E_i f``, its testing constants, the principal-set
(stopping-time) forest, and lower bounds for its ``L^p -> L^q`` norm.
"""

from .conditional import cond_expect, doob_maximal, verify_martingale
from .filtered_space import (
    AtomSet,
    FilteredSpace,
    generate_dyadic,
    generate_random_tree,
    load,
    measure,
    save,
    validate,
)
from .norm_estimator import NormEstimate, exhaustive_norm, norm_lower_bound, power_step
from .positive_operator import CoefficientFamily, apply, bilinear, tail_sum
from .principal_sets import (
    build_principal_tree,
    carleson_sum,
    decompose_bilinear,
    stopping_time,
    verify_properties,
)
from .report import VerificationReport, sweep, verify_instance
from .sawyer_testing import (
    ExponentPair,
    TestingResult,
    brute_force_testing,
    footnote_max_identity_check,
    testing_constant,
)

__all__ = [
    "AtomSet",
    "CoefficientFamily",
    "ExponentPair",
    "FilteredSpace",
    "NormEstimate",
    "TestingResult",
    "VerificationReport",
    "apply",
    "bilinear",
    "brute_force_testing",
    "build_principal_tree",
    "carleson_sum",
    "cond_expect",
    "decompose_bilinear",
    "doob_maximal",
    "exhaustive_norm",
    "footnote_max_identity_check",
    "generate_dyadic",
    "generate_random_tree",
    "load",
    "measure",
    "norm_lower_bound",
    "power_step",
    "save",
    "stopping_time",
    "sweep",
    "tail_sum",
    "testing_constant",
    "validate",
    "verify_instance",
    "verify_martingale",
    "verify_properties",
]

__version__ = "0.1.0"
