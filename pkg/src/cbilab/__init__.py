# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
from typing import TYPE_CHECKING

from .classify import (
    Classification,
    Longrun,
    Polarity,
    classify,
    conditioned_subcritical_classify,
    polarity_classify,
    positive_recurrence_test,
    recurrence_classify,
    stable_family_classify,
)
from .mechanism import (
    BranchingMechanism,
    CBIModel,
    Criticality,
    DerivedFromPsi,
    GeneralImmigration,
    GeneralTriplet,
    ImmigrationMechanism,
    Linear,
    LinearDrift,
    LogTailPreset,
    LogTailVariant,
    Mixed,
    PoissonJumps,
    Quadratic,
    StableImmigration,
    StablePower,
)
from .sim import SimConfig, simulate
from .transform import (
    InvariantFnParams,
    TransformStatus,
    TransformValue,
    exponent_J,
    f_eval,
    g_eval,
    hitting_probability,
    hitting_time_laplace,
    joint_laplace,
    marginal_laplace,
    minimum_cdf,
    stationary_laplace,
    total_population_laplace,
    v_flow,
)

__all__ = [
    "BranchingMechanism",
    "ImmigrationMechanism",
    "CBIModel",
    "Criticality",
    "Linear",
    "Quadratic",
    "StablePower",
    "Mixed",
    "GeneralTriplet",
    "LinearDrift",
    "StableImmigration",
    "DerivedFromPsi",
    "PoissonJumps",
    "LogTailPreset",
    "LogTailVariant",
    "GeneralImmigration",
    "InvariantFnParams",
    "TransformStatus",
    "TransformValue",
    "exponent_J",
    "g_eval",
    "f_eval",
    "hitting_time_laplace",
    "joint_laplace",
    "total_population_laplace",
    "minimum_cdf",
    "hitting_probability",
    "v_flow",
    "marginal_laplace",
    "stationary_laplace",
    "Classification",
    "Longrun",
    "Polarity",
    "classify",
    "recurrence_classify",
    "polarity_classify",
    "positive_recurrence_test",
    "stable_family_classify",
    "conditioned_subcritical_classify",
    "SimConfig",
    "simulate",
]

if not TYPE_CHECKING:
    try:
        from ._version import version as __version__
    except ImportError:
        __version__ = "unknown version"
else:  # pragma: no cover
    __version__: str
