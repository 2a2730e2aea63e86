# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import hypothesis.strategies as st

from cbilab.mechanism import (
    BranchingMechanism,
    CBIModel,
    ImmigrationMechanism,
    Linear,
    LinearDrift,
    Mixed,
    PoissonJumps,
    Quadratic,
    StableImmigration,
    StablePower,
)

__all__ = [
    "positive",
    "branching_mechanisms",
    "subcritical_mechanisms",
    "immigration_mechanisms",
    "cir_models",
    "models",
]


def positive(lo: float = 0.1, hi: float = 5.0) -> st.SearchStrategy[float]:
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


linears = st.builds(Linear, gamma=positive())
quadratics = st.builds(Quadratic, sigma2=positive(), gamma=positive(0.0, 3.0))
stable_powers = st.builds(StablePower, d=positive(), alpha=positive(1.1, 2.0))
mixed = st.builds(
    Mixed,
    gamma=positive(-2.0, 2.0),
    sigma2=positive(0.1, 3.0),
    d=positive(0.0, 2.0),
    alpha=positive(1.1, 1.9),
)

branching_mechanisms: st.SearchStrategy[BranchingMechanism] = st.one_of(
    linears, quadratics, stable_powers, mixed
)

subcritical_mechanisms: st.SearchStrategy[BranchingMechanism] = st.one_of(
    linears, st.builds(Quadratic, sigma2=positive(), gamma=positive(0.2, 3.0))
)

immigration_mechanisms: st.SearchStrategy[ImmigrationMechanism] = st.one_of(
    st.builds(LinearDrift, b=positive(0.0, 3.0)),
    st.builds(StableImmigration, dprime=positive(), beta=positive(0.1, 0.9)),
    st.builds(PoissonJumps, b=positive(0.0, 1.0), rate=positive(), size=positive()),
)

cir_models: st.SearchStrategy[CBIModel] = st.builds(
    CBIModel,
    psi=st.builds(Quadratic, sigma2=positive(0.5, 3.0), gamma=positive(0.0, 1.0)),
    phi=st.builds(LinearDrift, b=positive(0.1, 3.0)),
)

models: st.SearchStrategy[CBIModel] = st.builds(
    CBIModel, psi=branching_mechanisms, phi=immigration_mechanisms
)
