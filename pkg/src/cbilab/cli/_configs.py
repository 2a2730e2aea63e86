# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""Structured configs for the command line, registered in a `ZenStore`.

The ``model`` group holds the model catalog; ``CbiLabConf`` is the top-level
config that every command shares.
"""
from hydra_zen import ZenStore, builds, make_config

from cbilab.mechanism import (
    CBIModel,
    DerivedFromPsi,
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
from cbilab.sim import Scheme, SimConfig

__all__ = [
    "store",
    "model_store",
    "MODEL_PRESETS",
    "GridConf",
    "QuadConf",
    "SimConf",
    "VerifyConf",
    "CbiLabConf",
    "COMMANDS",
    "LAPLACE_KINDS",
]

COMMANDS = ("classify", "laplace", "simulate", "verify")
LAPLACE_KINDS = ("hitting", "joint", "total", "marginal", "minimum")

store = ZenStore(name="cbilab", deferred_hydra_store=True)
model_store = store(group="model")

LinearConf = builds(Linear, populate_full_signature=True)
QuadraticConf = builds(Quadratic, populate_full_signature=True)
StablePowerConf = builds(StablePower, populate_full_signature=True)
MixedConf = builds(Mixed, populate_full_signature=True)
LinearDriftConf = builds(LinearDrift, populate_full_signature=True)
StableImmigrationConf = builds(StableImmigration, populate_full_signature=True)
PoissonJumpsConf = builds(PoissonJumps, populate_full_signature=True)
LogTailConf = builds(LogTailPreset, populate_full_signature=True)


def _model(psi, phi):
    return builds(CBIModel, psi=psi, phi=phi)


MODEL_PRESETS = {
    "cir_recurrent": _model(
        QuadraticConf(sigma2=2.0, gamma=0.0), LinearDriftConf(b=0.5)
    ),
    "cir_critical_polar": _model(
        QuadraticConf(sigma2=2.0, gamma=0.0), LinearDriftConf(b=1.0)
    ),
    "cir_transient": _model(
        QuadraticConf(sigma2=2.0, gamma=0.0), LinearDriftConf(b=1.5)
    ),
    "conditioned_critical": _model(
        QuadraticConf(sigma2=1.0, gamma=0.0),
        builds(DerivedFromPsi, psi=QuadraticConf(sigma2=1.0, gamma=0.0)),
    ),
    "supercritical_cb": _model(
        MixedConf(gamma=-1.0, sigma2=2.0, d=0.0, alpha=1.5), LinearDriftConf(b=0.0)
    ),
    "stable_pair": _model(
        StablePowerConf(d=1.0, alpha=1.5), StableImmigrationConf(dprime=1.0, beta=0.7)
    ),
    "bounded_variation": _model(
        LinearConf(gamma=1.0), PoissonJumpsConf(b=0.5, rate=1.0, size=1.0)
    ),
    "null_recurrent_loglog": _model(
        LinearConf(gamma=1.0), LogTailConf(variant=LogTailVariant.ITERATED)
    ),
    "log_tail_simple": _model(
        LinearConf(gamma=1.0), LogTailConf(variant=LogTailVariant.SIMPLE, alpha=1.0)
    ),
}

for _name, _conf in MODEL_PRESETS.items():
    model_store(_conf, name=_name)

GridConf = make_config(
    x=[2.0],
    a=[1.0],
    lam=[1.0],
    mu=[0.0],
    t=[1.0],
    q=[1.0],
)

QuadConf = make_config(theta=None)

SimConf = make_config(
    config=builds(
        SimConfig,
        populate_full_signature=True,
        scheme=Scheme.EXACT_CIR,
        dt=1e-3,
        horizon=20.0,
        path_count=2000,
    ),
    x0=None,
    estimands=["hitting"],
    path_dump=None,
)

VerifyConf = make_config(scale=1.0, perturb=1.0)

CbiLabConf = make_config(
    hydra_defaults=["_self_", {"model": "cir_recurrent"}],
    command="classify",
    kind="hitting",
    model=None,
    grid=GridConf,
    quad=QuadConf,
    sim=SimConf,
    verify=VerifyConf,
    out=None,
    seed=0,
    workers=1,
    tol=1e-10,
    filter=None,
)

store(CbiLabConf, name="cbilab")
