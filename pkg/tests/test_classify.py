# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import json
import math
import warnings

import pytest
from hypothesis import given, settings

from cbilab.classify import (
    Answer,
    Classification,
    Longrun,
    Method,
    Polarity,
    classify,
    conditioned_subcritical_classify,
    polarity_classify,
    positive_recurrence_test,
    recurrence_classify,
    stable_family_classify,
)
from cbilab.errors import BoundaryCaseWarning, CbiLabDomainError, TransformDomainError
from cbilab.mechanism import (
    CBIModel,
    Criticality,
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
from tests.custom_strategies import cir_models, models


def cir(b: float, sigma2: float = 2.0, gamma: float = 0.0) -> CBIModel:
    return CBIModel(Quadratic(sigma2=sigma2, gamma=gamma), LinearDrift(b=b))


def stable(alpha: float, beta: float, d: float = 1.0, dprime: float = 1.0) -> CBIModel:
    return CBIModel(StablePower(d=d, alpha=alpha), StableImmigration(dprime=dprime, beta=beta))


@pytest.mark.parametrize(
    "model, longrun",
    [
        pytest.param(cir(0.5), Longrun.NULL_RECURRENT, id="cir-recurrent"),
        pytest.param(cir(1.5), Longrun.TRANSIENT, id="cir-transient"),
        pytest.param(cir(1.0, gamma=1.0), Longrun.POSITIVE_RECURRENT, id="cir-subcritical"),
        pytest.param(stable(1.5, 0.7), Longrun.POSITIVE_RECURRENT, id="stable-above"),
        pytest.param(stable(1.5, 0.3), Longrun.TRANSIENT, id="stable-below"),
        pytest.param(stable(1.5, 0.5), Longrun.TRANSIENT, id="stable-edge-large-ratio"),
        pytest.param(
            CBIModel(Mixed(gamma=-1.0, sigma2=2.0), LinearDrift(b=5.0)),
            Longrun.TRANSIENT,
            id="supercritical",
        ),
        pytest.param(
            CBIModel(Linear(gamma=1.0), LinearDrift(b=1.0)),
            Longrun.POSITIVE_RECURRENT,
            id="subcritical-linear",
        ),
        pytest.param(
            CBIModel(Linear(gamma=1.0), LogTailPreset(variant=LogTailVariant.ITERATED)),
            Longrun.NULL_RECURRENT,
            id="null-recurrent-loglog",
        ),
    ],
)
def test_recurrence(model, longrun):
    assert recurrence_classify(model) is longrun


def test_critical_cir_on_the_boundary_warns():
    with pytest.warns(BoundaryCaseWarning):
        assert recurrence_classify(cir(1.0)) is Longrun.NULL_RECURRENT


def test_log_tail_with_unknown_constant_is_undetermined():
    model = CBIModel(Linear(gamma=1.0), LogTailPreset(variant=LogTailVariant.SIMPLE))
    result = classify(model)
    assert result.longrun is Longrun.UNDETERMINED
    assert any("universal constant" in note for note in result.notes)


def test_pure_branching_without_immigration_is_undetermined():
    result = classify(CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=0.0)))
    assert result.longrun is Longrun.UNDETERMINED
    assert result.notes


@pytest.mark.parametrize(
    "model, polar",
    [
        pytest.param(cir(1.5), Polarity.POLAR, id="cir-2b>s2"),
        pytest.param(cir(0.5), Polarity.NOT_POLAR, id="cir-2b<s2"),
        pytest.param(cir(3.0, sigma2=4.0), Polarity.POLAR, id="cir-scaled"),
        pytest.param(stable(1.5, 0.3), Polarity.NOT_POLAR, id="stable-below"),
        pytest.param(stable(1.5, 0.7), Polarity.POLAR, id="stable-above"),
        pytest.param(
            CBIModel(Linear(gamma=2.0), LinearDrift(b=1.0)), Polarity.POLAR, id="finite-d"
        ),
        pytest.param(
            CBIModel(Mixed(gamma=-1.0, sigma2=2.0), LinearDrift(b=0.0)),
            Polarity.NOT_POLAR,
            id="supercritical-cb",
        ),
    ],
)
def test_polarity(model, polar):
    assert polarity_classify(model) is polar


def test_stable_boundary_ratio_is_polar():
    with pytest.warns(BoundaryCaseWarning):
        assert polarity_classify(stable(1.5, 0.5, dprime=0.5)) is Polarity.POLAR


def test_cir_at_the_critical_drift():
    with pytest.warns(BoundaryCaseWarning):
        result = classify(cir(1.0))
    assert result.longrun is Longrun.NULL_RECURRENT
    assert result.boundary_polar is Polarity.POLAR
    assert "0 is polar but liminf X_t = 0" in result.notes
    assert not result.hits_boundary_infinitely_often


@pytest.mark.parametrize(
    "args, longrun, polar",
    [
        pytest.param((1.5, 0.7, 1.0, 1.0), Longrun.POSITIVE_RECURRENT, Polarity.POLAR, id="above"),
        pytest.param((1.2, 0.1, 1.0, 3.0), Longrun.TRANSIENT, Polarity.NOT_POLAR, id="below"),
        # β = 0.5 < α - 1 = 1 places this one below the edge as well
        pytest.param((2.0, 0.5, 1.0, 1.0), Longrun.TRANSIENT, Polarity.NOT_POLAR, id="alpha-2"),
        pytest.param((1.5, 0.5, 1.0, 1.0), Longrun.TRANSIENT, Polarity.POLAR, id="edge-large"),
        pytest.param((1.5, 0.5, 2.0, 0.5), Longrun.NULL_RECURRENT, Polarity.NOT_POLAR, id="edge-small"),
    ],
)
def test_stable_family_table(args, longrun, polar):
    result = stable_family_classify(*args)
    assert result.longrun is longrun
    assert result.boundary_polar is polar
    assert result.criticality is Criticality.CRITICAL


def test_stable_family_boundary_ratio():
    with pytest.warns(BoundaryCaseWarning):
        result = stable_family_classify(1.5, 0.5, 1.0, 0.5)
    assert result.longrun is Longrun.NULL_RECURRENT
    assert result.boundary_polar is Polarity.POLAR
    assert "0 is polar but liminf X_t = 0" in result.notes


_ALPHAS = (1.2, 1.4, 1.5, 1.8, 2.0)
_BETAS = (0.1, 0.3, 0.5, 0.7, 0.9)


@pytest.mark.parametrize("alpha", _ALPHAS)
@pytest.mark.parametrize("beta", _BETAS + ("edge",))
@pytest.mark.parametrize("dprime", [0.1, 1.0])
def test_stable_family_agrees_with_generic_classifiers(alpha, beta, dprime):
    if beta == "edge":
        beta = alpha - 1.0
        if not 0 < beta < 1:
            pytest.skip("no edge inside (0, 1)")
    table = stable_family_classify(alpha, beta, 1.0, dprime)
    model = stable(alpha, beta, dprime=dprime)
    assert recurrence_classify(model) is table.longrun
    assert polarity_classify(model) is table.boundary_polar


def test_stable_family_rejects_invalid_parameters():
    with pytest.raises(CbiLabDomainError):
        stable_family_classify(2.5, 0.5, 1.0, 1.0)
    with pytest.raises(CbiLabDomainError):
        stable_family_classify(1.5, 1.5, 1.0, 1.0)


@pytest.mark.parametrize(
    "model, answer",
    [
        pytest.param(CBIModel(Linear(gamma=1.0), LinearDrift(b=2.0)), Answer.YES, id="linear"),
        pytest.param(
            CBIModel(Linear(gamma=1.0), LogTailPreset()), Answer.NO, id="infinite-log-moment"
        ),
        pytest.param(cir(1.0), Answer.NO, id="critical-cir"),
        pytest.param(stable(1.5, 0.7), Answer.YES, id="stable"),
    ],
)
def test_positive_recurrence(model, answer):
    assert positive_recurrence_test(model) is answer


def test_positive_recurrence_is_only_defined_below_supercriticality():
    with pytest.raises(CbiLabDomainError):
        positive_recurrence_test(CBIModel(Mixed(gamma=-1.0, sigma2=2.0), LinearDrift(b=1.0)))


@pytest.mark.parametrize(
    "model",
    [
        pytest.param(CBIModel(Linear(gamma=1.0), LinearDrift(b=1.0)), id="drift"),
        pytest.param(CBIModel(Linear(gamma=1.0), PoissonJumps(b=0.5, rate=1.0, size=2.0)), id="jumps"),
        pytest.param(CBIModel(Linear(gamma=1.0), LogTailPreset()), id="log-tail"),
        pytest.param(cir(0.5, gamma=1.0), id="subcritical-cir"),
    ],
)
def test_small_immigration_does_not_change_subcritical_recurrence(model):
    full = recurrence_classify(model)
    large = recurrence_classify(model, large_jumps_only=True)
    assert full.is_recurrent is large.is_recurrent


@pytest.mark.parametrize(
    "psi",
    [
        Quadratic(sigma2=1.0, gamma=0.5),
        Mixed(gamma=1.0, sigma2=1.0, d=1.0, alpha=1.5),
        StablePower(d=1.0, alpha=1.5),
    ],
    ids=["quadratic", "mixed", "critical-stable"],
)
def test_conditioned_subcritical_criterion(psi):
    if psi.criticality() is not Criticality.SUBCRITICAL:
        with pytest.raises(TransformDomainError):
            conditioned_subcritical_classify(psi)
        return
    specialized = conditioned_subcritical_classify(psi)
    assert specialized is True
    assert recurrence_classify(CBIModel(psi, DerivedFromPsi(psi))).is_recurrent


def test_classification_records_its_evidence():
    result = classify(cir(0.5))
    assert result.criticality is Criticality.CRITICAL
    assert math.isinf(result.d)
    assert result.v == 0.0
    assert result.hits_boundary_infinitely_often
    assert all(e.method is Method.ANALYTIC for e in result.evidence)
    report = json.loads(json.dumps(result.to_dict()))
    assert report["longrun"] == "null_recurrent"
    assert report["boundary_polar"] == "not_polar"
    assert report["d"] == "inf"


def test_supercritical_must_be_transient():
    with pytest.raises(AssertionError):
        Classification(
            criticality=Criticality.SUPERCRITICAL,
            longrun=Longrun.NULL_RECURRENT,
            boundary_polar=Polarity.POLAR,
            v=0.0,
            d=math.inf,
        )


@settings(max_examples=30, deadline=None)
@given(model=cir_models)
def test_cir_classification_follows_the_drift_ratio(model):
    ratio = 2 * model.phi.b / model.psi.sigma2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryCaseWarning)
        result = classify(model)
    if model.psi.gamma > 0:
        assert result.longrun is Longrun.POSITIVE_RECURRENT
    elif ratio > 1 + 1e-9:
        assert result.longrun is Longrun.TRANSIENT
    elif ratio < 1 - 1e-9:
        assert result.longrun is Longrun.NULL_RECURRENT
    if ratio > 1 + 1e-9:
        assert result.boundary_polar is Polarity.POLAR
    elif ratio < 1 - 1e-9:
        assert result.boundary_polar is Polarity.NOT_POLAR


@settings(max_examples=30, deadline=None)
@given(model=models)
def test_verdicts_are_consistent(model):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryCaseWarning)
        result = classify(model)
    if model.criticality is Criticality.SUPERCRITICAL:
        assert result.longrun is Longrun.TRANSIENT
    if math.isfinite(model.d):
        assert result.boundary_polar is Polarity.POLAR
