# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings

from cbilab.errors import RecurrentModelError, TransformDomainError
from cbilab.mechanism import (
    CBIModel,
    DerivedFromPsi,
    Linear,
    LinearDrift,
    Mixed,
    Quadratic,
)
from cbilab.transform import (
    InvariantFnParams,
    TransformStatus,
    cb_f_lambda_simplified,
    exponent_J,
    f_eval,
    g_eval,
    hitting_probability,
    hitting_time_laplace,
    joint_laplace,
    marginal_laplace,
    minimum_cdf,
    stationary_laplace,
    supercritical_cb_hit_probability,
    total_population_laplace,
    v_flow,
)

CB = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=0.0))
CIR_RECURRENT = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=0.5))
CIR_POLAR = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=1.0))
CIR_TRANSIENT = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=1.5))
HALF = Quadratic(sigma2=1.0)
CONDITIONED = CBIModel(HALF, DerivedFromPsi(HALF))
SUPER = Mixed(gamma=-1.0, sigma2=2.0)


def deterministic(gamma: float, b: float) -> CBIModel:
    """X_t = v + (x - v) e^{-γt}: every hitting functional is explicit."""
    return CBIModel(Linear(gamma=gamma), LinearDrift(b=b))


def test_exponent_of_cir_is_logarithmic():
    assert exponent_J(CIR_POLAR, InvariantFnParams(theta=1.0), math.e) == pytest.approx(
        1.0, abs=1e-10
    )
    assert exponent_J(CIR_POLAR, InvariantFnParams(theta=1.0), 1 / math.e) == pytest.approx(
        -1.0, abs=1e-10
    )


def test_exponent_vanishes_without_immigration():
    assert exponent_J(CB, InvariantFnParams(theta=1.0), 5.0) == pytest.approx(0.0, abs=1e-14)


def test_exponent_rejects_points_below_the_root():
    with pytest.raises(TransformDomainError):
        exponent_J(CB, InvariantFnParams(mu=4.0), 1.5)


@pytest.mark.parametrize("z", [0.5, 1.0, 3.0])
def test_g_without_immigration(z):
    assert g_eval(CB, InvariantFnParams(theta=1.0), z) == pytest.approx(z**-2, rel=1e-10)


def test_boundary_vanishing_near_the_root():
    params = InvariantFnParams(lam=1.0, mu=4.0)
    psi = CIR_POLAR.psi
    values = [
        (psi.psi(2.0 + h) - 4.0) * g_eval(CIR_POLAR, params, 2.0 + h)
        for h in (1e-1, 1e-2, 1e-3, 1e-4)
    ]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-2 * values[0]


def test_f_diverges_for_recurrent_critical_cb():
    result = f_eval(CB, InvariantFnParams(theta=1.0), 1.0)
    assert result.status is TransformStatus.DIVERGED
    assert math.isinf(result.value)


def test_f_of_transient_cir_matches_gamma_integral():
    # J(z) = 1.5 log z, so f₀(x) = ∫ e^{-xz} z^{-1/2} dz = √(π/x)
    result = f_eval(CIR_TRANSIENT, InvariantFnParams(theta=1.0), 2.0)
    assert result.ok
    assert result.value == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)


def test_f_rejects_points_below_v():
    with pytest.raises(TransformDomainError):
        f_eval(deterministic(1.0, 1.0), InvariantFnParams(lam=1.0), 0.5)


@pytest.mark.parametrize("lam", [0.25, 1.0, 3.0])
@pytest.mark.parametrize("gamma, b", [(1.0, 0.0), (2.0, 1.0), (0.5, 0.25)])
def test_hitting_laplace_of_deterministic_flow(gamma, b, lam):
    model = deterministic(gamma, b)
    v = model.v
    x, a = v + 2.0, v + 0.5
    expected = ((a - v) / (x - v)) ** (lam / gamma)
    result = hitting_time_laplace(model, x, a, lam)
    assert result.ok
    assert result.value == pytest.approx(expected, rel=1e-7)


@pytest.mark.parametrize("lam, mu", [(1.0, 0.5), (0.3, 2.0)])
def test_joint_laplace_of_deterministic_flow(lam, mu):
    gamma, b = 2.0, 1.0
    model = deterministic(gamma, b)
    v = model.v
    x, a = 3.0, 1.0
    # ∫₀^σ X ds = vσ + (x - a)/γ
    expected = ((a - v) / (x - v)) ** ((lam + mu * v) / gamma) * math.exp(
        -mu * (x - a) / gamma
    )
    assert joint_laplace(model, x, a, lam, mu).value == pytest.approx(expected, rel=1e-7)


def test_total_population_of_deterministic_flow():
    gamma, b, mu = 2.0, 1.0, 1.5
    model = deterministic(gamma, b)
    v, x, a = model.v, 3.0, 1.0
    expected = ((a - v) / (x - v)) ** (mu * v / gamma) * math.exp(-mu * (x - a) / gamma)
    assert total_population_laplace(model, x, a, mu).value == pytest.approx(
        expected, rel=1e-7
    )


@pytest.mark.parametrize("model", [CIR_POLAR, CIR_TRANSIENT], ids=["b=1", "b=1.5"])
def test_polar_boundary_is_never_hit(model):
    result = hitting_time_laplace(model, 1.0, 0.0, 1.0)
    assert result.value == 0.0
    assert result.status is TransformStatus.POLAR_BOUNDARY


def test_nonpolar_boundary_is_hit():
    result = hitting_time_laplace(CIR_RECURRENT, 1.0, 0.0, 1.0)
    assert result.ok
    assert 0.0 < result.value < 1.0


def test_recurrent_hitting_laplace_tends_to_one():
    values = [
        hitting_time_laplace(CIR_RECURRENT, 2.0, 1.0, lam).value
        for lam in (1e-1, 1e-3, 1e-6)
    ]
    assert values[0] < values[1] < values[2]
    assert values[-1] > 0.999


def test_hitting_laplace_vanishes_for_large_lambda():
    assert hitting_time_laplace(CIR_RECURRENT, 1.1, 1.0, 1e4).value < 1e-3


@pytest.mark.parametrize("theta", [0.5, 1.0, 3.0, 10.0])
def test_hitting_laplace_does_not_depend_on_theta(theta):
    reference = hitting_time_laplace(CIR_RECURRENT, 2.0, 1.0, 0.5).value
    value = hitting_time_laplace(CIR_RECURRENT, 2.0, 1.0, 0.5, theta=theta).value
    assert value == pytest.approx(reference, rel=1e-9)


def test_joint_laplace_without_occupation_is_the_hitting_laplace():
    joint = joint_laplace(CIR_RECURRENT, 2.0, 1.0, 0.7, 0.0).value
    hit = hitting_time_laplace(CIR_RECURRENT, 2.0, 1.0, 0.7).value
    assert joint == pytest.approx(hit, rel=1e-12)


@pytest.mark.parametrize(
    "model, x, a, mu, expected",
    [
        pytest.param(CBIModel(HALF, LinearDrift(0.0)), 2.0, 1.0, 2.0, math.exp(-2), id="cb"),
        pytest.param(CONDITIONED, 2.0, 1.0, 2.0, 0.5 * math.exp(-2), id="conditioned"),
        pytest.param(CONDITIONED, 3.0, 0.5, 0.5, math.exp(-2.5) / 6, id="conditioned-2"),
    ],
)
def test_total_population(model, x, a, mu, expected):
    result = total_population_laplace(model, x, a, mu)
    assert result.value == pytest.approx(expected, rel=1e-7)


def test_total_population_rejects_zero_mu():
    with pytest.raises(TransformDomainError):
        total_population_laplace(CB, 2.0, 1.0, 0.0)


def test_joint_laplace_approaches_total_population_as_lambda_vanishes():
    expected = math.exp(-1.0)
    near = joint_laplace(CB, 2.0, 1.0, 1e-8, 1.0).value
    nearer = joint_laplace(CB, 2.0, 1.0, 1e-9, 1.0).value
    assert near == pytest.approx(expected, rel=1e-6)
    assert abs(nearer - expected) <= abs(near - expected) + 1e-12


@pytest.mark.parametrize("x, a", [(2.0, 1.0), (1.0, 0.25), (4.0, 3.0)])
def test_minimum_of_conditioned_critical_cb_is_uniform(x, a):
    assert minimum_cdf(CONDITIONED, x, a).value == pytest.approx(a / x, rel=1e-7)


def test_minimum_of_supercritical_cb():
    model = CBIModel(SUPER, LinearDrift(0.0))
    assert minimum_cdf(model, 2.0, 1.0).value == pytest.approx(math.exp(-1.0), rel=1e-7)
    assert minimum_cdf(model, 2.0, 0.0).value == pytest.approx(math.exp(-2.0), rel=1e-12)


def test_minimum_of_transient_cir():
    # P_x(I ≤ a) = (a/x)^{2b/σ² - 1} for the transient CIR
    assert minimum_cdf(CIR_TRANSIENT, 2.0, 0.5).value == pytest.approx(0.5, rel=1e-7)


@pytest.mark.parametrize("model", [CIR_RECURRENT, CIR_POLAR, CB, deterministic(1.0, 1.0)])
def test_minimum_rejects_recurrent_models(model):
    with pytest.raises(RecurrentModelError):
        minimum_cdf(model, 3.0, 2.0)


def test_hitting_probability():
    assert hitting_probability(CIR_RECURRENT, 3.0, 1.0).value == 1.0
    assert hitting_probability(CONDITIONED, 2.0, 1.0).value == pytest.approx(0.5, rel=1e-7)


@pytest.mark.parametrize(
    "mech, x, a, expected",
    [
        (SUPER, 3.0, 1.0, math.exp(-2.0)),
        (SUPER, 2.0, 2.0, 1.0),
        (Mixed(gamma=-1.0, sigma2=4.0), 2.0, 0.0, math.exp(-1.0)),
    ],
)
def test_supercritical_hit_probability(mech, x, a, expected):
    assert supercritical_cb_hit_probability(mech, x, a) == pytest.approx(expected, rel=1e-12)


def test_supercritical_hit_probability_rejects_critical_mechanisms():
    with pytest.raises(TransformDomainError):
        supercritical_cb_hit_probability(HALF, 2.0, 1.0)


def test_simplified_cb_form_matches_hitting_laplace():
    psi = CB.psi
    ratio = cb_f_lambda_simplified(psi, 2.0, 1.0).value / cb_f_lambda_simplified(
        psi, 1.0, 1.0
    ).value
    assert ratio == pytest.approx(hitting_time_laplace(CB, 2.0, 1.0, 1.0).value, abs=1e-8)


def test_simplified_cb_form_approaches_hit_probability():
    ratio = cb_f_lambda_simplified(SUPER, 2.0, 1e-9).value / cb_f_lambda_simplified(
        SUPER, 1.0, 1e-9
    ).value
    assert ratio == pytest.approx(math.exp(-1.0), rel=1e-6)


def test_simplified_cb_form_decays_in_x():
    values = [cb_f_lambda_simplified(CB.psi, x, 1.0).value for x in (1.0, 10.0, 100.0)]
    assert values[0] > values[1] > values[2]


def test_simplified_cb_form_requires_a_branching_mechanism():
    with pytest.raises(TransformDomainError):
        cb_f_lambda_simplified(LinearDrift(1.0), 1.0, 1.0)  # type: ignore[arg-type]


@pytest.mark.parametrize(
    "bad",
    [
        pytest.param(dict(x=1.0, a=1.0, lam=1.0), id="x=a"),
        pytest.param(dict(x=1.0, a=2.0, lam=1.0), id="x<a"),
        pytest.param(dict(x=2.0, a=1.0, lam=0.0), id="lam=0"),
    ],
)
def test_hitting_laplace_domain(bad):
    with pytest.raises(TransformDomainError):
        hitting_time_laplace(CIR_RECURRENT, **bad)


def test_levels_below_v_are_rejected():
    with pytest.raises(TransformDomainError):
        hitting_time_laplace(deterministic(2.0, 1.0), 2.0, 0.25, 1.0)


def test_flow_of_feller_mechanism():
    assert v_flow(HALF, 2.0, 1.0).v == pytest.approx(1.0, rel=1e-9)


def test_flow_at_time_zero():
    state = v_flow(HALF, 2.0, 0.0)
    assert state.v == 2.0
    assert state.accumulated_phi == 0.0


def test_flow_of_linear_mechanism():
    assert v_flow(Linear(gamma=1.0), 1.0, math.log(2)).v == pytest.approx(0.5, rel=1e-9)


def test_flow_accumulates_immigration():
    # Ψ = q², Φ = q: ∫₀ᵗ v_s ds = log(1 + qt)
    state = v_flow(CIR_POLAR.psi, 1.0, 3.0, with_phi=CIR_POLAR.phi)
    assert state.accumulated_phi == pytest.approx(math.log(4.0), rel=1e-9)


def test_marginal_laplace():
    assert marginal_laplace(CIR_POLAR, 1.0, 1.0, 0.0) == 1.0
    assert marginal_laplace(CIR_POLAR, 1.0, 1.0, 1.0) == pytest.approx(
        math.exp(-0.5) / 2, rel=1e-9
    )


@settings(max_examples=20, deadline=None)
@given(x=st.floats(0.0, 5.0), t=st.floats(0.0, 5.0), q=st.floats(0.0, 5.0))
def test_marginal_laplace_of_cir_matches_closed_form(x, t, q):
    # exp(-xq/(1+qt)) (1+qt)^{-1} for Ψ = q², Φ = q
    expected = math.exp(-x * q / (1 + q * t)) / (1 + q * t)
    assert marginal_laplace(CIR_POLAR, x, t, q) == pytest.approx(expected, rel=1e-8)


def test_stationary_laplace_of_subcritical_cir():
    # gamma stationary law: (1 + σ²q/(2γ))^{-2b/σ²}
    model = CBIModel(Quadratic(sigma2=2.0, gamma=1.0), LinearDrift(b=1.0))
    for q in (0.5, 1.0, 4.0):
        assert stationary_laplace(model, q) == pytest.approx(1 / (1 + q), rel=1e-8)


def test_marginal_laplace_forgets_the_start_of_a_positive_recurrent_model():
    model = CBIModel(Quadratic(sigma2=2.0, gamma=1.0), LinearDrift(b=1.0))
    limit = stationary_laplace(model, 1.0)
    for x in (0.5, 5.0):
        assert marginal_laplace(model, x, 40.0, 1.0) == pytest.approx(limit, rel=1e-8)


def test_stationary_laplace_requires_positive_recurrence():
    with pytest.raises(TransformDomainError):
        stationary_laplace(CIR_RECURRENT, 1.0)


@settings(max_examples=10, deadline=None)
@given(b=st.floats(0.1, 0.9), lam=st.floats(0.1, 3.0))
def test_hitting_laplace_is_a_probability_decreasing_in_lambda(b, lam):
    model = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=b))
    first = hitting_time_laplace(model, 2.0, 1.0, lam).value
    second = hitting_time_laplace(model, 2.0, 1.0, 2 * lam).value
    assert 0.0 < second < first <= 1.0


def test_results_convert_to_float():
    result = hitting_time_laplace(CIR_RECURRENT, 2.0, 1.0, 1.0)
    assert float(result) == result.value
    assert np.isfinite(result.abs_error)
