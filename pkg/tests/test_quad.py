# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given, settings
from scipy import special

from cbilab.errors import QuadratureDomainError
from cbilab.quad import (
    ProbeVerdict,
    QuadratureStatus,
    Side,
    SingularityHint,
    SingularityKind,
    divergence_probe,
    gauss_legendre,
    integrate_adaptive,
    integrate_decaying_tail,
    integrate_geometric_windows,
    integrate_power_singular,
)


def test_constant():
    result = integrate_adaptive(lambda z: np.ones_like(z), 0.0, 1.0, 1e-12)
    assert result.ok
    assert result.value == pytest.approx(1.0, abs=1e-12)


def test_exponential():
    result = integrate_adaptive(lambda z: np.exp(-z), 0.0, 10.0, 1e-10)
    assert result.ok
    assert result.value == pytest.approx(1 - math.exp(-10), abs=1e-10)
    assert result.abs_error_estimate <= 1e-10


def test_breakpoints_are_respected():
    result = integrate_adaptive(np.abs, -1.0, 2.0, 1e-12, breakpoints=[0.0])
    assert result.value == pytest.approx(2.5, abs=1e-12)


def test_max_subdivisions_gives_inconclusive():
    result = integrate_adaptive(
        lambda z: np.sin(1 / z), 1e-6, 1.0, 1e-14, max_subdivisions=5
    )
    assert result.status is QuadratureStatus.INCONCLUSIVE


@pytest.mark.parametrize("a, b", [(1.0, 0.0), (0.0, math.inf)])
def test_adaptive_rejects_bad_intervals(a, b):
    with pytest.raises(QuadratureDomainError):
        integrate_adaptive(np.exp, a, b)


def test_adaptive_singular_integrand_via_cut():
    eps = 1e-6
    result = integrate_adaptive(lambda z: z**-0.5, eps, 1.0, 1e-9)
    assert result.value == pytest.approx(2 - 2 * math.sqrt(eps), abs=1e-8)


@pytest.mark.parametrize(
    "f, a, b, rho, expected",
    [
        pytest.param(lambda z: z**-0.5, 0.0, 1.0, 0.5, 2.0, id="inverse-sqrt"),
        pytest.param(lambda z: (z - 1) ** (0.3 - 1), 1.0, 2.0, 0.3, 1 / 0.3, id="shifted"),
    ],
)
def test_power_singular(f, a, b, rho, expected):
    result = integrate_power_singular(f, a, b, rho, 1e-10)
    assert result.ok
    assert result.value == pytest.approx(expected, rel=1e-9)


def test_power_singular_with_tail():
    result = integrate_power_singular(
        lambda z: z**-0.5 * np.exp(-z), 0.0, math.inf, 0.5, 1e-10, decay_rate=1.0
    )
    assert result.value == pytest.approx(math.sqrt(math.pi), rel=1e-9)


def test_regularized_power_singular_takes_the_offset():
    # φ(t) = e^{-t}, integrand t^{-0.99} e^{-t}
    rho = 0.01
    result = integrate_power_singular(
        lambda t: np.exp(-t), 0.0, math.inf, rho, 1e-10, regularized=True, decay_rate=1.0
    )
    assert result.value == pytest.approx(special.gamma(rho), rel=1e-8)


def test_power_singular_rejects_nonpositive_rho():
    with pytest.raises(QuadratureDomainError):
        integrate_power_singular(np.exp, 0.0, 1.0, 0.0)


def test_infinite_power_singular_needs_decay_rate():
    with pytest.raises(QuadratureDomainError):
        integrate_power_singular(np.exp, 0.0, math.inf, 0.5)


@pytest.mark.parametrize(
    "f, rate, expected",
    [
        pytest.param(lambda z: np.exp(-2 * z), 2.0, 0.5, id="exp"),
        pytest.param(lambda z: z * np.exp(-z), 0.9, 1.0, id="gamma-2"),
        pytest.param(lambda z: np.exp(-z) * np.sqrt(z), 0.9, special.gamma(1.5), id="gamma-1.5"),
    ],
)
def test_decaying_tail(f, rate, expected):
    result = integrate_decaying_tail(f, 0.0, rate, 1e-10)
    assert result.ok
    assert result.value == pytest.approx(expected, abs=1e-9)


def test_decaying_tail_rejects_nonpositive_rate():
    with pytest.raises(QuadratureDomainError):
        integrate_decaying_tail(np.exp, 0.0, 0.0)


@settings(max_examples=20, deadline=None)
@given(rate=st.floats(0.2, 5.0), shift=st.floats(-2.0, 2.0))
def test_decaying_tail_matches_closed_form(rate, shift):
    result = integrate_decaying_tail(lambda z: np.exp(-rate * z), shift, rate * 0.9, 1e-10)
    assert result.value == pytest.approx(math.exp(-rate * shift) / rate, rel=1e-8)


def test_geometric_windows_converge_for_integrable_singularity():
    result = integrate_geometric_windows(lambda z: z**-0.5, 0.0, 1.0, 1e-10)
    assert result.ok
    assert result.value == pytest.approx(2.0, rel=1e-8)


def test_geometric_windows_from_below():
    result = integrate_geometric_windows(
        lambda z: (-z) ** -0.5, 0.0, 1.0, 1e-10, side=Side.FROM_BELOW
    )
    assert result.value == pytest.approx(2.0, rel=1e-8)


def test_geometric_windows_detect_divergence():
    result = integrate_geometric_windows(lambda z: 1 / z, 0.0, 1.0)
    assert result.status is QuadratureStatus.DIVERGED
    assert result.value == math.inf


def test_probe_harmonic_diverges():
    assert divergence_probe(lambda z: 1 / z, 0.0).verdict is ProbeVerdict.DIVERGES


def test_probe_inverse_sqrt_converges():
    probe = divergence_probe(lambda z: z**-0.5, 0.0, span=0.25)
    assert probe.verdict is ProbeVerdict.CONVERGES
    assert probe.value == pytest.approx(2 * 0.25**0.5, rel=1e-6)


def test_probe_bertrand_converges():
    # antiderivative -1/log(1/z)
    probe = divergence_probe(lambda z: 1 / (z * np.log(1 / z) ** 2), 0.0, span=0.5)
    assert probe.verdict is ProbeVerdict.CONVERGES


def test_probe_from_below():
    probe = divergence_probe(lambda z: 1 / (1 - z), 1.0, Side.FROM_BELOW)
    assert probe.verdict is ProbeVerdict.DIVERGES


def test_probe_negative_integrand_is_inconclusive():
    assert divergence_probe(lambda z: -np.ones_like(z), 0.0).verdict is ProbeVerdict.INCONCLUSIVE


def test_gauss_legendre_is_exact_for_polynomials():
    lo = np.array([0.0, 1.0])
    hi = np.array([1.0, 3.0])
    np.testing.assert_allclose(gauss_legendre(lambda z: z**5, lo, hi), [1 / 6, (3**6 - 1) / 6])


def test_results_add():
    a = integrate_adaptive(lambda z: np.ones_like(z), 0.0, 1.0)
    b = integrate_adaptive(lambda z: np.ones_like(z), 1.0, 2.0)
    total = a + b
    assert total.value == pytest.approx(2.0)
    assert total.status is QuadratureStatus.CONVERGED


def test_hints():
    hint = SingularityHint.power_law(1.0, 0.5)
    assert hint.kind is SingularityKind.POWER_LAW
    assert hint.rho == 0.5
    assert SingularityHint.essential(0.0).kind is SingularityKind.ESSENTIAL_DECAY
    with pytest.raises(QuadratureDomainError):
        SingularityHint(0.0, SingularityKind.POWER_LAW, rho=-1.0)
