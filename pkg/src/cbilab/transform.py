# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""Laplace transforms and probabilities of first-passage functionals.

All of the ratio formulas share one `InvariantFunction` between numerator and
denominator, so the reference point θ cancels to machine precision.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from ._invariant import InvariantFunction, LogIntegral
from .errors import FlowError, RecurrentModelError, TransformDomainError
from .mechanism import (
    BranchingMechanism,
    CBIModel,
    Criticality,
    ImmigrationMechanism,
    LinearDrift,
)
from .quad import QuadratureStatus

__all__ = [
    "TransformStatus",
    "TransformValue",
    "InvariantFnParams",
    "FlowState",
    "exponent_J",
    "g_eval",
    "f_eval",
    "hitting_time_laplace",
    "joint_laplace",
    "total_population_laplace",
    "minimum_cdf",
    "hitting_probability",
    "supercritical_cb_hit_probability",
    "cb_f_lambda_simplified",
    "v_flow",
    "marginal_laplace",
    "stationary_laplace",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10

FLOW_RTOL = 1e-10
FLOW_ATOL = 1e-13


class TransformStatus(str, Enum):
    OK = "ok"
    POLAR_BOUNDARY = "polar_boundary"
    DIVERGED = "diverged"
    DOMAIN_ERROR = "domain_error"


@dataclass(frozen=True)
class TransformValue:
    """A transform value with an absolute error estimate.

    ``float(result)`` gives the value. ``POLAR_BOUNDARY`` marks an exact zero
    coming from an infinite denominator at a polar boundary, as opposed to
    underflow.
    """

    value: float
    abs_error: float = 0.0
    status: TransformStatus = TransformStatus.OK

    def __float__(self) -> float:
        return float(self.value)

    @property
    def ok(self) -> bool:
        return self.status in (TransformStatus.OK, TransformStatus.POLAR_BOUNDARY)


@dataclass(frozen=True)
class InvariantFnParams:
    """(λ, μ, θ) for the invariant functions; ``theta=None`` means q(μ) + 1."""

    lam: float = 0.0
    mu: float = 0.0
    theta: Optional[float] = None


@dataclass(frozen=True)
class FlowState:
    """``v = v_t(q)`` and ``accumulated_phi = ∫₀ᵗ Φ(v_s(q)) ds``."""

    v: float
    accumulated_phi: float
    t: float


def _invariant(
    model: CBIModel, params: InvariantFnParams, tol: float = DEFAULT_TOL
) -> InvariantFunction:
    return InvariantFunction(model, params.lam, params.mu, params.theta, tol=tol)


def exponent_J(model: CBIModel, params: InvariantFnParams, z: float) -> float:
    """J(z) = ∫_θ^z (Φ(u) + λ)/(Ψ(u) - μ) du; negative for z < θ.

    Raises
    ------
    TransformDomainError
        If z ≤ q(μ).

    Examples
    --------
    >>> from cbilab import CBIModel, Quadratic, LinearDrift
    >>> cir = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=1.0))
    >>> round(exponent_J(cir, InvariantFnParams(theta=1.0), math.e), 12)
    1.0
    """
    return float(_invariant(model, params).exponent_j(np.float64(z)))


def g_eval(model: CBIModel, params: InvariantFnParams, z: float) -> float:
    """g_{λ,μ}(z) = exp(J(z)) / (Ψ(z) - μ)."""
    return float(_invariant(model, params).g(np.float64(z)))


def _to_value(result: LogIntegral, *, prefactor: float = 1.0) -> TransformValue:
    if result.diverged:
        return TransformValue(math.inf, math.inf, TransformStatus.DIVERGED)
    value = prefactor * math.exp(result.log_value)
    return TransformValue(value, value * result.rel_error)


def f_eval(
    model: CBIModel, params: InvariantFnParams, x: float, *, tol: float = DEFAULT_TOL
) -> TransformValue:
    """f_{λ,μ}(x) = ∫_{q(μ)}^∞ e^{-xz} g_{λ,μ}(z) dz.

    Returns ``+inf`` with status ``DIVERGED`` when the integral diverges,
    which for λ = 0 and x = v is exactly the polar case.

    Raises
    ------
    TransformDomainError
        If x < v.
    """
    return _to_value(_invariant(model, params, tol).log_f(x))


def _check_order(model: CBIModel, x: float, a: float) -> None:
    if not x > a:
        raise TransformDomainError(f"requires x > a, got x={x}, a={a}")
    if not a >= model.v:
        raise TransformDomainError(f"requires a ≥ v = {model.v}, got a={a}")


def _ratio(inv: InvariantFunction, x: float, a: float) -> TransformValue:
    denominator = inv.log_f(a)
    if denominator.diverged:
        if a == inv.model.v:
            return TransformValue(0.0, 0.0, TransformStatus.POLAR_BOUNDARY)
        return TransformValue(math.nan, math.inf, TransformStatus.DIVERGED)
    numerator = inv.log_f(x)
    if numerator.diverged:
        return TransformValue(math.nan, math.inf, TransformStatus.DIVERGED)
    value = min(math.exp(numerator.log_value - denominator.log_value), 1.0)
    return TransformValue(value, value * (numerator.rel_error + denominator.rel_error))


def hitting_time_laplace(
    model: CBIModel,
    x: float,
    a: float,
    lam: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """E_x[exp(-λ σ_a)] = f_λ(x) / f_λ(a) for x > a ≥ v and λ > 0.

    If f_λ(a) = ∞, which happens exactly when a = v is polar, the result is 0
    with status ``POLAR_BOUNDARY``.
    """
    if not lam > 0:
        raise TransformDomainError(f"λ must be positive, got {lam}")
    _check_order(model, x, a)
    return _ratio(InvariantFunction(model, lam, 0.0, theta, tol=tol), x, a)


def joint_laplace(
    model: CBIModel,
    x: float,
    a: float,
    lam: float,
    mu: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """E_x[exp(-λ σ_a - μ ∫₀^{σ_a} X_s ds)] for x > a ≥ v, λ > 0, μ ≥ 0."""
    if not lam > 0:
        raise TransformDomainError(f"λ must be positive, got {lam}")
    _check_order(model, x, a)
    return _ratio(InvariantFunction(model, lam, mu, theta, tol=tol), x, a)


def total_population_laplace(
    model: CBIModel,
    x: float,
    a: float,
    mu: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """E_x[exp(-μ ∫₀^{σ_a} X_s ds)] for x > a ≥ v and μ > 0.

    For pure branching (Φ ≡ 0) this is ``exp(-(x - a) q(μ))``.

    Examples
    --------
    >>> from cbilab import CBIModel, Quadratic, LinearDrift
    >>> cb = CBIModel(Quadratic(sigma2=1.0), LinearDrift(b=0.0))
    >>> round(total_population_laplace(cb, 2.0, 1.0, 2.0).value, 7)
    0.1353353
    """
    if not mu > 0:
        raise TransformDomainError(
            f"μ must be positive, got {mu}; use hitting_probability for μ = 0"
        )
    _check_order(model, x, a)
    if model.phi.is_zero:
        return TransformValue(math.exp(-(x - a) * model.psi.q_root(mu)))
    return _ratio(InvariantFunction(model, 0.0, mu, theta, tol=tol), x, a)


def _cb_hit_ratio(
    mech: BranchingMechanism,
    x: float,
    a: float,
    lam: float,
    theta: Optional[float],
    tol: float,
) -> TransformValue:
    # ratio of the simplified CB form; the x/λ prefactor becomes x/a
    inv = InvariantFunction(
        CBIModel(mech, LinearDrift(0.0)), lam, 0.0, theta, with_denominator=False, tol=tol
    )
    num = inv.log_f(x)
    den = inv.log_f(a)
    if num.diverged or den.diverged:
        return TransformValue(math.nan, math.inf, TransformStatus.DIVERGED)
    value = min((x / a) * math.exp(num.log_value - den.log_value), 1.0)
    return TransformValue(value, value * (num.rel_error + den.rel_error))


def minimum_cdf(
    model: CBIModel,
    x: float,
    a: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """P_x(inf_t X_t ≤ a) = f₀(x) / f₀(a) for a transient model and x > a ≥ v.

    Raises
    ------
    RecurrentModelError
        If the model is recurrent, or unclassified with a divergent f₀.

    Examples
    --------
    The critical CB conditioned to never die out has a uniform minimum:

    >>> from cbilab import CBIModel, Quadratic, DerivedFromPsi
    >>> psi = Quadratic(sigma2=1.0)
    >>> round(minimum_cdf(CBIModel(psi, DerivedFromPsi(psi)), 2.0, 1.0).value, 8)
    0.5
    """
    from .classify import Longrun, recurrence_classify

    _check_order(model, x, a)
    if model.phi.is_zero:
        if model.criticality is not Criticality.SUPERCRITICAL:
            raise RecurrentModelError(
                "a (sub)critical pure branching process reaches every level below "
                "its start almost surely"
            )
        if a == 0:
            return TransformValue(math.exp(-x * model.psi.q_root(0.0)))
        return _cb_hit_ratio(model.psi, x, a, 0.0, theta, tol)

    verdict = recurrence_classify(model)
    if verdict in (Longrun.POSITIVE_RECURRENT, Longrun.NULL_RECURRENT):
        raise RecurrentModelError(
            f"the model is {verdict.value}; its overall infimum is v = {model.v}"
        )
    result = _ratio(InvariantFunction(model, 0.0, 0.0, theta, tol=tol), x, a)
    if verdict is Longrun.UNDETERMINED and result.status is TransformStatus.DIVERGED:
        raise RecurrentModelError(
            "recurrence is undetermined and f₀ diverges; the minimum is not defined"
        )
    return result


def hitting_probability(
    model: CBIModel,
    x: float,
    a: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """P_x(σ_a < ∞): 1 for recurrent models, `minimum_cdf` otherwise."""
    _check_order(model, x, a)
    try:
        return minimum_cdf(model, x, a, theta=theta, tol=tol)
    except RecurrentModelError:
        return TransformValue(1.0)


def supercritical_cb_hit_probability(
    mech: BranchingMechanism, x: float, a: float
) -> float:
    """P_x(σ_a < ∞) = exp(-(x - a) q(0)) for a supercritical pure branching process."""
    if mech.criticality() is not Criticality.SUPERCRITICAL:
        raise TransformDomainError(
            f"requires a supercritical mechanism, got {mech.criticality().value}"
        )
    if not x >= a >= 0:
        raise TransformDomainError(f"requires x ≥ a ≥ 0, got x={x}, a={a}")
    return math.exp(-(x - a) * mech.q_root(0.0))


def cb_f_lambda_simplified(
    mech: BranchingMechanism,
    x: float,
    lam: float,
    *,
    theta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
) -> TransformValue:
    """f_λ(x) = (x/λ) ∫_{q(0)}^∞ e^{-xz} exp(λ ∫_θ^z du/Ψ(u)) dz for pure branching.

    Equal to `f_eval` of ``CBIModel(mech, LinearDrift(0))`` with the same θ.
    """
    if not isinstance(mech, BranchingMechanism):
        raise TransformDomainError(
            f"requires a branching mechanism, got {type(mech).__name__}"
        )
    if not lam > 0:
        raise TransformDomainError(f"λ must be positive, got {lam}")
    if not x > 0:
        raise TransformDomainError(f"requires x > 0, got {x}")
    inv = InvariantFunction(
        CBIModel(mech, LinearDrift(0.0)), lam, 0.0, theta, with_denominator=False, tol=tol
    )
    return _to_value(inv.log_f(x), prefactor=x / lam)


def v_flow(
    mech: BranchingMechanism,
    q: float,
    t: float,
    with_phi: Optional[ImmigrationMechanism] = None,
) -> FlowState:
    """Solves ∂v/∂t = -Ψ(v), v₀ = q, accumulating ∫₀ᵗ Φ(v_s) ds when Φ is given.

    Raises
    ------
    FlowError
        If the Runge-Kutta solver fails.

    Examples
    --------
    >>> from cbilab import Quadratic
    >>> round(v_flow(Quadratic(sigma2=1.0), 2.0, 1.0).v, 9)
    1.0
    """
    if not q >= 0:
        raise TransformDomainError(f"q must be nonnegative, got {q}")
    if not t >= 0:
        raise TransformDomainError(f"t must be nonnegative, got {t}")
    if t == 0 or q == 0:
        return FlowState(v=float(q), accumulated_phi=0.0, t=float(t))

    def rhs(_: float, y: np.ndarray) -> np.ndarray:
        v = max(float(y[0]), 0.0)
        rate = float(with_phi.phi(v)) if with_phi is not None else 0.0
        return np.array([-float(mech.psi(v)), rate])

    sol = solve_ivp(
        rhs,
        (0.0, float(t)),
        np.array([float(q), 0.0]),
        method="RK45",
        rtol=FLOW_RTOL,
        atol=FLOW_ATOL * max(1.0, q),
    )
    if not sol.success:
        raise FlowError(
            f"flow from q={q} failed before t={t} (reached t={sol.t[-1]}): {sol.message}"
        )
    v, acc = sol.y[:, -1]
    return FlowState(v=max(float(v), 0.0), accumulated_phi=max(float(acc), 0.0), t=float(t))


def marginal_laplace(model: CBIModel, x: float, t: float, q: float) -> float:
    """E_x[exp(-q X_t)] = exp(-x v_t(q) - ∫₀ᵗ Φ(v_s(q)) ds).

    Examples
    --------
    >>> from cbilab import CBIModel, Quadratic, LinearDrift
    >>> cir = CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=1.0))
    >>> round(marginal_laplace(cir, 1.0, 1.0, 1.0), 7)
    0.3032653
    """
    if not x >= 0:
        raise TransformDomainError(f"x must be nonnegative, got {x}")
    flow = v_flow(model.psi, q, t, with_phi=model.phi)
    return math.exp(-x * flow.v - flow.accumulated_phi)


def stationary_laplace(
    model: CBIModel, q: float, t_large: Optional[float] = None
) -> float:
    """exp(-∫₀^∞ Φ(v_s(q)) ds), the Laplace transform of the stationary law.

    Only meaningful for positive recurrent models. Without ``t_large`` the
    horizon is doubled until the accumulated integral settles.
    """
    from .classify import Longrun, recurrence_classify

    if recurrence_classify(model) is not Longrun.POSITIVE_RECURRENT:
        raise TransformDomainError(
            "a stationary law exists only for positive recurrent models"
        )
    if t_large is not None:
        return math.exp(-v_flow(model.psi, q, t_large, with_phi=model.phi).accumulated_phi)

    state = FlowState(float(q), 0.0, 0.0)
    step = 1.0
    for _ in range(60):
        nxt = v_flow(model.psi, state.v, step, with_phi=model.phi)
        total = state.accumulated_phi + nxt.accumulated_phi
        if nxt.accumulated_phi <= 1e-12 * max(total, 1.0):
            return math.exp(-total)
        state = FlowState(nxt.v, total, state.t + step)
        step *= 2.0
    log.info("stationary transform at q=%r did not settle by t=%r", q, state.t)
    return math.exp(-state.accumulated_phi)
