# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""The invariant functions g_{λ,μ} and f_{λ,μ} of a CBI model.

With q = q(μ) and the offset t = z - q,

    J(z) = ∫_θ^z (Φ(u) + λ)/(Ψ(u) - μ) du,
    g(z) = exp(J(z)) / (Ψ(z) - μ),
    f(x) = ∫_q^∞ e^{-xz} g(z) dz.

Everything is computed in the offset variable and in log space. The exponent
is tabulated relative to the fixed reference point ``q + 1`` and θ only enters
as the additive constant ``-K(θ)`` in ``log f``, so every ratio of two values
of f is exactly independent of θ.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from .errors import TransformDomainError
from .mechanism import CBIModel, Criticality
from .quad import (
    QuadratureResult,
    QuadratureStatus,
    SingularityHint,
    gauss_legendre,
    integrate_adaptive,
    integrate_decaying_tail,
    integrate_geometric_windows,
    integrate_power_singular,
)
from .typing import FloatArray

log = logging.getLogger(__name__)

_LN2 = math.log(2.0)

# Offsets below this multiple of the reference scale are treated as equal to it.
_FLOOR = 1e-100

# Below this relative offset, Ψ(q+t) - μ is computed as t·Ψ′(q + t/2).
_MEAN_VALUE_CUTOFF = 1e-5


class EndpointKind(str, Enum):
    """How the integrand of f behaves as z ↓ q(μ)."""

    POWER = "power"
    ESSENTIAL = "essential"
    DECAY = "decay"
    DIVERGENT = "divergent"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class LocalProfile:
    """Local data at q(μ): ``Ψ(q+t) - μ ~ coef · t^kappa`` and pole strength ``rho_j``.

    ``rho`` is the exponent of the integrand of f, ``t^{rho-1}``, when
    ``kind`` is ``POWER``.
    """

    q: float
    kappa: Optional[float]
    coef: Optional[float]
    rho_j: float
    kind: EndpointKind
    rho: Optional[float] = None


@dataclass(frozen=True)
class LogIntegral:
    """``log f`` with the relative error of f and a quadrature status."""

    log_value: float
    rel_error: float
    status: QuadratureStatus

    @property
    def diverged(self) -> bool:
        return self.status is QuadratureStatus.DIVERGED


class LogPrimitive:
    """P(t) = ∫_base^t k(u) du for ``k`` with at most a ``pole/u`` singularity at 0.

    P is split as ``pole · log(t/base) + R(t)``. R is tabulated at the anchors
    ``base · 2^j`` (j ∈ ℤ) by a 32-point Gauss-Legendre rule in ``log u``, and
    evaluated elsewhere by integrating from the nearest anchor.

    Parameters
    ----------
    scaled : Callable[[FloatArray], FloatArray]
        ``u ↦ u · k(u)``, vectorized.

    pole : float

    base : float
    """

    def __init__(
        self,
        scaled: Callable[[FloatArray], FloatArray],
        pole: float = 0.0,
        base: float = 1.0,
    ) -> None:
        self._scaled = scaled
        self.pole = pole
        self.base = base
        self._log_base = math.log(base)
        self._below: List[float] = [0.0]
        self._above: List[float] = [0.0]

    def _residual(self, w: FloatArray) -> FloatArray:
        return self._scaled(np.exp(w)) - self.pole

    def _extend(self, table: List[float], upto: int, sign: int) -> None:
        if upto < len(table):
            return
        ks = np.arange(len(table), upto + 1, dtype=np.float64)
        near = self._log_base + sign * (ks - 1) * _LN2
        far = self._log_base + sign * ks * _LN2
        increments = gauss_legendre(self._residual, near, far)
        table.extend((table[-1] + np.cumsum(increments)).tolist())

    def residual(self, t: FloatArray) -> FloatArray:
        """R(t) for ``t > 0``."""
        t = np.maximum(np.asarray(t, dtype=np.float64), _FLOOR * self.base)
        steps = np.rint(np.log2(t / self.base)).astype(np.int64)
        top = int(steps.max(initial=0))
        bottom = int(-steps.min(initial=0))
        self._extend(self._above, top, +1)
        self._extend(self._below, bottom, -1)

        above = np.asarray(self._above)
        below = np.asarray(self._below)
        anchor_values = np.where(
            steps >= 0, above[np.maximum(steps, 0)], below[np.maximum(-steps, 0)]
        )
        anchor_logs = self._log_base + steps * _LN2
        correction = gauss_legendre(self._residual, anchor_logs, np.log(t))
        return anchor_values + correction

    def __call__(self, t: FloatArray) -> FloatArray:
        t = np.asarray(t, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return self.pole * np.log(t / self.base) + self.residual(t)


class InvariantFunction:
    """g_{λ,μ} and f_{λ,μ} for one model and one (λ, μ, θ).

    Parameters
    ----------
    model : CBIModel

    lam : float
        λ ≥ 0.

    mu : float
        μ ≥ 0.

    theta : Optional[float]
        θ > q(μ); defaults to q(μ) + 1.

    with_denominator : bool, optional (default=True)
        If ``False``, the factor ``1/(Ψ - μ)`` is dropped from g. This is the
        simplified form of f for pure branching (Φ ≡ 0).

    tol : float, optional (default=1e-10)
        Relative tolerance for every value of f.
    """

    def __init__(
        self,
        model: CBIModel,
        lam: float,
        mu: float,
        theta: Optional[float] = None,
        *,
        with_denominator: bool = True,
        tol: float = 1e-10,
    ) -> None:
        if not lam >= 0:
            raise TransformDomainError(f"λ must be nonnegative, got {lam}")
        if not mu >= 0:
            raise TransformDomainError(f"μ must be nonnegative, got {mu}")
        self.model = model
        self.psi = model.psi
        self.phi = model.phi
        self.lam = float(lam)
        self.mu = float(mu)
        self.with_denominator = with_denominator
        self.tol = tol
        self.q = self.psi.q_root(self.mu)
        if theta is None:
            theta = self.q + 1.0
        if not theta > self.q:
            raise TransformDomainError(f"θ = {theta} must exceed q(μ) = {self.q}")
        self.theta = float(theta)
        self.base = 1.0
        self.profile = self._local_profile()
        self.exponent = LogPrimitive(self._scaled_exponent, self.profile.rho_j, self.base)
        self._k_theta = float(self.exponent(self.theta - self.q))

    # -- local pieces -------------------------------------------------------

    def denominator(self, t: FloatArray) -> FloatArray:
        """Ψ(q+t) - μ for offsets ``t > 0``."""
        t = np.asarray(t, dtype=np.float64)
        if self.q == 0:
            return np.asarray(self.psi.psi(t), dtype=np.float64) - self.mu
        out = np.asarray(self.psi.psi(self.q + t), dtype=np.float64) - self.mu
        close = t < _MEAN_VALUE_CUTOFF * (1.0 + self.q)
        if np.any(close):
            tc = t[close] if t.ndim else t
            out = np.array(out, copy=True)
            out[close] = tc * np.asarray(self.psi.psi_prime(self.q + 0.5 * tc))
        return out

    def _scaled_exponent(self, t: FloatArray) -> FloatArray:
        phi = np.asarray(self.phi.phi(self.q + t), dtype=np.float64)
        return t * (phi + self.lam) / self.denominator(t)

    def _local_profile(self) -> LocalProfile:
        q = self.q
        slope = self.psi.psi_prime(q) if q > 0 else self.psi.psi_prime_zero()
        den = self.with_denominator

        if slope > 0:
            rho_j = (float(self.phi.phi(q)) + self.lam) / slope
            rho = rho_j if den else rho_j + 1.0
            kind = EndpointKind.POWER if rho > 0 else EndpointKind.DIVERGENT
            return LocalProfile(q, 1.0, float(slope), rho_j, kind, rho if rho > 0 else None)

        # critical, μ = 0, q = 0
        lead = self.psi.leading_at_zero()
        kappa = None if lead is None else lead.power
        coef = None if lead is None else lead.coef
        if self.lam > 0:
            return LocalProfile(q, kappa, coef, 0.0, EndpointKind.ESSENTIAL)
        if not den:
            return LocalProfile(q, kappa, coef, 0.0, EndpointKind.POWER, 1.0)
        if self.phi.is_zero:
            return LocalProfile(q, kappa, coef, 0.0, EndpointKind.DIVERGENT)
        phi_lead = self.phi.leading_at_zero()
        if lead is None or phi_lead is None:
            return LocalProfile(q, kappa, coef, 0.0, EndpointKind.UNKNOWN)

        p = phi_lead.power - lead.power
        if math.isclose(p, -1.0, abs_tol=1e-12):
            if phi_lead.log_power != 0 or phi_lead.loglog_power != 0:
                return LocalProfile(q, kappa, coef, 0.0, EndpointKind.UNKNOWN)
            rho_j = phi_lead.coef / lead.coef
            rho = rho_j - lead.power + 1.0
            if rho > 0:
                return LocalProfile(q, kappa, coef, rho_j, EndpointKind.POWER, rho)
            return LocalProfile(q, kappa, coef, rho_j, EndpointKind.DIVERGENT)
        if p > -1:
            return LocalProfile(q, kappa, coef, 0.0, EndpointKind.DIVERGENT)
        return LocalProfile(q, kappa, coef, 0.0, EndpointKind.DECAY)

    def hint(self) -> SingularityHint:
        kind = self.profile.kind
        if kind is EndpointKind.POWER:
            assert self.profile.rho is not None
            return SingularityHint.power_law(self.q, self.profile.rho)
        if kind in (EndpointKind.ESSENTIAL, EndpointKind.DECAY):
            return SingularityHint.essential(self.q)
        return SingularityHint(self.q)

    # -- g and J ------------------------------------------------------------

    def _offset(self, z: FloatArray) -> FloatArray:
        z = np.asarray(z, dtype=np.float64)
        if np.any(z <= self.q):
            raise TransformDomainError(f"g and J are only defined for z > q(μ) = {self.q}")
        return z - self.q

    def exponent_j(self, z: FloatArray) -> FloatArray:
        """J(z) = ∫_θ^z (Φ(u) + λ)/(Ψ(u) - μ) du."""
        return self.exponent(self._offset(z)) - self._k_theta

    def log_g_offset(self, t: FloatArray) -> FloatArray:
        t = np.asarray(t, dtype=np.float64)
        out = self.exponent(t) - self._k_theta
        if self.with_denominator:
            out = out - np.log(self.denominator(t))
        return out

    def g(self, z: FloatArray) -> FloatArray:
        return np.exp(self.log_g_offset(self._offset(z)))

    def g_offset(self, t: FloatArray) -> FloatArray:
        """g(q + t); safe for offsets far below the spacing of floats near q."""
        return np.exp(self.log_g_offset(t))

    # -- f ------------------------------------------------------------------

    def _shift(self, x: float) -> float:
        # log of the integrand of the reduced integral at t = base
        shift = -x * self.base
        if self.with_denominator:
            shift -= math.log(float(self.denominator(np.array([self.base]))[0]))
        return shift

    def _log_integrand(self, x: float, shift: float) -> Callable[[FloatArray], FloatArray]:
        def log_integrand(t: FloatArray) -> FloatArray:
            t = np.asarray(t, dtype=np.float64)
            out = self.exponent(t) - x * t - shift
            if self.with_denominator:
                out = out - np.log(self.denominator(t))
            return out

        return log_integrand

    def _power_head(self, x: float, shift: float) -> QuadratureResult:
        prof = self.profile
        assert prof.rho is not None
        rho = prof.rho
        base = self.base
        kappa = prof.kappa if prof.kappa is not None else 1.0

        def log_phi(t: FloatArray) -> FloatArray:
            t = np.asarray(t, dtype=np.float64)
            teff = np.maximum(t, _FLOOR * base)
            out = (
                self.exponent.residual(teff)
                - prof.rho_j * math.log(base)
                - x * t
                - shift
            )
            if self.with_denominator:
                local = self.denominator(teff) / teff**kappa
                out = out - np.log(local)
            return out

        if rho >= 1:
            return integrate_adaptive(
                lambda t: np.exp((rho - 1.0) * np.log(t) + log_phi(t)),
                0.0,
                base,
                0.0,
                rel_tol=self.tol / 4,
            )
        return integrate_power_singular(
            lambda t: np.exp(log_phi(t)),
            0.0,
            base,
            rho,
            0.0,
            rel_tol=self.tol / 4,
            regularized=True,
        )

    def _essential_head(self, x: float, shift: float, scale: float) -> QuadratureResult:
        """Integrates over (0, base] by shrinking ε with a certified bound on (0, ε]."""
        integrand = self._log_integrand(x, shift)
        inverse = LogPrimitive(lambda t: t / self.denominator(t), 0.0, self.base)
        parts: List[float] = []
        err = 0.0
        evaluations = 0
        hi = self.base
        for j in range(1, 1100):
            lo = self.base * 2.0**-j
            window = integrate_adaptive(
                lambda t: np.exp(integrand(t)), lo, hi, 0.0, rel_tol=self.tol / 8
            )
            parts.append(window.value)
            err += window.abs_error_estimate
            evaluations += window.evaluations
            if self.with_denominator:
                # ∫_0^ε e^{K}/(Ψ-μ) ≤ (1/λ) exp(-λ ∫_ε^base du/(Ψ-μ))
                spent = -float(inverse(np.array([lo]))[0])
                bound = math.exp(-self.lam * spent - shift) / self.lam
            else:
                bound = lo * math.exp(float(self.exponent(np.array([lo]))[0]) - shift)
            body = math.fsum(parts) + scale
            if bound <= self.tol / 4 * body:
                err += bound
                status = (
                    QuadratureStatus.CONVERGED
                    if err <= self.tol * body
                    else QuadratureStatus.INCONCLUSIVE
                )
                return QuadratureResult(math.fsum(parts), err, status, evaluations)
            hi = lo
        return QuadratureResult(
            math.fsum(parts), math.inf, QuadratureStatus.INCONCLUSIVE, evaluations
        )

    def _tail(self, x: float, shift: float) -> QuadratureResult:
        integrand = self._log_integrand(x, shift)
        v = self.model.v if self.with_denominator else 0.0
        gap = x - v
        if gap > 0:
            return integrate_decaying_tail(
                lambda t: np.exp(integrand(t)),
                self.base,
                decay_rate=0.9 * gap,
                tol=0.0,
                rel_tol=self.tol / 4,
            )
        # x = v: the tail is the polarity integral; w = 1/t maps it near zero
        return integrate_geometric_windows(
            lambda w: np.exp(integrand(1.0 / w) - 2.0 * np.log(w)),
            0.0,
            1.0 / self.base,
            0.0,
            rel_tol=self.tol / 4,
        )

    def log_f(self, x: float) -> LogIntegral:
        """log f_{λ,μ}(x), or a ``DIVERGED`` result when f(x) = +∞."""
        v = self.model.v if self.with_denominator else 0.0
        if x < v:
            raise TransformDomainError(f"f is only defined for x ≥ v = {v}, got {x}")
        if self.profile.kind is EndpointKind.DIVERGENT:
            return LogIntegral(math.inf, math.inf, QuadratureStatus.DIVERGED)

        shift = self._shift(x)
        tail = self._tail(x, shift)
        if tail.status is QuadratureStatus.DIVERGED:
            return LogIntegral(math.inf, math.inf, QuadratureStatus.DIVERGED)

        kind = self.profile.kind
        if kind is EndpointKind.POWER:
            head = self._power_head(x, shift)
        elif kind is EndpointKind.ESSENTIAL:
            head = self._essential_head(x, shift, tail.value)
        else:
            integrand = self._log_integrand(x, shift)
            head = integrate_geometric_windows(
                lambda t: np.exp(integrand(t)), 0.0, self.base, 0.0, rel_tol=self.tol / 4
            )
            if head.status is QuadratureStatus.DIVERGED:
                return LogIntegral(math.inf, math.inf, QuadratureStatus.DIVERGED)

        total = head + tail
        if not total.value > 0 or not math.isfinite(total.value):
            log.debug("f(%r) quadrature produced %r", x, total.value)
            return LogIntegral(math.nan, math.inf, QuadratureStatus.INCONCLUSIVE)
        log_value = -x * self.q - self._k_theta + shift + math.log(total.value)
        return LogIntegral(log_value, total.abs_error_estimate / total.value, total.status)
