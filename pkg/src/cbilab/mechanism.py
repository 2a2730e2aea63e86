# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""Branching and immigration mechanisms, and the CBI models built from them.

A branching mechanism is the convex Lévy-Khintchine function

    Ψ(q) = γq + (σ²/2)q² + ∫ (e^{-qu} - 1 + qu 1{u<1}) π(du)

and an immigration mechanism is the Laplace exponent of a subordinator

    Φ(q) = bq + ∫ (1 - e^{-qu}) ν(du).

Every mechanism is an immutable value; all methods are pure and accept either
floats or float arrays.
"""
import functools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize, special

from .errors import MechanismDomainError, NonPositiveDriftError, NumericalError
from .typing import ArrayLike, FloatArray

__all__ = [
    "Criticality",
    "RegularTerm",
    "JumpData",
    "BranchingMechanism",
    "Linear",
    "Quadratic",
    "StablePower",
    "Mixed",
    "GeneralTriplet",
    "ImmigrationMechanism",
    "LinearDrift",
    "StableImmigration",
    "DerivedFromPsi",
    "PoissonJumps",
    "LogTailVariant",
    "LogTailPreset",
    "GeneralImmigration",
    "LargeJumpPart",
    "CBIModel",
    "psi_eval",
    "phi_eval",
    "psi_prime_zero",
    "effective_drift",
    "boundary_v",
    "q_root",
    "criticality",
]

log = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps

# Relative accuracy requested from quadrature-evaluated mechanisms.
MECHANISM_REL_TOL = 1e-12


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class RegularTerm:
    """Leading behavior ``coef · u^power · L^log_power · (log L)^loglog_power``.

    Near zero ``L = log(1/u)``; near infinity ``L = log(u)``.

    ``exact=False`` marks a leading term that is only asymptotically
    equivalent to the function (e.g. obtained from a Tauberian argument), so
    that verdicts depending on the precise value of ``coef`` cannot be trusted.
    """

    coef: float
    power: float
    log_power: float = 0.0
    loglog_power: float = 0.0
    exact: bool = True

    def __truediv__(self, other: "RegularTerm") -> "RegularTerm":
        return RegularTerm(
            coef=self.coef / other.coef,
            power=self.power - other.power,
            log_power=self.log_power - other.log_power,
            loglog_power=self.loglog_power - other.loglog_power,
            exact=self.exact and other.exact,
        )


@dataclass(frozen=True)
class JumpData:
    """Jump structure of a Lévy measure relative to a cutoff ``eps``.

    Parameters
    ----------
    rate : float
        Mass of the measure on ``[eps, ∞)``.

    mean_above : float
        ``∫_{[eps,∞)} u m(du)``; may be infinite.

    mean_below : float
        ``∫_{(0,eps)} u m(du)``; may be infinite for branching measures.

    second_moment_below : float
        ``∫_{(0,eps)} u² m(du)``.

    sampler : Callable[[np.random.Generator, int], FloatArray]
        Draws i.i.d. jump sizes from the normalized restriction to ``[eps, ∞)``.
    """

    rate: float
    mean_above: float
    mean_below: float
    second_moment_below: float
    sampler: Callable[[np.random.Generator, int], FloatArray] = field(
        compare=False, repr=False
    )


def _vectorized(method):
    """Lets a method written for float arrays also accept and return floats."""

    @functools.wraps(method)
    def wrapper(self, q):
        arr = np.asarray(q, dtype=np.float64)
        out = method(self, arr)
        if arr.ndim == 0:
            return float(out)
        return np.asarray(out, dtype=np.float64)

    return wrapper


def _check_nonnegative(q: FloatArray) -> None:
    if np.any(q < 0):
        raise MechanismDomainError("mechanisms are only evaluated at q ≥ 0", "q")


def _compensated_exp(x: FloatArray) -> FloatArray:
    """``e^{-x} - 1 + x`` without cancellation for small ``x``."""
    x = np.asarray(x, dtype=np.float64)
    small = np.abs(x) < 1e-3
    xs = np.where(small, x, 0.0)
    series = xs * xs * (0.5 - xs * (1 / 6 - xs * (1 / 24 - xs / 120)))
    return np.where(small, series, np.expm1(-x) + x)


def _one_minus_exp(x: FloatArray) -> FloatArray:
    return -np.expm1(-np.asarray(x, dtype=np.float64))


def _pareto_sampler(eps: float, index: float):
    def sample(rng: np.random.Generator, size: int) -> FloatArray:
        u = 1.0 - rng.random(size)
        return eps * u ** (-1.0 / index)

    return sample


def _stable_branching_density_coef(d: float, alpha: float) -> float:
    # π(du) = c u^{-1-α} du reproduces d q^α with full compensation
    return d * alpha * (alpha - 1) / special.gamma(2 - alpha)


def _stable_jump_data(coef: float, alpha: float, eps: float) -> JumpData:
    return JumpData(
        rate=coef * eps ** (-alpha) / alpha,
        mean_above=coef * eps ** (1 - alpha) / (alpha - 1),
        mean_below=math.inf,
        second_moment_below=coef * eps ** (2 - alpha) / (2 - alpha),
        sampler=_pareto_sampler(eps, alpha),
    )


def _quad_density(
    integrand: Callable[[FloatArray], FloatArray],
    a: float,
    b: float,
    rho: float,
) -> float:
    from .quad import integrate_power_singular

    result = integrate_power_singular(
        integrand, a, b, rho=rho, tol=0.0, rel_tol=MECHANISM_REL_TOL
    )
    if not result.ok:
        log.debug("mechanism quadrature ended with status %s", result.status.value)
    return result.value


# ---------------------------------------------------------------------------
# Branching mechanisms
# ---------------------------------------------------------------------------


class BranchingMechanism(ABC):
    """A branching mechanism Ψ.

    Subclasses implement `psi`, `psi_prime`, `psi_prime_zero`, and
    `effective_drift`; root finding and criticality are shared.
    """

    @abstractmethod
    def psi(self, q: ArrayLike) -> ArrayLike:
        """Returns Ψ(q) for q ≥ 0."""

    @abstractmethod
    def psi_prime(self, q: ArrayLike) -> ArrayLike:
        """Returns Ψ′(q) for q > 0."""

    @abstractmethod
    def psi_prime_zero(self) -> float:
        """Returns Ψ′(0+) ∈ [-∞, ∞)."""

    @abstractmethod
    def effective_drift(self) -> float:
        """Returns the effective drift d ∈ (0, ∞]."""

    @property
    def diffusion(self) -> float:
        """The total Gaussian coefficient σ² of the mechanism."""
        return 0.0

    @property
    def compensated_drift(self) -> float:
        """The coefficient γ_c of Ψ written with fully compensated jumps."""
        return self.psi_prime_zero()

    def jump_data(self, eps: float) -> Optional[JumpData]:
        """Jump structure of π above ``eps``; ``None`` when π = 0."""
        return None

    def stable_part(self) -> Optional[Tuple[float, float]]:
        """``(c, α)`` when π has density ``c u^{-1-α}`` on (0, ∞)."""
        return None

    def leading_at_zero(self) -> Optional[RegularTerm]:
        """Leading behavior of Ψ(u) as u ↓ 0; ``None`` when not known in closed form."""
        return None

    def leading_at_infinity(self) -> Optional[RegularTerm]:
        """Leading behavior of Ψ(u) as u → ∞; ``None`` when not known in closed form."""
        return None

    def criticality(self) -> Criticality:
        slope = self.psi_prime_zero()
        if slope > 0:
            return Criticality.SUBCRITICAL
        if slope == 0:
            return Criticality.CRITICAL
        return Criticality.SUPERCRITICAL

    def _minimizer(self) -> float:
        # Ψ′ is nondecreasing: bracket its sign change, then bisect.
        hi = 1.0
        for _ in range(2000):
            if self.psi_prime(hi) > 0:
                break
            hi *= 2.0
        else:  # pragma: no cover
            raise NumericalError(f"could not bracket the minimizer of {self!r}")
        lo = 0.0
        while hi - lo > 4 * _EPS * hi:
            mid = 0.5 * (lo + hi)
            if self.psi_prime(mid) > 0:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    def q_root(self, mu: float) -> float:
        """Returns q(μ) = sup{q ≥ 0 : Ψ(q) = μ}.

        Parameters
        ----------
        mu : float
            A nonnegative level.

        Returns
        -------
        q : float
            The largest root, accurate to a relative tolerance of about 1e-14.
        """
        if mu < 0:
            raise MechanismDomainError("q(μ) requires μ ≥ 0", "mu")
        slope = self.psi_prime_zero()
        if mu == 0 and slope >= 0:
            return 0.0

        lo = 0.0 if slope >= 0 else self._minimizer()
        hi = max(1.0, 2.0 * lo)
        for _ in range(2000):
            if self.psi(hi) > mu:
                break
            hi *= 2.0
        else:  # pragma: no cover
            raise NumericalError(f"could not bracket q({mu}) for {self!r}")

        return optimize.brentq(
            lambda q: self.psi(q) - mu, lo, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500
        )


@dataclass(frozen=True)
class Linear(BranchingMechanism):
    """Ψ(q) = γq, a pure-drift mechanism (deterministic decay)."""

    gamma: float

    def __post_init__(self) -> None:
        if not self.gamma > 0:
            raise NonPositiveDriftError(
                f"Linear requires gamma > 0, got {self.gamma}", "gamma"
            )

    @_vectorized
    def psi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.gamma * q

    @_vectorized
    def psi_prime(self, q: FloatArray) -> FloatArray:
        return np.full_like(q, self.gamma)

    def psi_prime_zero(self) -> float:
        return float(self.gamma)

    def effective_drift(self) -> float:
        return float(self.gamma)

    def q_root(self, mu: float) -> float:
        if mu < 0:
            raise MechanismDomainError("q(μ) requires μ ≥ 0", "mu")
        return mu / self.gamma

    def leading_at_zero(self) -> RegularTerm:
        return RegularTerm(self.gamma, 1.0)

    def leading_at_infinity(self) -> RegularTerm:
        return RegularTerm(self.gamma, 1.0)


@dataclass(frozen=True)
class Quadratic(BranchingMechanism):
    """Ψ(q) = γq + (σ²/2)q², the Feller-diffusion mechanism."""

    sigma2: float
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if not self.sigma2 > 0:
            raise MechanismDomainError(
                f"Quadratic requires sigma2 > 0, got {self.sigma2}", "sigma2"
            )
        if not math.isfinite(self.gamma):
            raise MechanismDomainError("gamma must be finite", "gamma")

    @_vectorized
    def psi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.gamma * q + 0.5 * self.sigma2 * q * q

    @_vectorized
    def psi_prime(self, q: FloatArray) -> FloatArray:
        return self.gamma + self.sigma2 * q

    def psi_prime_zero(self) -> float:
        return float(self.gamma)

    def effective_drift(self) -> float:
        return math.inf

    @property
    def diffusion(self) -> float:
        return float(self.sigma2)

    def q_root(self, mu: float) -> float:
        if mu < 0:
            raise MechanismDomainError("q(μ) requires μ ≥ 0", "mu")
        g, s = self.gamma, self.sigma2
        disc = math.sqrt(g * g + 2.0 * s * mu)
        if g > 0:
            return 2.0 * mu / (g + disc)
        return (disc - g) / s

    def leading_at_zero(self) -> RegularTerm:
        if self.gamma != 0:
            return RegularTerm(self.gamma, 1.0)
        return RegularTerm(0.5 * self.sigma2, 2.0)

    def leading_at_infinity(self) -> RegularTerm:
        return RegularTerm(0.5 * self.sigma2, 2.0)


@dataclass(frozen=True)
class StablePower(BranchingMechanism):
    """Ψ(q) = d q^α with α ∈ (1, 2]."""

    d: float
    alpha: float

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise MechanismDomainError(f"StablePower requires d > 0, got {self.d}", "d")
        if not 1 < self.alpha <= 2:
            raise MechanismDomainError(
                f"StablePower requires alpha in (1, 2], got {self.alpha}", "alpha"
            )

    @_vectorized
    def psi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.d * np.power(q, self.alpha)

    @_vectorized
    def psi_prime(self, q: FloatArray) -> FloatArray:
        return self.d * self.alpha * np.power(q, self.alpha - 1)

    def psi_prime_zero(self) -> float:
        return 0.0

    def effective_drift(self) -> float:
        return math.inf

    @property
    def diffusion(self) -> float:
        return 2.0 * self.d if self.alpha == 2 else 0.0

    @property
    def compensated_drift(self) -> float:
        return 0.0

    def stable_part(self) -> Optional[Tuple[float, float]]:
        if self.alpha == 2:
            return None
        return _stable_branching_density_coef(self.d, self.alpha), self.alpha

    def jump_data(self, eps: float) -> Optional[JumpData]:
        part = self.stable_part()
        return None if part is None else _stable_jump_data(*part, eps)

    def q_root(self, mu: float) -> float:
        if mu < 0:
            raise MechanismDomainError("q(μ) requires μ ≥ 0", "mu")
        return (mu / self.d) ** (1.0 / self.alpha)

    def leading_at_zero(self) -> RegularTerm:
        return RegularTerm(self.d, self.alpha)

    def leading_at_infinity(self) -> RegularTerm:
        return RegularTerm(self.d, self.alpha)


@dataclass(frozen=True)
class Mixed(BranchingMechanism):
    """Ψ(q) = γq + (σ²/2)q² + d q^α."""

    gamma: float
    sigma2: float = 0.0
    d: float = 0.0
    alpha: float = 1.5

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise MechanismDomainError("Mixed requires sigma2 ≥ 0", "sigma2")
        if self.d < 0:
            raise MechanismDomainError("Mixed requires d ≥ 0", "d")
        if not 1 < self.alpha <= 2:
            raise MechanismDomainError(
                f"Mixed requires alpha in (1, 2], got {self.alpha}", "alpha"
            )
        if self.sigma2 == 0 and self.d == 0 and not self.gamma > 0:
            raise NonPositiveDriftError(
                "Mixed without diffusion or stable part needs gamma > 0", "gamma"
            )

    @_vectorized
    def psi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.gamma * q + 0.5 * self.sigma2 * q * q + self.d * np.power(q, self.alpha)

    @_vectorized
    def psi_prime(self, q: FloatArray) -> FloatArray:
        return (
            self.gamma
            + self.sigma2 * q
            + self.d * self.alpha * np.power(q, self.alpha - 1)
        )

    def psi_prime_zero(self) -> float:
        return float(self.gamma)

    def effective_drift(self) -> float:
        if self.sigma2 > 0 or self.d > 0:
            return math.inf
        return float(self.gamma)

    @property
    def diffusion(self) -> float:
        return self.sigma2 + (2.0 * self.d if self.alpha == 2 else 0.0)

    def stable_part(self) -> Optional[Tuple[float, float]]:
        if self.d == 0 or self.alpha == 2:
            return None
        return _stable_branching_density_coef(self.d, self.alpha), self.alpha

    def jump_data(self, eps: float) -> Optional[JumpData]:
        part = self.stable_part()
        return None if part is None else _stable_jump_data(*part, eps)

    def _curvature(self) -> Optional[RegularTerm]:
        if self.d > 0 and self.alpha < 2:
            return RegularTerm(self.d, self.alpha)
        if self.sigma2 > 0 or self.d > 0:
            return RegularTerm(0.5 * self.sigma2 + self.d, 2.0)
        return None

    def leading_at_zero(self) -> RegularTerm:
        if self.gamma != 0:
            return RegularTerm(self.gamma, 1.0)
        curv = self._curvature()
        assert curv is not None
        return curv

    def leading_at_infinity(self) -> RegularTerm:
        if self.sigma2 > 0:
            extra = self.d if self.alpha == 2 else 0.0
            return RegularTerm(0.5 * self.sigma2 + extra, 2.0)
        if self.d > 0:
            return RegularTerm(self.d, self.alpha)
        return RegularTerm(self.gamma, 1.0)


@dataclass(frozen=True)
class GeneralTriplet(BranchingMechanism):
    """Ψ for a user-supplied Lévy triplet (γ, σ², π).

    Parameters
    ----------
    gamma : float

    sigma2 : float

    density : Callable[[FloatArray], FloatArray]
        The density of π on (0, ∞), evaluated on arrays.

    exponent_at_zero : float
        ``e0 < 2`` such that the density behaves like ``u^{-1-e0}`` as u ↓ 0.

    exponent_at_infinity : float
        ``e∞ > 0`` such that the density behaves like ``u^{-1-e∞}`` as u → ∞.

    Notes
    -----
    The exponents are declared rather than inferred: deciding numerically
    whether ∫₀¹ u π(du) converges is unreliable near the borderline.
    """

    gamma: float
    sigma2: float
    density: Callable[[FloatArray], FloatArray] = field(repr=False)
    exponent_at_zero: float = 0.0
    exponent_at_infinity: float = 1.0

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise MechanismDomainError("GeneralTriplet requires sigma2 ≥ 0", "sigma2")
        if not self.exponent_at_zero < 2:
            raise MechanismDomainError(
                "∫ (1∧u²) π(du) < ∞ requires exponent_at_zero < 2",
                "exponent_at_zero",
            )
        if not self.exponent_at_infinity > 0:
            raise MechanismDomainError(
                "∫ (1∧u²) π(du) < ∞ requires exponent_at_infinity > 0",
                "exponent_at_infinity",
            )
        d = self.effective_drift()
        if not d > 0:
            raise NonPositiveDriftError(f"effective drift {d} is not positive", "gamma")

    def _small(self, q: float) -> float:
        return _quad_density(
            lambda u: _compensated_exp(q * u) * self.density(u),
            0.0,
            1.0,
            rho=2.0 - self.exponent_at_zero,
        )

    def _large(self, q: float) -> float:
        # u = 1/w maps [1, ∞) onto (0, 1]
        return _quad_density(
            lambda w: -_one_minus_exp(q / w) * self.density(1.0 / w) / (w * w),
            0.0,
            1.0,
            rho=self.exponent_at_infinity,
        )

    @_vectorized
    def psi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        out = np.empty_like(q)
        for idx, qi in np.ndenumerate(q):
            qi = float(qi)
            if qi == 0:
                out[idx] = 0.0
                continue
            out[idx] = (
                self.gamma * qi
                + 0.5 * self.sigma2 * qi * qi
                + self._small(qi)
                + self._large(qi)
            )
        return out

    @_vectorized
    def psi_prime(self, q: FloatArray) -> FloatArray:
        out = np.empty_like(q)
        for idx, qi in np.ndenumerate(q):
            qi = float(qi)
            if qi == 0:
                out[idx] = self.psi_prime_zero()
                continue
            small = _quad_density(
                lambda u: u * _one_minus_exp(qi * u) * self.density(u),
                0.0,
                1.0,
                rho=2.0 - self.exponent_at_zero,
            )
            large = _quad_density(
                lambda w: np.exp(-qi / w) * self.density(1.0 / w) / w**3,
                0.0,
                1.0,
                rho=max(self.exponent_at_infinity - 1.0, 0.5),
            )
            out[idx] = self.gamma + self.sigma2 * qi + small - large
        return out

    def psi_prime_zero(self) -> float:
        if self.exponent_at_infinity <= 1:
            return -math.inf
        mean = _quad_density(
            lambda w: self.density(1.0 / w) / w**3,
            0.0,
            1.0,
            rho=self.exponent_at_infinity - 1.0,
        )
        return self.gamma - mean

    def effective_drift(self) -> float:
        if self.sigma2 > 0 or self.exponent_at_zero >= 1:
            return math.inf
        return self.gamma + _quad_density(
            lambda u: u * self.density(u), 0.0, 1.0, rho=1.0 - self.exponent_at_zero
        )

    @property
    def diffusion(self) -> float:
        return float(self.sigma2)


# ---------------------------------------------------------------------------
# Immigration mechanisms
# ---------------------------------------------------------------------------


class ImmigrationMechanism(ABC):
    """An immigration mechanism Φ.

    Every variant exposes its drift coefficient as the attribute ``b``.
    """

    b: float

    @abstractmethod
    def phi(self, q: ArrayLike) -> ArrayLike:
        """Returns Φ(q) for q ≥ 0."""

    @abstractmethod
    def tail_mass(self, u: float) -> float:
        """Returns ν̄(u) = ν([u, ∞)) for u > 0."""

    @abstractmethod
    def large_jump_mean(self) -> float:
        """Returns ∫_{[1,∞)} u ν(du), possibly infinite."""

    @property
    def is_zero(self) -> bool:
        """Whether Φ ≡ 0."""
        return False

    def leading_at_zero(self) -> Optional[RegularTerm]:
        return None

    def leading_at_infinity(self) -> Optional[RegularTerm]:
        return None

    def log_moment_finite(self) -> Optional[bool]:
        """Whether ∫_{[1,∞)} log(u) ν(du) < ∞; ``None`` if unknown."""
        return True

    def jump_data(self, eps: float) -> Optional[JumpData]:
        """Jump structure of ν relative to ``eps``; ``None`` when ν = 0."""
        return None

    def large_jumps(self) -> "LargeJumpPart":
        """The mechanism q ↦ ∫_{[1,∞)} (1 - e^{-qu}) ν(du)."""
        return LargeJumpPart(self)


@dataclass(frozen=True)
class LinearDrift(ImmigrationMechanism):
    """Φ(q) = bq (continuous immigration only)."""

    b: float

    def __post_init__(self) -> None:
        if not self.b >= 0:
            raise MechanismDomainError(
                f"LinearDrift requires b ≥ 0, got {self.b}", "b"
            )

    @property
    def is_zero(self) -> bool:
        return self.b == 0

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.b * q

    def tail_mass(self, u: float) -> float:
        return 0.0

    def large_jump_mean(self) -> float:
        return 0.0

    def leading_at_zero(self) -> Optional[RegularTerm]:
        return RegularTerm(self.b, 1.0) if self.b > 0 else None

    leading_at_infinity = leading_at_zero


@dataclass(frozen=True)
class StableImmigration(ImmigrationMechanism):
    """Φ(q) = d′ q^β with β ∈ (0, 1)."""

    dprime: float
    beta: float

    def __post_init__(self) -> None:
        if not self.dprime > 0:
            raise MechanismDomainError("StableImmigration requires dprime > 0", "dprime")
        if not 0 < self.beta < 1:
            raise MechanismDomainError(
                f"StableImmigration requires beta in (0, 1), got {self.beta}", "beta"
            )

    @property
    def b(self) -> float:
        return 0.0

    @property
    def _coef(self) -> float:
        # ν(du) = c′ u^{-1-β} du
        return self.dprime * self.beta / special.gamma(1 - self.beta)

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.dprime * np.power(q, self.beta)

    def tail_mass(self, u: float) -> float:
        return self._coef * u ** (-self.beta) / self.beta

    def large_jump_mean(self) -> float:
        return math.inf

    def leading_at_zero(self) -> RegularTerm:
        return RegularTerm(self.dprime, self.beta)

    leading_at_infinity = leading_at_zero

    def jump_data(self, eps: float) -> JumpData:
        c = self._coef
        return JumpData(
            rate=self.tail_mass(eps),
            mean_above=math.inf,
            mean_below=c * eps ** (1 - self.beta) / (1 - self.beta),
            second_moment_below=c * eps ** (2 - self.beta) / (2 - self.beta),
            sampler=_pareto_sampler(eps, self.beta),
        )


@dataclass(frozen=True)
class DerivedFromPsi(ImmigrationMechanism):
    """Φ = Ψ′ - Ψ′(0+): the immigration of a CB conditioned on non-extinction."""

    psi: BranchingMechanism

    def __post_init__(self) -> None:
        if not isinstance(self.psi, BranchingMechanism):
            raise MechanismDomainError("psi must be a BranchingMechanism", "psi")
        if self.psi.psi_prime_zero() == -math.inf:
            raise MechanismDomainError(
                "Ψ′ - Ψ′(0+) is undefined when Ψ′(0+) = -∞", "psi"
            )

    @property
    def b(self) -> float:
        return self.psi.diffusion

    @property
    def is_zero(self) -> bool:
        return self.b == 0 and self.psi.stable_part() is None and not isinstance(
            self.psi, GeneralTriplet
        )

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        slope = self.psi.psi_prime_zero()
        out = np.asarray(self.psi.psi_prime(q), dtype=np.float64) - slope
        return np.where(q == 0, 0.0, np.maximum(out, 0.0))

    def _stable_mass(self) -> Optional[Tuple[float, float]]:
        # ν(du) = u π(du) = c u^{-α} du, a stable measure of index α - 1
        return self.psi.stable_part()

    def tail_mass(self, u: float) -> float:
        part = self._stable_mass()
        if part is None:
            if isinstance(self.psi, GeneralTriplet):
                psi = self.psi
                return _quad_density(
                    lambda w: psi.density(u / w) * u * u / w**3,
                    0.0,
                    1.0,
                    rho=psi.exponent_at_infinity - 1.0,
                )
            return 0.0
        c, alpha = part
        return c * u ** (1 - alpha) / (alpha - 1)

    def large_jump_mean(self) -> float:
        if self._stable_mass() is not None:
            return math.inf
        if isinstance(self.psi, GeneralTriplet):
            if self.psi.exponent_at_infinity <= 2:
                return math.inf
            psi = self.psi
            return _quad_density(
                lambda w: psi.density(1.0 / w) / w**4,
                0.0,
                1.0,
                rho=psi.exponent_at_infinity - 2.0,
            )
        return 0.0

    def log_moment_finite(self) -> Optional[bool]:
        if isinstance(self.psi, GeneralTriplet):
            return self.psi.exponent_at_infinity > 1
        return True

    def _terms(self) -> Optional[Tuple[RegularTerm, RegularTerm]]:
        part = self._stable_mass()
        linear = RegularTerm(self.b, 1.0) if self.b > 0 else None
        stable = None
        if part is not None:
            alpha = part[1]
            d = self.psi.d  # type: ignore[attr-defined]
            stable = RegularTerm(d * alpha, alpha - 1)
        if linear is None and stable is None:
            return None
        # (dominant near zero, dominant near infinity)
        near_zero = stable if stable is not None else linear
        near_inf = linear if linear is not None else stable
        assert near_zero is not None and near_inf is not None
        return near_zero, near_inf

    def leading_at_zero(self) -> Optional[RegularTerm]:
        if isinstance(self.psi, GeneralTriplet):
            return None
        terms = self._terms()
        return None if terms is None else terms[0]

    def leading_at_infinity(self) -> Optional[RegularTerm]:
        if isinstance(self.psi, GeneralTriplet):
            return None
        terms = self._terms()
        return None if terms is None else terms[1]

    def jump_data(self, eps: float) -> Optional[JumpData]:
        part = self._stable_mass()
        if part is None:
            return None
        c, alpha = part
        return JumpData(
            rate=self.tail_mass(eps),
            mean_above=math.inf,
            mean_below=c * eps ** (2 - alpha) / (2 - alpha),
            second_moment_below=c * eps ** (3 - alpha) / (3 - alpha),
            sampler=_pareto_sampler(eps, alpha - 1),
        )


@dataclass(frozen=True)
class PoissonJumps(ImmigrationMechanism):
    """Φ(q) = bq + rate·(1 - e^{-q·size}): drift plus jumps of a fixed size."""

    b: float
    rate: float
    size: float

    def __post_init__(self) -> None:
        if not self.b >= 0:
            raise MechanismDomainError("PoissonJumps requires b ≥ 0", "b")
        if not self.rate > 0:
            raise MechanismDomainError("PoissonJumps requires rate > 0", "rate")
        if not self.size > 0:
            raise MechanismDomainError("PoissonJumps requires size > 0", "size")

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        return self.b * q + self.rate * _one_minus_exp(q * self.size)

    def tail_mass(self, u: float) -> float:
        return float(self.rate) if u <= self.size else 0.0

    def large_jump_mean(self) -> float:
        return self.rate * self.size if self.size >= 1 else 0.0

    def leading_at_zero(self) -> RegularTerm:
        return RegularTerm(self.b + self.rate * self.size, 1.0)

    def leading_at_infinity(self) -> RegularTerm:
        if self.b > 0:
            return RegularTerm(self.b, 1.0)
        return RegularTerm(self.rate, 0.0)

    def jump_data(self, eps: float) -> JumpData:
        size = float(self.size)

        def sample(rng: np.random.Generator, n: int) -> FloatArray:
            return np.full(n, size)

        if size >= eps:
            return JumpData(self.rate, self.rate * size, 0.0, 0.0, sample)
        return JumpData(0.0, 0.0, self.rate * size, self.rate * size * size, sample)


class LogTailVariant(str, Enum):
    ITERATED = "iterated"
    SIMPLE = "simple"


@dataclass(frozen=True)
class LogTailPreset(ImmigrationMechanism):
    """Pure-jump immigration with a logarithmically slow tail on [lower, ∞).

    ``ITERATED`` has ν̄(u) = 1/(log u · log log u), the density
    (log log u + 1)/(u log²u log²(log u)); its log-moment is infinite while
    ∫₀¹ Φ(u)/u du also diverges, which yields null recurrence with linear
    branching. ``SIMPLE`` has ν̄(u) = α/log u, i.e. the density α/(u log² u).

    Φ is evaluated from the closed-form tail by integration by parts,

        Φ(q) = (1 - e^{-q·lower}) ν̄(lower) + ∫_{q·lower}^∞ e^{-s} ν̄(s/q) ds.
    """

    variant: LogTailVariant = LogTailVariant.ITERATED
    alpha: float = 1.0
    lower: float = 100.0

    def __post_init__(self) -> None:
        if not self.lower > math.e:
            raise MechanismDomainError("LogTailPreset requires lower > e", "lower")
        if not self.alpha > 0:
            raise MechanismDomainError("LogTailPreset requires alpha > 0", "alpha")
        object.__setattr__(self, "variant", LogTailVariant(self.variant))

    @property
    def b(self) -> float:
        return 0.0

    def _tail(self, u: FloatArray) -> FloatArray:
        u = np.maximum(np.asarray(u, dtype=np.float64), self.lower)
        lu = np.log(u)
        if self.variant is LogTailVariant.SIMPLE:
            return self.alpha / lu
        return 1.0 / (lu * np.log(lu))

    def tail_mass(self, u: float) -> float:
        return float(self._tail(u))

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        from .quad import integrate_decaying_tail

        _check_nonnegative(q)
        out = np.empty_like(q)
        head = float(self._tail(self.lower))
        for idx, qi in np.ndenumerate(q):
            qi = float(qi)
            if qi == 0:
                out[idx] = 0.0
                continue
            tail = integrate_decaying_tail(
                lambda s: np.exp(-s) * self._tail(s / qi),
                qi * self.lower,
                decay_rate=1.0,
                tol=0.0,
                rel_tol=MECHANISM_REL_TOL,
            )
            out[idx] = _one_minus_exp(qi * self.lower) * head + tail.value
        return out

    def large_jump_mean(self) -> float:
        return math.inf

    def log_moment_finite(self) -> bool:
        return False

    def leading_at_zero(self) -> RegularTerm:
        # Φ(q) ~ ν̄(1/q) for slowly varying tails
        if self.variant is LogTailVariant.SIMPLE:
            return RegularTerm(self.alpha, 0.0, -1.0, 0.0, exact=False)
        return RegularTerm(1.0, 0.0, -1.0, -1.0, exact=False)

    def leading_at_infinity(self) -> RegularTerm:
        return RegularTerm(float(self._tail(self.lower)), 0.0)

    def _inverse_tail(self, y: FloatArray) -> FloatArray:
        if self.variant is LogTailVariant.SIMPLE:
            log_u = self.alpha / y
        else:
            # L log L = 1/y  ⇔  L = s / W(s) with s = 1/y
            s = 1.0 / y
            log_u = s / special.lambertw(s).real
        return np.exp(np.minimum(log_u, 690.0))

    def jump_data(self, eps: float) -> JumpData:
        total = float(self._tail(self.lower))

        def sample(rng: np.random.Generator, n: int) -> FloatArray:
            y = total * (1.0 - rng.random(n))
            return np.maximum(self._inverse_tail(y), self.lower)

        return JumpData(
            rate=total if eps <= self.lower else float(self._tail(eps)),
            mean_above=math.inf,
            mean_below=0.0,
            second_moment_below=0.0,
            sampler=sample,
        )


@dataclass(frozen=True)
class GeneralImmigration(ImmigrationMechanism):
    """Φ for a user-supplied drift ``b`` and Lévy density of ν.

    ``exponent_at_zero < 1`` and ``exponent_at_infinity > 0`` declare the
    behavior ``u^{-1-e}`` of the density at either end.
    """

    b: float
    density: Callable[[FloatArray], FloatArray] = field(repr=False)
    exponent_at_zero: float = 0.0
    exponent_at_infinity: float = 1.0

    def __post_init__(self) -> None:
        if not self.b >= 0:
            raise MechanismDomainError("GeneralImmigration requires b ≥ 0", "b")
        if not self.exponent_at_zero < 1:
            raise MechanismDomainError(
                "∫ (1∧u) ν(du) < ∞ requires exponent_at_zero < 1", "exponent_at_zero"
            )
        if not self.exponent_at_infinity > 0:
            raise MechanismDomainError(
                "∫ (1∧u) ν(du) < ∞ requires exponent_at_infinity > 0",
                "exponent_at_infinity",
            )

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        _check_nonnegative(q)
        out = np.empty_like(q)
        for idx, qi in np.ndenumerate(q):
            qi = float(qi)
            if qi == 0:
                out[idx] = 0.0
                continue
            small = _quad_density(
                lambda u: _one_minus_exp(qi * u) * self.density(u),
                0.0,
                1.0,
                rho=1.0 - self.exponent_at_zero,
            )
            large = _quad_density(
                lambda w: _one_minus_exp(qi / w) * self.density(1.0 / w) / (w * w),
                0.0,
                1.0,
                rho=self.exponent_at_infinity,
            )
            out[idx] = self.b * qi + small + large
        return out

    def tail_mass(self, u: float) -> float:
        if u < 1:
            head = _quad_density(self.density, u, 1.0, rho=1.0)
        else:
            head = 0.0
        start = max(u, 1.0)
        return head + _quad_density(
            lambda w: self.density(start / w) * start / (w * w),
            0.0,
            1.0,
            rho=self.exponent_at_infinity,
        )

    def large_jump_mean(self) -> float:
        if self.exponent_at_infinity <= 1:
            return math.inf
        return _quad_density(
            lambda w: self.density(1.0 / w) / w**3,
            0.0,
            1.0,
            rho=self.exponent_at_infinity - 1.0,
        )


@dataclass(frozen=True)
class LargeJumpPart(ImmigrationMechanism):
    """The jumps of size ≥ 1 of another immigration mechanism."""

    parent: ImmigrationMechanism

    @property
    def b(self) -> float:
        return 0.0

    @property
    def is_zero(self) -> bool:
        return self.parent.tail_mass(1.0) == 0

    def tail_mass(self, u: float) -> float:
        return self.parent.tail_mass(max(u, 1.0))

    def large_jump_mean(self) -> float:
        return self.parent.large_jump_mean()

    def log_moment_finite(self) -> Optional[bool]:
        return self.parent.log_moment_finite()

    @_vectorized
    def phi(self, q: FloatArray) -> FloatArray:
        from .quad import integrate_decaying_tail

        _check_nonnegative(q)
        out = np.empty_like(q)
        head = self.parent.tail_mass(1.0)
        for idx, qi in np.ndenumerate(q):
            qi = float(qi)
            if qi == 0 or head == 0:
                out[idx] = 0.0
                continue
            tail = integrate_decaying_tail(
                np.vectorize(lambda s: math.exp(-s) * self.parent.tail_mass(s / qi)),
                qi,
                decay_rate=1.0,
                tol=0.0,
                rel_tol=MECHANISM_REL_TOL,
            )
            out[idx] = _one_minus_exp(qi) * head + tail.value
        return out

    def leading_at_zero(self) -> Optional[RegularTerm]:
        if self.is_zero:
            return None
        mean = self.parent.large_jump_mean()
        if math.isfinite(mean):
            return RegularTerm(mean, 1.0)
        return self.parent.leading_at_zero()


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CBIModel:
    """A CBI(Ψ, Φ) model.

    Parameters
    ----------
    psi : BranchingMechanism

    phi : ImmigrationMechanism

    Notes
    -----
    ``d`` is the effective drift and ``v = b/d`` the boundary point, with the
    convention C/∞ = 0.
    """

    psi: BranchingMechanism
    phi: ImmigrationMechanism

    def __post_init__(self) -> None:
        if not isinstance(self.psi, BranchingMechanism):
            raise MechanismDomainError(
                f"psi must be a BranchingMechanism, got {type(self.psi).__name__}",
                "psi",
            )
        if not isinstance(self.phi, ImmigrationMechanism):
            raise MechanismDomainError(
                f"phi must be an ImmigrationMechanism, got {type(self.phi).__name__}",
                "phi",
            )
        d = self.psi.effective_drift()
        if not d > 0:
            raise NonPositiveDriftError(f"effective drift {d} is not positive", "psi")

    @functools.cached_property
    def d(self) -> float:
        return self.psi.effective_drift()

    @functools.cached_property
    def v(self) -> float:
        if math.isinf(self.d):
            return 0.0
        return self.phi.b / self.d

    @property
    def criticality(self) -> Criticality:
        return self.psi.criticality()


def psi_eval(mech: BranchingMechanism, q: ArrayLike) -> ArrayLike:
    """Returns Ψ(q)."""
    return mech.psi(q)


def phi_eval(mech: ImmigrationMechanism, q: ArrayLike) -> ArrayLike:
    """Returns Φ(q)."""
    return mech.phi(q)


def psi_prime_zero(mech: BranchingMechanism) -> float:
    """Returns Ψ'(0+); negative for a supercritical mechanism."""
    return mech.psi_prime_zero()


def effective_drift(mech: BranchingMechanism) -> float:
    """Returns d = γ + ∫₀¹ u π(du) for bounded variation, +∞ otherwise."""
    return mech.effective_drift()


def boundary_v(model: CBIModel) -> float:
    """Returns v = b/d; a bounded-variation path started above v stays above it."""
    return model.v


def q_root(mech: BranchingMechanism, mu: float) -> float:
    """Returns q(μ), the largest root of Ψ(q) = μ."""
    return mech.q_root(mu)


def criticality(mech: BranchingMechanism) -> Criticality:
    """Returns the sign of Ψ'(0+) as a `Criticality`."""
    return mech.criticality()
