# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""Long-run classification of CBI processes and polarity of the boundary point v.

Verdicts for catalog mechanisms are decided by comparing the leading terms of
Φ and Ψ (`RegularTerm`) with the Bertrand integrals

    ∫ u^p log(L)^l1 log(log(L))^l2 du,

and only fall back on `divergence_probe` when a mechanism exposes no leading
term.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ._invariant import InvariantFunction, LogPrimitive
from .errors import BoundaryCaseWarning, CbiLabDomainError, TransformDomainError
from .mechanism import (
    MECHANISM_REL_TOL,
    BranchingMechanism,
    CBIModel,
    Criticality,
    RegularTerm,
    StableImmigration,
    StablePower,
)
from .quad import ProbeVerdict, Side, divergence_probe

__all__ = [
    "Longrun",
    "Polarity",
    "Method",
    "Answer",
    "Evidence",
    "Classification",
    "classify",
    "recurrence_classify",
    "polarity_classify",
    "stable_family_classify",
    "positive_recurrence_test",
    "conditioned_subcritical_classify",
]

log = logging.getLogger(__name__)

BOUNDARY_REL_TOL = 1e-12


class Longrun(str, Enum):
    POSITIVE_RECURRENT = "positive_recurrent"
    NULL_RECURRENT = "null_recurrent"
    TRANSIENT = "transient"
    UNDETERMINED = "undetermined"

    @property
    def is_recurrent(self) -> bool:
        return self in (Longrun.POSITIVE_RECURRENT, Longrun.NULL_RECURRENT)


class Polarity(str, Enum):
    POLAR = "polar"
    NOT_POLAR = "not_polar"
    UNDETERMINED = "undetermined"


class Method(str, Enum):
    ANALYTIC = "analytic"
    NUMERIC = "numeric"


class Answer(str, Enum):
    YES = "yes"
    NO = "no"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Evidence:
    criterion: str
    method: Method
    verdict: str


@dataclass(frozen=True)
class Classification:
    """The full classification of a model.

    Attributes
    ----------
    criticality : Criticality

    longrun : Longrun
        A positive recurrent process is also recurrent.

    boundary_polar : Polarity
        Whether v is polar, i.e. never reached from x > v.

    v : float

    d : float
        The effective drift; ``inf`` for unbounded variation.

    evidence : Tuple[Evidence, ...]

    notes : Tuple[str, ...]
    """

    criticality: Criticality
    longrun: Longrun
    boundary_polar: Polarity
    v: float
    d: float
    evidence: Tuple[Evidence, ...] = ()
    notes: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.criticality is Criticality.SUPERCRITICAL:
            assert self.longrun is Longrun.TRANSIENT

    @property
    def hits_boundary_infinitely_often(self) -> bool:
        return self.longrun.is_recurrent and self.boundary_polar is Polarity.NOT_POLAR

    def to_dict(self) -> Dict[str, Any]:
        return {
            "criticality": self.criticality.value,
            "longrun": self.longrun.value,
            "boundary_polar": self.boundary_polar.value,
            "v": self.v,
            "d": self.d if math.isfinite(self.d) else "inf",
            "hits_boundary_infinitely_often": self.hits_boundary_infinitely_often,
            "evidence": [
                {"criterion": e.criterion, "method": e.method.value, "verdict": e.verdict}
                for e in self.evidence
            ],
            "notes": list(self.notes),
        }


@dataclass
class _Trail:
    evidence: List[Evidence] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, criterion: str, method: Method, verdict: str) -> None:
        self.evidence.append(Evidence(criterion, method, verdict))


def _is(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def _near_zero_converges(term: RegularTerm) -> bool:
    # ∫₀ u^p L^l1 (log L)^l2 du with L = log(1/u)
    p, l1, l2 = term.power, term.log_power, term.loglog_power
    if not _is(p, -1.0):
        return p > -1.0
    if not _is(l1, -1.0):
        return l1 < -1.0
    return l2 < -1.0 and not _is(l2, -1.0)


def _threshold(coef: float, threshold: float, trail: _Trail, what: str) -> int:
    """-1, 0, 1 as ``coef`` is below, on, or above ``threshold``; warns on the boundary."""
    if math.isclose(coef, threshold, rel_tol=BOUNDARY_REL_TOL):
        warnings.warn(
            f"{what}: coefficient {coef} equals the threshold {threshold} up to "
            "round-off; the verdict is discontinuous here",
            BoundaryCaseWarning,
        )
        trail.notes.append(f"{what} sits on the boundary coefficient {threshold}")
        return 0
    return -1 if coef < threshold else 1


# -- positive recurrence -----------------------------------------------------


def _positive_recurrence(model: CBIModel, trail: _Trail) -> Answer:
    """∫₀¹ Φ(u)/Ψ(u) du < ∞."""
    psi_lead = model.psi.leading_at_zero()
    phi_lead = model.phi.leading_at_zero()
    if psi_lead is not None and phi_lead is not None:
        ratio = phi_lead / psi_lead
        converges = _near_zero_converges(ratio)
        answer = Answer.YES if converges else Answer.NO
        trail.add("integral of phi/psi near 0", Method.ANALYTIC, answer.value)
        return answer

    log.debug("probing ∫ Φ/Ψ near 0 numerically")
    probe = divergence_probe(
        lambda u: np.asarray(model.phi.phi(u)) / np.asarray(model.psi.psi(u)), 0.0
    )
    answer = {
        ProbeVerdict.CONVERGES: Answer.YES,
        ProbeVerdict.DIVERGES: Answer.NO,
        ProbeVerdict.INCONCLUSIVE: Answer.UNDETERMINED,
    }[probe.verdict]
    trail.add("integral of phi/psi near 0", Method.NUMERIC, answer.value)
    return answer


def _log_moment(model: CBIModel, answer: Answer, trail: _Trail) -> None:
    if model.criticality is not Criticality.SUBCRITICAL:
        return
    finite = model.phi.log_moment_finite()
    if finite is None:
        return
    expected = Answer.YES if finite else Answer.NO
    trail.add("log-moment of the immigration measure", Method.ANALYTIC, expected.value)
    if answer is not Answer.UNDETERMINED and answer is not expected:
        trail.notes.append(
            "the log-moment test disagrees with the integral test for positive recurrence"
        )


# -- recurrence --------------------------------------------------------------


def _recurrence_from_terms(
    ratio: RegularTerm, kappa: float, trail: _Trail
) -> Longrun:
    """Decides ∫₀ dz/Ψ(z) exp(-∫_z Φ/Ψ) = ∞ from Φ/Ψ ~ C u^p L^l1 (log L)^l2."""
    p, l1, l2, c = ratio.power, ratio.log_power, ratio.loglog_power, ratio.coef
    if not _is(p, -1.0):
        return Longrun.TRANSIENT if p < -1.0 else Longrun.POSITIVE_RECURRENT

    coef_threshold: Optional[float] = None
    if _is(kappa, 1.0):
        if _is(l1, -1.0):
            if _is(l2, 0.0):
                coef_threshold = 1.0
            else:
                return Longrun.TRANSIENT if l2 > 0 else Longrun.NULL_RECURRENT
        else:
            return Longrun.TRANSIENT if l1 > -1.0 else Longrun.POSITIVE_RECURRENT
    else:
        if _is(l1, 0.0) and _is(l2, 0.0):
            coef_threshold = kappa - 1.0
        elif l1 > 0 or (_is(l1, 0.0) and l2 > 0):
            return Longrun.TRANSIENT
        else:
            return Longrun.NULL_RECURRENT

    if not ratio.exact:
        trail.notes.append(
            "the recurrence threshold on the coefficient of the immigration tail "
            "involves a universal constant that is not known explicitly"
        )
        return Longrun.UNDETERMINED
    side = _threshold(c, coef_threshold, trail, "recurrence")
    return Longrun.TRANSIENT if side > 0 else Longrun.NULL_RECURRENT


def _recurrence(model: CBIModel, trail: _Trail, *, large_jumps_only: bool = False) -> Longrun:
    if model.criticality is Criticality.SUPERCRITICAL:
        trail.add("supercritical", Method.ANALYTIC, Longrun.TRANSIENT.value)
        return Longrun.TRANSIENT

    if large_jumps_only:
        model = CBIModel(model.psi, model.phi.large_jumps())
        if model.phi.is_zero:
            trail.add("no immigration jumps of size at least 1", Method.ANALYTIC, "recurrent")
            return Longrun.POSITIVE_RECURRENT
    elif model.phi.is_zero:
        trail.notes.append(
            "pure branching without immigration is absorbed at 0 or dies out; "
            "its long-run behavior is not covered by the recurrence criterion"
        )
        return Longrun.UNDETERMINED

    answer = _positive_recurrence(model, trail)
    _log_moment(model, answer, trail)
    if answer is Answer.YES:
        return Longrun.POSITIVE_RECURRENT

    psi_lead = model.psi.leading_at_zero()
    phi_lead = model.phi.leading_at_zero()
    if psi_lead is not None and phi_lead is not None:
        verdict = _recurrence_from_terms(phi_lead / psi_lead, psi_lead.power, trail)
        trail.add("invariant integral near 0", Method.ANALYTIC, verdict.value)
        return verdict

    log.debug("probing the recurrence integral near 0 numerically")
    inv = InvariantFunction(model, 0.0, 0.0, 1.0, tol=1e-8)
    probe = divergence_probe(inv.g_offset, 0.0)
    verdict = {
        ProbeVerdict.DIVERGES: Longrun.NULL_RECURRENT,
        ProbeVerdict.CONVERGES: Longrun.TRANSIENT,
        ProbeVerdict.INCONCLUSIVE: Longrun.UNDETERMINED,
    }[probe.verdict]
    if answer is Answer.UNDETERMINED and verdict is Longrun.NULL_RECURRENT:
        verdict = Longrun.UNDETERMINED
    trail.add("invariant integral near 0", Method.NUMERIC, verdict.value)
    return verdict


# -- polarity ----------------------------------------------------------------


def _polarity(model: CBIModel, trail: _Trail) -> Polarity:
    if math.isfinite(model.d):
        trail.add("finite effective drift", Method.ANALYTIC, Polarity.POLAR.value)
        return Polarity.POLAR

    psi_lead = model.psi.leading_at_infinity()
    if psi_lead is not None and model.phi.is_zero:
        verdict = Polarity.NOT_POLAR if psi_lead.power > 1.0 else Polarity.UNDETERMINED
        trail.add("integral of 1/psi at infinity", Method.ANALYTIC, verdict.value)
        return verdict

    phi_lead = None if model.phi.is_zero else model.phi.leading_at_infinity()
    if psi_lead is not None and phi_lead is not None:
        verdict = _polarity_from_terms(phi_lead / psi_lead, psi_lead.power, trail)
        trail.add("invariant integral at infinity", Method.ANALYTIC, verdict.value)
        return verdict

    log.debug("probing the polarity integral at infinity numerically")
    inv = InvariantFunction(model, 0.0, 0.0, tol=1e-8)
    theta = inv.theta

    def mapped(w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        return inv.g_offset(1.0 / w - inv.q) / w**2

    probe = divergence_probe(mapped, 0.0, span=1.0 / theta)
    verdict = {
        ProbeVerdict.DIVERGES: Polarity.POLAR,
        ProbeVerdict.CONVERGES: Polarity.NOT_POLAR,
        ProbeVerdict.INCONCLUSIVE: Polarity.UNDETERMINED,
    }[probe.verdict]
    trail.add("invariant integral at infinity", Method.NUMERIC, verdict.value)
    return verdict


def _polarity_from_terms(ratio: RegularTerm, kappa: float, trail: _Trail) -> Polarity:
    """Decides ∫^∞ dz/Ψ(z) exp(∫^z Φ/Ψ) = ∞ from Φ/Ψ ~ C z^p L^l1 (log L)^l2."""
    p, l1, l2 = ratio.power, ratio.log_power, ratio.loglog_power
    if not _is(p, -1.0):
        if p > -1.0:
            return Polarity.POLAR
        return Polarity.NOT_POLAR if kappa > 1.0 else Polarity.UNDETERMINED
    if l1 > 0 and not _is(l1, 0.0):
        return Polarity.POLAR
    if _is(l1, 0.0):
        if _is(l2, 0.0):
            if not ratio.exact:
                return Polarity.UNDETERMINED
            side = _threshold(ratio.coef, kappa - 1.0, trail, "polarity")
            return Polarity.POLAR if side >= 0 else Polarity.NOT_POLAR
        return Polarity.POLAR if l2 > 0 else Polarity.NOT_POLAR
    return Polarity.NOT_POLAR


# -- public API --------------------------------------------------------------


def _boundary_notes(model: CBIModel, longrun: Longrun, polar: Polarity, trail: _Trail) -> None:
    if longrun.is_recurrent and polar is Polarity.POLAR:
        psi_lead = model.psi.leading_at_zero()
        phi_lead = model.phi.leading_at_zero()
        if psi_lead is not None and phi_lead is not None and math.isinf(model.d):
            ratio = phi_lead / psi_lead
            if _is(ratio.power, -1.0) and _is(ratio.log_power, 0.0) and _is(
                ratio.loglog_power, 0.0
            ) and math.isclose(ratio.coef, psi_lead.power - 1.0, rel_tol=BOUNDARY_REL_TOL):
                trail.notes.append("0 is polar but liminf X_t = 0")


def classify(model: CBIModel) -> Classification:
    """Classifies ``model``: criticality, long-run behavior and polarity of v.

    Examples
    --------
    >>> from cbilab import CBIModel, Quadratic, LinearDrift
    >>> c = classify(CBIModel(Quadratic(sigma2=2.0), LinearDrift(b=1.0)))
    >>> c.longrun, c.boundary_polar
    (<Longrun.NULL_RECURRENT: 'null_recurrent'>, <Polarity.POLAR: 'polar'>)
    """
    trail = _Trail()
    longrun = _recurrence(model, trail)
    polar = _polarity(model, trail)
    _boundary_notes(model, longrun, polar, trail)
    return Classification(
        criticality=model.criticality,
        longrun=longrun,
        boundary_polar=polar,
        v=model.v,
        d=model.d,
        evidence=tuple(trail.evidence),
        notes=tuple(trail.notes),
    )


def recurrence_classify(model: CBIModel, *, large_jumps_only: bool = False) -> Longrun:
    """The long-run verdict alone.

    ``large_jumps_only=True`` replaces Φ by the contribution of immigration
    jumps of size at least 1, which leaves the verdict of subcritical models
    unchanged.
    """
    return _recurrence(model, _Trail(), large_jumps_only=large_jumps_only)


def polarity_classify(model: CBIModel) -> Polarity:
    return _polarity(model, _Trail())


def positive_recurrence_test(model: CBIModel) -> Answer:
    """Whether ∫₀¹ Φ/Ψ < ∞, which gives an invariant probability distribution."""
    if model.criticality is Criticality.SUPERCRITICAL:
        raise CbiLabDomainError("positive recurrence requires a (sub)critical model")
    if model.phi.is_zero:
        return Answer.UNDETERMINED
    trail = _Trail()
    answer = _positive_recurrence(model, trail)
    _log_moment(model, answer, trail)
    return answer


def stable_family_classify(
    alpha: float, beta: float, d: float, dprime: float
) -> Classification:
    """Classifies Ψ(q) = d q^α, Φ(q) = d′ q^β with α ∈ (1, 2] and β ∈ (0, 1).

    With c = d′/d: β > α-1 gives positive recurrence and a polar 0; β < α-1
    gives transience and a non-polar 0; at β = α-1 the process is recurrent
    iff c ≤ α-1 and 0 is polar iff c ≥ α-1.
    """
    psi = StablePower(d=d, alpha=alpha)
    phi = StableImmigration(dprime=dprime, beta=beta)
    trail = _Trail()
    ratio = dprime / d
    edge = alpha - 1.0

    if math.isclose(beta, edge, rel_tol=BOUNDARY_REL_TOL, abs_tol=BOUNDARY_REL_TOL):
        side = _threshold(ratio, edge, trail, "stable family")
        longrun = Longrun.NULL_RECURRENT if side <= 0 else Longrun.TRANSIENT
        polar = Polarity.POLAR if side >= 0 else Polarity.NOT_POLAR
        if side == 0:
            trail.notes.append("0 is polar but liminf X_t = 0")
    elif beta > edge:
        longrun, polar = Longrun.POSITIVE_RECURRENT, Polarity.POLAR
    else:
        longrun, polar = Longrun.TRANSIENT, Polarity.NOT_POLAR

    trail.add("stable family table", Method.ANALYTIC, f"{longrun.value}, {polar.value}")
    return Classification(
        criticality=Criticality.CRITICAL,
        longrun=longrun,
        boundary_polar=polar,
        v=0.0,
        d=psi.effective_drift(),
        evidence=tuple(trail.evidence),
        notes=tuple(trail.notes),
    )


def conditioned_subcritical_classify(psi: BranchingMechanism) -> Optional[bool]:
    """Recurrence of the subcritical CB conditioned on non-extinction.

    Decides whether ∫₀¹ dz/z exp(-∫_z¹ (1/(γu) - 1/Ψ(u)) du) diverges, with
    γ = Ψ′(0+). Returns ``None`` when the probe is inconclusive.
    """
    if psi.criticality() is not Criticality.SUBCRITICAL:
        raise TransformDomainError("requires a subcritical branching mechanism")
    gamma = psi.psi_prime_zero()

    def scaled(u: np.ndarray) -> np.ndarray:
        # u·(1/(γu) - 1/Ψ(u)) = (Ψ(u) - γu)/(γΨ(u))
        values = np.asarray(psi.psi(u), dtype=np.float64)
        return (values - gamma * u) / (gamma * values)

    inner = LogPrimitive(scaled, 0.0, 1.0)

    def integrand(z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return np.exp(inner(z)) / z

    probe = divergence_probe(integrand, 0.0, rel_tol=MECHANISM_REL_TOL * 100)
    if probe.verdict is ProbeVerdict.INCONCLUSIVE:
        return None
    return probe.verdict is ProbeVerdict.DIVERGES
