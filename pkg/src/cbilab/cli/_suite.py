# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""The built-in verification suite run by ``cbilab command=verify``.

Every check compares quadrature or simulation against a closed form and
returns one `CheckResult`. ``perturb`` multiplies the oracle constants so
that the harness itself can be shown to fail.
"""
import logging
import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from cbilab.classify import (
    Longrun,
    Polarity,
    classify,
    polarity_classify,
    recurrence_classify,
    stable_family_classify,
)
from cbilab.mechanism import (
    CBIModel,
    DerivedFromPsi,
    Linear,
    LinearDrift,
    Mixed,
    PoissonJumps,
    Quadratic,
    StableImmigration,
    StablePower,
)
from cbilab.sim import (
    Scheme,
    SimConfig,
    dt_refinement,
    estimate_marginal_laplace,
    estimate_minimum,
    lower_bound_violations,
    mc_estimate,
    mc_laplace,
    simulate_cir_exact,
    simulate_euler,
)
from cbilab.transform import (
    InvariantFnParams,
    g_eval,
    hitting_time_laplace,
    joint_laplace,
    marginal_laplace,
    minimum_cdf,
    supercritical_cb_hit_probability,
    total_population_laplace,
    v_flow,
)

__all__ = ["SuiteContext", "CheckResult", "CHECKS", "run_suite"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteContext:
    seed: int = 0
    workers: int = 1
    tol: float = 1e-10
    scale: float = 1.0
    perturb: float = 1.0

    def paths(self, nominal: int) -> int:
        return max(100, int(round(nominal * self.scale)))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


_Check = Callable[[SuiteContext], List[str]]

CHECKS: Dict[str, _Check] = {}


def check(name: str) -> Callable[[_Check], _Check]:
    """Registers a check; the check returns the list of its failures."""

    def register(func: _Check) -> _Check:
        CHECKS[name] = func
        return func

    return register


def _close(failures: List[str], label: str, value: float, expected: float, atol: float) -> None:
    if not abs(value - expected) <= atol:
        failures.append(f"{label}: got {value!r}, expected {expected!r} ± {atol:g}")


def _within_stderr(
    failures: List[str], label: str, mean: float, stderr: float, expected: float, rel: float = 0.0
) -> None:
    allowed = max(3.0 * stderr, rel * abs(expected))
    if not abs(mean - expected) <= allowed:
        failures.append(
            f"{label}: MC {mean:.6f} ± {stderr:.2g} vs {expected:.6f} (allowed {allowed:.2g})"
        )


# (x, a, μ)
_GRID = [
    (2.0, 1.0, 2.0),
    (1.5, 1.0, 0.5),
    (3.0, 1.0, 1.0),
    (2.0, 0.5, 0.25),
    (4.0, 2.0, 2.0),
    (1.2, 1.1, 5.0),
    (2.5, 0.1, 0.1),
    (3.0, 2.5, 8.0),
    (5.0, 1.0, 0.05),
]


def _cb_half() -> CBIModel:
    return CBIModel(Quadratic(sigma2=1.0), LinearDrift(0.0))


def _conditioned() -> CBIModel:
    psi = Quadratic(sigma2=1.0)
    return CBIModel(psi, DerivedFromPsi(psi))


def _cir(b: float) -> CBIModel:
    return CBIModel(Quadratic(sigma2=2.0), LinearDrift(b))


@check("total_population_cb")
def _total_population_cb(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _cb_half()
    for x, a, mu in _GRID:
        expected = ctx.perturb * math.exp(-(x - a) * math.sqrt(2.0 * mu))
        closed = total_population_laplace(model, x, a, mu).value
        _close(failures, f"closed form (x={x}, a={a}, μ={mu})", closed, expected, 1e-6)
        # Φ ≡ 0: the λ → 0 limit of the joint transform
        limit = joint_laplace(model, x, a, 1e-9, mu, tol=ctx.tol).value
        _close(failures, f"quadrature (x={x}, a={a}, μ={mu})", limit, expected, 1e-6)
    return failures


@check("total_population_conditioned")
def _total_population_conditioned(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _conditioned()
    for x, a, mu in _GRID:
        expected = ctx.perturb * (a / x) * math.exp(-(x - a) * math.sqrt(2.0 * mu))
        value = total_population_laplace(model, x, a, mu, tol=ctx.tol).value
        _close(failures, f"x={x}, a={a}, μ={mu}", value, expected, 1e-6)
    return failures


@check("uniform_minimum")
def _uniform_minimum(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _conditioned()
    for a in np.round(np.arange(0.1, 1.0, 0.1), 10):
        value = minimum_cdf(model, 1.0, float(a), tol=ctx.tol).value
        _close(failures, f"quadrature a={a}", value, ctx.perturb * a, 1e-6)

    config = SimConfig(
        scheme=Scheme.EXACT_CIR,
        dt=1e-3,
        horizon=25.0,
        path_count=ctx.paths(20_000),
        seed=ctx.seed,
        escape_factor=20.0,
        workers=ctx.workers,
    )
    samples = [
        estimate_minimum(p, escape_factor=config.escape_factor)
        for p in simulate_cir_exact(1.0, 0.0, 1.0, 1.0, config)
    ]
    for a in (0.2, 0.5, 0.8):
        est = mc_estimate([float(s.value <= a) for s in samples], seed=ctx.seed)
        _close(failures, f"MC a={a}", est.mean, ctx.perturb * a, 0.02)
    return failures


@check("supercritical_hit")
def _supercritical_hit(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    psi = Mixed(gamma=-1.0, sigma2=2.0)
    expected = ctx.perturb * math.exp(-1.0)
    _close(failures, "closed form", supercritical_cb_hit_probability(psi, 2.0, 1.0), expected, 1e-6)
    quad = minimum_cdf(CBIModel(psi, LinearDrift(0.0)), 2.0, 1.0, tol=ctx.tol).value
    _close(failures, "quadrature", quad, expected, 1e-6)
    return failures


@check("classification_tables")
def _classification_tables(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    cir_table = {
        0.5: (True, Polarity.NOT_POLAR),
        1.0: (True, Polarity.POLAR),
        1.5: (False, Polarity.POLAR),
    }
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for b, (recurrent, polar) in cir_table.items():
            c = classify(_cir(b))
            if c.longrun.is_recurrent is not recurrent or c.boundary_polar is not polar:
                failures.append(f"CIR b={b}: {c.longrun.value}, {c.boundary_polar.value}")

        cases = [(1.5, 0.7, 1.0), (1.5, 0.3, 1.0), (2.0, 0.5, 1.0), (1.2, 0.1, 3.0)]
        cases += [(1.5, 0.5, ratio) for ratio in (0.4, 0.5, 0.6)]
        for alpha, beta, dprime in cases:
            table = stable_family_classify(alpha, beta, 1.0, dprime)
            model = CBIModel(StablePower(1.0, alpha), StableImmigration(dprime, beta))
            longrun = recurrence_classify(model)
            polar = polarity_classify(model)
            if longrun is not table.longrun or polar is not table.boundary_polar:
                failures.append(
                    f"stable α={alpha}, β={beta}, d′={dprime}: generic "
                    f"({longrun.value}, {polar.value}) vs table "
                    f"({table.longrun.value}, {table.boundary_polar.value})"
                )
            edge = math.isclose(beta, alpha - 1)
            expected_recurrent = beta > alpha - 1 or (edge and dprime <= alpha - 1)
            if table.longrun.is_recurrent is not expected_recurrent:
                failures.append(f"stable α={alpha}, β={beta}, d′={dprime}: {table.longrun.value}")
    return failures


@dataclass(frozen=True)
class _Passage:
    hit: Optional[float]
    area: float


def _recurrent_cir_passages(ctx: SuiteContext, nominal: int) -> Tuple[List[_Passage], float]:
    """Hitting time of 1 from 2 and the area up to it, one entry per path."""
    config = SimConfig(
        scheme=Scheme.EXACT_CIR,
        dt=1e-3,
        horizon=30.0,
        path_count=ctx.paths(nominal),
        seed=ctx.seed,
        workers=ctx.workers,
    )
    passages = []
    for path in simulate_cir_exact(2.0, 0.0, 0.5, 2.0, config):
        hit = path.hit_time(1.0)
        passages.append(_Passage(hit, 0.0 if hit is None else path.occupation(hit)))
    return passages, config.horizon


@check("mc_hitting")
def _mc_hitting(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _cir(0.5)
    passages, horizon = _recurrent_cir_passages(ctx, 50_000)
    hits = [s.hit for s in passages]
    for lam in (0.25, 0.5, 1.0):
        expected = ctx.perturb * hitting_time_laplace(model, 2.0, 1.0, lam, tol=ctx.tol).value
        est = mc_laplace(hits, lam, horizon=horizon, seed=ctx.seed)
        _within_stderr(failures, f"λ={lam}", est.mean, est.stderr, expected, rel=0.02)
    return failures


@check("mc_joint")
def _mc_joint(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _cir(0.5)
    passages, _ = _recurrent_cir_passages(ctx, 50_000)
    for lam, mu in ((0.5, 0.5), (1.0, 1.0)):
        expected = ctx.perturb * joint_laplace(model, 2.0, 1.0, lam, mu, tol=ctx.tol).value
        values = [
            0.0 if s.hit is None else math.exp(-lam * s.hit - mu * s.area) for s in passages
        ]
        est = mc_estimate(values, seed=ctx.seed)
        _within_stderr(failures, f"λ={lam}, μ={mu}", est.mean, est.stderr, expected)
    return failures


@check("theta_invariance")
def _theta_invariance(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    models = {"cir_recurrent": _cir(0.5), "cir_transient": _cir(1.5), "conditioned": _conditioned()}
    x, a, lam, mu = 2.0, 1.0, 1.0, 1.0

    for name, model in models.items():
        transforms = {
            "hitting": (0.0, lambda th: hitting_time_laplace(model, x, a, lam, theta=th)),
            "joint": (mu, lambda th: joint_laplace(model, x, a, lam, mu, theta=th)),
            "total": (mu, lambda th: total_population_laplace(model, x, a, mu, theta=th)),
        }
        if not recurrence_classify(model).is_recurrent:
            transforms["minimum"] = (0.0, lambda th: minimum_cdf(model, x, a, theta=th))
        for label, (shift_mu, transform) in transforms.items():
            q = model.psi.q_root(shift_mu)
            thetas = [th for th in (q + 0.25, 1.0, 2.0, 5.0) if th > q]
            values = [transform(th).value for th in thetas]
            spread = (max(values) - min(values)) / max(abs(values[0]), 1e-300)
            if not spread < 1e-9:
                failures.append(f"{name}/{label}: relative spread {spread:.3g} over θ={thetas}")
    return failures


@check("invariant_ode")
def _invariant_ode(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    rng = np.random.default_rng(ctx.seed)
    models = {
        "cir_recurrent": _cir(0.5),
        "conditioned": _conditioned(),
        "subcritical": CBIModel(Quadratic(sigma2=1.0, gamma=1.0), LinearDrift(1.0)),
    }
    for name, model in models.items():
        psi, phi = model.psi, model.phi
        for lam, mu in ((1.0, 0.0), (0.5, 1.0), (0.0, 2.0)):
            params = InvariantFnParams(lam=lam, mu=mu)
            q = psi.q_root(mu)
            for z in q + rng.uniform(0.05, 4.0, size=20):
                z = float(z)
                h = 1e-5 * z
                g = g_eval(model, params, z)
                dg = (g_eval(model, params, z + h) - g_eval(model, params, z - h)) / (2 * h)
                terms = (psi.psi_prime(z) * g, (psi.psi(z) - mu) * dg, (phi.phi(z) + lam) * g)
                residual = terms[0] + terms[1] - terms[2]
                scale = max(abs(t) for t in terms)
                if not abs(residual) <= 1e-6 * scale:
                    failures.append(f"{name} λ={lam} μ={mu} z={z:.4f}: residual {residual:.3g}")
                    break
    return failures


@check("flow_properties")
def _flow_properties(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    half = Quadratic(sigma2=1.0)
    for q, t in ((2.0, 1.0), (0.5, 3.0), (10.0, 0.1)):
        expected = ctx.perturb * q / (1 + q * t / 2)
        _close(failures, f"q²/2 flow q={q} t={t}", v_flow(half, q, t).v, expected, 1e-9)
    linear = Linear(1.0)
    for q, t in ((1.0, math.log(2.0)), (3.0, 2.0)):
        expected = ctx.perturb * q * math.exp(-t)
        _close(failures, f"linear flow q={q} t={t}", v_flow(linear, q, t).v, expected, 1e-9)

    grid = (0.1, 0.5, 1.0)
    for mech in (half, Mixed(gamma=-1.0, sigma2=2.0)):
        for t in grid:
            for s in grid:
                for q in (0.5, 1.0, 3.0):
                    direct = v_flow(mech, q, t + s).v
                    composed = v_flow(mech, v_flow(mech, q, s).v, t).v
                    if not abs(direct - composed) <= 1e-8:
                        failures.append(f"semigroup t={t} s={s} q={q}: {direct} vs {composed}")

    cir = _cir(1.0)
    for x, q, t in ((1.0, 1.0, 1.0), (2.0, 0.5, 2.0)):
        expected = ctx.perturb * math.exp(-x * q / (1 + q * t)) / (1 + q * t)
        _close(failures, f"CIR marginal x={x} q={q} t={t}", marginal_laplace(cir, x, t, q), expected, 1e-9)

    config = SimConfig(dt=0.05, horizon=1.0, path_count=ctx.paths(20_000), seed=ctx.seed, workers=ctx.workers)
    paths = list(simulate_cir_exact(2.0, 0.0, 1.0, 1.0, config))
    est = estimate_marginal_laplace(paths, 1.0, 1.0, seed=ctx.seed)
    _within_stderr(failures, "MC marginal", est.mean, est.stderr, ctx.perturb * math.exp(-0.5) / 2)
    return failures


@check("path_lower_bound")
def _path_lower_bound(ctx: SuiteContext) -> List[str]:
    model = CBIModel(Linear(1.0), PoissonJumps(b=0.5, rate=1.0, size=1.0))
    config = SimConfig(
        scheme=Scheme.EULER,
        dt=1e-3,
        horizon=5.0,
        path_count=ctx.paths(10_000),
        seed=ctx.seed,
        workers=ctx.workers,
    )
    count = lower_bound_violations(simulate_euler(model, 2.0, config), model)
    return [] if count == 0 else [f"{count} grid points below the lower bound"]


@check("recurrent_limit")
def _recurrent_limit(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _cir(0.5)
    values = [hitting_time_laplace(model, 2.0, 1.0, lam, tol=ctx.tol).value for lam in (1e-1, 1e-3, 1e-6)]
    if not values[0] < values[1] < values[2]:
        failures.append(f"not increasing as λ decreases: {values}")
    threshold = min(0.999 * ctx.perturb, 1.0)
    if not values[-1] > threshold:
        failures.append(f"value at λ=1e-6 is {values[-1]}, not above {threshold}")
    if recurrence_classify(model) is not Longrun.NULL_RECURRENT:
        failures.append("the model is not classified recurrent")
    return failures


@check("dt_refinement")
def _dt_refinement(ctx: SuiteContext) -> List[str]:
    failures: List[str] = []
    model = _cir(0.5)
    reference = ctx.perturb * hitting_time_laplace(model, 2.0, 1.0, 1.0, tol=ctx.tol).value
    config = SimConfig(
        scheme=Scheme.EULER,
        horizon=8.0,
        path_count=ctx.paths(4000),
        block_size=500,
        seed=ctx.seed,
        workers=ctx.workers,
    )
    rows = dt_refinement(model, 2.0, 1.0, 1.0, reference, config)
    for row in rows:
        allowed = 3.0 * row.estimate.stderr + row.estimate.bias_bound
        if not abs(row.error) <= allowed:
            failures.append(
                f"dt={row.dt:g}: MC {row.estimate.mean:.6g}, expected {reference:.6g} ± {allowed:.2g}"
            )
    coarse, fine = rows[0], rows[-1]
    joint = math.hypot(coarse.estimate.stderr, fine.estimate.stderr)
    if not abs(fine.error) <= abs(coarse.error) + 3.0 * joint:
        failures.append(
            f"error grows from {coarse.error:+.3g} at dt={coarse.dt:g} "
            f"to {fine.error:+.3g} at dt={fine.dt:g}"
        )
    return failures


def run_suite(ctx: SuiteContext, name_filter: Optional[str] = None) -> Iterable[CheckResult]:
    """Runs every registered check whose name contains ``name_filter``."""
    for name, func in CHECKS.items():
        if name_filter and name_filter not in name:
            continue
        start = time.perf_counter()
        log.info("running check %s", name)
        try:
            failures = func(ctx)
        except Exception as exc:  # a crashing check is a failing check
            failures = [f"{type(exc).__name__}: {exc}"]
        elapsed = time.perf_counter() - start
        detail = "ok" if not failures else "; ".join(failures)
        yield CheckResult(name, not failures, detail, elapsed)
