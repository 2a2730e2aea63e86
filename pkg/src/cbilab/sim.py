# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""Monte Carlo simulation of CBI paths and first-passage functionals.

Paths are produced in fixed blocks of ``SimConfig.block_size``; block ``j``
draws from ``rng_stream(seed, stream_offset + j)`` alone, so every path is
bit-identical regardless of the number of workers.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import IO, Iterable, Iterator, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import SimulationError
from .mechanism import (
    CBIModel,
    DerivedFromPsi,
    GeneralImmigration,
    GeneralTriplet,
    JumpData,
    LinearDrift,
    Quadratic,
)
from .typing import FloatArray

__all__ = [
    "Scheme",
    "SimConfig",
    "PathSample",
    "MinimumSample",
    "MCEstimate",
    "RefinementRow",
    "DEFAULT_ESCAPE_FACTOR",
    "rng_stream",
    "simulate_cir_exact",
    "simulate_euler",
    "simulate",
    "estimate_hitting_time",
    "estimate_minimum",
    "mc_estimate",
    "mc_laplace",
    "estimate_hitting_laplace",
    "estimate_joint_laplace",
    "estimate_minimum_cdf",
    "estimate_marginal_laplace",
    "estimate_mean",
    "dt_refinement",
    "lower_bound_violations",
    "write_path_dump",
]

log = logging.getLogger(__name__)

# Largest expected number of jumps per substep.
_MAX_JUMP_INTENSITY = 0.1

DEFAULT_ESCAPE_FACTOR = 50.0


class Scheme(str, Enum):
    EXACT_CIR = "exact_cir"
    EULER = "euler_full_truncation"


@dataclass(frozen=True)
class SimConfig:
    """Settings of a simulation run.

    Parameters
    ----------
    scheme : Scheme

    dt : float
        Grid step.

    horizon : float
        Final time T ≥ dt.

    path_count : int

    seed : int

    stream_offset : int
        Index of the RNG stream of the first block.

    small_jump_cutoff : float
        Jumps below this size are replaced by their compensator.

    block_size : int
        Paths per RNG stream.

    escape_factor : float
        A path is considered to have escaped once it exceeds
        ``escape_factor · x0``.

    gaussian_correction : bool
        Adds the variance of the discarded small branching jumps to the
        diffusion coefficient.

    max_substeps : int

    workers : int
    """

    scheme: Scheme = Scheme.EXACT_CIR
    dt: float = 1e-2
    horizon: float = 20.0
    path_count: int = 1000
    seed: int = 0
    stream_offset: int = 0
    small_jump_cutoff: float = 1e-3
    block_size: int = 64
    escape_factor: float = DEFAULT_ESCAPE_FACTOR
    gaussian_correction: bool = False
    max_substeps: int = 10_000
    workers: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.dt > 0:
            raise SimulationError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise SimulationError(f"horizon {self.horizon} is shorter than dt {self.dt}")
        if self.path_count < 1:
            raise SimulationError(f"path_count must be at least 1, got {self.path_count}")
        if not self.small_jump_cutoff > 0:
            raise SimulationError("small_jump_cutoff must be positive")
        if self.block_size < 1 or self.workers < 1:
            raise SimulationError("block_size and workers must be at least 1")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class PathSample:
    """One simulated path on the grid ``times``.

    ``step_minima[i]`` is a sample of the minimum of the path over
    ``[times[i], times[i+1]]``, drawn from the Brownian bridge with frozen
    diffusion coefficient between the two grid values.
    """

    path_id: int
    times: FloatArray = field(repr=False)
    values: FloatArray = field(repr=False)
    step_minima: FloatArray = field(repr=False)

    @property
    def running_min(self) -> float:
        return float(min(self.values.min(), self.step_minima.min(initial=np.inf)))

    @cached_property
    def _cumulative_occupation(self) -> FloatArray:
        widths = np.diff(self.times)
        areas = 0.5 * widths * (self.values[1:] + self.values[:-1])
        return np.concatenate([[0.0], np.cumsum(areas)])

    def occupation(self, until: Optional[float] = None) -> float:
        """Trapezoid approximation of ∫₀^until X_s ds (default: the whole path)."""
        if until is None or until >= self.times[-1]:
            return float(self._cumulative_occupation[-1])
        i = int(np.searchsorted(self.times, until, side="right")) - 1
        i = max(i, 0)
        h = until - self.times[i]
        width = self.times[i + 1] - self.times[i]
        x_at = self.values[i] + (self.values[i + 1] - self.values[i]) * h / width
        return float(self._cumulative_occupation[i] + 0.5 * h * (self.values[i] + x_at))

    def hit_time(self, a: float) -> Optional[float]:
        """First time the path reaches [0, a], or ``None``."""
        if self.values[0] <= a:
            return 0.0
        hits = np.flatnonzero(self.step_minima <= a)
        if hits.size == 0:
            return None
        i = int(hits[0])
        t0, t1 = self.times[i], self.times[i + 1]
        x0, x1 = self.values[i], self.values[i + 1]
        if x1 <= a:
            return float(t0 + (t1 - t0) * (x0 - a) / (x0 - x1))
        return float(0.5 * (t0 + t1))

    def escape_time(self, level: float) -> Optional[float]:
        above = np.flatnonzero(self.values >= level)
        return None if above.size == 0 else float(self.times[above[0]])


class MinimumSample(NamedTuple):
    value: float
    censored: bool


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo mean with its standard error ``sample_std/√n``.

    ``bias_bound`` bounds the bias due to censored samples; ``flagged`` is set
    when it exceeds the tolerance of the estimate.
    """

    mean: float
    stderr: float
    n: int
    seed: Optional[int] = None
    bias_bound: float = 0.0
    flagged: bool = False
    censored_fraction: float = 0.0


def rng_stream(seed: int, stream_index: int) -> np.random.Generator:
    """The counter-based generator for stream ``stream_index`` of run ``seed``.

    Examples
    --------
    >>> a = rng_stream(7, 3).random(4)
    >>> b = rng_stream(7, 3).random(4)
    >>> bool((a == b).all())
    True
    """
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream_index,)))
    )


def _bridge_minimum(
    rng: np.random.Generator, x: FloatArray, y: FloatArray, variance: FloatArray
) -> FloatArray:
    """Samples the minimum of a Brownian bridge from x to y with total variance ``variance``."""
    u = 1.0 - rng.random(x.shape)
    spread = np.sqrt((x - y) ** 2 - 2.0 * variance * np.log(u))
    return np.maximum(0.5 * (x + y - spread), 0.0)


def _blocks(config: SimConfig) -> List[range]:
    size = config.block_size
    return [
        range(start, min(start + size, config.path_count))
        for start in range(0, config.path_count, size)
    ]


def _run_blocks(config: SimConfig, simulate_block) -> Iterator[PathSample]:
    blocks = _blocks(config)
    jobs = [(j, ids) for j, ids in enumerate(blocks)]

    def run(job) -> List[PathSample]:
        j, ids = job
        rng = rng_stream(config.seed, config.stream_offset + j)
        return simulate_block(rng, ids)

    if config.workers == 1:
        for job in jobs:
            yield from run(job)
        return
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        for block in pool.map(run, jobs):
            yield from block


def _package(
    ids: range, times: FloatArray, grid: FloatArray, minima: FloatArray
) -> List[PathSample]:
    return [
        PathSample(path_id, times, grid[:, k].copy(), minima[:, k].copy())
        for k, path_id in enumerate(ids)
    ]


def simulate_cir_exact(
    sigma2: float, gamma: float, b: float, x0: float, config: SimConfig
) -> Iterator[PathSample]:
    """Exact transitions of dX = (b - γX)dt + σ√X dB on the ``dt`` grid.

    Each step samples the noncentral chi-square law as a Poisson mixture of
    gamma variables.
    """
    if not sigma2 > 0 or not b >= 0 or not x0 >= 0:
        raise SimulationError(
            f"exact CIR needs sigma2 > 0, b ≥ 0, x0 ≥ 0; got {sigma2}, {b}, {x0}"
        )
    dt = config.dt
    steps = config.steps
    times = np.linspace(0.0, steps * dt, steps + 1)
    if gamma == 0:
        scale = sigma2 * dt / 4.0
        decay = 1.0
    else:
        decay = math.exp(-gamma * dt)
        scale = sigma2 * (1.0 - decay) / (4.0 * gamma)
    half_df = 2.0 * b / sigma2

    def block(rng: np.random.Generator, ids: range) -> List[PathSample]:
        n = len(ids)
        grid = np.empty((steps + 1, n))
        minima = np.empty((steps, n))
        x = np.full(n, float(x0))
        grid[0] = x
        for i in range(steps):
            count = rng.poisson(0.5 * x * decay / scale)
            y = 2.0 * scale * rng.gamma(half_df + count)
            minima[i] = np.minimum(_bridge_minimum(rng, x, y, sigma2 * x * dt), np.minimum(x, y))
            x = y
            grid[i + 1] = x
        return _package(ids, times, grid, minima)

    return _run_blocks(config, block)


def _simulated(data: Optional[JumpData]) -> Optional[JumpData]:
    # jump data with no jumps above the cutoff is all compensator
    if data is not None and data.rate == 0:
        return None
    return data


def _add_jumps(
    rng: np.random.Generator, x: FloatArray, intensity: FloatArray, data: JumpData
) -> FloatArray:
    counts = rng.poisson(intensity)
    total = int(counts.sum())
    if total == 0:
        return x
    sizes = data.sampler(rng, total)
    owners = np.repeat(np.arange(x.size), counts)
    out = x.copy()
    np.add.at(out, owners, sizes)
    return out


def simulate_euler(model: CBIModel, x0: float, config: SimConfig) -> Iterator[PathSample]:
    """Full-truncation Euler scheme for the jump-diffusion SDE of a CBI model.

    Jumps of size at least ``small_jump_cutoff`` are simulated: branching jumps
    at rate ``X·π([ε, ∞))`` and immigration jumps at rate ``ν([ε, ∞))``.
    Smaller jumps contribute their compensator mean to the drift.

    Raises
    ------
    SimulationError
        For mechanisms given only by a density, or when keeping the jump
        intensity per substep below 0.1 needs more than ``max_substeps``.
    """
    psi, phi = model.psi, model.phi
    if isinstance(psi, GeneralTriplet) or isinstance(phi, GeneralImmigration) or (
        isinstance(phi, DerivedFromPsi) and isinstance(phi.psi, GeneralTriplet)
    ):
        raise SimulationError("density-defined mechanisms cannot be simulated")
    if not x0 >= 0:
        raise SimulationError(f"x0 must be nonnegative, got {x0}")

    eps = config.small_jump_cutoff
    branching_full = psi.jump_data(eps)
    immigration_full = phi.jump_data(eps)
    branching = _simulated(branching_full)
    immigration = _simulated(immigration_full)

    sigma2 = psi.diffusion
    kill = psi.compensated_drift
    if branching_full is not None:
        kill += branching_full.mean_above if branching is not None else 0.0
        if config.gaussian_correction:
            sigma2 += branching_full.second_moment_below
    inflow = phi.b
    if immigration_full is not None:
        inflow += immigration_full.mean_below

    dt = config.dt
    steps = config.steps
    times = np.linspace(0.0, steps * dt, steps + 1)
    branch_rate = 0.0 if branching is None else branching.rate
    immig_rate = 0.0 if immigration is None else immigration.rate

    def block(rng: np.random.Generator, ids: range) -> List[PathSample]:
        n = len(ids)
        grid = np.empty((steps + 1, n))
        minima = np.empty((steps, n))
        x = np.full(n, float(x0))
        grid[0] = x
        for i in range(steps):
            peak = float(x.max(initial=0.0)) * branch_rate + immig_rate
            sub = max(1, math.ceil(peak * dt / _MAX_JUMP_INTENSITY))
            if sub > config.max_substeps:
                raise SimulationError(
                    f"jump intensity {peak} at t={times[i]} needs {sub} substeps "
                    f"(limit {config.max_substeps}); reduce dt"
                )
            if sub > 1:
                log.debug("step %d split into %d substeps", i, sub)
            h = dt / sub
            low = x.copy()
            for _ in range(sub):
                pos = np.maximum(x, 0.0)
                noise = rng.standard_normal(n) * math.sqrt(h)
                y = x + (inflow - kill * pos) * h + np.sqrt(sigma2 * pos) * noise
                y = np.maximum(y, 0.0)
                if sigma2 > 0:
                    low = np.minimum(low, _bridge_minimum(rng, x, y, sigma2 * pos * h))
                low = np.minimum(low, y)
                if branching is not None:
                    y = _add_jumps(rng, y, pos * branch_rate * h, branching)
                if immigration is not None:
                    y = _add_jumps(rng, y, np.full(n, immig_rate * h), immigration)
                x = y
            minima[i] = low
            grid[i + 1] = x
        return _package(ids, times, grid, minima)

    return _run_blocks(config, block)


def simulate(model: CBIModel, x0: float, config: SimConfig) -> Iterator[PathSample]:
    """Dispatches on ``config.scheme``."""
    if config.scheme is Scheme.EXACT_CIR:
        psi, phi = model.psi, model.phi
        if isinstance(psi, Quadratic) and isinstance(phi, LinearDrift):
            return simulate_cir_exact(psi.sigma2, psi.gamma, phi.b, x0, config)
        if isinstance(psi, Quadratic) and isinstance(phi, DerivedFromPsi):
            return simulate_cir_exact(psi.sigma2, psi.gamma, phi.b, x0, config)
        raise SimulationError(
            f"the exact CIR scheme needs a quadratic branching mechanism and linear "
            f"immigration, got {type(psi).__name__} and {type(phi).__name__}"
        )
    return simulate_euler(model, x0, config)


def estimate_hitting_time(path: PathSample, a: float) -> Optional[float]:
    return path.hit_time(a)


def estimate_minimum(
    path: PathSample,
    escape_level: Optional[float] = None,
    *,
    escape_factor: float = DEFAULT_ESCAPE_FACTOR,
) -> MinimumSample:
    """Minimum of the path up to its escape above ``escape_level``.

    The default level is ``escape_factor`` times the starting value; a path
    that never escapes is reported as censored.
    """
    if escape_level is None:
        escape_level = escape_factor * max(float(path.values[0]), 1e-12)
    escaped = path.escape_time(escape_level)
    if escaped is None:
        return MinimumSample(path.running_min, True)
    last = int(np.searchsorted(path.times, escaped))
    low = min(path.values[: last + 1].min(), path.step_minima[:last].min(initial=np.inf))
    return MinimumSample(float(low), False)


def mc_estimate(
    values: Sequence[float],
    *,
    seed: Optional[int] = None,
    bias_bound: float = 0.0,
    tolerance: Optional[float] = None,
    censored_fraction: float = 0.0,
) -> MCEstimate:
    data = np.asarray(values, dtype=np.float64)
    n = data.size
    if n == 0:
        raise SimulationError("cannot estimate a mean from zero samples")
    mean = math.fsum(data) / n
    stderr = float(data.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    limit = stderr if tolerance is None else tolerance
    flagged = bias_bound > 0 and bias_bound > limit
    if flagged:
        log.info("censoring bias bound %.3g exceeds %.3g", bias_bound, limit)
    return MCEstimate(mean, stderr, n, seed, bias_bound, flagged, censored_fraction)


def mc_laplace(
    samples: Sequence[Optional[float]],
    lam: float,
    *,
    horizon: float = math.inf,
    seed: Optional[int] = None,
    tolerance: Optional[float] = None,
) -> MCEstimate:
    """Estimates E[exp(-λ S)]; censored samples (``None``) count as S = ∞.

    Examples
    --------
    >>> mc_laplace([0.0, 0.0], 1.0).mean
    1.0
    """
    if not lam >= 0:
        raise SimulationError(f"λ must be nonnegative, got {lam}")
    censored = sum(s is None for s in samples)
    values = [0.0 if s is None else math.exp(-lam * s) for s in samples]
    bias = math.exp(-lam * horizon) if censored else 0.0
    return mc_estimate(
        values,
        seed=seed,
        bias_bound=bias,
        tolerance=tolerance,
        censored_fraction=censored / max(len(values), 1),
    )


def estimate_hitting_laplace(
    paths: Iterable[PathSample], a: float, lam: float, *, seed: Optional[int] = None
) -> MCEstimate:
    hits: List[Optional[float]] = []
    horizon = math.inf
    for p in paths:
        hits.append(p.hit_time(a))
        horizon = float(p.times[-1])
    if not hits:
        raise SimulationError("cannot estimate a hitting transform from zero paths")
    return mc_laplace(hits, lam, horizon=horizon, seed=seed)


def estimate_joint_laplace(
    paths: Iterable[PathSample],
    a: float,
    lam: float,
    mu: float,
    *,
    seed: Optional[int] = None,
) -> MCEstimate:
    """Estimates E[exp(-λσ_a - μ ∫₀^{σ_a} X_s ds)]."""
    values = []
    censored = 0
    horizon = math.inf
    for p in paths:
        horizon = float(p.times[-1])
        hit = p.hit_time(a)
        if hit is None:
            censored += 1
            values.append(0.0)
        else:
            values.append(math.exp(-lam * hit - mu * p.occupation(hit)))
    if not values:
        raise SimulationError("cannot estimate a joint transform from zero paths")
    bias = math.exp(-lam * horizon) if censored else 0.0
    return mc_estimate(
        values, seed=seed, bias_bound=bias, censored_fraction=censored / len(values)
    )


def estimate_minimum_cdf(
    paths: Iterable[PathSample],
    a: float,
    *,
    escape_level: Optional[float] = None,
    escape_factor: float = DEFAULT_ESCAPE_FACTOR,
    seed: Optional[int] = None,
) -> MCEstimate:
    """Estimates P(inf X ≤ a); censored paths count with their running minimum."""
    samples = [estimate_minimum(p, escape_level, escape_factor=escape_factor) for p in paths]
    if not samples:
        raise SimulationError("cannot estimate a minimum law from zero paths")
    censored = sum(s.censored for s in samples)
    fraction = censored / len(samples)
    return mc_estimate(
        [float(s.value <= a) for s in samples],
        seed=seed,
        bias_bound=fraction,
        tolerance=1.0 if censored == 0 else None,
        censored_fraction=fraction,
    )


def _grid_index(path: PathSample, t: float) -> int:
    return int(np.argmin(np.abs(path.times - t)))


def estimate_marginal_laplace(
    paths: Iterable[PathSample], t: float, q: float, *, seed: Optional[int] = None
) -> MCEstimate:
    return mc_estimate(
        [math.exp(-q * p.values[_grid_index(p, t)]) for p in paths], seed=seed
    )


def estimate_mean(
    paths: Iterable[PathSample], t: float, *, seed: Optional[int] = None
) -> MCEstimate:
    return mc_estimate([float(p.values[_grid_index(p, t)]) for p in paths], seed=seed)


@dataclass(frozen=True)
class RefinementRow:
    dt: float
    estimate: MCEstimate
    error: float


def dt_refinement(
    model: CBIModel,
    x0: float,
    a: float,
    lam: float,
    reference: float,
    config: SimConfig,
    dts: Sequence[float] = (4e-3, 2e-3, 1e-3),
) -> List[RefinementRow]:
    """Euler estimates of E_x0[exp(-λσ_a)] for a sequence of step sizes.

    Each run reuses ``config`` with only ``dt`` replaced. ``error`` is the
    signed difference from ``reference``, typically the quadrature value.
    Paths are consumed as they are produced.
    """
    rows: List[RefinementRow] = []
    for dt in dts:
        run = replace(config, scheme=Scheme.EULER, dt=dt)
        est = estimate_hitting_laplace(simulate_euler(model, x0, run), a, lam, seed=run.seed)
        rows.append(RefinementRow(dt, est, est.mean - reference))
        log.info(
            "dt=%g: estimate %.6g ± %.2g, error %+.3g",
            dt,
            est.mean,
            est.stderr,
            est.mean - reference,
        )
    return rows


def lower_bound_violations(
    paths: Iterable[PathSample], model: CBIModel, *, slack: float = 10.0
) -> int:
    """Counts grid points below e^{-dt}x + v(1 - e^{-dt}) - slack·Δ.

    The bound holds for models of bounded variation.
    """
    d = model.d
    if not math.isfinite(d):
        raise SimulationError("the path lower bound needs a finite effective drift")
    count = 0
    for p in paths:
        step = float(p.times[1] - p.times[0])
        decay = np.exp(-d * p.times)
        bound = decay * p.values[0] + model.v * (1.0 - decay) - slack * step
        count += int(np.count_nonzero(p.values < bound))
    return count


def write_path_dump(paths: Iterable[PathSample], stream: IO[str]) -> int:
    """Writes ``path_id,t,x`` rows; returns the number of data rows."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["path_id", "t", "x"])
    rows = 0
    for p in paths:
        for t, x in zip(p.times, p.values):
            writer.writerow([p.path_id, repr(float(t)), repr(float(x))])
            rows += 1
    return rows
