# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, TextIO

from hydra.errors import HydraException
from hydra_zen import zen
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from cbilab.classify import classify
from cbilab.errors import (
    CbiLabDomainError,
    ConfigError,
    MechanismDomainError,
    NumericalError,
    SimulationError,
)
from cbilab.mechanism import CBIModel
from cbilab.sim import (
    SimConfig,
    estimate_hitting_laplace,
    estimate_joint_laplace,
    estimate_marginal_laplace,
    estimate_minimum_cdf,
    simulate,
    write_path_dump,
)
from cbilab.transform import (
    TransformStatus,
    TransformValue,
    hitting_time_laplace,
    joint_laplace,
    marginal_laplace,
    minimum_cdf,
    total_population_laplace,
)

from ._configs import COMMANDS, LAPLACE_KINDS
from ._suite import SuiteContext, run_suite

__all__ = [
    "EXIT_OK",
    "EXIT_VERIFY_FAILED",
    "EXIT_CONFIG_ERROR",
    "EXIT_NUMERIC_ERROR",
    "OUTPUT_DIR_ENV",
    "cmd_classify",
    "cmd_laplace",
    "cmd_simulate",
    "cmd_verify",
    "cbilab_task",
    "run",
]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_ERROR = 3

OUTPUT_DIR_ENV = "CBILAB_OUTPUT_DIR"

LAPLACE_COLUMNS = ["x", "a", "lambda", "mu", "value", "abs_err", "status"]
MARGINAL_COLUMNS = ["x", "t", "q", "value", "abs_err", "status"]
SIMULATE_COLUMNS = [
    "estimand",
    "lambda",
    "mu",
    "mc_mean",
    "stderr",
    "n",
    "censored_frac",
    "seed",
]


def resolve_output(out: Optional[str]) -> Optional[Path]:
    """Relative ``out`` paths resolve against ``$CBILAB_OUTPUT_DIR`` when it is set."""
    if out is None:
        return None
    path = Path(out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if not path.is_absolute() and base:
        path = Path(base) / path
    return path


@contextmanager
def _open_output(out: Optional[str]) -> Iterator[TextIO]:
    path = resolve_output(out)
    if path is None:
        yield sys.stdout
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        yield f


def _fmt(value: float) -> str:
    return repr(float(value))


def _require_grid(grid: Any, *names: str) -> Dict[str, List[float]]:
    out: Dict[str, List[float]] = {}
    for name in names:
        values = list(grid[name])
        if not values:
            raise ConfigError("the grid must not be empty", key=f"grid.{name}")
        out[name] = [float(v) for v in values]
    return out


def cmd_classify(model: CBIModel, stream: TextIO) -> int:
    """Writes the JSON classification report of ``model``."""
    report = classify(model).to_dict()
    report["model"] = repr(model)
    json.dump(report, stream, indent=2)
    stream.write("\n")
    return EXIT_OK


def _laplace_value(
    kind: str, model: CBIModel, x: float, a: float, lam: float, mu: float, theta, tol: float
) -> TransformValue:
    if kind == "hitting":
        return hitting_time_laplace(model, x, a, lam, theta=theta, tol=tol)
    if kind == "joint":
        return joint_laplace(model, x, a, lam, mu, theta=theta, tol=tol)
    if kind == "total":
        return total_population_laplace(model, x, a, mu, theta=theta, tol=tol)
    return minimum_cdf(model, x, a, theta=theta, tol=tol)


def cmd_laplace(
    model: CBIModel,
    kind: str,
    grid: Any,
    stream: TextIO,
    *,
    theta: Optional[float] = None,
    tol: float = 1e-10,
) -> int:
    """Writes one CSV row per grid point; domain violations become row statuses."""
    if kind not in LAPLACE_KINDS:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {LAPLACE_KINDS}", key="kind")
    writer = csv.writer(stream, lineterminator="\n")

    if kind == "marginal":
        g = _require_grid(grid, "x", "t", "q")
        writer.writerow(MARGINAL_COLUMNS)
        for x in g["x"]:
            for t in g["t"]:
                for q in g["q"]:
                    try:
                        value, status = marginal_laplace(model, x, t, q), TransformStatus.OK
                    except CbiLabDomainError as exc:
                        log.warning("x=%r t=%r q=%r: %s", x, t, q, exc)
                        value, status = math.nan, TransformStatus.DOMAIN_ERROR
                    writer.writerow([_fmt(x), _fmt(t), _fmt(q), _fmt(value), _fmt(0.0), status.value])
        return EXIT_OK

    if kind == "minimum":
        g = _require_grid(grid, "x", "a")
        g["lam"], g["mu"] = [0.0], [0.0]
    elif kind == "hitting":
        g = _require_grid(grid, "x", "a", "lam")
        g["mu"] = [0.0]
    elif kind == "total":
        g = _require_grid(grid, "x", "a", "mu")
        g["lam"] = [0.0]
    else:
        g = _require_grid(grid, "x", "a", "lam", "mu")

    writer.writerow(LAPLACE_COLUMNS)
    for x in g["x"]:
        for a in g["a"]:
            for lam in g["lam"]:
                for mu in g["mu"]:
                    try:
                        result = _laplace_value(kind, model, x, a, lam, mu, theta, tol)
                    except CbiLabDomainError as exc:
                        log.warning("x=%r a=%r λ=%r μ=%r: %s", x, a, lam, mu, exc)
                        result = TransformValue(math.nan, math.nan, TransformStatus.DOMAIN_ERROR)
                    writer.writerow(
                        [
                            _fmt(x),
                            _fmt(a),
                            _fmt(lam),
                            _fmt(mu),
                            _fmt(result.value),
                            _fmt(result.abs_error),
                            result.status.value,
                        ]
                    )
    return EXIT_OK


def cmd_simulate(
    model: CBIModel,
    config: SimConfig,
    grid: Any,
    stream: TextIO,
    *,
    x0: Optional[float] = None,
    estimands: Sequence[str] = ("hitting",),
    path_dump: Optional[str] = None,
) -> int:
    """Writes MC estimate rows; the hitting level is ``grid.a[0]``, the start ``x0``."""
    g = _require_grid(grid, "x", "a")
    start = g["x"][0] if x0 is None else float(x0)
    level = g["a"][0]
    paths = list(simulate(model, start, config))
    if path_dump is not None:
        with _open_output(path_dump) as f:
            rows = write_path_dump(paths, f)
        log.info("wrote %d path rows", rows)

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(SIMULATE_COLUMNS)

    def row(estimand: str, lam: str, mu: str, est) -> None:
        if est.flagged:
            log.warning("%s estimate is flagged: censoring bias bound %.3g", estimand, est.bias_bound)
        writer.writerow(
            [estimand, lam, mu, _fmt(est.mean), _fmt(est.stderr), est.n, _fmt(est.censored_fraction), config.seed]
        )

    for estimand in estimands:
        if estimand == "hitting":
            for lam in list(grid["lam"]):
                est = estimate_hitting_laplace(paths, level, float(lam), seed=config.seed)
                row(estimand, _fmt(lam), _fmt(0.0), est)
        elif estimand == "joint":
            for lam in list(grid["lam"]):
                for mu in list(grid["mu"]):
                    est = estimate_joint_laplace(paths, level, float(lam), float(mu), seed=config.seed)
                    row(estimand, _fmt(lam), _fmt(mu), est)
        elif estimand == "minimum":
            for a in g["a"]:
                est = estimate_minimum_cdf(
                    paths, a, escape_factor=config.escape_factor, seed=config.seed
                )
                row(f"minimum@{a!r}", "", "", est)
        elif estimand == "marginal":
            for t in list(grid["t"]):
                for q in list(grid["q"]):
                    est = estimate_marginal_laplace(paths, float(t), float(q), seed=config.seed)
                    row(f"marginal@t={float(t)!r}", _fmt(q), "", est)
        else:
            raise ConfigError(f"unknown estimand {estimand!r}", key="sim.estimands")
    return EXIT_OK


def cmd_verify(
    stream: TextIO,
    *,
    seed: int = 0,
    workers: int = 1,
    tol: float = 1e-10,
    scale: float = 1.0,
    perturb: float = 1.0,
    name_filter: Optional[str] = None,
) -> int:
    """Runs the verification suite; exit code 1 if any check fails."""
    ctx = SuiteContext(seed=seed, workers=workers, tol=tol, scale=scale, perturb=perturb)
    failed = 0
    ran = 0
    for result in run_suite(ctx, name_filter):
        ran += 1
        verdict = "PASS" if result.passed else "FAIL"
        stream.write(f"{verdict} {result.name} ({result.seconds:.1f}s): {result.detail}\n")
        failed += not result.passed
    stream.write(f"{ran - failed}/{ran} checks passed\n")
    if ran == 0:
        log.warning("no check matches the filter %r", name_filter)
    return EXIT_VERIFY_FAILED if failed else EXIT_OK


def cbilab_task(
    command: str,
    kind: str,
    model: Optional[CBIModel],
    grid: Any,
    quad: Any,
    sim: Any,
    verify: Any,
    out: Optional[str],
    seed: int,
    workers: int,
    tol: float,
    filter: Optional[str],
) -> int:
    """The task function behind the ``cbilab`` command line; returns an exit code."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}", key="command")
    if command != "verify" and not isinstance(model, CBIModel):
        raise ConfigError("a model is required, e.g. model=cir_recurrent", key="model")
    # zen instantiates the grid node as a dataclass; the commands index it by name
    if dataclasses.is_dataclass(grid) and not isinstance(grid, type):
        grid = dataclasses.asdict(grid)

    with _open_output(out) as stream:
        if command == "classify":
            return cmd_classify(model, stream)
        if command == "laplace":
            return cmd_laplace(model, kind, grid, stream, theta=quad.theta, tol=tol)
        if command == "simulate":
            config = sim.config
            if isinstance(config, DictConfig):
                config = OmegaConf.to_object(config)
            if not isinstance(config, SimConfig):
                raise ConfigError("sim.config must build a SimConfig", key="sim.config")
            config = dataclasses.replace(config, seed=seed, workers=workers)
            return cmd_simulate(
                model,
                config,
                grid,
                stream,
                x0=sim.x0,
                estimands=list(sim.estimands),
                path_dump=sim.path_dump,
            )
        return cmd_verify(
            stream,
            seed=seed,
            workers=workers,
            tol=tol,
            scale=float(verify.scale),
            perturb=float(verify.perturb),
            name_filter=filter,
        )


_zen_task: Callable[[Any], int] = zen(cbilab_task)


def _root_cause(exc: BaseException) -> BaseException:
    while exc.__cause__ is not None:
        exc = exc.__cause__
    return exc


def run(cfg: Any) -> int:
    """Runs the task for a Hydra config, mapping failures to exit codes.

    2 for config errors and invalid mechanism parameters, 3 for numerical
    failures.
    """
    try:
        return _zen_task(cfg)
    except (ConfigError, MechanismDomainError, OmegaConfBaseException) as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG_ERROR
    except (NumericalError, SimulationError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC_ERROR
    except HydraException as exc:
        cause = _root_cause(exc)
        if isinstance(cause, NumericalError):
            log.error("numerical failure: %s", cause)
            return EXIT_NUMERIC_ERROR
        log.error("invalid configuration: %s", cause)
        return EXIT_CONFIG_ERROR

