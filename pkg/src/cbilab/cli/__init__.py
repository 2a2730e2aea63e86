# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
"""The ``cbilab`` command line.

Every command shares the ``cbilab`` config; pick the command, the model and
the grid with Hydra overrides::

   $ cbilab command=classify model=cir_critical_polar
   $ cbilab command=laplace kind=joint model=cir_recurrent "grid.lam=[0.5,1.0]"
   $ cbilab command=simulate model=cir_recurrent sim.config.path_count=500
   $ cbilab command=verify verify.scale=0.1 filter=theta
"""
import sys
from typing import Any, Optional

import hydra

from cbilab._compatibility import VERSION_BASE

from ._configs import CbiLabConf, model_store, store
from ._implementations import (
    EXIT_CONFIG_ERROR,
    EXIT_NUMERIC_ERROR,
    EXIT_OK,
    EXIT_VERIFY_FAILED,
    cbilab_task,
    cmd_classify,
    cmd_laplace,
    cmd_simulate,
    cmd_verify,
    run,
)

__all__ = [
    "main",
    "run",
    "store",
    "model_store",
    "CbiLabConf",
    "cbilab_task",
    "cmd_classify",
    "cmd_laplace",
    "cmd_simulate",
    "cmd_verify",
    "EXIT_OK",
    "EXIT_VERIFY_FAILED",
    "EXIT_CONFIG_ERROR",
    "EXIT_NUMERIC_ERROR",
]

_registered = False


def register_configs(overwrite_ok: bool = False) -> None:
    """Adds the cbilab configs to Hydra's global config store."""
    global _registered
    if _registered and not overwrite_ok:
        return
    store.add_to_hydra_store(overwrite_ok=overwrite_ok)
    _registered = True


def _exit_with(cfg: Any) -> None:
    code = run(cfg)
    if code != EXIT_OK:
        sys.exit(code)


def main(config_path: Optional[str] = None) -> None:
    """Entry point of the ``cbilab`` console script."""
    register_configs()
    hydra.main(config_path=config_path, config_name="cbilab", version_base=VERSION_BASE)(
        _exit_with
    )()
