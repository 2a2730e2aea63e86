# Copyright (c) 2023 Massachusetts Institute of Technology
# SPDX-License-Identifier: MIT
import logging
import os
import tempfile
from copy import deepcopy
from typing import Dict, Iterable, Optional

import pytest
from hydra.core.config_store import ConfigStore
from hydra.core.plugins import Plugins

import cbilab.cli as cli
from cbilab._compatibility import HYDRA_VERSION

_store = ConfigStore.instance()
# Hydra registers its own configs when its plugins are first loaded; load them
# now so that the snapshots taken by `clean_store` include them
Plugins.instance()


@pytest.fixture()
def cleandir() -> Iterable[str]:
    """Run function in a temporary directory."""
    with tempfile.TemporaryDirectory() as tmpdirname:
        old_dir = os.getcwd()  # get current working directory (cwd)
        os.chdir(tmpdirname)  # change cwd to the temp-directory
        yield tmpdirname  # yields control to the test to be run
        os.chdir(old_dir)
        logging.shutdown()
        # drop the job's file handlers, which point into the removed directory
        root = logging.getLogger()
        for handler in list(root.handlers):
            if isinstance(handler, logging.FileHandler):
                root.removeHandler(handler)
                handler.close()


@pytest.fixture()
def clean_store() -> Iterable[dict]:
    """Registers the cbilab configs and restores the config store after the test"""
    prev_state = deepcopy(_store.repo)
    zen_prev_state = (cli.store._internal_repo.copy(), cli.store._queue.copy())
    cli.register_configs(overwrite_ok=True)
    yield _store.repo
    _store.repo = prev_state
    int_repo, queue = zen_prev_state
    cli.store._internal_repo = int_repo
    cli.store._queue = queue
    cli._registered = False


@pytest.fixture()
def version_base() -> Dict[str, Optional[str]]:
    """Return version_base according to local version, or empty dict for versions
    preceding version_base"""
    return (
        {"version_base": ".".join(str(i) for i in HYDRA_VERSION)}
        if HYDRA_VERSION >= (1, 2, 0)
        else {}
    )


@pytest.fixture()
def output_dir(monkeypatch, tmp_path) -> Iterable[str]:
    """Points ``$CBILAB_OUTPUT_DIR`` at a temporary directory."""
    monkeypatch.setenv("CBILAB_OUTPUT_DIR", str(tmp_path))
    yield str(tmp_path)
