"""
Output directory ownership and artifact writing.

A single process owns an output directory at a time through a lock file.
Every artifact is written to a temporary file and renamed into place, so
readers only ever see complete CSV and JSON files.
"""

import json
import logging
import math
import os
from pathlib import Path

import numpy as np
import pandas as pd

from fishermoe.utils import atomic_write_text, create_directory

logger = logging.getLogger(__name__)

LOCK_FILE_NAME = ".fishermoe.lock"
FLOAT_FORMAT = "%.12g"


class OutputDirectoryLockedError(RuntimeError):
    """Another process owns the output directory."""


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set)):
        return list(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _finite_or_none(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(item) for item in value]
    return value


def to_json(payload):
    """JSON text with sorted keys; non-finite floats become null."""
    payload = json.loads(json.dumps(payload, default=_json_default))
    return json.dumps(_finite_or_none(payload), indent=2, sort_keys=True) + "\n"


class ExperimentManager:
    """
    Owner of one output directory.

    Use as a context manager; the lock file is removed on exit.

    Parameters:
        output_dir (str): directory receiving the artifacts.
    """

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self._lock_path = self.output_dir / LOCK_FILE_NAME
        self._owns_lock = False

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.release()
        return False

    def acquire(self):
        create_directory(self.output_dir)
        try:
            descriptor = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as fee:
            raise OutputDirectoryLockedError(
                f"Output directory '{self.output_dir}' is in use; "
                f"remove {LOCK_FILE_NAME} if no other run is active"
            ) from fee
        with os.fdopen(descriptor, "w") as lock_file:
            lock_file.write(f"{os.getpid()}\n")
        self._owns_lock = True
        logger.debug("Locked %s", self.output_dir)

    def release(self):
        if self._owns_lock:
            self._lock_path.unlink(missing_ok=True)
            self._owns_lock = False
            logger.debug("Released %s", self.output_dir)

    def path(self, name):
        return self.output_dir / name

    def save_table(self, table, name):
        """
        Save a DataFrame as CSV.

        Parameters:
            table (pandas.DataFrame): table to save.
            name (str): file name inside the output directory.

        Returns:
            Path of the written file.
        """
        if not isinstance(table, pd.DataFrame):
            raise TypeError("Expected a pandas DataFrame")
        target = self.path(name)
        atomic_write_text(target, table.to_csv(index=False, float_format=FLOAT_FORMAT))
        logger.info("Wrote %s", target)
        return target

    def save_json(self, payload, name):
        target = self.path(name)
        atomic_write_text(target, to_json(payload))
        logger.info("Wrote %s", target)
        return target

    def save_text(self, text, name):
        target = self.path(name)
        atomic_write_text(target, text)
        logger.info("Wrote %s", target)
        return target

    def save_run(self, result):
        """Run JSON, trajectory CSV and, when measured, geodesic CSV of one run."""
        paths = [
            self.save_json(result.summary(), f"run_{result.seed}.json"),
            self.save_table(result.trajectory_frame(), f"trajectory_{result.seed}.csv"),
        ]
        if result.geodesic_steps:
            paths.append(
                self.save_table(result.geodesic_frame(), f"geodesic_{result.seed}.csv")
            )
        return paths


def read_table(path):
    """Strict CSV reader: ragged rows raise."""
    return pd.read_csv(path, on_bad_lines="error")


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
