import math
import os
import tempfile
from pathlib import Path

import numpy as np

RNG_PURPOSES = (
    "task",
    "data",
    "init",
    "probe",
    "test",
    "oracle",
    "intervention",
    "lottery",
    "router_reinit",
)


def ensure_numeric_data(data, allow_empty=False):
    """
    Ensure that the input data is numeric and finite.

    This function converts the input to a float NumPy array and checks that
    it only contains finite numeric values.

    Parameters
    ----------
    data : list, array, or Series
        Input data to validate.
    allow_empty : bool
        Whether an empty input is acceptable.

    Returns
    -------
    np.array
        Input data converted to a float NumPy array.

    Raises
    ------
    ValueError
        If the input data is empty or contains non-finite values.
    TypeError
        If the input data is not numeric.
    """
    array = np.asarray(data)
    if array.size == 0 and not allow_empty:
        raise ValueError("Empty data")
    if array.dtype == bool or not np.issubdtype(array.dtype, np.number):
        raise TypeError("Data must contain only numeric values")
    array = array.astype(float)
    if not np.all(np.isfinite(array)):
        raise ValueError("Data must contain only finite values")
    return array


def ordered_sum(values):
    """
    Sum a 1-D array in a fixed order.

    Arrays longer than 1000 entries use compensated summation (``math.fsum``),
    shorter ones are summed in ascending index order.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size > 1000:
        return math.fsum(values.tolist())
    total = 0.0
    for value in values.tolist():
        total += value
    return total


def rng_stream(seed, purpose):
    """
    Named deterministic random stream for a (run seed, purpose) pair.

    Parameters
    ----------
    seed : int
        Run seed.
    purpose : str
        One of ``RNG_PURPOSES``.

    Returns
    -------
    numpy.random.Generator
    """
    if purpose not in RNG_PURPOSES:
        raise ValueError(f"Unknown random stream purpose '{purpose}'")
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), RNG_PURPOSES.index(purpose)])
    )


def create_directory(directory_path):
    """
    Creates a directory at the given path.

    This function creates a directory at the given path and all parent directories
    if they do not already exist. If the directory already exists, nothing is done.

    Parameters
    ----------
    directory_path : str
        Path of the directory to be created.
    """
    Path(directory_path).mkdir(parents=True, exist_ok=True)


def atomic_write_text(path, text):
    """
    Write text to ``path`` through a temporary file and a rename.

    Readers never observe a partially written file.
    """
    path = Path(path)
    create_directory(path.parent)
    handle, temp_path = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as temp_file:
            temp_file.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise


def parse_number_list(text, cast=float):
    """
    Parse a comma separated list of numbers, as given on the command line.

    Parameters
    ----------
    text : str
        For example ``"0.8,0.9,1.0"``.
    cast : callable
        ``float`` or ``int``.

    Returns
    -------
    list
    """
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ValueError("Empty list")
    try:
        return [cast(item) for item in items]
    except ValueError as ve:
        raise ValueError(f"Invalid number list '{text}': {ve}") from ve
