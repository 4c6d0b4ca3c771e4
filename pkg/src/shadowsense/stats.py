"""Small statistical and serialization helpers shared across modules."""

import csv

import numpy as np

from .errors import InsufficientDataError


def batch_half_width(series, nbatches=16):
    """2-sigma half width of the mean of a correlated series.

    Splits the series into nbatches contiguous batches (dropping the
    remainder), takes batch means, and returns twice the standard error
    across batches.  Contiguous batching absorbs short-range correlation
    that a naive i.i.d. formula would miss.
    """
    series = np.asarray(series, dtype=float).reshape(-1)
    if series.size < 2 * nbatches:
        raise InsufficientDataError(
            f"series of length {series.size} too short for "
            f"{nbatches} batches")
    per = series.size // nbatches
    means = series[:per * nbatches].reshape(nbatches, per).mean(axis=1)
    return float(2.0 * np.std(means, ddof=1) / np.sqrt(nbatches))


def loglog_slope(x, y):
    """Least-squares slope of log(y) against log(x).

    Returns (slope, intercept).  All inputs must be positive.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("loglog_slope needs positive data")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


def fmt_value(x):
    """Render a cell: floats at 17 significant digits (exact round trip)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def write_csv(path, fieldnames, rows):
    """Write dict rows to CSV with deterministic float formatting."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(fieldnames)
        for r in rows:
            wr.writerow([fmt_value(r.get(k)) for k in fieldnames])
