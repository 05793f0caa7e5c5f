"""Shared numerics: seeded RNG, log-log fits, wedge norms, atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so parallel workers can share one seed."""
    return np.random.Generator(np.random.Philox(seed))


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def wedge_norm(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """|x wedge y| in any dimension, via the Gram determinant.

    Broadcasts over leading axes; the last axis is the vector axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xx = np.sum(x * x, axis=-1)
    yy = np.sum(y * y, axis=-1)
    xy = np.sum(x * y, axis=-1)
    g = xx * yy - xy * xy
    return np.sqrt(np.maximum(g, 0.0))


def fit_loglog_slope(x, y) -> tuple[float, float, float]:
    """OLS fit of log y = slope * log x + intercept.

    Returns (slope, intercept, max_abs_residual_in_log).
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if lx.size < 2:
        raise ValueError("need at least 2 points for a slope fit")
    a = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    return float(coef[0]), float(coef[1]), float(np.max(np.abs(resid)))


def fit_loglog_slope2(x1, x2, y) -> tuple[float, float, float, float]:
    """Two-variable OLS in log space: log y ~ s1 log x1 + s2 log x2 + c.

    Returns (s1, s2, intercept, max_abs_residual_in_log).  The grid of
    (x1, x2) must not be degenerate (e.g. x2 constant): pass such sweeps
    to fit_loglog_slope instead.
    """
    l1 = np.log(np.asarray(x1, dtype=float))
    l2 = np.log(np.asarray(x2, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if np.ptp(l1) < 1e-12 or np.ptp(l2) < 1e-12:
        raise ValueError("degenerate sweep grid: one variable is constant")
    a = np.stack([l1, l2, np.ones_like(l1)], axis=1)
    coef, *_ = np.linalg.lstsq(a, ly, rcond=None)
    resid = ly - a @ coef
    return float(coef[0]), float(coef[1]), float(coef[2]), float(np.max(np.abs(resid)))


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename into place."""
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def as_json_ready(obj):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(obj, dict):
        return {str(k): as_json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [as_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [as_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj
