"""Central finite-difference gradient verification.

Runs the scalar objective at parameter +/- eps per entry and compares the
slope against the analytic gradient. Intended to run on float64 parameters
with small networks; relative error below 1e-4 counts as a pass.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .layers import Params

EPS = 1e-5
TOLERANCE = 1e-4


def finite_difference_errors(loss_fn: Callable[[Params], float], params: Params,
                             analytic: Params, eps: float = EPS) -> dict[str, float]:
    """Max relative error per parameter tensor between analytic and numeric."""
    errors: dict[str, float] = {}
    for key, p in params.items():
        worst = 0.0
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn(params)
            flat[i] = orig - eps
            lo = loss_fn(params)
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            exact = float(analytic[key].reshape(-1)[i])
            denom = max(abs(numeric), abs(exact), 1e-8)
            worst = max(worst, abs(numeric - exact) / denom)
        errors[key] = worst
    return errors


def check_gradients(loss_fn: Callable[[Params], float], params: Params,
                    analytic: Params, eps: float = EPS,
                    tolerance: float = TOLERANCE) -> float:
    """Return the worst relative error; raise if it exceeds the tolerance."""
    errors = finite_difference_errors(loss_fn, params, analytic, eps)
    worst_key = max(errors, key=errors.get)
    worst = errors[worst_key]
    if worst > tolerance:
        raise AssertionError(
            f"gradient check failed at {worst_key!r}: relative error {worst:.3e} "
            f"> {tolerance:.0e}")
    return worst
