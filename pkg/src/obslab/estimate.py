"""Operator-norm estimation and decay-rate fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POWER_SEED = 0x5EED
POWER_TOL = 1e-6
POWER_MAX_ITER = 500


@dataclass
class PowerResult:
    value: float          # estimated operator norm (singular value)
    iterations: int
    residual: float       # relative eigen-residual of the Gram operator
    converged: bool


def probe_vector(n: int, seed: int = POWER_SEED) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def gram_operator_norm(apply_gram, n: int, tol: float = POWER_TOL,
                       max_iter: int = POWER_MAX_ITER,
                       seed: int = POWER_SEED) -> PowerResult:
    """Power iteration on a Hermitian PSD Gram operator K*K; returns ||K||.

    The Rayleigh quotient gives the eigenvalue estimate, so the singular value
    is accurate to roughly the square of the reported residual.
    """
    v = probe_vector(n, seed)
    lam = 0.0
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = apply_gram(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return PowerResult(0.0, it, 0.0, True)
        lam = float(np.vdot(v, w).real)
        residual = float(np.linalg.norm(w - lam * v) / max(lam, 1e-300))
        v = w / nw
        if residual <= tol:
            return PowerResult(float(np.sqrt(max(lam, 0.0))), it, residual, True)
    return PowerResult(float(np.sqrt(max(lam, 0.0))), max_iter, residual, False)


def matrix_operator_norm(apply_op, apply_adjoint, n: int, **kw) -> PowerResult:
    """||K|| for a general K given by its action and adjoint action."""
    return gram_operator_norm(lambda v: apply_adjoint(apply_op(v)), n, **kw)


@dataclass
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    times: np.ndarray      # points actually used
    values: np.ndarray


def loglog_fit(times, values, head_fraction: float = 0.2,
               floor: float = 0.0) -> LogLogFit:
    """Least-squares slope of log(value) against log(time).

    The first head_fraction of the points is treated as transient and
    excluded; entries at or below floor are dropped (double-precision dust).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = int(np.ceil(head_fraction * times.size))
    keep = np.zeros(times.size, dtype=bool)
    keep[start:] = True
    keep &= values > floor
    keep &= times > 0
    if keep.sum() < 3:
        raise ValueError("fewer than 3 usable points for the log-log fit")
    lt = np.log(times[keep])
    lv = np.log(values[keep])
    slope, intercept = np.polyfit(lt, lv, 1)
    pred = slope * lt + intercept
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LogLogFit(float(slope), float(intercept), r2, times[keep], values[keep])
