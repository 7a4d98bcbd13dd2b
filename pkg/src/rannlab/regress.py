"""Closed-form ridge regression and error metrics.

The loss (1/M) sum |A W - y|^2 + lambda |W|^2 gives the normal equations
(A^T A + lambda M I) W = A^T y, solved by Cholesky.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.linalg import lapack


class SingularSystemError(np.linalg.LinAlgError):
    def __init__(self, msg, condition_estimate=np.inf):
        super().__init__(msg)
        self.condition_estimate = condition_estimate


class DegenerateReferenceError(ValueError):
    pass


@dataclass(frozen=True)
class RidgeConfig:
    lam: float = 0.0
    jitter: Optional[float] = None  # None -> 1e-12 * trace(G) / F
    max_retries: int = 8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.jitter is not None and self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


@dataclass
class FitReport:
    weights: np.ndarray          # (F,) or (F, k) for k target columns
    train_mse: float
    normal_eq_residual: float
    condition_estimate: float
    jitter_used: float = 0.0


def _cond_estimate(c, G) -> float:
    anorm = np.abs(G).sum(axis=0).max()
    rcond, info = lapack.dpocon(c, anorm)  # upper factor
    if info != 0 or rcond <= 0:
        return np.inf
    return 1.0 / rcond


def solve_normal(G: np.ndarray, rhs: np.ndarray, m: int, cfg: RidgeConfig):
    """Solve (G + lambda m I) W = rhs; returns (W, residual, cond, jitter)."""
    G = np.asarray(G, dtype=float)
    F = G.shape[0]
    Greg = G + cfg.lam * m * np.eye(F)
    jit0 = cfg.jitter if cfg.jitter is not None else 1e-12 * np.trace(G) / F
    jit = 0.0
    for attempt in range(cfg.max_retries + 1):
        try:
            c, lower = linalg.cho_factor(Greg + jit * np.eye(F), lower=False,
                                         check_finite=False)
            if not np.isfinite(c).all() or np.any(np.diag(c) <= 0):
                raise linalg.LinAlgError("non-positive pivot")
            break
        except linalg.LinAlgError:
            jit = jit0 * 2 ** attempt if jit0 > 0 else np.finfo(float).eps * 2 ** attempt
    else:
        try:
            cond = np.linalg.cond(Greg)
        except np.linalg.LinAlgError:
            cond = np.inf
        raise SingularSystemError(f"Cholesky failed after {cfg.max_retries} jitter retries",
                                  cond)
    W = linalg.cho_solve((c, lower), rhs, check_finite=False)
    res = np.linalg.norm(Greg @ W - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    return W, float(res), _cond_estimate(c, Greg + jit * np.eye(F)), jit


def ridge_fit(design: np.ndarray, targets: np.ndarray, cfg: RidgeConfig = RidgeConfig()
              ) -> FitReport:
    A = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError("design must be a nonempty matrix")
    if y.shape[0] != A.shape[0]:
        raise ValueError("targets length differs from design rows")
    m = A.shape[0]
    W, res, cond, jit = solve_normal(A.T @ A, A.T @ y, m, cfg)
    mse = float(np.mean((A @ W - y) ** 2) * (1 if y.ndim == 1 else y.shape[1]))
    return FitReport(W, mse, res, cond, jit)


def ridge_fit_blocks(blocks: Callable[[], Iterable[Tuple[np.ndarray, np.ndarray]]],
                     cfg: RidgeConfig = RidgeConfig()) -> FitReport:
    """Ridge fit from row blocks, for designs too tall to hold at once.

    ``blocks`` is called once. The training error comes from the Gram
    quantities, |AW - y|^2 = y'y - 2 W'A'y + W'GW, so no second pass is needed.
    """
    G = rhs = None
    m = 0
    yy = 0.0
    for A, y in blocks():
        if G is None:
            G = A.T @ A
            rhs = A.T @ y
        else:
            G += A.T @ A
            rhs += A.T @ y
        yy += float((np.asarray(y, dtype=float) ** 2).sum())
        m += A.shape[0]
    if G is None:
        raise ValueError("no rows")
    W, res, cond, jit = solve_normal(G, rhs, m, cfg)
    sse = yy - 2 * float((W * rhs).sum()) + float((W * (G @ W)).sum())
    return FitReport(W, max(sse, 0.0) / m, res, cond, jit)


def relative_l2(pred, ref) -> float:
    pred = np.asarray(pred, dtype=float)
    ref = np.asarray(ref, dtype=float)
    den = np.sqrt((ref ** 2).sum())
    if den == 0:
        raise DegenerateReferenceError("reference vanishes on the evaluation points")
    return float(np.sqrt(((pred - ref) ** 2).sum()) / den)


def relative_l2_error(model: Callable, reference: Callable, points) -> float:
    """Monte Carlo L^2 quotient |model - reference| / |reference| on points."""
    return relative_l2(model(points.t, points.x), reference(points.t, points.x))
