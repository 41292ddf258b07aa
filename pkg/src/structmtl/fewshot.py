"""Transfer of a learned basis to a new task from a handful of samples.

Given an orthonormal basis U (d x r), the new task is fit inside span(U):
minimize the mean loss over v with ||v|| <= B and predict with w = U v.
Quadratic tasks are solved exactly through the r-dimensional normal equations
with a Lagrange-multiplier bisection when the ball constraint binds.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .estimators import SolverOptions
from .matrixkit import check_orthonormal
from .optim import ball_least_squares, project_ball, projected_gradient
from .tasks import LOGISTIC, QUADRATIC, TaskDataset, _sigmoid

__all__ = ["FewShotResult", "fit_fewshot", "fewshot_excess_risk"]

_MC_TAG = 7


@dataclass
class FewShotResult:
    v_hat: np.ndarray
    w_hat: np.ndarray
    objective_trace: np.ndarray
    converged: bool
    wall_time: float


def fit_fewshot(U, dataset: TaskDataset, B: float,
                opts: Optional[SolverOptions] = None) -> FewShotResult:
    """Fit the new task's head v (||v|| <= B) in the span of U."""
    opts = opts or SolverOptions()
    U = check_orthonormal(U)
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    if dataset.d != U.shape[0]:
        raise ParameterError(
            f"dimension mismatch: data d={dataset.d}, basis d={U.shape[0]}")
    t0 = time.perf_counter()
    Z = dataset.x @ U          # (m, r)
    y = dataset.y
    m = dataset.m
    if dataset.family == QUADRATIC:
        G = Z.T @ Z / m
        b = Z.T @ y / m
        v = ball_least_squares(G, b, B)
        obj = float(0.5 * v @ (G @ v) - b @ v + 0.5 * np.mean(y * y))
        trace = np.array([obj])
        converged = True
    else:

        def value(v):
            return float(np.mean(np.logaddexp(0.0, -y * (Z @ v))))

        def grad(v):
            coef = -y * _sigmoid(-y * (Z @ v))
            return Z.T @ coef / m

        res = projected_gradient(
            np.zeros(U.shape[1]), value, grad, lambda v: project_ball(v, B),
            max_iters=opts.max_iters, tol_grad=opts.tol_grad,
            step_init=opts.step_init,
        )
        v, trace, converged = res.x, res.objectives, res.converged
    return FewShotResult(
        v_hat=v, w_hat=U @ v, objective_trace=trace, converged=converged,
        wall_time=time.perf_counter() - t0,
    )


def fewshot_excess_risk(result: FewShotResult, w_star, family: str, eps: float,
                        n_mc: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Excess population risk of the transferred predictor on the new task.

    Quadratic tasks use the closed form 0.5 ||w_hat - w*||^2 (std error 0).
    Logistic tasks fall back to a paired Monte-Carlo estimate of
    f(w_hat) - f(w*) with its standard error.
    """
    w_star = np.asarray(w_star, dtype=float)
    w_hat = np.asarray(result.w_hat, dtype=float)
    if w_star.shape != w_hat.shape:
        raise ParameterError(f"shape mismatch {w_hat.shape} vs {w_star.shape}")
    if family == QUADRATIC:
        diff = w_hat - w_star
        return float(0.5 * diff @ diff), 0.0
    if family != LOGISTIC:
        raise ParameterError(f"unknown family {family!r}")
    if n_mc < 100:
        raise ParameterError(f"n_mc must be >= 100, got {n_mc}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MC_TAG]))
    d = w_star.shape[0]
    x = rng.standard_normal((n_mc, d))
    z = rng.standard_normal(n_mc)
    ylab = np.where(x @ w_star + eps * z >= 0.0, 1.0, -1.0)
    diffs = (np.logaddexp(0.0, -ylab * (x @ w_hat))
             - np.logaddexp(0.0, -ylab * (x @ w_star)))
    return float(diffs.mean()), float(diffs.std(ddof=1) / np.sqrt(n_mc))
