"""Evaluation metrics comparing a fitted report against the planted world."""

from __future__ import annotations

import numpy as np

from ..errors import ParameterError
from ..matrixkit import dist_F2, dist_op2
from ..tasks import QUADRATIC
from ..worlds import PlantedWorld


def param_error(W_hat, world: PlantedWorld) -> float:
    """(1/n) ||W_hat - W*||_F^2."""
    W_hat = np.asarray(W_hat, dtype=float)
    if W_hat.shape != world.W_star.shape:
        raise ParameterError(
            f"W_hat has shape {W_hat.shape}, expected {world.W_star.shape}")
    diff = W_hat - world.W_star
    return float(np.sum(diff * diff) / world.n)


def subspace_error_F(U_hat, world: PlantedWorld) -> float:
    """dist_F2(U_hat, U*) / r, in [0, 1]."""
    return dist_F2(U_hat, world.U_star) / world.r


def subspace_error_op(U_hat, world: PlantedWorld) -> float:
    return dist_op2(U_hat, world.U_star)


def excess_risk(W_hat, world: PlantedWorld, n_mc: int = 100_000,
                seed: int = 0) -> tuple[float, float]:
    """f(W_hat) - f(W*): exact for quadratic, paired Monte-Carlo for logistic.

    Returns ``(value, std_error)``; the quadratic path has std_error 0.
    """
    W_hat = np.asarray(W_hat, dtype=float)
    if W_hat.shape != world.W_star.shape:
        raise ParameterError(
            f"W_hat has shape {W_hat.shape}, expected {world.W_star.shape}")
    if world.family == QUADRATIC:
        diff = W_hat - world.W_star
        return float(0.5 * np.sum(diff * diff) / world.n), 0.0
    if n_mc < 100:
        raise ParameterError(f"n_mc must be >= 100, got {n_mc}")
    d, n = W_hat.shape
    means = np.empty(n)
    variances = np.empty(n)
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 8, i]))
        x = rng.standard_normal((n_mc, d))
        z = rng.standard_normal(n_mc)
        y = np.where(x @ world.W_star[:, i] + world.eps * z >= 0.0, 1.0, -1.0)
        diffs = (np.logaddexp(0.0, -y * (x @ W_hat[:, i]))
                 - np.logaddexp(0.0, -y * (x @ world.W_star[:, i])))
        means[i] = diffs.mean()
        variances[i] = diffs.var(ddof=1)
    return float(means.mean()), float(np.sqrt(variances.sum() / n_mc) / n)


def cluster_accuracy(assignment, world: PlantedWorld) -> float:
    """Fraction of tasks assigned to the planted cluster, maximized over relabelings."""
    if world.cluster_map is None:
        raise ParameterError("world has no planted cluster map")
    assignment = np.asarray(assignment, dtype=int)
    truth = np.asarray(world.cluster_map, dtype=int)
    if assignment.shape != truth.shape:
        raise ParameterError(
            f"assignment has shape {assignment.shape}, expected {truth.shape}")
    r = max(int(assignment.max()), int(truth.max())) + 1
    contingency = np.zeros((r, r))
    for a, t in zip(assignment, truth):
        contingency[a, t] += 1.0
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(-contingency)
    return float(contingency[rows, cols].sum() / truth.size)
