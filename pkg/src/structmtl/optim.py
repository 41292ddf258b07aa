"""Internal solver plumbing shared by the estimators and the transfer step."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import NumericalError, ParameterError

ARMIJO_C = 1e-4
MAX_HALVINGS = 50


class PgdResult(NamedTuple):
    x: np.ndarray
    objectives: np.ndarray   # objective after each accepted step (index 0 = start)
    grad_norms: np.ndarray   # projected-gradient norm at each recorded point
    steps: np.ndarray        # step size used to reach each recorded point
    converged: bool


def projected_gradient(
    x0: np.ndarray,
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    max_iters: int = 5000,
    tol_grad: float | None = None,
    step_init: float = 1.0,
) -> PgdResult:
    """Projected gradient descent with Armijo backtracking (step halving).

    Sufficient decrease: f(x+) <= f(x) - (c/t) ||x+ - x||^2 with c = 1e-4.
    Stops when the projected-gradient norm ||x - P(x - t g)|| / t falls below
    ``tol_grad`` (default 1e-9 * (1 + f(x0))).  The objective trace is
    monotone over accepted steps.
    """
    x = project(np.array(x0, dtype=float, copy=True))
    f = float(value(x))
    if not np.isfinite(f):
        raise NumericalError("objective is non-finite at the starting point")
    tol = 1e-9 * (1.0 + abs(f)) if tol_grad is None else float(tol_grad)
    objs = [f]
    gnorms = []
    steps = []
    t = float(step_init)
    converged = False
    for _ in range(max_iters):
        g = grad(x)
        accepted = False
        for _h in range(MAX_HALVINGS + 1):
            x_new = project(x - t * g)
            dx = x_new - x
            dx_norm = float(np.linalg.norm(dx))
            pg_norm = dx_norm / t
            if pg_norm <= tol:
                converged = True
                break
            f_new = float(value(x_new))
            if np.isfinite(f_new) and f_new <= f - (ARMIJO_C / t) * dx_norm * dx_norm:
                accepted = True
                break
            t *= 0.5
        if converged:
            gnorms.append(pg_norm)
            steps.append(t)
            break
        if not accepted:
            # Step size underflow: no descent direction at this resolution.
            gnorms.append(pg_norm)
            steps.append(t)
            converged = pg_norm <= tol
            break
        x, f = x_new, f_new
        objs.append(f)
        gnorms.append(pg_norm)
        steps.append(t)
        t *= 2.0
    if len(gnorms) < len(objs):
        gnorms.append(float("nan"))
        steps.append(float("nan"))
    pad = len(objs) - len(gnorms)
    if pad > 0:  # pragma: no cover - defensive
        gnorms.extend([float("nan")] * pad)
        steps.extend([float("nan")] * pad)
    return PgdResult(
        x,
        np.asarray(objs),
        np.asarray(gnorms[: len(objs)]),
        np.asarray(steps[: len(objs)]),
        converged,
    )


def project_ball(w: np.ndarray, B: float) -> np.ndarray:
    nrm = float(np.linalg.norm(w))
    if nrm > B:
        return w * (B / nrm)
    return w


def ball_least_squares(G: np.ndarray, b: np.ndarray, B: float,
                       tol: float = 1e-12) -> np.ndarray:
    """Minimize 0.5 v^T G v - b^T v over the euclidean ball of radius B.

    G must be symmetric PSD.  Solved through the eigendecomposition of G with
    bisection on the Lagrange multiplier when the norm constraint binds.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    lam, Q = np.linalg.eigh(G)
    lam = np.maximum(lam, 0.0)
    beta = Q.T @ b

    def v_of(eta: float) -> np.ndarray:
        denom = lam + eta
        coeff = np.where(denom > 0, beta / np.where(denom > 0, denom, 1.0), 0.0)
        return coeff

    # Interior candidate: min-norm solution of G v = b.
    tiny = 1e-14 * max(1.0, float(lam.max(initial=0.0)))
    coeff0 = np.where(lam > tiny, beta / np.where(lam > tiny, lam, 1.0), 0.0)
    consistent = np.all(np.abs(beta[lam <= tiny]) <= 1e-12 * max(1.0, float(np.abs(beta).max(initial=0.0))))
    if consistent and float(np.linalg.norm(coeff0)) <= B:
        return Q @ coeff0
    # Boundary: find eta > 0 with ||v(eta)|| = B (norm is decreasing in eta).
    hi = max(float(np.linalg.norm(b)) / B, tiny, 1e-30)
    while float(np.linalg.norm(v_of(hi))) > B:
        hi *= 2.0
        if hi > 1e300:  # pragma: no cover - defensive
            raise NumericalError("multiplier bisection diverged")
    lo = 0.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        nrm = float(np.linalg.norm(v_of(mid)))
        if nrm > B:
            lo = mid
        else:
            hi = mid
        if abs(nrm - B) <= tol * max(1.0, B):
            break
    return Q @ v_of(hi)
