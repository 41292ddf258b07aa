"""Multi-task estimators over a shared d x n parameter matrix.

fit_local          independent per-task projected gradient inside the B-ball
fit_lowrank_bm     rank-r factorization W = A C^T by alternating minimization
fit_lowrank_iht    projected gradient onto {rank <= r} with column clipping
fit_clustered      Lloyd-style alternation between assignments and centers
fit_nuclear        projected gradient over the nuclear-norm / column-norm set
fit_subspace_m1    basis search for one-sample-per-task datasets, certified by
                   the margin ("admissibility") test
"""

from __future__ import annotations

import json
import math
import os
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegeneracyWarning, NumericalError, ParameterError
from .matrixkit import (
    check_orthonormal,
    load_matrix,
    orthonormalize,
    project_column_norms,
    project_feasible,
    save_matrix,
    top_s_svd,
)
from .optim import ball_least_squares, project_ball, projected_gradient
from .tasks import LOGISTIC, QUADRATIC, TaskDataset, _sigmoid

__all__ = [
    "SolverOptions",
    "EstimatorReport",
    "SubspaceSearchResult",
    "fit_local",
    "fit_lowrank_bm",
    "fit_lowrank_iht",
    "fit_clustered",
    "refit_clusters",
    "fit_nuclear",
    "extract_representation",
    "is_admissible",
    "fit_subspace_m1",
    "orthogonal_admissible_exists",
    "save_report",
    "load_report",
]

_SOLVER = 6


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    tol_grad: Optional[float] = None   # default: 1e-9 * (1 + initial objective)
    step_init: float = 1.0
    restarts: int = 5
    seed: int = 0


@dataclass
class EstimatorReport:
    estimator: str
    W_hat: Optional[np.ndarray]
    objective_trace: np.ndarray
    converged: bool
    wall_time: float
    U_hat: Optional[np.ndarray] = None
    assignment: Optional[np.ndarray] = None
    grad_norms: Optional[np.ndarray] = None
    steps: Optional[np.ndarray] = None
    W_svd: Optional[np.ndarray] = None
    options: Optional[SolverOptions] = None
    notes: list = field(default_factory=list)


@dataclass
class SubspaceSearchResult:
    basis: np.ndarray
    admissible: bool
    surrogate: float
    restarts_used: int
    wall_time: float


def _validate_tasks(data: Sequence[TaskDataset], B: float) -> tuple[int, int, str]:
    if len(data) == 0:
        raise ParameterError("empty task list")
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    d = data[0].d
    family = data[0].family
    for i, ds in enumerate(data):
        if ds.d != d:
            raise ParameterError(f"task {i} has dimension {ds.d}, expected {d}")
        if ds.family != family:
            raise ParameterError("all tasks must share one loss family")
    return d, len(data), family


class _QuadStats:
    """Sufficient statistics for quadratic risks: per-task X^T X / m and X^T y / m."""

    def __init__(self, data: Sequence[TaskDataset]):
        self.n = len(data)
        self.d = data[0].d
        self.S = np.stack([ds.x.T @ ds.x / ds.m for ds in data])   # (n, d, d)
        self.P = np.stack([ds.x.T @ ds.y / ds.m for ds in data])   # (n, d)
        self.y2 = np.array([float(np.mean(ds.y * ds.y)) for ds in data])

    def risk(self, W: np.ndarray) -> float:
        WT = W.T
        quad = np.einsum("nd,nde,ne->n", WT, self.S, WT, optimize=True)
        lin = np.einsum("nd,nd->n", self.P, WT)
        return float(np.mean(0.5 * quad - lin + 0.5 * self.y2))

    def grad(self, W: np.ndarray) -> np.ndarray:
        G = np.einsum("nde,ne->nd", self.S, W.T, optimize=True) - self.P
        return G.T / self.n


class _LogisticStats:
    """Stacked logistic data; falls back to ragged lists for unequal m."""

    def __init__(self, data: Sequence[TaskDataset]):
        self.n = len(data)
        self.d = data[0].d
        ms = {ds.m for ds in data}
        self.homogeneous = len(ms) == 1
        if self.homogeneous:
            self.X = np.stack([ds.x for ds in data])   # (n, m, d)
            self.Xt = np.ascontiguousarray(self.X.transpose(0, 2, 1))
            self.y = np.stack([ds.y for ds in data])   # (n, m)
        else:
            self.data = list(data)
        self.P = np.stack([ds.x.T @ ds.y / ds.m for ds in data])

    def _margins(self, W: np.ndarray) -> np.ndarray:
        return np.matmul(self.X, W.T[:, :, None])[:, :, 0]

    def risk(self, W: np.ndarray) -> float:
        if self.homogeneous:
            return float(np.mean(np.logaddexp(0.0, -self.y * self._margins(W))))
        total = 0.0
        for i, ds in enumerate(self.data):
            total += float(np.mean(np.logaddexp(0.0, -ds.y * (ds.x @ W[:, i]))))
        return total / self.n

    def grad(self, W: np.ndarray) -> np.ndarray:
        if self.homogeneous:
            coef = -self.y * _sigmoid(-self.y * self._margins(W))
            m = self.X.shape[1]
            return np.matmul(self.Xt, coef[:, :, None])[:, :, 0].T / (self.n * m)
        G = np.empty_like(W)
        for i, ds in enumerate(self.data):
            z = ds.x @ W[:, i]
            coef = -ds.y * _sigmoid(-ds.y * z)
            G[:, i] = ds.x.T @ coef / ds.m
        return G / self.n


def _make_stats(data: Sequence[TaskDataset]):
    if data[0].family == QUADRATIC:
        return _QuadStats(data)
    return _LogisticStats(data)


def _task_value_grad(ds: TaskDataset, stats, i: int):
    """Per-task mean-loss closures (value, grad) for column solvers."""
    if ds.family == QUADRATIC:
        S, P, y2 = stats.S[i], stats.P[i], stats.y2[i]

        def value(w):
            return float(0.5 * w @ (S @ w) - P @ w + 0.5 * y2)

        def grad(w):
            return S @ w - P

    else:
        X, y = ds.x, ds.y

        def value(w):
            return float(np.mean(np.logaddexp(0.0, -y * (X @ w))))

        def grad(w):
            coef = -y * _sigmoid(-y * (X @ w))
            return X.T @ coef / ds.m

    return value, grad


def _aggregate_traces(objs: list[np.ndarray], gnorms: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Combine independent per-task traces into one risk trace (pad with finals)."""
    n = len(objs)
    length = max(len(o) for o in objs)
    agg_o = np.zeros(length)
    agg_g = np.zeros(length)
    for o, g in zip(objs, gnorms):
        idx = np.minimum(np.arange(length), len(o) - 1)
        agg_o += o[idx]
        gg = np.nan_to_num(g, nan=0.0)
        agg_g += gg[np.minimum(np.arange(length), len(g) - 1)] ** 2
    return agg_o / n, np.sqrt(agg_g) / n


def fit_local(data: Sequence[TaskDataset], B: float,
              opts: Optional[SolverOptions] = None) -> EstimatorReport:
    """Independent per-task minimization of the mean loss inside the B-ball.

    Projected gradient with backtracking, started at zero.  The objective
    trace reports the aggregate empirical risk across tasks.
    """
    opts = opts or SolverOptions()
    d, n, _family = _validate_tasks(data, B)
    t0 = time.perf_counter()
    stats = _make_stats(data)
    W = np.empty((d, n))
    objs, gnorms = [], []
    converged = True
    for i, ds in enumerate(data):
        value, grad = _task_value_grad(ds, stats, i)
        res = projected_gradient(
            np.zeros(d), value, grad, lambda w: project_ball(w, B),
            max_iters=opts.max_iters, tol_grad=opts.tol_grad,
            step_init=opts.step_init,
        )
        W[:, i] = res.x
        objs.append(res.objectives)
        gnorms.append(res.grad_norms)
        converged = converged and res.converged
    trace, gtrace = _aggregate_traces(objs, gnorms)
    return EstimatorReport(
        estimator="local", W_hat=W, objective_trace=trace, converged=converged,
        wall_time=time.perf_counter() - t0, grad_norms=gtrace, options=opts,
    )


def _ball_heads_solve(G: np.ndarray, b: np.ndarray, B: float) -> np.ndarray:
    """Exactly solve min_v (1/2) v^T G_i v - b_i^T v over the B-ball, batched.

    Unconstrained solutions inside the ball are returned as-is; violators get
    the boundary solution via eigendecomposition and bisection on the
    Lagrange multiplier (same problem ball_least_squares solves per task).
    """
    n, r = b.shape
    ridge = 1e-12 * (np.trace(G, axis1=1, axis2=2)[:, None, None] / r + 1.0)
    V = np.linalg.solve(G + ridge * np.eye(r), b[:, :, None])[:, :, 0]
    norms = np.linalg.norm(V, axis=1)
    viol = norms > B * (1.0 + 1e-12)
    if not np.any(viol):
        return V
    lam, Q = np.linalg.eigh(G[viol])                # (k, r), (k, r, r)
    lam = np.clip(lam, 0.0, None)
    beta = np.matmul(Q.transpose(0, 2, 1), b[viol, :, None])[:, :, 0]

    def norm_at(mu):
        return np.linalg.norm(beta / (lam + mu[:, None]), axis=1)

    lo = np.zeros(viol.sum())
    hi = np.maximum(np.linalg.norm(beta, axis=1) / B - lam[:, 0], 1.0)
    for _ in range(100):
        grow = norm_at(hi) > B
        if not grow.any():
            break
        hi[grow] *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        too_big = norm_at(mid) > B
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
        if np.max(hi - lo) <= 1e-15 * (1.0 + np.max(hi)):
            break
    Vb = np.matmul(Q, (beta / (lam + hi[:, None]))[:, :, None])[:, :, 0]
    V[viol] = Vb
    return V


def _bm_quadratic_restart(stats: _QuadStats, r: int, B: float, A: np.ndarray,
                          C: np.ndarray,
                          rounds: int) -> tuple[np.ndarray, np.ndarray, list, list, bool]:
    # Orthonormal basis factor so each head's feasible set is the plain
    # B-ball; unconstrained alternation can wander to unbounded-norm
    # plateaus that the final clip then wrecks.
    n, d = stats.n, stats.d
    ridge = 1e-12
    trace, gtrace = [], []
    prev = math.inf
    converged = False

    def absorb(A, C):
        Q, R = np.linalg.qr(A)
        return Q, project_column_norms((C @ R.T).T, B).T

    A, C = absorb(A, C)
    for _ in range(rounds):
        # Heads: per-task constrained r-dimensional least squares.
        SA = np.matmul(stats.S, A)                      # (n, d, r)
        G = np.matmul(A.T[None, :, :], SA)              # (n, r, r)
        b = stats.P @ A                                 # (n, r)
        C = _ball_heads_solve(G, b, B)
        # Basis: one d*r x d*r least squares over all tasks.
        M = np.einsum("nke,nl,nf->klef", stats.S, C, C, optimize=True).reshape(d * r, d * r)
        rhs = np.einsum("nk,nl->kl", stats.P, C).reshape(d * r)
        mscale = np.trace(M.reshape(d * r, d * r)) / (d * r) + 1.0
        A, C = absorb(np.linalg.solve(M + ridge * mscale * np.eye(d * r),
                                      rhs).reshape(d, r), C)
        W = A @ C.T
        obj = stats.risk(W)
        trace.append(obj)
        gtrace.append(float(np.linalg.norm(stats.grad(W))))
        if abs(prev - obj) <= 1e-13 * (1.0 + abs(obj)):
            converged = True
            break
        prev = obj
    return A, C, trace, gtrace, converged


def _bm_logistic_restart(stats: _LogisticStats, r: int, B: float,
                         A: np.ndarray, C: np.ndarray, rounds: int,
                         inner: int) -> tuple[np.ndarray, np.ndarray, list, list, bool]:
    # Both half-steps are smooth unconstrained subproblems; each runs one
    # projected-gradient solve on the full factor (the head subproblem is
    # separable across tasks, so stacking them is the same minimization).
    n = stats.n
    d = stats.d
    # The basis factor is kept orthonormal (QR after each basis step, with
    # the triangular part absorbed into the heads), so the feasible set for
    # each head is the plain B-ball and the head half-step can project.
    # Without this the unconstrained logistic factors grow without bound on
    # separable tasks and the final clip destroys the fit.
    n = stats.n
    d = stats.d

    def absorb(A, C):
        Q, R = np.linalg.qr(A)
        return Q, project_column_norms((C @ R.T).T, B).T

    A, C = absorb(A, C)
    trace, gtrace = [], []
    prev = math.inf
    converged = False
    tol = 1e-9 * (1.0 + stats.risk(A @ C.T))
    inner_tol = math.sqrt(tol)   # tightened as the joint residual shrinks
    identity = lambda z: z  # noqa: E731

    def project_heads(Cflat):
        return project_column_norms(Cflat.reshape(n, r).T, B).T.reshape(-1)

    for _ in range(rounds):
        def c_value(Cflat, A=A):
            return stats.risk(A @ Cflat.reshape(n, r).T)

        def c_grad(Cflat, A=A):
            G = stats.grad(A @ Cflat.reshape(n, r).T)
            return (G.T @ A).reshape(-1)

        res_c = projected_gradient(C.reshape(-1), c_value, c_grad, project_heads,
                                   max_iters=inner, tol_grad=inner_tol)
        C = res_c.x.reshape(n, r)

        def a_value(Aflat, C=C):
            return stats.risk(Aflat.reshape(d, r) @ C.T)

        def a_grad(Aflat, C=C):
            G = stats.grad(Aflat.reshape(d, r) @ C.T)
            return (G @ C).reshape(-1)

        res_a = projected_gradient(A.reshape(-1), a_value, a_grad, identity,
                                   max_iters=inner, tol_grad=inner_tol)
        A, C = absorb(res_a.x.reshape(d, r), C)
        obj = stats.risk(A @ C.T)
        trace.append(obj)
        gtrace.append(float(np.linalg.norm(stats.grad(A @ C.T))))
        at_final_tol = inner_tol <= 1.0000001 * tol
        if (res_c.converged and res_a.converged and at_final_tol) \
                or abs(prev - obj) <= 1e-12 * (1.0 + abs(obj)):
            converged = True
            break
        drop = abs(prev - obj) if math.isfinite(prev) else obj
        prev = obj
        if drop <= 1e-6 * (1.0 + abs(obj)):
            inner_tol = max(tol, 0.05 * inner_tol)
    return A, C, trace, gtrace, converged


def fit_lowrank_bm(data: Sequence[TaskDataset], r: int, B: float,
                   opts: Optional[SolverOptions] = None) -> EstimatorReport:
    """Rank-r estimation through the factorization W = A C^T.

    Alternates half-steps from ``opts.restarts`` random initializations and
    keeps the best final empirical risk.  Quadratic tasks solve each
    half-step exactly as a regularized least-squares problem; logistic tasks
    run projected gradient per half-step with an orthonormal basis factor
    and ball-constrained heads.  Columns of the winner are clipped to the
    B-ball and the post-clip objective is appended to the trace (so the
    trace's final entry can sit above its predecessor).  A restart whose
    non-orthonormal factor loses numerical rank is reinitialized; if every
    retry collapses the report is flagged unconverged.
    """
    opts = opts or SolverOptions()
    d, n, family = _validate_tasks(data, B)
    if not (1 <= r <= min(d, n)):
        raise ParameterError(f"need 1 <= r <= min(d, n) = {min(d, n)}, got r={r}")
    t0 = time.perf_counter()
    stats = _make_stats(data)
    rounds = min(opts.max_iters, 500)
    scale = B / math.sqrt(d * r)
    f_ref = stats.risk(np.zeros((d, n)))
    best = None
    any_ok = False
    for k in range(max(opts.restarts, 1)):
        gen = _rng(opts.seed, _SOLVER, k)
        collapsed = True
        for _retry in range(3):
            A = gen.standard_normal((d, r)) * scale
            C = gen.standard_normal((n, r)) * scale
            if family == QUADRATIC:
                A, C, trace, gtrace, conv = _bm_quadratic_restart(stats, r, B, A, C, rounds)
            else:
                A, C, trace, gtrace, conv = _bm_logistic_restart(
                    stats, r, B, A, C, min(rounds, 150), inner=60)
            # A is kept orthonormal, so rank loss shows up in the heads
            sig = np.linalg.svd(C, compute_uv=False)
            if sig[0] > 0 and sig[-1] > 1e-10 * sig[0]:
                collapsed = False
                break
        W = project_column_norms(A @ C.T, B)
        obj = stats.risk(W)
        trace = list(trace) + [obj]
        gtrace = list(gtrace) + [float(np.linalg.norm(stats.grad(W)))]
        ok = conv and not collapsed
        any_ok = any_ok or ok
        if best is None or obj < best[0]:
            best = (obj, W, trace, gtrace, ok, collapsed)
        if obj <= 1e-14 * (1.0 + f_ref):
            break
    obj, W, trace, gtrace, ok, collapsed = best
    notes = []
    if collapsed:
        notes.append("basis rank collapsed in the selected restart")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        U = extract_representation(W, r)
    notes.extend(str(w.message) for w in caught)
    return EstimatorReport(
        estimator="lowrank_bm", W_hat=W, objective_trace=np.asarray(trace),
        converged=ok and any_ok, wall_time=time.perf_counter() - t0, U_hat=U,
        grad_norms=np.asarray(gtrace), options=opts, notes=notes,
    )


def fit_lowrank_iht(data: Sequence[TaskDataset], r: int, B: float,
                    opts: Optional[SolverOptions] = None) -> EstimatorReport:
    """Rank-r estimation by iterative hard thresholding.

    Each accepted step is a full-matrix gradient step followed by the best
    rank-r reconstruction and column clipping.  Restart 0 starts from the
    clipped rank-r truncation of the moment matrix (columns X_i^T y_i / m_i);
    further restarts perturb it.
    """
    opts = opts or SolverOptions()
    d, n, _family = _validate_tasks(data, B)
    if not (1 <= r <= min(d, n)):
        raise ParameterError(f"need 1 <= r <= min(d, n) = {min(d, n)}, got r={r}")
    t0 = time.perf_counter()
    stats = _make_stats(data)

    def project(W):
        return project_column_norms(top_s_svd(W, r).reconstruct(), B)

    W0 = stats.P.T
    f_ref = stats.risk(np.zeros((d, n)))
    best = None
    for k in range(max(opts.restarts, 1)):
        if k == 0:
            Wk = W0
        else:
            gen = _rng(opts.seed, _SOLVER, k)
            Wk = W0 + (0.5 * B / math.sqrt(d)) * gen.standard_normal((d, n))
        res = projected_gradient(
            project(Wk), stats.risk, stats.grad, project,
            max_iters=opts.max_iters, tol_grad=opts.tol_grad,
            step_init=opts.step_init,
        )
        obj = float(res.objectives[-1])
        if best is None or obj < best[0]:
            best = (obj, res)
        if obj <= 1e-14 * (1.0 + f_ref):
            break
    obj, res = best
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        U = extract_representation(res.x, r)
    notes.extend(str(w.message) for w in caught)
    return EstimatorReport(
        estimator="lowrank_iht", W_hat=res.x, objective_trace=res.objectives,
        converged=res.converged, wall_time=time.perf_counter() - t0, U_hat=U,
        grad_norms=res.grad_norms, steps=res.steps, options=opts, notes=notes,
    )


def _center_losses(stats, centers: np.ndarray, data) -> np.ndarray:
    """Mean loss of every task under every center, shape (n, r)."""
    if isinstance(stats, _QuadStats):
        SC = np.matmul(stats.S, centers)                       # (n, d, r)
        quad = np.einsum("ds,nds->ns", centers, SC, optimize=True)
        lin = stats.P @ centers
        return 0.5 * quad - lin + 0.5 * stats.y2[:, None]
    losses = np.empty((stats.n, centers.shape[1]))
    for i, ds in enumerate(data):
        z = ds.x @ centers
        losses[i] = np.mean(np.logaddexp(0.0, -ds.y[:, None] * z), axis=0)
    return losses


def _refit_center(stats, data, members: np.ndarray, B: float, warm: np.ndarray,
                  inner: int) -> np.ndarray:
    if isinstance(stats, _QuadStats):
        G = stats.S[members].mean(axis=0)
        b = stats.P[members].mean(axis=0)
        return ball_least_squares(G, b, B)
    X = np.concatenate([data[i].x for i in members])
    y = np.concatenate([data[i].y for i in members])

    def value(w):
        return float(np.mean(np.logaddexp(0.0, -y * (X @ w))))

    def grad(w):
        coef = -y * _sigmoid(-y * (X @ w))
        return X.T @ coef / len(y)

    res = projected_gradient(warm, value, grad, lambda w: project_ball(w, B),
                             max_iters=inner, tol_grad=1e-10)
    return res.x


def fit_clustered(data: Sequence[TaskDataset], r: int, B: float,
                  opts: Optional[SolverOptions] = None) -> EstimatorReport:
    """Hard clustering of tasks onto r shared centers.

    Starts from the per-task local solutions, seeds centers by farthest-point
    selection among them, then alternates argmin assignment (ties to the
    lowest index) with pooled center refits until assignments stop changing.
    An emptied cluster is reseeded at the worst-fit task's local solution.
    Best of ``opts.restarts`` seedings by final objective.
    """
    opts = opts or SolverOptions()
    d, n, _family = _validate_tasks(data, B)
    if not (1 <= r <= n):
        raise ParameterError(f"need 1 <= r <= n = {n}, got r={r}")
    t0 = time.perf_counter()
    stats = _make_stats(data)
    local = fit_local(data, B, SolverOptions(
        max_iters=opts.max_iters, tol_grad=opts.tol_grad,
        step_init=opts.step_init, restarts=1, seed=opts.seed))
    L = local.W_hat
    rounds = min(opts.max_iters, 100)
    best = None
    for k in range(max(opts.restarts, 1)):
        gen = _rng(opts.seed, _SOLVER, k)
        chosen = [int(gen.integers(n))]
        for _ in range(r - 1):
            diff = L[:, :, None] - L[:, None, chosen]
            dists = np.min(np.linalg.norm(diff, axis=0), axis=1)
            dists[chosen] = -1.0
            chosen.append(int(np.argmax(dists)))
        centers = L[:, chosen].copy()
        assignment = None
        trace = []
        converged = False
        for _round in range(rounds):
            losses = _center_losses(stats, centers, data)
            new_assignment = np.argmin(losses, axis=1)
            current = losses[np.arange(n), new_assignment]
            for s in range(r):
                if not np.any(new_assignment == s):
                    worst = int(np.argmax(current))
                    centers[:, s] = L[:, worst]
                    new_assignment[worst] = s
                    current[worst] = _center_losses(
                        stats, centers[:, s:s + 1], data)[worst, 0]
            for s in range(r):
                members = np.nonzero(new_assignment == s)[0]
                centers[:, s] = _refit_center(stats, data, members, B,
                                              centers[:, s], inner=200)
            losses = _center_losses(stats, centers, data)
            trace.append(float(np.mean(losses[np.arange(n), new_assignment])))
            if assignment is not None and np.array_equal(assignment, new_assignment):
                converged = True
                assignment = new_assignment
                break
            assignment = new_assignment
        obj = trace[-1]
        if best is None or obj < best[0]:
            best = (obj, centers.copy(), assignment.copy(), list(trace), converged)
    obj, centers, assignment, trace, converged = best
    W = centers[:, assignment]
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        U = extract_representation(W, r)
    notes.extend(str(w.message) for w in caught)
    return EstimatorReport(
        estimator="clustered", W_hat=W, objective_trace=np.asarray(trace),
        converged=converged, wall_time=time.perf_counter() - t0, U_hat=U,
        assignment=assignment.astype(int), options=opts, notes=notes,
    )


def refit_clusters(data: Sequence[TaskDataset], assignment, B: float) -> np.ndarray:
    """Pooled center refit under a fixed assignment; returns centers (d x r).

    Oracle companion to ``fit_clustered`` for benchmark comparisons.
    """
    assignment = np.asarray(assignment, dtype=int)
    d, n, _family = _validate_tasks(data, B)
    if assignment.shape != (n,):
        raise ParameterError(f"assignment must have shape ({n},)")
    r = int(assignment.max()) + 1
    stats = _make_stats(data)
    centers = np.zeros((d, r))
    for s in range(r):
        members = np.nonzero(assignment == s)[0]
        if members.size == 0:
            raise ParameterError(f"cluster {s} has no members")
        centers[:, s] = _refit_center(stats, data, members, B,
                                      np.zeros(d), inner=2000)
    return centers


def fit_nuclear(data: Sequence[TaskDataset], r: int, kappa: float, B: float,
                s: Optional[int] = None,
                opts: Optional[SolverOptions] = None) -> EstimatorReport:
    """Convex relaxation: projected gradient over the intersection of the
    nuclear ball of radius kappa * B * sqrt(n r) and the per-column B-ball.

    ``W_hat`` is the feasible iterate; ``W_svd`` is its best rank-s
    approximation (default s = ceil(sqrt(r (d + n))), capped at min(d, n)),
    and ``U_hat`` spans the top r left singular directions of ``W_svd``.
    """
    opts = opts or SolverOptions()
    d, n, _family = _validate_tasks(data, B)
    if not (1 <= r <= min(d, n)):
        raise ParameterError(f"need 1 <= r <= min(d, n) = {min(d, n)}, got r={r}")
    if kappa < 1.0:
        raise ParameterError(f"kappa must be >= 1, got {kappa}")
    if s is None:
        s = math.ceil(math.sqrt(r * (d + n)))
    if s < 1:
        raise ParameterError(f"s must be >= 1, got {s}")
    s_eff = min(s, d, n)
    t0 = time.perf_counter()
    stats = _make_stats(data)
    radius = kappa * B * math.sqrt(n * r)
    notes = []

    def project(W):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = project_feasible(W, B, radius)
        for w in caught:
            msg = str(w.message)
            if msg not in notes:
                notes.append(msg)
        return out

    res = projected_gradient(
        np.zeros((d, n)), stats.risk, stats.grad, project,
        max_iters=opts.max_iters, tol_grad=opts.tol_grad,
        step_init=opts.step_init,
    )
    W_svd = top_s_svd(res.x, s_eff).reconstruct()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        U = extract_representation(W_svd, r)
    notes.extend(str(w.message) for w in caught)
    return EstimatorReport(
        estimator="nuclear", W_hat=res.x, objective_trace=res.objectives,
        converged=res.converged, wall_time=time.perf_counter() - t0, U_hat=U,
        grad_norms=res.grad_norms, steps=res.steps, W_svd=W_svd, options=opts,
        notes=notes,
    )


def extract_representation(W, r: int) -> np.ndarray:
    """Orthonormal basis of the top-r left singular directions of W.

    Emits a DegeneracyWarning when W has numerical rank below r; the basis is
    still padded deterministically with the trailing singular directions.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ParameterError(f"W must be 2-d, got shape {W.shape}")
    if not (1 <= r <= min(W.shape)):
        raise ParameterError(f"need 1 <= r <= min{W.shape}, got r={r}")
    triple = top_s_svd(W, r)
    if triple.singulars[0] == 0.0 or triple.singulars[-1] <= 1e-12 * triple.singulars[0]:
        warnings.warn(
            f"matrix has numerical rank below {r}; basis padded with trailing "
            "singular directions",
            DegeneracyWarning,
            stacklevel=2,
        )
    return triple.left


def _single_sample_arrays(data: Sequence[TaskDataset]) -> tuple[np.ndarray, np.ndarray]:
    for i, ds in enumerate(data):
        if ds.m != 1:
            raise ParameterError(f"task {i} has m={ds.m}; this routine needs m=1")
    X = np.stack([ds.x[0] for ds in data])
    y = np.array([float(ds.y[0]) for ds in data])
    return X, y


def is_admissible(U, data: Sequence[TaskDataset], delta: float, B: float) -> bool:
    """Margin certificate for one-sample tasks.

    True iff ``||U^T x_i|| >= delta |y_i| / B`` for every task (with a 1e-12
    additive slack).  Any basis passing this test at delta close to 1 is
    pinned near the planted subspace once n is large.
    """
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must be in (0, 1], got {delta}")
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    U = check_orthonormal(U)
    X, y = _single_sample_arrays(data)
    if X.shape[1] != U.shape[0]:
        raise ParameterError(
            f"dimension mismatch: data d={X.shape[1]}, basis d={U.shape[0]}")
    margins = np.linalg.norm(X @ U, axis=1)
    return bool(np.all(margins >= delta * np.abs(y) / B - 1e-12))


def _surrogate(X: np.ndarray, thresh: np.ndarray, U: np.ndarray) -> float:
    nrm = np.linalg.norm(X @ U, axis=1)
    v = np.maximum(thresh - nrm, 0.0)
    return float(v @ v)


def _golden_section(fun, lo: float, hi: float, iters: int = 60) -> tuple[float, float]:
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = fun(d)
    mid = 0.5 * (a + b)
    return mid, fun(mid)


def _search_circle(X: np.ndarray, thresh: np.ndarray, gen: np.random.Generator,
                   max_circles: int) -> tuple[np.ndarray, float]:
    d = X.shape[1]
    u = gen.standard_normal(d)
    u /= np.linalg.norm(u)
    angles = np.linspace(0.0, math.pi, 49)[:-1]
    cos_a, sin_a = np.cos(angles), np.sin(angles)

    def val_vec(u_):
        p = X @ u_
        v = np.maximum(thresh - np.abs(p), 0.0)
        return float(v @ v)

    best = val_vec(u)
    stall = 0
    for _ in range(max_circles):
        if best <= 1e-26:
            break
        w = gen.standard_normal(d)
        w -= (w @ u) * u
        nw = float(np.linalg.norm(w))
        if nw < 1e-12:  # pragma: no cover
            continue
        w /= nw
        dirs = u[:, None] * cos_a[None, :] + w[:, None] * sin_a[None, :]
        proj = X @ dirs
        viol = np.maximum(thresh[:, None] - np.abs(proj), 0.0)
        vals = np.einsum("nk,nk->k", viol, viol)
        k0 = int(np.argmin(vals))
        h = angles[1] - angles[0]

        def along(theta):
            return val_vec(math.cos(theta) * u + math.sin(theta) * w)

        theta, val = _golden_section(along, angles[k0] - h, angles[k0] + h)
        if val < best - 1e-18:
            cand = math.cos(theta) * u + math.sin(theta) * w
            u = cand / np.linalg.norm(cand)
            best = val
            stall = 0
        else:
            stall += 1
            if stall >= 25:
                break
    return u, best


def _search_stiefel(X: np.ndarray, thresh: np.ndarray, r: int,
                    gen: np.random.Generator, max_iters: int) -> tuple[np.ndarray, float]:
    d = X.shape[1]
    U0 = orthonormalize(gen.standard_normal((d, r)))

    def value(U):
        return _surrogate(X, thresh, U)

    def grad(U):
        proj = X @ U
        nrm = np.linalg.norm(proj, axis=1)
        gap = np.maximum(thresh - nrm, 0.0)
        coef = np.where(gap > 0, -2.0 * gap / np.maximum(nrm, 1e-15), 0.0)
        return X.T @ (coef[:, None] * proj)

    def retract(U):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneracyWarning)
            return orthonormalize(U)

    res = projected_gradient(U0, value, grad, retract,
                             max_iters=max_iters, tol_grad=1e-12)
    return res.x, float(res.objectives[-1])


def fit_subspace_m1(data: Sequence[TaskDataset], r: int, B: float, delta: float,
                    opts: Optional[SolverOptions] = None) -> SubspaceSearchResult:
    """Search for a delta-admissible basis from one sample per task.

    Minimizes the hinge surrogate sum_i max(0, delta |y_i|/B - ||U^T x_i||)^2.
    A surrogate of zero certifies admissibility.  For r=1 in dimension <= 8
    the search walks golden-section-refined random great circles; otherwise it
    runs multi-restart projected gradient with re-orthonormalization.
    """
    opts = opts or SolverOptions(restarts=20)
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must be in (0, 1], got {delta}")
    X, y = _single_sample_arrays(data)
    d = X.shape[1]
    if not (1 <= r <= d):
        raise ParameterError(f"need 1 <= r <= d = {d}, got r={r}")
    t0 = time.perf_counter()
    thresh = delta * np.abs(y) / B
    best_U, best_val, used = None, math.inf, 0
    for k in range(max(opts.restarts, 1)):
        gen = _rng(opts.seed, _SOLVER, k)
        used = k + 1
        if r == 1 and d <= 8:
            u, val = _search_circle(X, thresh, gen, max_circles=150)
            U = u[:, None]
        else:
            U, val = _search_stiefel(X, thresh, r, gen,
                                     max_iters=min(opts.max_iters, 1000))
        if val < best_val:
            best_val, best_U = val, U
        if best_val <= 1e-26:
            break
    admissible = is_admissible(best_U, data, delta, B)
    return SubspaceSearchResult(
        basis=best_U, admissible=admissible, surrogate=best_val,
        restarts_used=used, wall_time=time.perf_counter() - t0,
    )


def orthogonal_admissible_exists(world, data: Sequence[TaskDataset], delta: float,
                                 trials: int, seed: int) -> tuple[bool, Optional[np.ndarray]]:
    """Monte-Carlo witness search for admissible bases orthogonal to the truth.

    Draws ``trials`` Haar-random rank-r frames inside the orthogonal
    complement of the planted basis and returns the first admissible one.
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    if not (0.0 < delta <= 1.0):
        raise ParameterError(f"delta must be in (0, 1], got {delta}")
    d, r = world.U_star.shape
    if d - r < r:
        raise ParameterError(
            f"orthogonal complement (dim {d - r}) cannot hold a rank-{r} frame")
    full = np.linalg.svd(world.U_star, full_matrices=True)[0]
    comp = full[:, r:]
    gen = _rng(seed, _SOLVER)
    if r == 1:
        # batched equivalent of the generic loop below: a rank-1 frame is a
        # normalized gaussian vector, so whole blocks of trials reduce to one
        # matrix product against the complement-projected data
        X, y = _single_sample_arrays(data)
        if X.shape[1] != d:
            raise ParameterError(
                f"dimension mismatch: data d={X.shape[1]}, basis d={d}")
        thresh = delta * np.abs(y) / world.B - 1e-12
        Xc = X @ comp
        done = 0
        while done < trials:
            k = min(8192, trials - done)
            G = gen.standard_normal((k, d - 1))
            norms = np.linalg.norm(G, axis=1)
            norms[norms == 0.0] = 1.0
            hits = np.all(np.abs(Xc @ G.T) >= thresh[:, None] * norms[None, :],
                          axis=0)
            if hits.any():
                idx = int(np.argmax(hits))
                return True, comp @ (G[idx] / norms[idx]).reshape(-1, 1)
            done += k
        return False, None
    for _ in range(trials):
        G = gen.standard_normal((d - r, r))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegeneracyWarning)
            Z = orthonormalize(G)
        U = comp @ Z
        if is_admissible(U, data, delta, world.B):
            return True, U
    return False, None


def save_report(dirpath, report: EstimatorReport) -> None:
    """Write an estimator report directory: CSV factors, trace.csv, report.json."""
    os.makedirs(dirpath, exist_ok=True)
    if report.W_hat is not None:
        save_matrix(os.path.join(dirpath, "W_hat.csv"), report.W_hat)
    if report.U_hat is not None:
        save_matrix(os.path.join(dirpath, "U_hat.csv"), report.U_hat)
    if report.W_svd is not None:
        save_matrix(os.path.join(dirpath, "W_svd.csv"), report.W_svd)
    if report.assignment is not None:
        with open(os.path.join(dirpath, "assignment.csv"), "w", encoding="ascii") as fh:
            fh.write(f"# {len(report.assignment)}\n")
            fh.write("\n".join(str(int(t)) for t in report.assignment) + "\n")
    trace = np.asarray(report.objective_trace, dtype=float)
    gn = report.grad_norms
    st = report.steps
    with open(os.path.join(dirpath, "trace.csv"), "w", encoding="ascii") as fh:
        fh.write("iteration,objective,grad_norm,step\n")
        for k, obj in enumerate(trace):
            g = float(gn[k]) if gn is not None and k < len(gn) else float("nan")
            s = float(st[k]) if st is not None and k < len(st) else float("nan")
            fh.write(f"{k},{float(obj)!r},{g!r},{s!r}\n")
    meta = {
        "estimator": report.estimator,
        "converged": bool(report.converged),
        "wall_time": float(report.wall_time),
        "options": asdict(report.options) if report.options else None,
        "notes": list(report.notes),
    }
    with open(os.path.join(dirpath, "report.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(dirpath) -> EstimatorReport:
    with open(os.path.join(dirpath, "report.json"), "r", encoding="ascii") as fh:
        meta = json.load(fh)

    def _maybe(name):
        path = os.path.join(dirpath, name)
        return load_matrix(path) if os.path.exists(path) else None

    assignment = None
    apath = os.path.join(dirpath, "assignment.csv")
    if os.path.exists(apath):
        with open(apath, "r", encoding="ascii") as fh:
            fh.readline()
            assignment = np.array([int(line) for line in fh if line.strip()])
    rows = np.genfromtxt(os.path.join(dirpath, "trace.csv"), delimiter=",",
                         skip_header=1)
    rows = np.atleast_2d(rows)
    opts = SolverOptions(**meta["options"]) if meta.get("options") else None
    return EstimatorReport(
        estimator=meta["estimator"], W_hat=_maybe("W_hat.csv"),
        objective_trace=rows[:, 1], converged=bool(meta["converged"]),
        wall_time=float(meta["wall_time"]), U_hat=_maybe("U_hat.csv"),
        assignment=assignment, grad_norms=rows[:, 2], steps=rows[:, 3],
        W_svd=_maybe("W_svd.csv"), options=opts, notes=list(meta.get("notes", [])),
    )
