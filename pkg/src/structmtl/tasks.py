"""Per-task losses and risk functionals for the two supported GLM families.

Families:
  quadratic  F(w; x, y) = 0.5 * (w.x - y)^2          with y = w*.x + eps * z
  logistic   F(w; x, y) = log(1 + exp(-y * w.x))      with y in {-1, +1}

A model for n tasks is a d x n matrix W whose column i is task i's parameter.
The empirical risk averages per-sample losses with weight 1/(n * m_i), i.e.
it is the mean over tasks of each task's mean loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ParameterError

QUADRATIC = "quadratic"
LOGISTIC = "logistic"
FAMILIES = (QUADRATIC, LOGISTIC)

__all__ = [
    "QUADRATIC",
    "LOGISTIC",
    "FAMILIES",
    "Sample",
    "TaskDataset",
    "sample_loss",
    "sample_grad",
    "empirical_risk",
    "empirical_grad",
    "population_risk_quadratic",
    "population_risk_mc",
    "bregman",
    "logistic_scale_calibration",
    "save_dataset",
    "load_dataset",
]

_MC_TAG = 5


class Sample(NamedTuple):
    x: np.ndarray
    y: float


def _check_family(family: str) -> str:
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return family


@dataclass
class TaskDataset:
    """Design matrix ``x`` of shape (m, d) with responses ``y`` of shape (m,)."""

    x: np.ndarray
    y: np.ndarray
    family: str

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        _check_family(self.family)
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ParameterError(
                f"inconsistent dataset shapes x{self.x.shape}, y{self.y.shape}"
            )
        if self.x.shape[0] < 1:
            raise ParameterError("dataset needs at least one sample")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ParameterError("dataset contains non-finite values")
        if self.family == LOGISTIC and not np.all(np.abs(self.y) == 1.0):
            raise ParameterError("logistic responses must be +/-1")

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


def sample_loss(family: str, w, sample: Sample) -> float:
    _check_family(family)
    w = np.asarray(w, dtype=float)
    z = float(np.dot(w, sample.x))
    if family == QUADRATIC:
        return 0.5 * (z - sample.y) ** 2
    return float(np.logaddexp(0.0, -sample.y * z))


def sample_grad(family: str, w, sample: Sample) -> np.ndarray:
    _check_family(family)
    w = np.asarray(w, dtype=float)
    x = np.asarray(sample.x, dtype=float)
    z = float(np.dot(w, x))
    if family == QUADRATIC:
        return (z - sample.y) * x
    # d/dz log(1 + exp(-y z)) = -y * sigmoid(-y z)
    return (-sample.y * _sigmoid(-sample.y * z)) * x


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _task_mean_loss(ds: TaskDataset, w: np.ndarray) -> float:
    z = ds.x @ w
    if ds.family == QUADRATIC:
        res = z - ds.y
        return float(0.5 * np.mean(res * res))
    return float(np.mean(np.logaddexp(0.0, -ds.y * z)))


def _task_mean_grad(ds: TaskDataset, w: np.ndarray) -> np.ndarray:
    z = ds.x @ w
    if ds.family == QUADRATIC:
        return ds.x.T @ (z - ds.y) / ds.m
    coef = -ds.y * _sigmoid(-ds.y * z)
    return ds.x.T @ coef / ds.m


def _check_model(W, data: Sequence[TaskDataset]) -> np.ndarray:
    if len(data) == 0:
        raise ParameterError("empty task list")
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ParameterError(f"W must be d x n, got shape {W.shape}")
    d = data[0].d
    for i, ds in enumerate(data):
        if ds.d != d:
            raise ParameterError(f"task {i} has dimension {ds.d}, expected {d}")
    if W.shape != (d, len(data)):
        raise ParameterError(
            f"W has shape {W.shape}, expected ({d}, {len(data)})"
        )
    return W


def empirical_risk(W, data: Sequence[TaskDataset]) -> float:
    """Mean over tasks of each task's mean sample loss at W's columns."""
    W = _check_model(W, data)
    total = 0.0
    for i, ds in enumerate(data):
        total += _task_mean_loss(ds, W[:, i])
    return total / len(data)


def empirical_grad(W, data: Sequence[TaskDataset]) -> np.ndarray:
    """Gradient of ``empirical_risk`` with respect to W (same d x n shape)."""
    W = _check_model(W, data)
    n = len(data)
    G = np.empty_like(W)
    for i, ds in enumerate(data):
        G[:, i] = _task_mean_grad(ds, W[:, i])
    return G / n


def population_risk_quadratic(W, world) -> float:
    """Exact population risk for quadratic tasks with isotropic Gaussian inputs.

    Per task: f_i(w) = 0.5 ||w - w_i*||^2 + 0.5 eps^2.
    """
    if world.family != QUADRATIC:
        raise ParameterError(f"closed form requires the quadratic family, got {world.family}")
    W = np.asarray(W, dtype=float)
    if W.shape != world.W_star.shape:
        raise ParameterError(
            f"W has shape {W.shape}, expected {world.W_star.shape}"
        )
    diff = W - world.W_star
    n = W.shape[1]
    return float(0.5 * np.sum(diff * diff) / n + 0.5 * world.eps**2)


def population_risk_mc(W, world, n_mc: int, seed: int) -> tuple[float, float]:
    """Unbiased Monte-Carlo estimate of the population risk, with standard error.

    Draws ``n_mc`` fresh samples per task from the world's data law.  Returns
    ``(estimate, std_error)``; the estimate is deterministic given ``seed``.
    """
    if n_mc < 100:
        raise ParameterError(f"n_mc must be >= 100, got {n_mc}")
    W = np.asarray(W, dtype=float)
    if W.shape != world.W_star.shape:
        raise ParameterError(f"W has shape {W.shape}, expected {world.W_star.shape}")
    d, n = W.shape
    means = np.empty(n)
    variances = np.empty(n)
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _MC_TAG, i]))
        g = rng.standard_normal((n_mc, d + 1))
        x = g[:, :d]
        z = g[:, d]
        signal = x @ world.W_star[:, i]
        pred = x @ W[:, i]
        if world.family == QUADRATIC:
            y = signal + world.eps * z
            losses = 0.5 * (pred - y) ** 2
        else:
            y = np.where(signal + world.eps * z >= 0.0, 1.0, -1.0)
            losses = np.logaddexp(0.0, -y * pred)
        means[i] = losses.mean()
        variances[i] = losses.var(ddof=1)
    estimate = float(means.mean())
    std_error = float(math.sqrt(variances.sum() / n_mc) / n)
    return estimate, std_error


def bregman(value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
            W, W_ref) -> float:
    """Bregman divergence D(W, W_ref) = g(W) - g(W_ref) - <grad g(W_ref), W - W_ref>."""
    W = np.asarray(W, dtype=float)
    W_ref = np.asarray(W_ref, dtype=float)
    if W.shape != W_ref.shape:
        raise ParameterError(f"shape mismatch {W.shape} vs {W_ref.shape}")
    f_w, _ = value_and_grad(W)
    f_ref, g_ref = value_and_grad(W_ref)
    return float(f_w - f_ref - np.sum(np.asarray(g_ref) * (W - W_ref)))


def logistic_scale_calibration(signal_norm: float, eps: float,
                               nodes: int = 400) -> float:
    """Scale c* minimizing the population logistic risk along the planted direction.

    With u = w*.x ~ N(0, s^2) and labels y = sign(u + eps * z), the logistic
    population minimizer lies on the ray {c * w*}; this returns the optimal c
    computed by Gauss-Hermite quadrature.  Requires eps > 0 (the noiseless
    problem has no finite minimizer).
    """
    if signal_norm <= 0:
        raise ParameterError("signal_norm must be > 0")
    if eps <= 0:
        raise ParameterError("noiseless logistic risk has no finite minimizer")
    from numpy.polynomial.legendre import leggauss
    from scipy.optimize import minimize_scalar
    from scipy.special import ndtr

    # The label noise integrates out exactly: P(y=+1 | u) = Phi(u / eps),
    # leaving a smooth one-dimensional integrand over u ~ N(0, s^2) whose
    # sharpest feature sits in a boundary layer of width ~eps at the origin.
    # Composite Gauss-Legendre on panels doubling away from that layer keeps
    # spectral accuracy in both the eps << s and eps >> s regimes.
    s = float(signal_norm)
    layer = min(eps, s)
    limit = 8.0 * s + 20.0 * layer
    breaks = [0.0]
    b = layer
    while b < limit:
        breaks.append(b)
        b *= 2.0
    breaks.append(limit)
    edges = np.array([-v for v in breaks[:0:-1]] + breaks)
    q = max(10, min(200, nodes // 10))
    t, wt = leggauss(q)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    u = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    dens = np.exp(-0.5 * (u / s) ** 2) / (s * np.sqrt(2.0 * np.pi))
    w_eff = (half[:, None] * wt[None, :]).ravel() * dens
    p_plus = ndtr(u / eps)

    def risk(c):
        return float(np.sum(w_eff * (p_plus * np.logaddexp(0.0, -c * u)
                                     + (1.0 - p_plus) * np.logaddexp(0.0, c * u))))

    # The optimum grows like 1/eps as the labels become separable.
    hi = 100.0 * (1.0 + 1.0 / eps) / max(s, 1e-2)
    res = minimize_scalar(risk, bounds=(0.0, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def save_dataset(path, ds: TaskDataset, task_id: int) -> None:
    """Write one task's samples as CSV with a ``# task_id family d m`` header."""
    lines = [f"# {int(task_id)} {ds.family} {ds.d} {ds.m}"]
    for j in range(ds.m):
        row = [repr(float(v)) for v in ds.x[j]]
        row.append(repr(float(ds.y[j])))
        lines.append(",".join(row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> tuple[int, TaskDataset]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ParameterError(f"{path}: missing '# task_id family d m' header")
        toks = header[1:].split()
        if len(toks) != 4:
            raise ParameterError(f"{path}: malformed header {header!r}")
        task_id = int(toks[0])
        family = _check_family(toks[1])
        d, m = int(toks[2]), int(toks[3])
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    arr = np.asarray(rows, dtype=float)
    if arr.shape != (m, d + 1):
        raise ParameterError(f"{path}: header says m={m} d={d}, body is {arr.shape}")
    return task_id, TaskDataset(arr[:, :d], arr[:, d], family)
