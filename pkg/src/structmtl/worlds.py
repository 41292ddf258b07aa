"""Synthetic multi-task worlds with planted shared structure.

Two generators: a low-rank world (shared d x r basis with per-task heads) and
a clustered world (r well-separated centers, each task assigned to one).  Both
use per-(seed, purpose, task) random substreams so task i's parameters and
data do not depend on n, and so the first m' samples of a size-m dataset match
the size-m' dataset exactly (sweeps over n or m share draws).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import GenerationError, ParameterError
from .matrixkit import load_matrix, orthonormalize, save_matrix
from .tasks import FAMILIES, QUADRATIC, TaskDataset, logistic_scale_calibration

__all__ = [
    "PlantedWorld",
    "WorldDiagnostics",
    "gen_lowrank_world",
    "gen_clustered_world",
    "sample_datasets",
    "diagnostics",
    "population_minimizer",
    "save_world",
    "load_world",
    "GAUSSIAN_HEADS",
    "UNIT_HEADS",
]

GAUSSIAN_HEADS = "gaussian"
UNIT_HEADS = "unit"

# Substream purpose tags.
_BASIS, _HEADS, _CENTERS, _ASSIGN, _DATA = 0, 1, 2, 3, 4

_MAX_CENTER_ATTEMPTS = 10_000


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


@dataclass
class PlantedWorld:
    """Ground truth for n tasks: W_star = U_star @ V_star, columns bounded by B."""

    U_star: np.ndarray              # (d, r) orthonormal columns
    V_star: np.ndarray              # (r, n)
    W_star: np.ndarray              # (d, n)
    family: str
    eps: float
    B: float
    seed: int
    kind: str = "lowrank"           # "lowrank" or "clustered"
    head_style: Optional[str] = None
    separation: Optional[float] = None
    centers: Optional[np.ndarray] = None       # (d, r) for clustered worlds
    cluster_map: Optional[np.ndarray] = None   # (n,) ints in [0, r)

    @property
    def d(self) -> int:
        return self.U_star.shape[0]

    @property
    def n(self) -> int:
        return self.W_star.shape[1]

    @property
    def r(self) -> int:
        return self.U_star.shape[1]


@dataclass
class WorldDiagnostics:
    nu2: float      # (r/n) * smallest eigenvalue of V* V*^T
    lam: float      # (r/B^2) * smallest eigenvalue of U*^T (1/n) W* W*^T U*
    condition: float  # sigma_1(W*) / sigma_r(W*)
    head_norms: np.ndarray = field(repr=False, default=None)


def _validate_common(d, n, r, B, family, eps):
    if d < 1 or n < 1:
        raise ParameterError(f"need d >= 1 and n >= 1, got d={d}, n={n}")
    if not (1 <= r <= min(d, n)):
        raise ParameterError(f"need 1 <= r <= min(d, n) = {min(d, n)}, got r={r}")
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    if eps < 0:
        raise ParameterError(f"eps must be >= 0, got {eps}")
    if family not in FAMILIES:
        raise ParameterError(f"unknown family {family!r}")


def gen_lowrank_world(d: int, n: int, r: int, B: float, family: str, eps: float,
                      seed: int, head_style: str = GAUSSIAN_HEADS) -> PlantedWorld:
    """Low-rank world: orthonormal U* (d x r) and per-task heads v_i* (r,).

    gaussian heads: v ~ N(0, (B^2/r) I), rescaled onto the B-sphere if the
    draw lands outside the ball.  unit heads: v uniform on the radius-B
    sphere, so every task optimum has norm exactly B.
    """
    _validate_common(d, n, r, B, family, eps)
    if head_style not in (GAUSSIAN_HEADS, UNIT_HEADS):
        raise ParameterError(f"unknown head_style {head_style!r}")
    G = _rng(seed, _BASIS).standard_normal((d, r))
    U = orthonormalize(G)
    V = np.empty((r, n))
    for i in range(n):
        gen = _rng(seed, _HEADS, i)
        v = gen.standard_normal(r)
        if head_style == GAUSSIAN_HEADS:
            v = v * (B / np.sqrt(r))
            nrm = float(np.linalg.norm(v))
            if nrm > B:
                v = v * (B / nrm)
        else:
            nrm = float(np.linalg.norm(v))
            while nrm < 1e-12:  # pragma: no cover - probability ~0
                v = gen.standard_normal(r)
                nrm = float(np.linalg.norm(v))
            v = v * (B / nrm)
        V[:, i] = v
    W = U @ V
    return PlantedWorld(U, V, W, family, float(eps), float(B), int(seed),
                        kind="lowrank", head_style=head_style)


def gen_clustered_world(d: int, n: int, r: int, B: float, separation: float,
                        family: str, eps: float, seed: int) -> PlantedWorld:
    """Clustered world: r centers in the radius-B ball with pairwise distance
    >= separation, tasks assigned round-robin then shuffled.

    Centers are drawn uniformly in the ball and rejected until separated;
    after 10^4 draws the request is declared infeasible.
    """
    _validate_common(d, n, r, B, family, eps)
    if separation <= 0:
        raise ParameterError(f"separation must be > 0, got {separation}")
    gen = _rng(seed, _CENTERS)
    centers = []
    attempts = 0
    while len(centers) < r:
        if attempts >= _MAX_CENTER_ATTEMPTS:
            raise GenerationError(
                f"could not place {r} centers with separation {separation} in the "
                f"radius-{B} ball after {attempts} draws"
            )
        attempts += 1
        g = gen.standard_normal(d)
        nrm = float(np.linalg.norm(g))
        if nrm < 1e-12:  # pragma: no cover
            continue
        point = (B * float(gen.random()) ** (1.0 / d) / nrm) * g
        if all(np.linalg.norm(point - c) >= separation for c in centers):
            centers.append(point)
    C = np.stack(centers, axis=1)  # (d, r)
    tau = _rng(seed, _ASSIGN).permutation(np.resize(np.arange(r), n))
    W = C[:, tau]
    U = orthonormalize(C)
    V = U.T @ W
    return PlantedWorld(U, V, W, family, float(eps), float(B), int(seed),
                        kind="clustered", separation=float(separation),
                        centers=C, cluster_map=tau.astype(int))


def sample_datasets(world: PlantedWorld, m: int, seed: int) -> list[TaskDataset]:
    """Draw m samples per task: x ~ N(0, I_d), y from the world's label law.

    quadratic: y = w*.x + eps * z.  logistic: y = sign(w*.x + eps * z) with
    sign(0) = +1.  Task i's stream depends only on (seed, i), and sample j is
    the j-th draw of that stream, so datasets are prefix-stable across m and
    independent of n.
    """
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    d = world.d
    out = []
    for i in range(world.n):
        g = _rng(seed, _DATA, i).standard_normal((m, d + 1))
        x = g[:, :d]
        z = g[:, d]
        signal = x @ world.W_star[:, i]
        if world.family == QUADRATIC:
            y = signal + world.eps * z
        else:
            y = np.where(signal + world.eps * z >= 0.0, 1.0, -1.0)
        out.append(TaskDataset(x, y, world.family))
    return out


def diagnostics(world: PlantedWorld) -> WorldDiagnostics:
    """Spread constants of the planted structure.

    nu2 measures how evenly the task heads cover the shared subspace; lam is
    the matching constant normalized by B^2.  Both vanish when the heads span
    fewer than r directions.
    """
    V = world.V_star
    r, n = V.shape
    nu2 = float(np.clip(np.linalg.eigvalsh(V @ V.T)[0], 0.0, None) * r / n)
    C = world.U_star.T @ world.W_star
    lam = float(
        np.clip(np.linalg.eigvalsh(C @ C.T / n)[0], 0.0, None) * r / world.B**2
    )
    sig = np.linalg.svd(world.W_star, compute_uv=False)
    cond = float(sig[0] / sig[r - 1]) if sig[r - 1] > 0 else float("inf")
    head_norms = np.linalg.norm(world.W_star, axis=0)
    return WorldDiagnostics(nu2=nu2, lam=lam, condition=cond, head_norms=head_norms)


def population_minimizer(world: PlantedWorld) -> np.ndarray:
    """Per-task population risk minimizers, stacked d x n.

    Quadratic tasks: the planted columns.  Logistic tasks: the planted columns
    rescaled by the calibrated factor (the sign-flip label law puts the
    optimum on the planted ray, not at the planted point); requires eps > 0.
    """
    if world.family == QUADRATIC:
        return world.W_star.copy()
    W = np.empty_like(world.W_star)
    cache: dict[float, float] = {}
    for i in range(world.n):
        s = float(np.linalg.norm(world.W_star[:, i]))
        key = round(s, 12)
        if key not in cache:
            cache[key] = logistic_scale_calibration(s, world.eps)
        W[:, i] = cache[key] * world.W_star[:, i]
    return W


def save_world(dirpath, world: PlantedWorld) -> None:
    """Write a world directory: world.json plus CSV factors."""
    os.makedirs(dirpath, exist_ok=True)
    meta = {
        "d": world.d,
        "n": world.n,
        "r": world.r,
        "B": world.B,
        "family": world.family,
        "eps": world.eps,
        "seed": world.seed,
        "kind": world.kind,
        "head_style": world.head_style,
        "separation": world.separation,
    }
    with open(os.path.join(dirpath, "world.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    save_matrix(os.path.join(dirpath, "U_star.csv"), world.U_star)
    save_matrix(os.path.join(dirpath, "V_star.csv"), world.V_star)
    if world.centers is not None:
        save_matrix(os.path.join(dirpath, "centers.csv"), world.centers)
    if world.cluster_map is not None:
        with open(os.path.join(dirpath, "cluster_map.csv"), "w", encoding="ascii") as fh:
            fh.write(f"# {world.n}\n")
            fh.write("\n".join(str(int(t)) for t in world.cluster_map) + "\n")


def load_world(dirpath) -> PlantedWorld:
    with open(os.path.join(dirpath, "world.json"), "r", encoding="ascii") as fh:
        meta = json.load(fh)
    U = load_matrix(os.path.join(dirpath, "U_star.csv"))
    V = load_matrix(os.path.join(dirpath, "V_star.csv"))
    centers = None
    cluster_map = None
    centers_path = os.path.join(dirpath, "centers.csv")
    if os.path.exists(centers_path):
        centers = load_matrix(centers_path)
    map_path = os.path.join(dirpath, "cluster_map.csv")
    if os.path.exists(map_path):
        with open(map_path, "r", encoding="ascii") as fh:
            fh.readline()
            cluster_map = np.array([int(line) for line in fh if line.strip()])
    if centers is not None and cluster_map is not None:
        W = centers[:, cluster_map]
    else:
        W = U @ V
    return PlantedWorld(
        U, V, W, meta["family"], float(meta["eps"]), float(meta["B"]),
        int(meta["seed"]), kind=meta.get("kind", "lowrank"),
        head_style=meta.get("head_style"), separation=meta.get("separation"),
        centers=centers, cluster_map=cluster_map,
    )
