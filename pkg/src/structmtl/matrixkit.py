"""Dense matrix primitives: truncated SVD, shelling, projections, subspace distances.

All matrices are plain float ndarrays.  Orthonormal bases ("representations")
are d x r ndarrays with orthonormal columns.  Every SVD-derived output follows
a fixed sign convention (the largest-magnitude entry of each left singular
vector is made positive, ties broken at the lowest index) so repeated runs
produce identical bytes.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceWarning, DegeneracyWarning, NumericalError, ParameterError

__all__ = [
    "SvdTriple",
    "top_s_svd",
    "shelling_decomposition",
    "project_nuclear_ball",
    "project_column_norms",
    "project_feasible",
    "dist_F2",
    "dist_op2",
    "orthonormalize",
    "nuclear_norm",
    "check_orthonormal",
    "save_matrix",
    "load_matrix",
]


class SvdTriple(NamedTuple):
    """Truncated SVD factors: ``left @ diag(singulars) @ right.T`` reconstructs."""

    left: np.ndarray        # (p, s), orthonormal columns
    singulars: np.ndarray   # (s,), non-increasing, >= 0
    right: np.ndarray       # (q, s), orthonormal columns

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.T


def _as_matrix(W, name="W") -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ParameterError(f"{name} must be a 2-d array, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ParameterError(f"{name} contains non-finite entries")
    return W


def _fix_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude entry of each left singular vector made positive;
    # np.argmax breaks ties at the lowest index.
    if U.shape[1] == 0:
        return U, Vt
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, Vt * signs[:, None]


def top_s_svd(W, s: int) -> SvdTriple:
    """Best rank-``s`` approximation factors of ``W`` in Frobenius norm.

    Returns the top ``s`` singular triples with the deterministic sign
    convention.  ``1 <= s <= min(W.shape)`` is required.
    """
    W = _as_matrix(W)
    p, q = W.shape
    if not (1 <= s <= min(p, q)):
        raise ParameterError(f"s must satisfy 1 <= s <= min{W.shape}, got {s}")
    try:
        U, sig, Vt = np.linalg.svd(W, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        scale = float(np.abs(W).max())
        raise NumericalError(
            f"SVD failed to converge on a {p}x{q} matrix (max |entry| {scale:.3e})"
        ) from exc
    U, Vt = _fix_signs(U[:, :s].copy(), Vt[:s].copy())
    return SvdTriple(U, sig[:s].copy(), Vt.T)


def shelling_decomposition(W, s: int) -> list[np.ndarray]:
    """Split ``W`` into rank-``s`` shells of non-increasing spectral weight.

    The first shell is the best rank-``s`` approximation of ``W``; each later
    shell is the best rank-``s`` approximation of the remaining residual.  The
    shells sum to ``W`` and the list has at most ``ceil(min(W.shape)/s)``
    entries.
    """
    W = _as_matrix(W)
    p, q = W.shape
    if not (1 <= s <= min(p, q)):
        raise ParameterError(f"s must satisfy 1 <= s <= min{W.shape}, got {s}")
    n_shells = -(-min(p, q) // s)
    scale = max(1.0, float(np.linalg.norm(W)))
    shells = []
    residual = W.copy()
    for _ in range(n_shells):
        block = top_s_svd(residual, s).reconstruct()
        shells.append(block)
        residual = residual - block
        if np.linalg.norm(residual) <= 1e-13 * scale:
            break
    return shells


def _project_simplex_sorted(sig: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of a sorted (descending, >= 0) vector onto the l1 ball."""
    total = float(sig.sum())
    if total <= radius:
        return sig.copy()
    if radius == 0.0:
        return np.zeros_like(sig)
    cum = np.cumsum(sig)
    j = np.arange(1, sig.size + 1)
    theta = (cum - radius) / j
    rho = int(np.nonzero(sig > theta)[0].max())
    return np.maximum(sig - theta[rho], 0.0)


def project_nuclear_ball(W, radius: float) -> np.ndarray:
    """Euclidean projection of ``W`` onto ``{M : ||M||_* <= radius}``.

    Soft-thresholds the singular values by the exact water-filling level.
    Inputs already inside the ball are returned unchanged.
    """
    W = _as_matrix(W)
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    try:
        U, sig, Vt = np.linalg.svd(W, full_matrices=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NumericalError("SVD failed during nuclear-ball projection") from exc
    if sig.sum() <= radius:
        return W.copy()
    new_sig = _project_simplex_sorted(sig, radius)
    return (U * new_sig) @ Vt


def project_column_norms(W, B: float) -> np.ndarray:
    """Rescale any column of ``W`` with euclidean norm above ``B`` down to ``B``."""
    W = _as_matrix(W)
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    norms = np.linalg.norm(W, axis=0)
    scale = np.where(norms > B, B / np.maximum(norms, 1e-300), 1.0)
    return W * scale


def nuclear_norm(W) -> float:
    return float(np.linalg.svd(_as_matrix(W), compute_uv=False).sum())


def project_feasible(W, B: float, radius: float, max_sweeps: int = 200,
                     tol: float = 1e-10) -> np.ndarray:
    """Project onto the intersection of the nuclear ball and the column-norm ball.

    Dykstra's alternating projection between ``||.||_* <= radius`` and
    ``max_i ||col_i|| <= B``.  Both sets are convex so the sweep converges to
    the exact euclidean projection; if ``max_sweeps`` is exhausted first the
    last iterate is returned and a ConvergenceWarning is issued.
    """
    W = _as_matrix(W)
    if B <= 0:
        raise ParameterError(f"B must be > 0, got {B}")
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    scale = max(1.0, float(np.linalg.norm(W)))
    x = W.copy()
    p = np.zeros_like(W)
    q = np.zeros_like(W)
    for _ in range(max_sweeps):
        y = project_nuclear_ball(x + p, radius)
        p = x + p - y
        x_new = project_column_norms(y + q, B)
        q = y + q - x_new
        delta = np.linalg.norm(x_new - x)
        x = x_new
        if delta <= tol * scale:
            return x
    warnings.warn(
        f"feasible-set projection stopped after {max_sweeps} sweeps "
        f"(last change {delta:.3e})",
        ConvergenceWarning,
        stacklevel=2,
    )
    return x


def check_orthonormal(U, tol: float = 1e-8, name: str = "U") -> np.ndarray:
    U = _as_matrix(U, name)
    d, r = U.shape
    if r > d:
        raise ParameterError(f"{name} has more columns than rows ({r} > {d})")
    gram_err = float(np.abs(U.T @ U - np.eye(r)).max())
    if gram_err > tol:
        raise ParameterError(
            f"{name} does not have orthonormal columns (max Gram deviation {gram_err:.3e})"
        )
    return U


def dist_F2(U1, U2) -> float:
    """Squared Frobenius subspace distance ``Tr((I - U1 U1^T) U2 U2^T)``.

    Arguments are orthonormal bases with the same ambient dimension; their
    ranks may differ, and the value lies in ``[0, rank(U2)]``.  It is zero iff
    the span of ``U2`` is contained in the span of ``U1``.
    """
    U1 = check_orthonormal(U1, name="U1")
    U2 = check_orthonormal(U2, name="U2")
    if U1.shape[0] != U2.shape[0]:
        raise ParameterError(
            f"ambient dimensions differ: {U1.shape[0]} vs {U2.shape[0]}"
        )
    cross = U1.T @ U2
    val = U2.shape[1] - float((cross * cross).sum())
    return float(min(max(val, 0.0), U2.shape[1]))


def dist_op2(U1, U2) -> float:
    """Squared operator-norm subspace distance ``||(I - U1 U1^T) U2 U2^T||_2^2`` in [0, 1]."""
    U1 = check_orthonormal(U1, name="U1")
    U2 = check_orthonormal(U2, name="U2")
    if U1.shape[0] != U2.shape[0]:
        raise ParameterError(
            f"ambient dimensions differ: {U1.shape[0]} vs {U2.shape[0]}"
        )
    residual = U2 - U1 @ (U1.T @ U2)
    s = np.linalg.svd(residual, compute_uv=False)
    top = float(s[0]) if s.size else 0.0
    return float(min(max(top * top, 0.0), 1.0))


def orthonormalize(A) -> np.ndarray:
    """Orthonormal basis with the same column span as ``A`` (d x r, r <= d).

    Full-rank inputs go through QR, so an already orthonormal ``A`` comes back
    unchanged up to the sign convention.  Rank-deficient inputs fall back to
    the left singular vectors of ``A`` (the trailing directions pad the basis
    deterministically) and raise a DegeneracyWarning.
    """
    A = _as_matrix(A, "A")
    d, r = A.shape
    if r == 0 or r > d:
        raise ParameterError(f"need 1 <= cols <= rows, got shape {A.shape}")
    sig = np.linalg.svd(A, compute_uv=False)
    if sig[0] == 0.0 or sig[-1] <= 1e-12 * sig[0]:
        warnings.warn(
            f"rank-deficient input (smallest/largest singular value "
            f"{sig[-1]:.3e}/{sig[0]:.3e}); basis padded with trailing "
            "singular directions",
            DegeneracyWarning,
            stacklevel=2,
        )
        U, _, Vt = np.linalg.svd(A, full_matrices=False)
        U, _ = _fix_signs(U.copy(), Vt.copy())
        return U
    Q = np.linalg.qr(A)[0]
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(r)])
    signs[signs == 0] = 1.0
    return Q * signs


def save_matrix(path, W) -> None:
    """Write a matrix as CSV with a ``# rows cols`` header line.

    Entries use shortest round-trip decimal form, so load_matrix restores the
    exact doubles.
    """
    W = _as_matrix(W)
    rows, cols = W.shape
    lines = [f"# {rows} {cols}"]
    for i in range(rows):
        lines.append(",".join(repr(float(v)) for v in W[i]))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_matrix(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ParameterError(f"{path}: missing '# rows cols' header")
        try:
            rows, cols = (int(tok) for tok in header[1:].split())
        except ValueError as exc:
            raise ParameterError(f"{path}: malformed header {header!r}") from exc
        data = []
        for line in fh:
            line = line.strip()
            if line:
                data.append([float(tok) for tok in line.split(",")])
    W = np.asarray(data, dtype=float)
    if W.size == 0:
        W = W.reshape(rows, cols) if rows * cols == 0 else W
    if W.shape != (rows, cols):
        raise ParameterError(f"{path}: header says {rows}x{cols}, body is {W.shape}")
    return W
