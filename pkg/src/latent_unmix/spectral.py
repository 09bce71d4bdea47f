"""Linear-algebra primitives for unmixing and spectral recovery."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIG_SEPARATION_RTOL = 1e-8
IMAG_TOL = 1e-9


class ConditioningError(ArithmeticError):
    """Raised when an input violates a rank or distinctness precondition."""


def pseudoinverse(M: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse (SVD based, numpy's default cutoff)."""
    return np.linalg.pinv(np.asarray(M))


def in_rowspace(M: np.ndarray, v: np.ndarray, tol: float = 1e-10) -> tuple[bool, float]:
    """Is ``v`` in the row space of ``M``? Returns (answer, relative residual)."""
    M = np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    proj = M.T @ (pseudoinverse(M.T) @ v)
    norm = np.linalg.norm(v)
    resid = float(np.linalg.norm(v - proj) / norm) if norm > 0 else 0.0
    return resid <= tol, resid


@dataclass
class DecomposeResult:
    matrix: np.ndarray          # M1 up to column permutation and scaling
    eigenvalues: np.ndarray
    min_sv_projected: float     # smallest singular value of U1^T X U2
    min_sv_eigvecs: float       # smallest singular value of V
    separation: float           # min pairwise eigenvalue distance

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.matrix)


def _realify(z: np.ndarray, scale: float) -> np.ndarray:
    if np.max(np.abs(np.imag(z)), initial=0.0) <= IMAG_TOL * max(scale, 1.0):
        return np.real(z)
    return z


def decompose(X: np.ndarray, Y: np.ndarray, k: int) -> DecomposeResult:
    """Recover M1 (up to column permutation and scaling) from X = M1 M2^T, Y = M1 D M2^T.

    The range of X is spanned by its top-k singular vectors, the projected
    pencil is diagonalized, and the eigenvectors are lifted back through U1.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape:
        raise ValueError(f"X and Y must have the same shape, got {X.shape} and {Y.shape}")
    if k < 1 or k > min(X.shape):
        raise ValueError(f"k={k} incompatible with a {X.shape} input")
    U, s, Vt = np.linalg.svd(X)
    if s[0] == 0.0 or s[k - 1] <= max(X.shape) * s[0] * 1e-10:
        raise ConditioningError(f"rank of X is below k={k} (singular values {s[:k + 1]})")
    U1, U2 = U[:, :k], Vt[:k].T
    Xp = U1.T @ X @ U2
    Yp = U1.T @ Y @ U2
    lam, V = np.linalg.eig(Yp @ np.linalg.inv(Xp))
    scale = float(np.max(np.abs(lam)))
    if k > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])[~np.eye(k, dtype=bool)]
        separation = float(gaps.min())
    else:
        separation = float("inf")
    if separation < EIG_SEPARATION_RTOL * scale or scale == 0.0:
        raise ConditioningError(
            f"eigenvalues are not distinct (separation {separation:.3e}, max |eig| {scale:.3e})"
        )
    V = _realify(V * np.exp(-1j * np.angle(V[np.argmax(np.abs(V), axis=0), range(k)])), 1.0)
    lam = _realify(lam, scale)
    return DecomposeResult(
        matrix=U1 @ V,
        eigenvalues=lam,
        min_sv_projected=float(np.linalg.svd(Xp, compute_uv=False)[-1]),
        min_sv_eigvecs=float(np.linalg.svd(V, compute_uv=False)[-1]),
        separation=separation,
    )


def normalize_columns_to_stochastic(M: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Divide each column by its sum."""
    M = np.asarray(M)
    sums = M.sum(axis=0)
    if np.any(np.abs(sums) <= tol):
        raise ConditioningError(f"column with zero sum: {sums}")
    return M / sums
