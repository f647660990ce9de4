"""Dense small-matrix primitives: Lyapunov solver, gramians, spectral quantities.

Conventions
-----------
``dlyap(A, Q)`` returns the ``X`` solving ``X = A X A^T + Q``.  With this
ordering the stationary covariance of ``x_{t+1} = A x_t + w_t`` is
``dlyap(A, Sigma_w)`` and the cost-to-go of ``x^T Q x`` is ``dlyap(A^T, Q)``.
"""

from __future__ import annotations

import numpy as np

from advlqr.errors import DimensionMismatch, NoConvergence, RhoTooSmall, UnstableMatrix

SYM_TOL = 1e-10
PSD_TOL = 1e-9


def as_matrix(X, name: str = "matrix") -> np.ndarray:
    """Return ``X`` as a finite 2-D float array (scalars become 1x1)."""
    M = np.array(X, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_square(X, name: str = "matrix") -> np.ndarray:
    M = as_matrix(X, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    return M


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


def as_symmetric(X, name: str = "matrix") -> np.ndarray:
    """Validate near-symmetry of ``X`` and return its symmetric part."""
    M = as_square(X, name)
    scale = 1.0 + np.linalg.norm(M, 2)
    if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return symmetrize(M)


def min_eig(X: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(X))[0])


def max_eig(X: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(X))[-1])


def is_psd(X: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eig(X) >= -tol * (1.0 + spectral_norm(X))


def is_pd(X: np.ndarray, tol: float = PSD_TOL) -> bool:
    return min_eig(X) > tol


def psd_sqrt(X: np.ndarray) -> np.ndarray:
    """Symmetric square root of a psd matrix, clipping tiny negative eigenvalues."""
    w, V = np.linalg.eigh(symmetrize(X))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def spectral_radius(A) -> float:
    A = as_square(A, "A")
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def spectral_norm(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, 2))


def frobenius_norm(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A, "fro"))


def min_singular_value(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def _smith(A: np.ndarray, Q: np.ndarray, max_iter: int) -> np.ndarray:
    X = Q.copy()
    Ak = A.copy()
    for _ in range(max_iter):
        update = Ak @ X @ Ak.T
        X = X + update
        if np.linalg.norm(update, 2) < 1e-12 * (1.0 + np.linalg.norm(X, 2)):
            return X
        Ak = Ak @ Ak
        if not np.all(np.isfinite(Ak)):
            break
    raise NoConvergence("Smith doubling did not converge")


def dlyap(A, Q, max_iter: int = 64) -> np.ndarray:
    """Solve ``X = A X A^T + Q`` by Smith doubling.

    The iterate after ``k`` doublings is the partial sum of ``A^t Q (A^t)^T``
    over ``t < 2**k``.  One residual-correction pass is applied when the
    doubled sum misses the residual target (happens for ``rho(A)`` close to 1).
    """
    A = as_square(A, "A")
    Q = as_square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionMismatch(f"dlyap: A is {A.shape}, Q is {Q.shape}")
    rho = spectral_radius(A)
    if rho >= 1.0 - 1e-9:
        raise UnstableMatrix(f"dlyap requires rho(A) < 1, got {rho!r}")
    Q = symmetrize(Q)
    X = symmetrize(_smith(A, Q, max_iter))
    for _ in range(3):
        resid = symmetrize(A @ X @ A.T + Q - X)
        if np.linalg.norm(resid, 2) <= 1e-10 * (1.0 + np.linalg.norm(X, 2)):
            break
        X = symmetrize(X + _smith(A, resid, max_iter))
    return X


def controllability_gramian_l(A, B, l: int) -> np.ndarray:
    """Finite gramian ``sum_{t=0}^{l} A^t B B^T (A^t)^T`` (upper index inclusive)."""
    A = as_square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape}")
    if l < 1:
        raise ValueError("l must be >= 1")
    W = np.zeros_like(A)
    AtB = B.copy()
    for _ in range(l + 1):
        W += AtB @ AtB.T
        AtB = A @ AtB
    return symmetrize(W)


def controllability_gramian_inf(A, B) -> np.ndarray:
    A = as_square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape}")
    return dlyap(A, B @ B.T)


def tau(A, rho: float, max_steps: int = 1_000_000) -> float:
    """Transient bound ``sup_k ||A^k|| rho^{-k}`` for ``rho > rho(A)``.

    The scan stops once the running maximum has not changed for 20 steps and
    the current term is below 0.5; the terms decay geometrically with ratio
    ``rho(A)/rho`` so the supremum is attained before that point.
    """
    A = as_square(A, "A")
    rA = spectral_radius(A)
    if rho <= rA + 1e-9:
        raise RhoTooSmall(f"rho={rho!r} must exceed rho(A)={rA!r}")
    S = A / rho
    Sk = np.eye(A.shape[0])
    best = 1.0
    stale = 0
    for _ in range(max_steps):
        Sk = Sk @ S
        val = spectral_norm(Sk)
        if val > best:
            best = val
            stale = 0
        else:
            stale += 1
        if stale >= 20 and val < 0.5:
            return best
        if not np.isfinite(val):
            break
    raise NoConvergence("tau scan did not terminate")
