"""Small rank-revealing helpers shared by the rest of the package."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

#: Relative singular-value threshold used for every rank decision.
RANK_TOL = 1e-8


def svd(a: np.ndarray, full_matrices: bool = True):
    """SVD that falls back to the QR-iteration driver if ``gesdd`` fails."""
    try:
        return sla.svd(a, full_matrices=full_matrices, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return sla.svd(a, full_matrices=full_matrices, lapack_driver="gesvd")


def singular_values(a: np.ndarray) -> np.ndarray:
    try:
        return sla.svdvals(a)
    except np.linalg.LinAlgError:
        return sla.svd(a, compute_uv=False, lapack_driver="gesvd")


def numerical_rank(a: np.ndarray, tol: float = RANK_TOL) -> int:
    s = singular_values(a)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def sigma_min_rel(a: np.ndarray) -> float:
    s = singular_values(a)
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    return float(s[-1] / s[0])


def fix_sign(v: np.ndarray) -> np.ndarray:
    """Scale ``v`` by a unit phase so its first nonzero entry is real positive."""
    v = np.asarray(v)
    idx = np.flatnonzero(np.abs(v) > 1e-12 * max(np.abs(v).max(initial=0.0), 1e-300))
    if idx.size == 0:
        return v
    lead = v[idx[0]]
    return v * (np.conj(lead) / abs(lead))


def right_null_space(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis (as columns) of ``{x : a @ x = 0}``."""
    a = np.atleast_2d(a)
    _, s, vh = svd(a, full_matrices=True)
    rank = int(np.count_nonzero(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return vh[rank:].conj().T


def left_null_vector(a: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Unit row vector ``r`` with ``r @ a = 0``, sign-fixed.

    ``a`` must have a one-dimensional left null space (``m x (m-1)`` and full
    column rank); otherwise :class:`ValueError` is raised.
    """
    ns = right_null_space(np.asarray(a).T, tol)
    if ns.shape[1] != 1:
        raise ValueError(f"left null space has dimension {ns.shape[1]}, expected 1")
    v = ns[:, 0]
    return fix_sign(v / np.linalg.norm(v))


def orth(a: np.ndarray, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Split the column space of ``a`` from its orthogonal complement.

    Returns ``(basis, complement)``, both with orthonormal columns, where the
    split is made at singular values above ``tol * sigma_max``.
    """
    u, s, _ = svd(a, full_matrices=True)
    rank = int(np.count_nonzero(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return u[:, :rank], u[:, rank:]
