"""Zero-forcing receivers, change-of-basis folding and per-user rates.

Rates are evaluated in the original channel coordinates: the change of basis
is folded into the filters (``V_eff = lift(T_i) V_i``, ``W_eff = W_j
lift(R_j)``) so the receiver noise stays white and only the filter ``W_eff``
colours it.

SNR convention: ``rho = 10**(snr_db / 10)`` is the power per transmitted
stream (each column of ``V_eff`` has unit norm) against unit noise variance
per receive dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .alignment import PrecoderSet
from .basis_change import BasisChange, StructuredChannels, lifted_cb
from .channel import ChannelDraw, ExtensionMode, lift_matrix
from .errors import FilterError
from .linalg import RANK_TOL, orth

LEAKAGE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ZfFilters:
    W: tuple[np.ndarray, ...] = field(repr=False)
    interference_rank: tuple[int, ...]
    leakage: tuple[float, ...]


@dataclass(frozen=True)
class RatePoint:
    snr_db: float
    rate: tuple[float, float, float]

    @property
    def sum_rate(self) -> float:
        return float(sum(self.rate))


def streams(p: int, mode: ExtensionMode) -> int:
    """Columns per precoder: ``2p(p+1)`` real or ``p(p+1)`` complex."""
    return 2 * p * (p + 1) if mode.is_acs else p * (p + 1)


def interference_matrix(j: int, prec: PrecoderSet, sc: StructuredChannels) -> np.ndarray:
    return np.hstack(
        [
            sc.lifted_channel(j, j - 1) @ prec.V[(j - 2) % 3],
            sc.lifted_channel(j, j + 1) @ prec.V[j % 3],
        ]
    )


def interference_basis(j: int, prec: PrecoderSet, sc: StructuredChannels) -> np.ndarray:
    """Orthonormal basis of the interference seen at receiver ``j``."""
    return orth(interference_matrix(j, prec, sc), RANK_TOL)[0]


def zf_filter(j: int, prec: PrecoderSet, sc: StructuredChannels) -> tuple[np.ndarray, int, float]:
    """Receive filter of receiver ``j`` with rows spanning the interference complement.

    Returns ``(W_j, interference_rank, leakage)`` where leakage is the worst
    ``|W_j H_{j,i} V_i|_F / |H_{j,i} V_i|_F`` over ``i != j``.
    """
    basis, comp = orth(interference_matrix(j, prec, sc), RANK_TOL)
    W = comp.conj().T
    need = streams(prec.p, sc.mode)
    if W.shape[0] < need:
        raise FilterError(
            "interference occupies too many dimensions; alignment is broken",
            receiver=j,
            interference_rank=basis.shape[1],
            available=W.shape[0],
            required=need,
        )
    leak = 0.0
    for i in (j - 1, j + 1):
        x = sc.lifted_channel(j, i) @ prec.V[(i - 1) % 3]
        leak = max(leak, float(np.linalg.norm(W @ x) / np.linalg.norm(x)))
    return W, basis.shape[1], leak


def zf_filters(prec: PrecoderSet, sc: StructuredChannels) -> ZfFilters:
    out = [zf_filter(j, prec, sc) for j in (1, 2, 3)]
    return ZfFilters(
        W=tuple(o[0] for o in out),
        interference_rank=tuple(o[1] for o in out),
        leakage=tuple(o[2] for o in out),
    )


def effective_filters(
    prec: PrecoderSet, filt: ZfFilters, cb: BasisChange
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Fold the change of basis into the filters; columns of ``V_eff`` get unit norm."""
    R, T = lifted_cb(cb, prec.mode)
    v_eff = []
    for i in range(3):
        v = T[i] @ prec.V[i]
        v_eff.append(v / np.linalg.norm(v, axis=0))
    w_eff = [filt.W[j] @ R[j] for j in range(3)]
    return v_eff, w_eff


def rate_eigenvalues(
    j: int, v_eff: list[np.ndarray], w_eff: list[np.ndarray], draw: ChannelDraw, mode: ExtensionMode
) -> np.ndarray:
    """Eigenvalues of ``Q^{-1} M M^H`` with ``M = W_eff H V_eff`` and ``Q = W_eff W_eff^H``."""
    W = w_eff[j - 1]
    M = W @ lift_matrix(draw.channel(j, j), mode) @ v_eff[j - 1]
    Q = W @ W.conj().T
    try:
        L = np.linalg.cholesky(Q)
    except np.linalg.LinAlgError as exc:
        raise FilterError("filtered noise covariance is singular", receiver=j) from exc
    X = sla.solve_triangular(L, M, lower=True)
    s = sla.svdvals(X)
    return s**2


def rate_from_eigenvalues(eigs: np.ndarray, snr_db, mode: ExtensionMode) -> np.ndarray:
    """Rate in bits per complex channel use at one or several SNR values."""
    rho = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    norm = 2 * mode.T if mode.is_acs else mode.T
    return np.log2(1.0 + np.multiply.outer(rho, eigs)).sum(axis=-1) / norm


def user_rate(
    j: int,
    v_eff: list[np.ndarray],
    w_eff: list[np.ndarray],
    draw: ChannelDraw,
    snr_db: float,
    mode: ExtensionMode,
) -> float:
    eigs = rate_eigenvalues(j, v_eff, w_eff, draw, mode)
    return float(rate_from_eigenvalues(eigs, snr_db, mode))


def rate_point(v_eff, w_eff, draw: ChannelDraw, snr_db: float, mode: ExtensionMode) -> RatePoint:
    rates = tuple(user_rate(j, v_eff, w_eff, draw, snr_db, mode) for j in (1, 2, 3))
    return RatePoint(float(snr_db), rates)
