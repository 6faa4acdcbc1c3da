"""Signal-space rank checks, achieved degrees of freedom and claim reports.

The signal space matrix (SSM) of receiver ``j`` stacks an orthonormal basis of
the desired signal space next to an orthonormal basis of the interference
space. Desired and interfering signals are linearly independent exactly when
this matrix has full column rank; under ACS it is square with side
``2(2p+1)(p+1)``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .alignment import PrecoderSet, alignment_residuals
from .basis_change import StructuredChannels
from .channel import ChannelDraw, ExtensionMode, Scheme, draw_channels, lift_matrix
from .detection import interference_basis
from .errors import AcsAlignError
from .linalg import RANK_TOL, numerical_rank, orth, right_null_space, singular_values

log = logging.getLogger(__name__)

#: Largest ``p`` covered by the proved claims; larger values are conjectured.
PROVED_MAX_P = 6


def target_dof(p: int) -> Fraction:
    return Fraction(p * (p + 1), 2 * p + 1)


def build_ssm(j: int, prec: PrecoderSet, sc: StructuredChannels) -> np.ndarray:
    """``[basis(desired) | basis(interference)]`` at receiver ``j``."""
    desired = sc.lifted_channel(j, j) @ prec.V[j - 1]
    return np.hstack([orth(desired, RANK_TOL)[0], interference_basis(j, prec, sc)])


def rank_report(G: np.ndarray) -> tuple[int, float]:
    """Numerical rank at ``1e-8 * sigma_max`` and ``sigma_min / sigma_max``."""
    s = singular_values(G)
    if s.size == 0 or s[0] == 0.0:
        return 0, 0.0
    return int(np.count_nonzero(s > RANK_TOL * s[0])), float(s[-1] / s[0])


def achieved_dof(
    j: int, v_eff: list[np.ndarray], w_eff: list[np.ndarray], draw: ChannelDraw, mode: ExtensionMode
) -> Fraction:
    """``rank(W_eff H_jj V_eff) / 2T`` (ACS) or complex rank ``/ T`` (time only).

    The rank is taken after orthonormalizing the row space of ``W_eff`` and the
    column space of ``V_eff``, which leaves it unchanged but removes the
    scaling introduced by the change of basis.
    """
    w_rows = orth(w_eff[j - 1].conj().T, RANK_TOL)[0].conj().T
    v_cols = orth(v_eff[j - 1], RANK_TOL)[0]
    rank = numerical_rank(w_rows @ lift_matrix(draw.channel(j, j), mode) @ v_cols)
    return Fraction(rank, 2 * mode.T if mode.is_acs else mode.T)


# -- p = 2 elimination matrices ------------------------------------------------


@dataclass(frozen=True, eq=False)
class EliminationCheck:
    matrix: np.ndarray = field(repr=False)
    null_dim: int
    null_basis: np.ndarray = field(repr=False, default=None)


def _direct_channel(channels, j: int) -> np.ndarray:
    if isinstance(channels, StructuredChannels):
        d = channels.channel(j, j)
    else:
        d = np.asarray(channels, dtype=complex)
    if d.shape != (3, 2):
        raise ValueError(f"elimination matrices are defined for p=2 (3x2 direct channel), got {d.shape}")
    return d


def _null_dim(M: np.ndarray, scale: float) -> tuple[int, np.ndarray]:
    # Absolute threshold against the channel scale so an all-zero matrix has full nullity.
    s = singular_values(M)
    rank = int(np.count_nonzero(s > RANK_TOL * scale))
    return M.shape[1] - rank, right_null_space(M) if rank else np.eye(M.shape[1], dtype=M.dtype)


def elimination_p2_acs(channels, j: int = 1) -> EliminationCheck:
    """Real 3x2 matrix of the imaginary parts ``|h| sin(arg h)`` of the direct channel.

    Positions follow the rows of the desired-signal equations: rows use
    ``h^{1,1}``; ``h^{2,1}, h^{2,2}``; ``h^{3,2}``.
    """
    h = _direct_channel(channels, j)
    im = h.imag
    M = np.array([[im[0, 0], 0.0], [im[1, 0], im[1, 1]], [0.0, im[2, 1]]])
    nd, ns = _null_dim(M, max(np.abs(h).max(), 1e-300))
    return EliminationCheck(M, nd, ns)


def elimination_p2_noacs(channels, j: int = 1) -> EliminationCheck:
    """Complex 3x4 coefficient matrix of the same equations without ACS."""
    h = _direct_channel(channels, j)
    M = np.array(
        [
            [h[0, 0], 0.0, 1.0, 0.0],
            [h[1, 0], h[1, 1], 0.0, 0.0],
            [0.0, h[2, 1], 0.0, 1.0],
        ],
        dtype=complex,
    )
    nd, ns = _null_dim(M, max(np.abs(h).max(), 1.0))
    return EliminationCheck(M, nd, ns)


# -- reports -------------------------------------------------------------------


@dataclass
class SsmReport:
    p: int
    mode: str
    seed: int
    ssm_dims: list[tuple[int, int]] = field(default_factory=list)
    sigma_min_rel: list[float] = field(default_factory=list)
    rank: list[int] = field(default_factory=list)
    full_rank: list[bool] = field(default_factory=list)
    achieved_dof: list[Fraction] = field(default_factory=list)
    interference_rank: list[int] = field(default_factory=list)
    leakage: float = 0.0
    align_residual: float = 0.0
    assignment: tuple[int, int, int] | None = None
    attempts: int = 0
    cb_residual: float = 0.0
    error: dict[str, Any] | None = None

    @property
    def ok(self) -> bool:
        """Whether the draw achieves the target DoF with a full-rank SSM."""
        if self.error is not None or not self.full_rank:
            return False
        return all(self.full_rank) and all(d == target_dof(self.p) for d in self.achieved_dof)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["achieved_dof"] = [str(x) for x in self.achieved_dof]
        return d


def report_for_design(design) -> SsmReport:
    """Collect SSM, DoF, leakage and alignment figures for a :class:`LinkDesign`."""
    rep = SsmReport(p=design.p, mode=design.mode.scheme.value, seed=design.draw.seed)
    for j in (1, 2, 3):
        G = build_ssm(j, design.prec, design.sc)
        rank, smr = rank_report(G)
        rep.ssm_dims.append(G.shape)
        rep.rank.append(rank)
        rep.sigma_min_rel.append(smr)
        side = design.sc.lifted.shape[2]
        rep.full_rank.append(G.shape == (side, side) and rank == side and smr > RANK_TOL)
        rep.achieved_dof.append(achieved_dof(j, design.v_eff, design.w_eff, design.draw, design.mode))
    rep.interference_rank = list(design.filters.interference_rank)
    rep.leakage = max(design.filters.leakage)
    rep.align_residual = max(alignment_residuals(design.prec, design.sc))
    rep.assignment = design.prec.assignment
    rep.attempts = design.prec.attempts
    rep.cb_residual = design.cb.pattern_residual
    return rep


def verify_draw(p: int, seed: int, scheme: Scheme | str = Scheme.ACS_REAL) -> SsmReport:
    """Full pipeline on one draw; failures are recorded, never redrawn."""
    from .pipeline import design_for_draw

    try:
        design = design_for_draw(draw_channels(p, seed), scheme)
    except AcsAlignError as exc:
        return SsmReport(p=p, mode=Scheme(scheme).value, seed=seed, error=exc.to_dict())
    return report_for_design(design)


def verify_claims(p: int, trials: int, seed: int, scheme: Scheme | str = Scheme.ACS_REAL) -> list[SsmReport]:
    """Per-draw reports for ``trials`` draws derived from ``seed``."""
    from .pipeline import draw_seed

    if p < 2 or trials < 1:
        raise ValueError("need p >= 2 and trials >= 1")
    return [verify_draw(p, draw_seed(seed, t), scheme) for t in range(trials)]


def summarize(reports: list[SsmReport], seed: int) -> dict[str, Any]:
    """Aggregate per-draw reports into the verification JSON document."""
    p = reports[0].p
    mode = reports[0].mode
    done = [r for r in reports if r.error is None]
    full = sum(1 for r in done if all(r.full_rank))
    dofs = sorted({d for r in done for d in r.achieved_dof})
    if mode == Scheme.ACS_REAL.value:
        failures = [r.seed for r in reports if not r.ok]
    else:
        failures = [r.seed for r in reports if r.error is not None]
    return {
        "p": p,
        "mode": mode,
        "trials": len(reports),
        "seed": seed,
        "full_rank_fraction": full / len(reports),
        "achieved_dof": str(dofs[0]) if dofs else None,
        "max_leakage": max((r.leakage for r in done), default=None),
        "max_align_residual": max((r.align_residual for r in done), default=None),
        "failures": failures,
        "claim_status": "proved" if p <= PROVED_MAX_P else "conjectured",
        "target_dof": str(target_dof(p)),
        "dof_values": [str(d) for d in dofs],
        "min_sigma_min_rel": min((min(r.sigma_min_rel) for r in done), default=None),
        "fallback_draws": sum(1 for r in done if r.attempts > 1),
    }
