"""One network realization carried through every design stage."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import PrecoderSet, SupportBlocks, assemble_precoders, default_support_blocks
from .basis_change import BasisChange, StructuredChannels, apply_cb, build_cb
from .channel import ChannelDraw, ExtensionMode, Scheme, derive_seed, draw_channels, rng_for
from .detection import ZfFilters, effective_filters, streams, zf_filters
from .errors import DegenerateDrawError
from .linalg import RANK_TOL, sigma_min_rel

MAX_ATTEMPTS = 20


@dataclass(frozen=True, eq=False)
class LinkDesign:
    p: int
    mode: ExtensionMode
    draw: ChannelDraw = field(repr=False)
    cb: BasisChange = field(repr=False)
    sc: StructuredChannels = field(repr=False)
    spb: SupportBlocks = field(repr=False)
    prec: PrecoderSet = field(repr=False)
    filters: ZfFilters = field(repr=False)
    v_eff: list[np.ndarray] = field(repr=False)
    w_eff: list[np.ndarray] = field(repr=False)


def _ssm_full_rank(prec: PrecoderSet, sc: StructuredChannels) -> bool:
    from .verification import build_ssm

    side = sc.lifted.shape[2]
    for j in (1, 2, 3):
        G = build_ssm(j, prec, sc)
        if G.shape != (side, side) or sigma_min_rel(G) <= RANK_TOL:
            return False
    return True


def design_for_draw(draw: ChannelDraw, scheme: Scheme | str = Scheme.ACS_REAL) -> LinkDesign:
    """Run change of basis, precoder synthesis and filter design for ``draw``.

    Under ACS the full-rank signal space at every receiver is part of the
    acceptance test for a precoder set, so a draw is only returned once that
    holds (or every fallback assignment has been tried).
    """
    p = draw.p
    mode = ExtensionMode.for_scheme(scheme, p)
    cb = build_cb(draw)
    sc = apply_cb(draw, cb, mode)
    spb = default_support_blocks(p, mode, rng_for(draw.seed, 1))
    accept = (lambda pr: _ssm_full_rank(pr, sc)) if mode.is_acs else None
    prec = assemble_precoders(sc, spb, accept=accept)
    filt = zf_filters(prec, sc)
    v_eff, w_eff = effective_filters(prec, filt, cb)
    assert all(v.shape[1] == streams(p, mode) for v in prec.V)
    return LinkDesign(p, mode, draw, cb, sc, spb, prec, filt, v_eff, w_eff)


def draw_seed(seed: int, index: int, attempt: int = 0) -> int:
    """Seed of drop ``index`` (``attempt`` counts redraws of a degenerate drop)."""
    return derive_seed(seed, index, attempt)


def design_drop(
    p: int, seed: int, index: int, schemes=(Scheme.ACS_REAL,)
) -> tuple[dict[Scheme, LinkDesign], int]:
    """Designs for every scheme on drop ``index``, sharing one channel draw.

    Degenerate draws are replaced by the next sub-seed. Returns the designs
    and how many draws were discarded.
    """
    failures = []
    for attempt in range(MAX_ATTEMPTS):
        draw = draw_channels(p, draw_seed(seed, index, attempt))
        try:
            return {Scheme(s): design_for_draw(draw, s) for s in schemes}, attempt
        except DegenerateDrawError as exc:
            failures.append(exc.to_dict())
    raise DegenerateDrawError(
        "drop stayed degenerate after repeated redraws", p=p, seed=seed, index=index, failures=failures
    )
