"""Transmit/receive changes of basis that force zeros on the cross channels.

After the change of basis, receiver ``j`` sees the two interfering channels
``[H_{j,j-1} | H_{j,j+1}]`` with a banded layout (1-based rows ``q``):

* row 1 keeps only column 1 of ``H_{j,j-1}``;
* row ``q`` (``2 <= q <= p``) keeps columns ``q..p`` of ``H_{j,j-1}`` and
  columns ``1..q-1`` of ``H_{j,j+1}``;
* row ``p+1`` keeps only column ``p`` of ``H_{j,j+1}``.

The construction is sequential. Outer receive rows are left null vectors of a
whole cross channel, the transmit bases then kill the remaining entries of
those two rows, and finally each middle receive row is a left null vector of
the ``p`` effective columns that must vanish in that row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelDraw, ExtensionMode, lift_matrix
from .errors import BasisChangeError
from .linalg import fix_sign, left_null_vector, right_null_space, sigma_min_rel

CLAMP_TOL = 1e-10
INVERTIBLE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ZeroPattern:
    """Allowed (nonzero) positions of the two cross channels at any receiver."""

    p: int
    prev: np.ndarray  # mask over H_{j,j-1}, shape (p+1, p)
    next: np.ndarray  # mask over H_{j,j+1}, shape (p+1, p)

    @property
    def allowed(self) -> np.ndarray:
        """Mask over the concatenation ``[H_{j,j-1} | H_{j,j+1}]``."""
        return np.hstack([self.prev, self.next])

    def mask_for(self, j: int, i: int) -> np.ndarray | None:
        """Mask of channel ``H_{j,i}`` (1-based), or ``None`` for a direct link."""
        d = (i - j) % 3
        if d == 0:
            return None
        return self.prev if d == 2 else self.next

    def nonzeros(self, which: str) -> set[tuple[int, int]]:
        """1-based ``(row, col)`` positions allowed in ``"prev"`` or ``"next"``."""
        m = self.prev if which == "prev" else self.next
        return {(int(q) + 1, int(r) + 1) for q, r in zip(*np.nonzero(m))}


def target_pattern(p: int) -> ZeroPattern:
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    prev = np.zeros((p + 1, p), dtype=bool)
    nxt = np.zeros((p + 1, p), dtype=bool)
    prev[0, 0] = True
    nxt[p, p - 1] = True
    for q in range(2, p + 1):
        prev[q - 1, q - 1 :] = True
        nxt[q - 1, : q - 1] = True
    prev.setflags(write=False)
    nxt.setflags(write=False)
    return ZeroPattern(p, prev, nxt)


@dataclass(frozen=True, eq=False)
class BasisChange:
    """Receive matrices ``R[j-1]`` and transmit matrices ``Tmat[i-1]``."""

    R: np.ndarray = field(repr=False)  # (3, p+1, p+1)
    Tmat: np.ndarray = field(repr=False)  # (3, p, p)
    pattern_residual: float
    pattern: ZeroPattern = field(repr=False)


@dataclass(frozen=True, eq=False)
class StructuredChannels:
    """Equivalent channels ``G[j-1, i-1] = R_j H_{j,i} T_i`` and their lifts."""

    p: int
    G: np.ndarray = field(repr=False)  # (3, 3, p+1, p) complex
    mode: ExtensionMode
    lifted: np.ndarray = field(repr=False)  # (3, 3, (p+1)b, p b)

    def channel(self, j: int, i: int) -> np.ndarray:
        return self.G[(j - 1) % 3, (i - 1) % 3]

    def lifted_channel(self, j: int, i: int) -> np.ndarray:
        return self.lifted[(j - 1) % 3, (i - 1) % 3]


def cross_residuals(G: np.ndarray, pattern: ZeroPattern) -> np.ndarray:
    """Worst relative forbidden-entry magnitude per receiver."""
    out = np.zeros(3)
    for j in range(1, 4):
        for i in (j - 1, j + 1):
            g = G[(j - 1) % 3, (i - 1) % 3]
            mask = pattern.mask_for(j, i)
            scale = np.linalg.norm(g)
            bad = np.abs(g[~mask])
            if bad.size:
                out[j - 1] = max(out[j - 1], bad.max() / scale)
    return out


def _unit_projection(basis: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Unit vector of ``span(basis)`` closest in direction to ``target``."""
    v = basis @ (basis.conj().T @ target)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise BasisChangeError("projection onto constraint subspace vanished")
    return fix_sign(v / n)


def build_cb(draw: ChannelDraw) -> BasisChange:
    """Construct ``R`` and ``Tmat`` achieving :func:`target_pattern` for ``draw``.

    Raises
    ------
    BasisChangeError
        If a constructed matrix is numerically singular or a forbidden entry
        survives above tolerance; ``details['receiver']`` names the culprit.
    """
    p = draw.p
    H = draw.H
    R = np.zeros((3, p + 1, p + 1), dtype=complex)
    Tm = np.zeros((3, p, p), dtype=complex)

    def h(j, i):
        return H[(j - 1) % 3, (i - 1) % 3]

    for j in range(1, 4):
        try:
            R[j - 1, 0] = left_null_vector(h(j, j + 1))
            R[j - 1, p] = left_null_vector(h(j, j - 1))
        except ValueError as exc:
            raise BasisChangeError(str(exc), receiver=j, seed=draw.seed) from exc

    for i in range(1, 4):
        # Row vectors that columns of T_i must (or must not) annihilate.
        a = R[i % 3, 0] @ h(i + 1, i)
        b = R[(i - 2) % 3, p] @ h(i - 1, i)
        if p > 2:
            mid = right_null_space(np.vstack([a, b]))
            if mid.shape[1] != p - 2:
                raise BasisChangeError("degenerate transmit constraints", transmitter=i, seed=draw.seed)
            Tm[i - 1, :, 1 : p - 1] = np.column_stack([fix_sign(c) for c in mid.T])
        Tm[i - 1, :, 0] = _unit_projection(right_null_space(b[None, :]), a.conj())
        Tm[i - 1, :, p - 1] = _unit_projection(right_null_space(a[None, :]), b.conj())

    for j in range(1, 4):
        g_prev = h(j, j - 1) @ Tm[(j - 2) % 3]
        g_next = h(j, j + 1) @ Tm[j % 3]
        for q in range(2, p + 1):
            cols = np.hstack([g_prev[:, : q - 1], g_next[:, q - 1 :]])
            try:
                R[j - 1, q - 1] = left_null_vector(cols)
            except ValueError as exc:
                raise BasisChangeError(str(exc), receiver=j, row=q, seed=draw.seed) from exc

    for j in range(3):
        if sigma_min_rel(R[j]) < INVERTIBLE_TOL:
            raise BasisChangeError("receive basis change is singular", receiver=j + 1, seed=draw.seed)
        if sigma_min_rel(Tm[j]) < INVERTIBLE_TOL:
            raise BasisChangeError("transmit basis change is singular", transmitter=j + 1, seed=draw.seed)

    pattern = target_pattern(p)
    G = np.einsum("jab,jibc,icd->jiad", R, H, Tm)
    res = cross_residuals(G, pattern)
    if res.max() > CLAMP_TOL:
        raise BasisChangeError(
            "zero pattern not achieved",
            receiver=int(np.argmax(res)) + 1,
            residual=float(res.max()),
            seed=draw.seed,
        )
    R.setflags(write=False)
    Tm.setflags(write=False)
    return BasisChange(R=R, Tmat=Tm, pattern_residual=float(res.max()), pattern=pattern)


def equivalent_channels(draw: ChannelDraw, cb: BasisChange) -> np.ndarray:
    """Unclamped ``R_j H_{j,i} T_i`` for all nine links."""
    return np.einsum("jab,jibc,icd->jiad", cb.R, draw.H, cb.Tmat)


def apply_cb(draw: ChannelDraw, cb: BasisChange, mode: ExtensionMode) -> StructuredChannels:
    """Equivalent channels with forbidden entries clamped to exact zero."""
    G = equivalent_channels(draw, cb)
    res = cross_residuals(G, cb.pattern)
    if res.max() > CLAMP_TOL:
        raise BasisChangeError(
            "basis change inconsistent with this draw",
            receiver=int(np.argmax(res)) + 1,
            residual=float(res.max()),
            seed=draw.seed,
        )
    for j in range(1, 4):
        for i in (j - 1, j + 1):
            G[j - 1, (i - 1) % 3][~cb.pattern.mask_for(j, i)] = 0.0
    return structured_from(G, mode)


def structured_from(G: np.ndarray, mode: ExtensionMode) -> StructuredChannels:
    """Wrap already-structured complex channels and lift them for ``mode``."""
    G = np.array(G, dtype=complex)
    p = G.shape[-1]
    lifted = np.stack([np.stack([lift_matrix(G[j, i], mode) for i in range(3)]) for j in range(3)])
    G.setflags(write=False)
    lifted.setflags(write=False)
    return StructuredChannels(p=p, G=G, mode=mode, lifted=lifted)


def lifted_cb(cb: BasisChange, mode: ExtensionMode) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Lifted ``R_j`` and ``T_i`` for folding the change of basis into filters."""
    return [lift_matrix(r, mode) for r in cb.R], [lift_matrix(t, mode) for t in cb.Tmat]


def format_pattern(G: np.ndarray, pattern: ZeroPattern, j: int, tol: float = CLAMP_TOL) -> str:
    """Text table of ``[H_{j,j-1} | H_{j,j+1}]``: ``X`` nonzero, ``.`` zero, ``!`` violation."""
    p = pattern.p
    blocks = [G[(j - 1) % 3, (j - 2) % 3], G[(j - 1) % 3, j % 3]]
    masks = [pattern.prev, pattern.next]
    lines = [f"receiver {j}:  H[{j},{(j - 2) % 3 + 1}]".ljust(16 + 2 * p) + f"| H[{j},{j % 3 + 1}]"]
    for q in range(p + 1):
        cells = []
        for g, m in zip(blocks, masks):
            scale = np.linalg.norm(g)
            row = []
            for r in range(p):
                big = abs(g[q, r]) > tol * scale
                row.append("X" if big and m[q, r] else ("!" if big else "."))
            cells.append(" ".join(row))
        lines.append(f"  row {q + 1:<2}  " + "  " + cells[0].ljust(2 * p + 4) + "| " + cells[1])
    return "\n".join(lines)
