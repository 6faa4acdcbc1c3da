"""Alignment chains, zero propagation and precoder synthesis.

Chain ``k`` (``k = 1, 2, 3``) links ``p`` sub-blocks of precoders. Sub-block
``t`` belongs to user ``<k + 1 - t>`` and condition ``t`` aligns sub-blocks
``t`` and ``t + 1`` at receiver ``<k + 2 - t>``::

    H_{r_t, u_t} X_t - H_{r_t, u_{t+1}} X_{t+1} = 0

Each sub-block splits into ``p`` antenna-row blocks of size ``b x m`` (``b =
2T`` real rows under ACS, ``m = 2(p+1)``). Every channel block is a lifted
complex scalar, so the whole chain is the complex coefficient matrix ``E``
(``(p-1)(p+1) x p^2``) acting blockwise. Its null space is one-dimensional for
a generic draw, hence every block of the chain is ``lift(theta_c) @ A`` for a
single support block ``A`` and complex coefficients ``theta``.

Indices for users, receivers, chains and antenna rows are 1-based throughout
the public surface.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .basis_change import StructuredChannels, ZeroPattern, target_pattern
from .channel import ExtensionMode, lift_matrix, lift_scalar, quarter_turn
from .errors import AlignmentError, PinInfeasibleError
from .linalg import RANK_TOL, singular_values

SOLVE_TOL = 1e-8
ORTHONORMAL_TOL = 1e-12


def mod3(x: int) -> int:
    """Map an integer onto the user labels ``{1, 2, 3}``."""
    return (x - 1) % 3 + 1


def sub_block_count(p: int, k: int, i: int) -> int:
    """Number of sub-blocks user ``i`` contributes to chain ``k``."""
    return math.ceil((p - (k - i) % 3) / 3)


@dataclass(frozen=True)
class ChainSpec:
    p: int
    k: int
    users: tuple[int, ...]
    receivers: tuple[int, ...]
    occurrence: tuple[int, ...]  # 1-based occurrence of users[t] within the chain


def chain_spec(p: int, k: int) -> ChainSpec:
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    if k not in (1, 2, 3):
        raise ValueError(f"chain index must be 1, 2 or 3, got {k}")
    users = tuple(mod3(k + 1 - t) for t in range(1, p + 1))
    receivers = tuple(mod3(k + 2 - t) for t in range(1, p))
    seen: dict[int, int] = {}
    occ = []
    for u in users:
        seen[u] = seen.get(u, 0) + 1
        occ.append(seen[u])
    return ChainSpec(p, k, users, receivers, tuple(occ))


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Block-level view of one chain's alignment equations.

    Block row ``t*(p+1) + q`` is antenna row ``q`` of condition ``t``; block
    column ``t*p + r`` is antenna row ``r`` of sub-block ``t`` (0-based
    offsets). ``E_coeff`` holds the complex scalars whose lifts form the
    numeric system.
    """

    chain: ChainSpec
    E_support: np.ndarray = field(repr=False)
    E_coeff: np.ndarray = field(repr=False)
    F_labels: tuple[tuple[int, int, int], ...]  # (user, occurrence, antenna row)
    F_zeroed: np.ndarray = field(repr=False)
    mode: ExtensionMode | None = None
    trace: tuple[tuple[int, int], ...] = ()  # ZP steps as 0-based (row, col)

    @property
    def shape(self) -> tuple[int, int]:
        return self.E_support.shape

    def E_scalar(self, mode: ExtensionMode | None = None) -> np.ndarray:
        """The lifted numeric system (``E_coeff`` with every entry lifted)."""
        mode = mode or self.mode
        if mode is None:
            raise ValueError("no extension mode attached to this system")
        return lift_matrix(self.E_coeff, mode)

    def zeroed_blocks(self) -> list[int]:
        """1-based indices of block columns forced to zero."""
        return [int(c) + 1 for c in np.flatnonzero(self.F_zeroed)]

    def column(self, t: int, r: int) -> int:
        """0-based block column of sub-block ``t`` antenna row ``r`` (both 1-based)."""
        return (t - 1) * self.chain.p + (r - 1)


def support_system(chain: ChainSpec, pattern: ZeroPattern | None = None) -> BlockSystem:
    """Block support implied by the zero pattern alone (no channel values)."""
    p = chain.p
    pattern = pattern or target_pattern(p)
    sup = np.zeros(((p - 1) * (p + 1), p * p), dtype=bool)
    for t in range(p - 1):
        r_t = chain.receivers[t]
        rows = slice(t * (p + 1), (t + 1) * (p + 1))
        sup[rows, t * p : (t + 1) * p] = pattern.mask_for(r_t, chain.users[t])
        sup[rows, (t + 1) * p : (t + 2) * p] = pattern.mask_for(r_t, chain.users[t + 1])
    labels = tuple(
        (chain.users[t], chain.occurrence[t], r + 1) for t in range(p) for r in range(p)
    )
    return BlockSystem(
        chain=chain,
        E_support=sup,
        E_coeff=sup.astype(complex),
        F_labels=labels,
        F_zeroed=np.zeros(p * p, dtype=bool),
    )


def build_block_system(chain: ChainSpec, sc: StructuredChannels) -> BlockSystem:
    p = chain.p
    base = support_system(chain)
    coeff = np.zeros(base.E_support.shape, dtype=complex)
    for t in range(p - 1):
        r_t = chain.receivers[t]
        rows = slice(t * (p + 1), (t + 1) * (p + 1))
        coeff[rows, t * p : (t + 1) * p] = sc.channel(r_t, chain.users[t])
        coeff[rows, (t + 1) * p : (t + 2) * p] = -sc.channel(r_t, chain.users[t + 1])
    # Clamped entries are exact zeros, so support and coefficients agree.
    return replace(base, E_coeff=coeff * base.E_support, mode=sc.mode)


def zero_propagation(sys: BlockSystem, order: Sequence[int] | None = None) -> BlockSystem:
    """Deduce which unknown blocks must vanish.

    Repeatedly picks a block row with a single nonzero entry ``(r*, c*)``,
    marks unknown ``c*`` as zero and clears row ``r*`` and column ``c*``,
    until no such row remains. ``order`` fixes the row scan order; the final
    set of zeroed blocks does not depend on it.
    """
    sup = sys.E_support.copy()
    zeroed = sys.F_zeroed.copy()
    rows = list(order) if order is not None else list(range(sup.shape[0]))
    trace = list(sys.trace)
    while True:
        hit = next((r for r in rows if np.count_nonzero(sup[r]) == 1), None)
        if hit is None:
            break
        c = int(np.flatnonzero(sup[hit])[0])
        zeroed[c] = True
        sup[hit, :] = False
        sup[:, c] = False
        trace.append((int(hit), c))
    coeff = sys.E_coeff.copy()
    coeff[:, zeroed] = 0.0
    return replace(sys, E_support=sup, E_coeff=coeff, F_zeroed=zeroed, trace=tuple(trace))


@dataclass(frozen=True, eq=False)
class SupportBlocks:
    """The three support precoding blocks and the basis they are cut from."""

    B: np.ndarray = field(repr=False)
    A: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    sets: dict[str, tuple[int, ...]] = field(default_factory=dict)  # 1-based column sets


def index_sets(p: int) -> dict[str, tuple[int, ...]]:
    return {
        "Z": (1, 2),
        "X1": tuple(range(3, p + 4)),
        "X2": tuple(range(p + 4, 2 * p + 3)),
        "Y1": tuple(range(2 * p + 3, 3 * p + 4)),
        "Y2": tuple(range(3 * p + 4, 4 * p + 3)),
    }


def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed real orthogonal matrix (QR with sign fixing)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def spb_design(p: int, B: np.ndarray) -> SupportBlocks:
    """Cut the three support blocks out of an orthonormal ``2T x 2T`` basis.

    ``B`` must not be the identity (or any basis whose column pairs span
    complex lines): such a basis commutes with the ACS complex structure and
    the resulting signal space is singular.
    """
    n = 2 * (2 * p + 1)
    B = np.asarray(B, dtype=float)
    if B.shape != (n, n):
        raise ValueError(f"B must be {n}x{n} for p={p}, got {B.shape}")
    if np.abs(B.T @ B - np.eye(n)).max() > ORTHONORMAL_TOL:
        raise ValueError("B is not orthonormal")
    s = index_sets(p)

    def cols(*names):
        return B[:, [c - 1 for name in names for c in s[name]]]

    A = (cols("Z", "X1", "X2"), cols("Z", "Y1", "Y2"), cols("X1", "Y1"))
    return SupportBlocks(B=B, A=A, sets=s)


def spb_design_complex(p: int, rng: np.random.Generator) -> SupportBlocks:
    """Support blocks for the time-extension-only baseline.

    Three independent ``T x (p+1)`` complex blocks with orthonormal columns.
    """
    T = 2 * p + 1
    A = []
    for _ in range(3):
        z = rng.standard_normal((T, p + 1)) + 1j * rng.standard_normal((T, p + 1))
        q, r = np.linalg.qr(z)
        A.append(q * (np.diag(r) / np.abs(np.diag(r))).conj())
    return SupportBlocks(B=np.hstack(A), A=tuple(A), sets={})


def default_support_blocks(p: int, mode: ExtensionMode, rng: np.random.Generator) -> SupportBlocks:
    if mode.is_acs:
        return spb_design(p, random_orthogonal(2 * mode.T, rng))
    return spb_design_complex(p, rng)


def chain_null_vector(sys: BlockSystem, pin: int) -> tuple[np.ndarray, float]:
    """Complex coefficients of the chain with ``theta[pin] = 1``.

    Solves ``[E; e_pin^T] theta = [0; 1]`` in the least-squares sense over the
    non-zeroed unknowns. Returns ``theta`` (zero on zeroed blocks) and the
    relative residual ``|E theta| / (|E| |theta|)`` plus the pin mismatch.
    """
    keep = ~sys.F_zeroed
    if not keep[pin]:
        raise PinInfeasibleError("pinned block is forced to zero", pin=pin + 1)
    E = sys.E_coeff[:, keep]
    pin_local = int(np.count_nonzero(keep[:pin]))
    sel = np.zeros((1, E.shape[1]), dtype=complex)
    sel[0, pin_local] = 1.0
    # Scale the selector row so it does not dominate the homogeneous rows.
    scale = max(np.linalg.norm(E, 2), 1.0)
    M = np.vstack([E, scale * sel])
    rhs = np.zeros(M.shape[0], dtype=complex)
    rhs[-1] = scale
    x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    theta = np.zeros(sys.E_coeff.shape[1], dtype=complex)
    theta[keep] = x
    mismatch = abs(theta[pin] - 1.0)
    if theta[pin] != 0:
        # Exact normalization so the pinned block is the support block itself.
        theta = theta / theta[pin]
        theta[pin] = 1.0
    norm_e = np.linalg.norm(sys.E_coeff)
    res = np.linalg.norm(sys.E_coeff @ theta) / (norm_e * np.linalg.norm(theta))
    return theta, float(max(res, mismatch))


def solve_chain(
    sys: BlockSystem, pin: int, A: np.ndarray, mode: ExtensionMode | None = None
) -> tuple[dict[int, np.ndarray], float]:
    """Blocks of one chain with block ``pin`` (0-based column) set to ``A``.

    Returns a mapping from every 0-based block column to its ``b x m`` matrix
    and the relative solve residual.

    Raises
    ------
    PinInfeasibleError
        If the pinned block cannot equal ``A`` (zeroed block or residual
        above :data:`SOLVE_TOL`).
    """
    mode = mode or sys.mode
    theta, res = chain_null_vector(sys, pin)
    if not np.isfinite(res) or res > SOLVE_TOL:
        raise PinInfeasibleError("chain system has no solution with this pin", pin=pin + 1, residual=res)
    return _blocks_from_theta(sys, theta, A, mode), res


def _blocks_from_theta(sys: BlockSystem, theta: np.ndarray, A: np.ndarray, mode: ExtensionMode) -> dict[int, np.ndarray]:
    blocks = {}
    for c in range(theta.size):
        if sys.F_zeroed[c]:
            blocks[c] = np.zeros((mode.block, A.shape[1]), dtype=A.dtype)
        else:
            blocks[c] = lift_scalar(theta[c], mode) @ A
    return blocks


def solve_chain_dense(sys: BlockSystem, pin: int, A: np.ndarray, mode: ExtensionMode) -> tuple[np.ndarray, float]:
    """Reference solve on the full lifted system, one column of ``A`` at a time.

    Stacks ``E_scalar x = 0`` with ``x_pin = a`` and solves by least squares.
    Returns the stacked solution (``p^2 b x m``) and the worst relative
    residual. Cost grows like ``(p^2 b)^3``; meant for checking small cases.
    """
    Es = sys.E_scalar(mode)
    b = mode.block
    n = Es.shape[1]
    sel = np.zeros((b, n), dtype=Es.dtype)
    sel[:, pin * b : (pin + 1) * b] = np.eye(b)
    # Zeroed blocks are pinned to zero as well.
    z = [np.eye(n, dtype=Es.dtype)[c * b : (c + 1) * b] for c in np.flatnonzero(sys.F_zeroed)]
    M = np.vstack([Es, sel, *z])
    X = np.zeros((n, A.shape[1]), dtype=np.result_type(Es, A))
    worst = 0.0
    for col in range(A.shape[1]):
        rhs = np.zeros(M.shape[0], dtype=X.dtype)
        rhs[Es.shape[0] : Es.shape[0] + b] = A[:, col]
        x, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        X[:, col] = x
        worst = max(worst, np.linalg.norm(M @ x - rhs) / np.linalg.norm(rhs))
    return X, float(worst)


def fit_coefficient(block: np.ndarray, A: np.ndarray, mode: ExtensionMode) -> tuple[complex, float]:
    """Least-squares complex ``theta`` with ``block ~ lift(theta) @ A``.

    Returns ``theta`` and the relative fit residual.
    """
    if mode.is_acs:
        basis = np.column_stack([A.ravel(), (quarter_turn(mode) @ A).ravel()])
        coef, *_ = np.linalg.lstsq(basis, block.ravel(), rcond=None)
        theta = complex(coef[0], coef[1])
    else:
        a = A.ravel()
        theta = complex(np.vdot(a, block.ravel()) / np.vdot(a, a))
    fit = lift_scalar(theta, mode) @ A
    scale = max(np.linalg.norm(block), np.linalg.norm(A) * abs(theta), 1e-300)
    return theta, float(np.linalg.norm(block - fit) / scale)


@dataclass(frozen=True)
class GroupProvenance:
    """Origin of one column group (sub-block) of a precoder."""

    chain: int
    occurrence: int
    position: int  # 1-based sub-block position t within the chain
    spb: int  # 1-based index of the support block used by the chain
    pin: tuple[int, int]  # (sub-block position, antenna row) pinned to the SPB
    residual: float


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    """Precoders ``V[i-1]`` with column groups ordered by (chain, occurrence)."""

    p: int
    mode: ExtensionMode
    V: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)
    provenance: tuple[tuple[GroupProvenance, ...], ...]
    thetas: tuple[np.ndarray, np.ndarray, np.ndarray] = field(repr=False)  # per chain, length p^2
    systems: tuple[BlockSystem, BlockSystem, BlockSystem] = field(repr=False)
    assignment: tuple[int, int, int] = (1, 2, 3)
    attempts: int = 1

    @property
    def group_cols(self) -> int:
        return self.V[0].shape[1] // self.p

    def group(self, i: int, g: int) -> np.ndarray:
        """Column group ``g`` (0-based) of user ``i``."""
        m = self.group_cols
        return self.V[i - 1][:, g * m : (g + 1) * m]

    def common_layout(self, i: int) -> tuple[np.ndarray, list[int]]:
        """``V_i`` with groups reordered by the chain offset ``<k - i>`` (2, 1, 0).

        In this order every user's precoder has the same block structure.
        Returns the permuted matrix and the group permutation used.
        """
        prov = self.provenance[i - 1]
        order = sorted(range(len(prov)), key=lambda g: (-((prov[g].chain - i) % 3), prov[g].occurrence))
        return np.hstack([self.group(i, g) for g in order]), order


def alignment_residuals(prec: PrecoderSet, sc: StructuredChannels) -> list[float]:
    """Relative residual of every chain condition (3 (p-1) values)."""
    out = []
    p = prec.p
    m = prec.group_cols
    for k in (1, 2, 3):
        ch = chain_spec(p, k)
        groups = []
        for t in range(p):
            u = ch.users[t]
            g = next(
                idx
                for idx, pr in enumerate(prec.provenance[u - 1])
                if pr.chain == k and pr.occurrence == ch.occurrence[t]
            )
            groups.append(prec.V[u - 1][:, g * m : (g + 1) * m])
        for t in range(p - 1):
            r = ch.receivers[t]
            lhs = sc.lifted_channel(r, ch.users[t]) @ groups[t]
            rhs = sc.lifted_channel(r, ch.users[t + 1]) @ groups[t + 1]
            scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs), 1e-300)
            out.append(float(np.linalg.norm(lhs - rhs) / scale))
    return out


def default_pin(sys: BlockSystem) -> int:
    """Largest-index non-zeroed antenna row of the chain's first sub-block."""
    return candidate_pins(sys)[0]


def candidate_pins(sys: BlockSystem) -> list[int]:
    """Non-zeroed block columns, first sub-block first, high antenna rows first."""
    p = sys.chain.p
    out = []
    for t in range(p):
        for r in reversed(range(p)):
            c = t * p + r
            if not sys.F_zeroed[c]:
                out.append(c)
    return out


def _assemble(
    sc: StructuredChannels,
    spb: SupportBlocks,
    systems: list[BlockSystem],
    assignment: Sequence[int],
    pins: Sequence[int],
) -> PrecoderSet:
    p = sc.p
    mode = sc.mode
    ncols = spb.A[0].shape[1]
    groups: list[list[tuple[tuple[int, int], np.ndarray, GroupProvenance]]] = [[], [], []]
    thetas = []
    for k, sys in zip((1, 2, 3), systems):
        A = spb.A[assignment[k - 1] - 1]
        pin = pins[k - 1]
        theta, res = chain_null_vector(sys, pin)
        if not np.isfinite(res) or res > SOLVE_TOL:
            raise PinInfeasibleError("chain system has no solution with this pin", chain=k, pin=pin + 1, residual=res)
        blocks = _blocks_from_theta(sys, theta, A, mode)
        thetas.append(theta)
        ch = sys.chain
        for t in range(p):
            sub = np.vstack([blocks[t * p + r] for r in range(p)])
            prov = GroupProvenance(
                chain=k,
                occurrence=ch.occurrence[t],
                position=t + 1,
                spb=assignment[k - 1],
                pin=(pin // p + 1, pin % p + 1),
                residual=res,
            )
            groups[ch.users[t] - 1].append(((k, ch.occurrence[t]), sub, prov))
    V = []
    provenance = []
    for i in range(3):
        groups[i].sort(key=lambda g: g[0])
        V.append(np.hstack([g[1] for g in groups[i]]))
        provenance.append(tuple(g[2] for g in groups[i]))
    if any(v.shape[1] != p * ncols for v in V):
        raise AlignmentError("precoder column count mismatch")
    return PrecoderSet(
        p=p,
        mode=mode,
        V=tuple(V),
        provenance=tuple(provenance),
        thetas=tuple(thetas),
        systems=tuple(systems),
        assignment=tuple(assignment),
    )


def precoder_rank_ok(prec: PrecoderSet, tol: float = RANK_TOL) -> bool:
    for v in prec.V:
        s = singular_values(v)
        if s[-1] <= tol * s[0]:
            return False
    return True


def assemble_precoders(
    sc: StructuredChannels,
    spb: SupportBlocks,
    accept: Callable[[PrecoderSet], bool] | None = None,
) -> PrecoderSet:
    """Solve all three chains and stack each user's sub-blocks in chain order.

    The default attempt assigns support block ``A_k`` to chain ``k`` with the
    pin from :func:`default_pin`. If an alignment residual, a precoder rank
    check or the optional ``accept`` predicate fails, other assignments and
    pins are tried.

    Raises
    ------
    AlignmentError
        When every attempt fails; ``details['attempts']`` lists why.
    """
    p = sc.p
    systems = [zero_propagation(build_block_system(chain_spec(p, k), sc)) for k in (1, 2, 3)]
    cands = [candidate_pins(s) for s in systems]
    n_pin_rules = max(len(c) for c in cands)
    diagnostics = []
    attempt = 0
    for assignment in itertools.permutations((1, 2, 3)):
        for rule in range(n_pin_rules):
            pins = [c[min(rule, len(c) - 1)] for c in cands]
            attempt += 1
            try:
                prec = _assemble(sc, spb, systems, assignment, pins)
            except PinInfeasibleError as exc:
                diagnostics.append({"assignment": assignment, "pins": pins, **exc.to_dict()})
                continue
            worst = max(alignment_residuals(prec, sc))
            if worst > SOLVE_TOL:
                diagnostics.append({"assignment": assignment, "pins": pins, "error": "alignment", "residual": worst})
                continue
            if not precoder_rank_ok(prec):
                diagnostics.append({"assignment": assignment, "pins": pins, "error": "precoder_rank"})
                continue
            if accept is not None and not accept(prec):
                diagnostics.append({"assignment": assignment, "pins": pins, "error": "rejected"})
                continue
            return replace(prec, attempts=attempt)
    raise AlignmentError("no chain/support-block assignment succeeded", attempts=diagnostics)


def format_support(sup: np.ndarray, zeroed: np.ndarray | None = None) -> str:
    lines = []
    for row in sup:
        lines.append(" ".join("X" if v else "." for v in row))
    if zeroed is not None:
        lines.append(" ".join("0" if z else "-" for z in zeroed))
    return "\n".join(lines)


__all__ = [
    "BlockSystem",
    "ChainSpec",
    "GroupProvenance",
    "PrecoderSet",
    "SupportBlocks",
    "alignment_residuals",
    "assemble_precoders",
    "build_block_system",
    "candidate_pins",
    "chain_null_vector",
    "chain_spec",
    "default_pin",
    "default_support_blocks",
    "fit_coefficient",
    "index_sets",
    "random_orthogonal",
    "solve_chain",
    "solve_chain_dense",
    "spb_design",
    "spb_design_complex",
    "sub_block_count",
    "support_system",
    "zero_propagation",
]
