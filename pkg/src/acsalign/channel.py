"""Channel realizations and the real/complex lifting of channel coefficients.

A complex coefficient ``h`` is lifted over ``T`` symbol extensions either to
the real ``2T x 2T`` matrix ``|h| * kron(I_T, U(arg h))`` (asymmetric complex
signaling, ACS) or to the complex ``T x T`` matrix ``h * I_T`` (time
extensions only). Matrices are lifted entry by entry, so a ``m x n`` complex
matrix becomes ``m x n`` blocks of the lifted size.

Random draws use a counter-based generator (Philox) keyed by the integer seed,
so any drop of a Monte Carlo run can be regenerated from ``(seed, index)``
alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDrawError

#: Relative smallest-singular-value threshold for a usable channel matrix.
FULL_RANK_TOL = 1e-10
MAX_REDRAWS = 100

_ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


class Scheme(enum.Enum):
    ACS_REAL = "acs"
    TIME_ONLY_COMPLEX = "time-only"


@dataclass(frozen=True)
class ExtensionMode:
    """How complex coefficients are expanded over ``T`` channel uses."""

    scheme: Scheme
    T: int

    @classmethod
    def acs(cls, p: int) -> ExtensionMode:
        return cls(Scheme.ACS_REAL, 2 * p + 1)

    @classmethod
    def time_only(cls, p: int) -> ExtensionMode:
        return cls(Scheme.TIME_ONLY_COMPLEX, 2 * p + 1)

    @classmethod
    def for_scheme(cls, scheme: Scheme | str, p: int) -> ExtensionMode:
        return cls(Scheme(scheme), 2 * p + 1)

    @property
    def is_acs(self) -> bool:
        return self.scheme is Scheme.ACS_REAL

    @property
    def block(self) -> int:
        """Side of the lifted block replacing one complex scalar."""
        return 2 * self.T if self.is_acs else self.T

    @property
    def dtype(self):
        return np.float64 if self.is_acs else np.complex128

    @property
    def real_dims_per_block(self) -> int:
        """Real dimensions spanned by one lifted block (``2T`` in both modes)."""
        return 2 * self.T


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *keys)``; independent per key tuple."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """64-bit seed deterministically derived from ``seed`` and integer keys."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True, eq=False)
class ChannelDraw:
    """The nine ``(p+1) x p`` channels of one network realization.

    ``H[j-1, i-1]`` is the channel from transmitter ``i`` to receiver ``j``.
    """

    p: int
    H: np.ndarray = field(repr=False)
    seed: int = 0

    def __post_init__(self):
        self.H.setflags(write=False)

    def channel(self, j: int, i: int) -> np.ndarray:
        """Channel from transmitter ``i`` to receiver ``j`` (1-based, modulo 3)."""
        return self.H[(j - 1) % 3, (i - 1) % 3]


def _sample(rng: np.random.Generator, p: int) -> np.ndarray:
    shape = (3, 3, p + 1, p)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _full_column_rank(m: np.ndarray) -> bool:
    s = np.linalg.svd(m, compute_uv=False)
    return s[0] > 0 and s[-1] / s[0] >= FULL_RANK_TOL


def draw_channels(p: int, seed: int) -> ChannelDraw:
    """Draw i.i.d. unit-variance circularly symmetric Gaussian channels."""
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    rng = rng_for(seed, 0)
    for _ in range(MAX_REDRAWS):
        H = _sample(rng, p)
        if all(_full_column_rank(H[j, i]) for j in range(3) for i in range(3)):
            return ChannelDraw(p=p, H=H, seed=int(seed))
    raise DegenerateDrawError(
        f"{MAX_REDRAWS} consecutive rank-deficient channel draws; RNG looks broken",
        p=p,
        seed=int(seed),
    )


def rotation(phi: float) -> np.ndarray:
    """Planar rotation by ``phi`` radians."""
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, -s], [s, c]])


def lift_scalar(h: complex, mode: ExtensionMode) -> np.ndarray:
    if mode.is_acs:
        return abs(h) * np.kron(np.eye(mode.T), rotation(np.angle(h)))
    return h * np.eye(mode.T, dtype=complex)


def lift_matrix(m: np.ndarray, mode: ExtensionMode) -> np.ndarray:
    """Replace each entry of ``m`` by its lifted block.

    Built with Kronecker products rather than per-entry rotations: for ACS the
    block of ``h`` is ``Re(h) * I + Im(h) * J`` with ``J`` the quarter-turn
    rotation, which equals ``|h| * U(arg h)``.
    """
    m = np.atleast_2d(np.asarray(m))
    eye_t = np.eye(mode.T)
    if not mode.is_acs:
        return np.kron(m.astype(complex), eye_t)
    return np.kron(m.real, np.kron(eye_t, np.eye(2))) + np.kron(
        m.imag, np.kron(eye_t, _ROT90)
    )


def quarter_turn(mode: ExtensionMode) -> np.ndarray:
    """The lift of the imaginary unit (``kron(I_T, J)`` in ACS mode)."""
    return lift_scalar(1j, mode)
