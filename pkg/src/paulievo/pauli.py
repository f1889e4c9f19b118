"""Phase-exact algebra of n-qubit Pauli strings in a packed symplectic encoding.

A Pauli string is stored as one integer built from per-qubit 2-bit pairs
``(x, z)``: ``(0,0) = I``, ``(1,0) = X``, ``(1,1) = Y``, ``(0,1) = Z``.  Each
64-bit word holds 32 qubits, qubit 0 occupying the most significant pair of
word 0 (the ``x`` bit sits above the ``z`` bit inside a pair).  Unused low
bits of the last word are zero.  Two consequences drive everything else:

* integer comparison of keys is the canonical total order on strings
  (qubit 0 compares first, per-qubit order ``I < Z < X < Y``), and
* products, commutation checks, and weights reduce to XORs, masks, and
  popcounts, on scalars (Python ints) and on packed ``uint64`` arrays alike.

Operator identities used throughout: writing ``P = prod_q i^(x_q z_q)
X^(x_q) Z^(z_q)``, the product ``P*Q`` equals ``i^k R`` with ``R`` the
bitwise XOR of the operands and

    k = c(P) + c(Q) + 2*|z_P & x_Q| - c(R)   (mod 4),

where ``c(S) = |x_S & z_S|`` counts Y factors and ``|.|`` is a popcount.
``P`` and ``Q`` commute iff ``|x_P & z_Q| + |z_P & x_Q|`` is even.

No global phase is ever stored on a string: every phase produced by a
product is returned explicitly as a :class:`Phase`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

QUBITS_PER_WORD = 32

# z bits live on even positions, x bits on odd positions, in every word
_Z_HALF = np.uint64(0x5555555555555555)
_ONE = np.uint64(1)
_WORD_MASK = (1 << 64) - 1

_LETTER_TO_PAIR = {"I": 0, "Z": 1, "X": 2, "Y": 3}  # pair value = (x << 1) | z
_PAIR_TO_LETTER = "IZXY"

_PHASE_VALUES = (1 + 0j, 1j, -1 + 0j, -1j)


class PauliParseError(ValueError):
    """Raised for text that is not a valid Pauli string; carries ``position``."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position


class DimensionMismatchError(ValueError):
    """Raised when operands act on different numbers of qubits."""


def n_words(n_qubits: int) -> int:
    """Number of 64-bit words backing an ``n_qubits`` string."""
    return (n_qubits + QUBITS_PER_WORD - 1) // QUBITS_PER_WORD


def _z_half_int(width_words: int) -> int:
    # 0b0101...01 over the full key width
    return ((1 << (64 * width_words)) - 1) // 3


def _pair_shift(qubit: int, n_qubits: int) -> int:
    """Bit position of the z bit of ``qubit`` inside the full integer key."""
    word, slot = divmod(qubit, QUBITS_PER_WORD)
    pair = QUBITS_PER_WORD - 1 - slot
    return 64 * (n_words(n_qubits) - 1 - word) + 2 * pair


@dataclass(frozen=True)
class Phase:
    """A power of the imaginary unit, ``i**k`` with ``k`` kept mod 4."""

    k: int

    def __post_init__(self):
        object.__setattr__(self, "k", self.k & 3)

    @property
    def value(self) -> complex:
        return _PHASE_VALUES[self.k]

    @property
    def is_real(self) -> bool:
        return self.k % 2 == 0

    def __mul__(self, other: "Phase") -> "Phase":
        return Phase(self.k + other.k)

    def __neg__(self) -> "Phase":
        return Phase(self.k + 2)

    def __repr__(self) -> str:
        return f"Phase({'+1 +i -1 -i'.split()[self.k]})"


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli string; Hermitian, squares to the identity.

    ``key`` is the packed symplectic integer described in the module
    docstring.  Instances are immutable and hashable; build them with
    :func:`pauli_from_text`, :meth:`from_xz`, or :meth:`identity`.
    """

    n_qubits: int
    key: int

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if not 0 <= self.key < (1 << (64 * n_words(self.n_qubits))):
            raise ValueError("key out of range for width")
        if self.key & ~valid_key_mask(self.n_qubits):
            raise ValueError("key has bits outside the qubit pairs")

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, 0)

    @classmethod
    def from_xz(cls, x_bits: int, z_bits: int, n_qubits: int) -> "PauliString":
        """Build from n-bit integers (qubit 0 = most significant bit)."""
        if x_bits >> n_qubits or z_bits >> n_qubits or x_bits < 0 or z_bits < 0:
            raise ValueError("x_bits/z_bits do not fit in n_qubits bits")
        key = 0
        for q in range(n_qubits):
            shift = n_qubits - 1 - q
            x = (x_bits >> shift) & 1
            z = (z_bits >> shift) & 1
            key |= ((x << 1) | z) << _pair_shift(q, n_qubits)
        return cls(n_qubits, key)

    @property
    def x_bits(self) -> int:
        """X components as an n-bit integer, qubit 0 most significant."""
        out = 0
        for q in range(self.n_qubits):
            out |= ((self.key >> (_pair_shift(q, self.n_qubits) + 1)) & 1) << (
                self.n_qubits - 1 - q
            )
        return out

    @property
    def z_bits(self) -> int:
        """Z components as an n-bit integer, qubit 0 most significant."""
        out = 0
        for q in range(self.n_qubits):
            out |= ((self.key >> _pair_shift(q, self.n_qubits)) & 1) << (
                self.n_qubits - 1 - q
            )
        return out

    @property
    def is_identity(self) -> bool:
        return self.key == 0

    def letter(self, qubit: int) -> str:
        """Single-qubit letter at ``qubit`` (0-indexed)."""
        if not 0 <= qubit < self.n_qubits:
            raise IndexError("qubit out of range")
        return _PAIR_TO_LETTER[(self.key >> _pair_shift(qubit, self.n_qubits)) & 3]

    def text(self) -> str:
        """Letter rendering, leftmost character = qubit 0."""
        return "".join(self.letter(q) for q in range(self.n_qubits))

    def words(self) -> np.ndarray:
        """Packed words as a ``uint64`` array (word 0 most significant)."""
        return key_to_words(self.key, n_words(self.n_qubits))

    def __str__(self) -> str:
        return self.text()

    def __repr__(self) -> str:
        return f"PauliString('{self.text()}')"


def valid_key_mask(n_qubits: int) -> int:
    """Mask of key bits that may be nonzero for an ``n_qubits`` string."""
    mask = 0
    for q in range(n_qubits):
        mask |= 3 << _pair_shift(q, n_qubits)
    return mask


def key_to_words(key: int, width_words: int) -> np.ndarray:
    out = np.empty(width_words, dtype=np.uint64)
    for w in range(width_words):
        out[w] = (key >> (64 * (width_words - 1 - w))) & _WORD_MASK
    return out


def words_to_key(words: Iterable[int]) -> int:
    key = 0
    for w in words:
        key = (key << 64) | int(w)
    return key


def pauli_from_text(text: str) -> PauliString:
    """Parse a string of ``I``/``X``/``Y``/``Z`` letters, qubit 0 leftmost."""
    if not text:
        raise PauliParseError("empty Pauli string", 0)
    n = len(text)
    key = 0
    for q, ch in enumerate(text):
        pair = _LETTER_TO_PAIR.get(ch)
        if pair is None:
            raise PauliParseError(
                f"invalid Pauli letter {ch!r} at position {q}", q
            )
        key |= pair << _pair_shift(q, n)
    return PauliString(n, key)


def _require_same_width(p: PauliString, q: PauliString) -> None:
    if p.n_qubits != q.n_qubits:
        raise DimensionMismatchError(
            f"width mismatch: {p.n_qubits} vs {q.n_qubits} qubits"
        )


def commutes(p: PauliString, q: PauliString) -> bool:
    """True iff ``[P, Q] = 0``, via the symplectic form mod 2."""
    _require_same_width(p, q)
    zh = _z_half_int(n_words(p.n_qubits))
    a = ((p.key >> 1) & q.key & zh).bit_count()  # x_P . z_Q
    b = (p.key & (q.key >> 1) & zh).bit_count()  # z_P . x_Q
    return (a + b) % 2 == 0


def multiply(p: PauliString, q: PauliString) -> tuple[Phase, PauliString]:
    """Operator product ``P*Q = phase * R`` with ``R`` phase-free."""
    _require_same_width(p, q)
    zh = _z_half_int(n_words(p.n_qubits))
    r_key = p.key ^ q.key
    c_p = ((p.key >> 1) & p.key & zh).bit_count()
    c_q = ((q.key >> 1) & q.key & zh).bit_count()
    c_r = ((r_key >> 1) & r_key & zh).bit_count()
    cross = (p.key & (q.key >> 1) & zh).bit_count()  # z_P . x_Q
    k = (c_p + c_q + 2 * cross - c_r) & 3
    return Phase(k), PauliString(p.n_qubits, r_key)


def weight(p: PauliString) -> int:
    """Number of non-identity single-qubit factors."""
    zh = _z_half_int(n_words(p.n_qubits))
    return ((p.key | (p.key >> 1)) & zh).bit_count()


# ---------------------------------------------------------------------------
# Vectorized kernels over packed key arrays of shape (m, n_words).
# These are the hot path of the propagation engine; they mirror the scalar
# functions above bit for bit.
# ---------------------------------------------------------------------------


def canonical_argsort(keys: np.ndarray, kind: str = "stable") -> np.ndarray:
    """Stable argsort of packed rows in canonical (integer) order."""
    if keys.shape[1] == 1:
        return np.argsort(keys[:, 0], kind=kind)
    return np.lexsort(tuple(keys[:, w] for w in reversed(range(keys.shape[1]))))


def rows_equal_adjacent(sorted_keys: np.ndarray) -> np.ndarray:
    """Boolean mask, True where a sorted row equals its predecessor."""
    if sorted_keys.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    eq = np.concatenate(
        [[False], (sorted_keys[1:] == sorted_keys[:-1]).all(axis=1)]
    )
    return eq


def anticommute_mask(keys: np.ndarray, gen_words: np.ndarray) -> np.ndarray:
    """True where a row anticommutes with the generator ``gen_words``."""
    g = gen_words[None, :]
    a = np.bitwise_count((keys >> _ONE) & g & _Z_HALF)
    b = np.bitwise_count(keys & (g >> _ONE) & _Z_HALF)
    return ((a.sum(axis=1, dtype=np.int64) + b.sum(axis=1, dtype=np.int64)) & 1) == 1


def phase_exponent(left_words: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """``k mod 4`` of ``multiply(left, row)`` for every packed row."""
    l = left_words[None, :]
    r = keys ^ l
    c_l = int(
        np.bitwise_count((left_words >> _ONE) & left_words & _Z_HALF).sum()
    )
    c_k = np.bitwise_count((keys >> _ONE) & keys & _Z_HALF).sum(
        axis=1, dtype=np.int64
    )
    c_r = np.bitwise_count((r >> _ONE) & r & _Z_HALF).sum(axis=1, dtype=np.int64)
    cross = np.bitwise_count(l & (keys >> _ONE) & _Z_HALF).sum(
        axis=1, dtype=np.int64
    )
    return ((c_l + c_k + 2 * cross - c_r) & 3).astype(np.int8)


def row_weights(keys: np.ndarray) -> np.ndarray:
    """Pauli weight of every packed row."""
    return np.bitwise_count((keys | (keys >> _ONE)) & _Z_HALF).sum(
        axis=1, dtype=np.int64
    )


def pack_strings(strings: Iterable[PauliString], n_qubits: int) -> np.ndarray:
    """Pack scalar strings into an (m, n_words) array."""
    width = n_words(n_qubits)
    rows = [key_to_words(s.key, width) for s in strings]
    if not rows:
        return np.zeros((0, width), dtype=np.uint64)
    return np.stack(rows)


def unpack_string(row: np.ndarray, n_qubits: int) -> PauliString:
    """Inverse of :func:`pack_strings` for a single row."""
    return PauliString(n_qubits, words_to_key(row))
