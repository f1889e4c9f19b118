"""Sparse real-coefficient expansions over Pauli strings.

A :class:`PauliSum` maps Pauli strings to coefficients, stored as parallel
arrays (packed keys, coefficients, insertion indices) kept in canonical key
order.  All trace conventions are normalized: ``tr(A) := Tr(A) / 2**n``, so
``tr(I) = 1`` and distinct Pauli strings are orthonormal under
``overlap(A, B) = tr(A @ B)``.

Coefficients are real except in the output of :func:`product`, which carries
the complex phases of the underlying string products.  Insertion indices are
drawn from a process-wide monotone counter; they record first-seen order and
break ties in fixed-size truncation.  A term that is merged or truncated
away and later re-created receives a fresh index.
"""

from __future__ import annotations

import contextlib
import io
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence, TextIO, Union

import numpy as np

from .pauli import (
    DimensionMismatchError,
    PauliString,
    _ONE,
    _Z_HALF,
    canonical_argsort,
    key_to_words,
    n_words,
    pauli_from_text,
    phase_exponent,
    row_weights,
    rows_equal_adjacent,
    words_to_key,
)

# entries below this fraction of the largest |coefficient| are treated as
# numerical zeros after a merge
MERGE_DROP_RELATIVE = 1e-15

DEFAULT_TRACE_EPS = 1e-300


@contextlib.contextmanager
def numerical_zero_window(relative: float):
    """Temporarily override the relative magnitude below which merged
    entries are dropped as numerical zeros (exact zeros always drop).

    ``relative=0.0`` keeps every float residue; untruncated support-census
    runs need this, since a handful of strings carry exact coefficients
    smaller than 1e-15 of the leading one and would otherwise vanish from
    the count.
    """
    global MERGE_DROP_RELATIVE
    previous = MERGE_DROP_RELATIVE
    MERGE_DROP_RELATIVE = relative
    try:
        yield
    finally:
        MERGE_DROP_RELATIVE = previous


CHECKPOINT_FORMAT = "pauli-sum v1"

_PHASE_TABLE = np.array([1, 1j, -1, -1j], dtype=np.complex128)


class TraceCollapseError(ArithmeticError):
    """The identity coefficient vanished, so trace-normalization failed."""

    def __init__(self, message: str, step_index: int | None = None,
                 gate_index: int | None = None, trajectory=None):
        super().__init__(message)
        self.step_index = step_index
        self.gate_index = gate_index
        self.trajectory = trajectory


class _InsertionClock:
    """Process-wide monotone source of insertion indices."""

    __slots__ = ("_next",)

    def __init__(self):
        self._next = 0

    def take(self, count: int) -> np.ndarray:
        start = self._next
        self._next += count
        return np.arange(start, start + count, dtype=np.int64)

    def ensure_at_least(self, value: int) -> None:
        if value > self._next:
            self._next = value


_CLOCK = _InsertionClock()


@dataclass(frozen=True)
class Threshold:
    """Keep only terms with ``|c| > delta`` (strict)."""

    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("threshold must be >= 0")


@dataclass(frozen=True)
class FixedK:
    """Keep at most ``k`` terms, the largest by ``|c|``; ties keep the
    earliest-inserted term."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")


@dataclass(frozen=True)
class WeightCutoff:
    """Drop terms whose Pauli weight exceeds ``max_weight``."""

    max_weight: int

    def __post_init__(self):
        if self.max_weight < 1:
            raise ValueError("max_weight must be positive")


TruncationPolicy = Union[Threshold, FixedK, WeightCutoff,
                         Sequence["TruncationPolicy"], None]


def _coalesce(keys: np.ndarray, coeffs: np.ndarray, indices: np.ndarray):
    """Merge duplicate rows: sort canonically, sum coefficients, keep the
    smallest insertion index per string, and drop numerical zeros."""
    if keys.shape[0] == 0:
        return keys, coeffs, indices
    order = canonical_argsort(keys)
    keys = keys[order]
    coeffs = coeffs[order]
    indices = indices[order]
    dup = rows_equal_adjacent(keys)
    if dup.any():
        starts = np.flatnonzero(~dup)
        keys = keys[starts]
        coeffs = np.add.reduceat(coeffs, starts)
        indices = np.minimum.reduceat(indices, starts)
    absc = np.abs(coeffs)
    top = absc.max() if absc.size else 0.0
    keep = absc >= MERGE_DROP_RELATIVE * top
    keep &= absc > 0
    if not keep.all():
        keys = keys[keep]
        coeffs = coeffs[keep]
        indices = indices[keep]
    return keys, coeffs, indices


class PauliSum:
    """Sparse map from Pauli strings to coefficients, canonically ordered."""

    __slots__ = ("n_qubits", "_keys", "_coeffs", "_indices")

    def __init__(self, n_qubits: int, keys: np.ndarray | None = None,
                 coeffs: np.ndarray | None = None,
                 indices: np.ndarray | None = None):
        if n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        width = n_words(n_qubits)
        if keys is None:
            keys = np.zeros((0, width), dtype=np.uint64)
            coeffs = np.zeros(0, dtype=np.float64)
            indices = np.zeros(0, dtype=np.int64)
        self.n_qubits = n_qubits
        self._keys = keys
        self._coeffs = coeffs
        self._indices = indices

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSum":
        return cls(n_qubits)

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliSum":
        width = n_words(n_qubits)
        return cls(
            n_qubits,
            np.zeros((1, width), dtype=np.uint64),
            np.ones(1, dtype=np.float64),
            _CLOCK.take(1),
        )

    @classmethod
    def from_terms(cls, n_qubits: int,
                   terms: Iterable[tuple[float, Union[PauliString, str]]]
                   ) -> "PauliSum":
        """Build from ``(coefficient, string)`` pairs, merging duplicates.

        Insertion indices follow the order of ``terms``.  Coefficients must
        be real; complex expansions only ever arise from :func:`product`.
        """
        width = n_words(n_qubits)
        keys = []
        coeffs = []
        for c, p in terms:
            if isinstance(p, str):
                p = pauli_from_text(p)
            if p.n_qubits != n_qubits:
                raise DimensionMismatchError(
                    f"term width {p.n_qubits} != {n_qubits}"
                )
            if isinstance(c, complex):
                if c.imag != 0:
                    raise TypeError("coefficients of a PauliSum are real")
                c = c.real
            keys.append(key_to_words(p.key, width))
            coeffs.append(float(c))
        if not keys:
            return cls(n_qubits)
        karr = np.stack(keys)
        carr = np.asarray(coeffs, dtype=np.float64)
        iarr = _CLOCK.take(len(coeffs))
        return cls(n_qubits, *_coalesce(karr, carr, iarr))

    @classmethod
    def _from_raw(cls, n_qubits: int, keys, coeffs, indices) -> "PauliSum":
        """Trusted constructor: arrays already canonical and merged."""
        return cls(n_qubits, keys, coeffs, indices)

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return self._keys.shape[0]

    @property
    def n_terms(self) -> int:
        return self._keys.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._coeffs)

    def coefficients(self) -> np.ndarray:
        """Coefficients in canonical string order (a copy)."""
        return self._coeffs.copy()

    def _find_row(self, p: PauliString) -> int:
        if p.n_qubits != self.n_qubits:
            raise DimensionMismatchError(
                f"string width {p.n_qubits} != {self.n_qubits}"
            )
        width = n_words(self.n_qubits)
        row = key_to_words(p.key, width)
        keys = self._keys
        if width == 1:
            pos = int(np.searchsorted(keys[:, 0], row[0]))
        else:
            pos = int(np.searchsorted(keys[:, 0], row[0], side="left"))
            hi = int(np.searchsorted(keys[:, 0], row[0], side="right"))
            while pos < hi and not (keys[pos] == row).all():
                pos += 1
        if pos < len(self) and (keys[pos] == row).all():
            return pos
        return -1

    def coefficient(self, p: Union[PauliString, str]):
        """Coefficient of ``p`` (0 if absent)."""
        if isinstance(p, str):
            p = pauli_from_text(p)
        pos = self._find_row(p)
        if pos < 0:
            return self._coeffs.dtype.type(0)
        return self._coeffs[pos]

    def insertion_index(self, p: Union[PauliString, str]) -> int:
        if isinstance(p, str):
            p = pauli_from_text(p)
        pos = self._find_row(p)
        if pos < 0:
            raise KeyError(f"{p} not present")
        return int(self._indices[pos])

    def __contains__(self, p) -> bool:
        if isinstance(p, str):
            p = pauli_from_text(p)
        return self._find_row(p) >= 0

    def items(self) -> Iterator[tuple[PauliString, float]]:
        """Yield ``(string, coefficient)`` in canonical order."""
        for row, c in zip(self._keys, self._coeffs):
            yield PauliString(self.n_qubits, words_to_key(row)), c

    def max_abs_coefficient(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.abs(self._coeffs).max())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self._keys.shape == other._keys.shape
            and bool((self._keys == other._keys).all())
            and bool((self._coeffs == other._coeffs).all())
        )

    def __repr__(self) -> str:
        preview = ", ".join(
            f"{c:+.6g}*{s}" for s, c in list(self.items())[:4]
        )
        more = "" if len(self) <= 4 else f", ... ({len(self)} terms)"
        return f"PauliSum({preview}{more})"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _require_same_width(a: PauliSum, b: PauliSum) -> None:
    if a.n_qubits != b.n_qubits:
        raise DimensionMismatchError(
            f"width mismatch: {a.n_qubits} vs {b.n_qubits} qubits"
        )


def normalized_trace(a: PauliSum) -> float:
    """Coefficient of the identity string (``tr := Tr / 2**n``)."""
    if len(a) and not a._keys[0].any():
        return float(a._coeffs[0].real) if not a.is_real else float(a._coeffs[0])
    return 0.0


def _intersect_indices(a: PauliSum, b: PauliSum):
    """Positions of the common strings of two canonically sorted sums."""
    ka, kb = a._keys, b._keys
    if ka.shape[1] == 1:
        pos = np.searchsorted(ka[:, 0], kb[:, 0])
        pos_c = np.minimum(pos, max(len(a) - 1, 0))
        hit = (len(a) > 0) & (ka[pos_c, 0] == kb[:, 0])
        return pos_c[hit], np.flatnonzero(hit)
    # general width: merge both key sets and detect adjacent equal rows
    cat = np.concatenate([ka, kb])
    owner = np.concatenate(
        [np.zeros(len(a), dtype=np.int8), np.ones(len(b), dtype=np.int8)]
    )
    src = np.concatenate([np.arange(len(a)), np.arange(len(b))])
    order = canonical_argsort(cat)
    cat, owner, src = cat[order], owner[order], src[order]
    dup = rows_equal_adjacent(cat)
    # rows are unique within each operand, so a duplicate pairs a with b
    ib = src[dup]
    ia = src[np.flatnonzero(dup) - 1]
    return ia, ib


def overlap(a: PauliSum, b: PauliSum):
    """``tr(A B) = sum_P a_P b_P`` over the common strings (no conjugation)."""
    _require_same_width(a, b)
    if len(a) == 0 or len(b) == 0:
        return 0.0
    ia, ib = _intersect_indices(a, b)
    val = (a._coeffs[ia] * b._coeffs[ib]).sum()
    if np.iscomplexobj(val):
        return complex(val)
    return float(val)


def purity(a: PauliSum) -> float:
    """``tr(A^2)``, the squared L2 norm of the coefficient vector."""
    if not a.is_real:
        raise TypeError("purity requires real coefficients")
    return float((a._coeffs * a._coeffs).sum())


def product(a: PauliSum, b: PauliSum, *, block_rows: int = 1 << 20) -> PauliSum:
    """Full operator product ``A @ B`` with complex coefficients.

    Expands every pairwise string product with its phase and merges like
    strings.  The smaller operand is looped over; the larger is processed
    as whole blocks, so memory stays near ``block_rows`` keys.
    """
    _require_same_width(a, b)
    if len(a) == 0 or len(b) == 0:
        return PauliSum(a.n_qubits)
    left_small = len(a) <= len(b)
    small, big = (a, b) if left_small else (b, a)
    acc_keys = []
    acc_coeffs = []
    for i in range(len(small)):
        lw = small._keys[i]
        for start in range(0, len(big), block_rows):
            rows = big._keys[start:start + block_rows]
            # phase of multiply(a_term, b_term); the fixed operand sits on
            # whichever side of the product the smaller sum occupies
            if left_small:
                k4 = phase_exponent(lw, rows)
            else:
                k4 = _phase_exponent_right(rows, lw)
            coeffs = (
                small._coeffs[i]
                * big._coeffs[start:start + block_rows]
                * _PHASE_TABLE[k4]
            )
            acc_keys.append(rows ^ lw[None, :])
            acc_coeffs.append(coeffs)
    keys = np.concatenate(acc_keys)
    coeffs = np.concatenate(acc_coeffs).astype(np.complex128)
    indices = _CLOCK.take(len(coeffs))
    keys, coeffs, indices = _coalesce(keys, coeffs, indices)
    return PauliSum._from_raw(a.n_qubits, keys, coeffs, indices)


def _phase_exponent_right(rows: np.ndarray, right_words: np.ndarray) -> np.ndarray:
    """``k mod 4`` of ``multiply(row, right)`` for every packed row."""
    r = rows ^ right_words[None, :]
    c_rows = np.bitwise_count((rows >> _ONE) & rows & _Z_HALF).sum(
        axis=1, dtype=np.int64
    )
    c_right = int(
        np.bitwise_count((right_words >> _ONE) & right_words & _Z_HALF).sum()
    )
    c_r = np.bitwise_count((r >> _ONE) & r & _Z_HALF).sum(axis=1, dtype=np.int64)
    cross = np.bitwise_count(
        rows & (right_words[None, :] >> _ONE) & _Z_HALF
    ).sum(axis=1, dtype=np.int64)
    return ((c_rows + c_right + 2 * cross - c_r) & 3).astype(np.int8)


def truncate(a: PauliSum, policy: TruncationPolicy) -> PauliSum:
    """Apply a truncation policy (or an ordered list of policies)."""
    if policy is None:
        return a
    if isinstance(policy, (list, tuple)):
        out = a
        for p in policy:
            out = truncate(out, p)
        return out
    if isinstance(policy, Threshold):
        if policy.delta == 0 or len(a) == 0:
            return a
        keep = np.abs(a._coeffs) > policy.delta
        if keep.all():
            return a
        return PauliSum._from_raw(
            a.n_qubits, a._keys[keep], a._coeffs[keep], a._indices[keep]
        )
    if isinstance(policy, WeightCutoff):
        if len(a) == 0:
            return a
        keep = row_weights(a._keys) <= policy.max_weight
        if keep.all():
            return a
        return PauliSum._from_raw(
            a.n_qubits, a._keys[keep], a._coeffs[keep], a._indices[keep]
        )
    if isinstance(policy, FixedK):
        m = len(a)
        if m <= policy.k:
            return a
        absc = np.abs(a._coeffs)
        # value of the k-th largest magnitude; everything above it is kept
        # and the remaining slots go to boundary ties in first-seen order
        kth = np.partition(absc, m - policy.k)[m - policy.k]
        keep = absc > kth
        need = policy.k - int(keep.sum())
        if need > 0:
            tie_pos = np.flatnonzero(absc == kth)
            order = np.argpartition(a._indices[tie_pos], need - 1)[:need]
            keep[tie_pos[order]] = True
        return PauliSum._from_raw(
            a.n_qubits, a._keys[keep], a._coeffs[keep], a._indices[keep]
        )
    raise TypeError(f"unknown truncation policy: {policy!r}")


def normalize_by_trace(a: PauliSum, *, eps: float = DEFAULT_TRACE_EPS) -> PauliSum:
    """Divide by the identity coefficient so that ``tr(A) = 1`` exactly."""
    tr = normalized_trace(a)
    if abs(tr) <= eps:
        raise TraceCollapseError(
            f"identity coefficient {tr!r} is below {eps!r}; the truncated "
            "state lost its trace"
        )
    if tr == 1.0:
        return a
    return PauliSum._from_raw(
        a.n_qubits, a._keys, a._coeffs / tr, a._indices
    )


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------


def save_pauli_sum(a: PauliSum, dest: Union[str, TextIO],
                   extra_header: Mapping[str, object] | None = None) -> None:
    """Write a sum as text: a versioned header followed by one term per row.

    Rows are ``<hex x_bits> <hex z_bits> <coefficient> <insertion index>``
    in canonical string order; coefficients use 17 significant digits, which
    round-trips float64 exactly.
    """
    if not a.is_real:
        raise TypeError("only real-coefficient sums are serialized")
    own = isinstance(dest, str)
    f = open(dest, "w") if own else dest
    try:
        f.write(f"# {CHECKPOINT_FORMAT}\n")
        f.write(f"n_qubits = {a.n_qubits}\n")
        f.write(f"n_terms = {len(a)}\n")
        for k, v in (extra_header or {}).items():
            f.write(f"{k} = {v}\n")
        digits = (a.n_qubits + 3) // 4
        for row, c, idx in zip(a._keys, a._coeffs, a._indices):
            p = PauliString(a.n_qubits, words_to_key(row))
            f.write(
                f"{p.x_bits:0{digits}x} {p.z_bits:0{digits}x} "
                f"{c:.17e} {int(idx)}\n"
            )
    finally:
        if own:
            f.close()


def load_pauli_sum(src: Union[str, TextIO]) -> tuple[PauliSum, dict]:
    """Inverse of :func:`save_pauli_sum`; returns the sum and extra header
    fields.  Restores the insertion clock so later indices stay monotone."""
    own = isinstance(src, str)
    f = open(src) if own else src
    try:
        first = f.readline().strip()
        if first != f"# {CHECKPOINT_FORMAT}":
            raise ValueError(f"unrecognized checkpoint header: {first!r}")
        header: dict[str, str] = {}
        n_qubits = n_terms = None
        pos = f.tell()
        line = f.readline()
        while line and "=" in line:
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key == "n_qubits":
                n_qubits = int(val)
            elif key == "n_terms":
                n_terms = int(val)
            else:
                header[key] = val
            pos = f.tell()
            line = f.readline()
        if n_qubits is None or n_terms is None:
            raise ValueError("checkpoint header missing n_qubits/n_terms")
        f.seek(pos)
        width = n_words(n_qubits)
        keys = np.zeros((n_terms, width), dtype=np.uint64)
        coeffs = np.zeros(n_terms, dtype=np.float64)
        indices = np.zeros(n_terms, dtype=np.int64)
        for i in range(n_terms):
            parts = f.readline().split()
            if len(parts) != 4:
                raise ValueError(f"malformed checkpoint row {i}")
            x, z = int(parts[0], 16), int(parts[1], 16)
            p = PauliString.from_xz(x, z, n_qubits)
            keys[i] = key_to_words(p.key, width)
            coeffs[i] = float(parts[2])
            indices[i] = int(parts[3])
    finally:
        if own:
            f.close()
    if n_terms:
        _CLOCK.ensure_at_least(int(indices.max()) + 1)
    out = PauliSum._from_raw(n_qubits, keys, coeffs, indices)
    return out, header


def dumps_pauli_sum(a: PauliSum,
                    extra_header: Mapping[str, object] | None = None) -> str:
    buf = io.StringIO()
    save_pauli_sum(a, buf, extra_header)
    return buf.getvalue()
