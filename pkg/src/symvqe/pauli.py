"""Pauli strings, Pauli sums and qubit-wise commuting measurement groups.

Conventions used throughout the package: qubit 0 is the least-significant
bit of every mask and bitstring, and the rightmost character of a textual
Pauli label (``"IIXZ"`` has Z on qubit 0 and X on qubit 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

DEFAULT_TOL = 1e-12
MAX_DENSE_QUBITS = 12

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}

_PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Paulis stored as X/Z bitmasks."""

    n_qubits: int
    x_mask: int = 0
    z_mask: int = 0

    def __post_init__(self):
        limit = 1 << self.n_qubits
        if self.n_qubits < 0 or not (0 <= self.x_mask < limit and 0 <= self.z_mask < limit):
            raise ValueError(f"masks do not fit in {self.n_qubits} qubits")

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        label = label.strip().upper()
        x = z = 0
        for q, letter in enumerate(reversed(label)):
            if letter not in _LETTER_BITS:
                raise ValueError(f"invalid Pauli letter {letter!r} in {label!r}")
            xb, zb = _LETTER_BITS[letter]
            x |= xb << q
            z |= zb << q
        return cls(len(label), x, z)

    @classmethod
    def from_dict(cls, n_qubits: int, ops: dict[int, str]) -> PauliString:
        """Build from a sparse ``{qubit: letter}`` mapping."""
        letters = ["I"] * n_qubits
        for q, letter in ops.items():
            letters[q] = letter
        return cls.from_label("".join(reversed(letters)))

    @classmethod
    def identity(cls, n_qubits: int) -> PauliString:
        return cls(n_qubits)

    def letter(self, qubit: int) -> str:
        return _BITS_LETTER[((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1)]

    @property
    def label(self) -> str:
        return "".join(self.letter(q) for q in reversed(range(self.n_qubits)))

    @property
    def support(self) -> int:
        """Bitmask of qubits carrying a non-identity letter."""
        return self.x_mask | self.z_mask

    @property
    def weight(self) -> int:
        return bin(self.support).count("1")

    def is_identity(self) -> bool:
        return self.support == 0

    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    def commutes_with(self, other: PauliString) -> bool:
        anti = bin(self.x_mask & other.z_mask).count("1") + bin(self.z_mask & other.x_mask).count("1")
        return anti % 2 == 0

    def qubitwise_commutes_with(self, other: PauliString) -> bool:
        both = self.support & other.support
        return (self.x_mask & both) == (other.x_mask & both) and (self.z_mask & both) == (
            other.z_mask & both
        )

    def __str__(self) -> str:
        return self.label


@dataclass
class PauliSum:
    """Real-weighted sum of Pauli strings on a fixed register."""

    n_qubits: int
    terms: list[tuple[float, PauliString]] = field(default_factory=list)

    def __post_init__(self):
        for coeff, p in self.terms:
            if p.n_qubits != self.n_qubits:
                raise ValueError(f"term {p} does not act on {self.n_qubits} qubits")
            if isinstance(coeff, complex):
                raise TypeError("PauliSum coefficients must be real")

    @classmethod
    def from_list(cls, items, n_qubits: int | None = None) -> PauliSum:
        """Build from ``[(coeff, "label"), ...]``."""
        items = list(items)
        if n_qubits is None:
            if not items:
                raise ValueError("n_qubits is required for an empty sum")
            n_qubits = len(items[0][1])
        return cls(n_qubits, [(float(c), PauliString.from_label(lbl)) for c, lbl in items])

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __add__(self, other: PauliSum) -> PauliSum:
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        return PauliSum(self.n_qubits, self.terms + other.terms)

    def __mul__(self, scalar: float) -> PauliSum:
        return PauliSum(self.n_qubits, [(scalar * c, p) for c, p in self.terms])

    __rmul__ = __mul__

    def identity_coefficient(self) -> float:
        return sum(c for c, p in self.terms if p.is_identity())

    def to_json(self) -> str:
        return json.dumps([{"coeff": c, "pauli": p.label} for c, p in self.terms])

    @classmethod
    def from_json(cls, text: str) -> PauliSum:
        records = json.loads(text)
        return cls.from_list([(r["coeff"], r["pauli"]) for r in records])

    def __str__(self) -> str:
        return "\n".join(f"{c:+.12f} {p.label}" for c, p in self.terms)


def simplify(pauli_sum: PauliSum, tol: float = DEFAULT_TOL) -> PauliSum:
    """Merge duplicate strings, drop near-zero terms, sort by label."""
    merged: dict[PauliString, float] = {}
    for coeff, p in pauli_sum.terms:
        merged[p] = merged.get(p, 0.0) + coeff
    terms = [(c, p) for p, c in merged.items() if abs(c) >= tol]
    terms.sort(key=lambda t: t[1].label)
    return PauliSum(pauli_sum.n_qubits, terms)


def pauli_to_matrix(op: PauliString | PauliSum) -> np.ndarray:
    """Dense matrix with qubit 0 as the last Kronecker factor."""
    if op.n_qubits > MAX_DENSE_QUBITS:
        raise ValueError(f"dense matrices limited to {MAX_DENSE_QUBITS} qubits, got {op.n_qubits}")
    if isinstance(op, PauliString):
        if op.n_qubits == 0:
            return np.ones((1, 1), dtype=complex)
        return reduce(np.kron, [_PAULI_MATRICES[ch] for ch in op.label])
    dim = 1 << op.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for coeff, p in op.terms:
        out += coeff * pauli_to_matrix(p)
    return out


def _z_sum(n_qubits: int, qubit_weights: dict[int, float], constant: float) -> PauliSum:
    terms = [(constant, PauliString.identity(n_qubits))]
    for q, w in qubit_weights.items():
        terms.append((w, PauliString(n_qubits, 0, 1 << q)))
    return simplify(PauliSum(n_qubits, terms))


def number_operator(n_qubits: int) -> PauliSum:
    """Total occupation ``sum_p (I - Z_p) / 2``."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    return _z_sum(n_qubits, {q: -0.5 for q in range(n_qubits)}, n_qubits / 2)


def sz_operator(n_qubits: int) -> PauliSum:
    """Spin projection for a blocked register (spin-up qubits first)."""
    if n_qubits < 2 or n_qubits % 2:
        raise ValueError(f"sz_operator needs an even qubit count, got {n_qubits}")
    half = n_qubits // 2
    # n_up/2 - n_down/2 with n_p = (1 - Z_p)/2; constants cancel
    weights = {q: (-0.25 if q < half else 0.25) for q in range(n_qubits)}
    return _z_sum(n_qubits, weights, 0.0)


@dataclass(frozen=True)
class MeasurementGroup:
    """Terms that can be read out together after single-qubit rotations.

    ``members`` index into the parent :class:`PauliSum`; ``shared_basis`` is
    a label like ``"IXZY"`` (rightmost char = qubit 0).
    """

    members: tuple[int, ...]
    shared_basis: str

    @property
    def z_only(self) -> bool:
        return set(self.shared_basis) <= {"I", "Z"}

    @property
    def n_qubits(self) -> int:
        return len(self.shared_basis)

    def basis_letter(self, qubit: int) -> str:
        return self.shared_basis[self.n_qubits - 1 - qubit]


def _merge_basis(basis: list[str], p: PauliString) -> bool:
    """Merge ``p`` into ``basis`` (indexed by qubit) if compatible."""
    letters = [p.letter(q) for q in range(p.n_qubits)]
    for q, letter in enumerate(letters):
        if letter != "I" and basis[q] != "I" and basis[q] != letter:
            return False
    for q, letter in enumerate(letters):
        if letter != "I":
            basis[q] = letter
    return True


def group_qubitwise_commuting(pauli_sum: PauliSum) -> list[MeasurementGroup]:
    """Greedy first-fit partition into qubit-wise commuting groups.

    Diagonal (I/Z-only) terms are visited first, then the rest, each in
    lexicographic label order; so all diagonal terms share one z-only group
    and the result is reproducible. The identity term joins that group too.
    """
    terms = pauli_sum.terms
    order = sorted(range(len(terms)), key=lambda i: (not terms[i][1].is_diagonal(), terms[i][1].label))
    n = pauli_sum.n_qubits
    bases: list[list[str]] = []
    members: list[list[int]] = []
    for idx in order:
        p = terms[idx][1]
        for basis, mem in zip(bases, members):
            if _merge_basis(basis, p):
                mem.append(idx)
                break
        else:
            basis = ["I"] * n
            _merge_basis(basis, p)
            bases.append(basis)
            members.append([idx])
    return [
        MeasurementGroup(tuple(mem), "".join(reversed(basis))) for basis, mem in zip(bases, members)
    ]
