"""Molecular integrals, the second-quantized Hamiltonian and Jordan-Wigner.

Spin orbitals are blocked: modes ``0..n_spatial-1`` are spin-up and
``n_spatial..2*n_spatial-1`` spin-down, so mode ``p`` sits on qubit ``p``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib.resources import files
from itertools import product
from pathlib import Path

import numpy as np

from .pauli import PauliString, PauliSum, pauli_to_matrix, simplify

SYMMETRY_TOL = 1e-10


class IntegralFormatError(ValueError):
    """An integral file could not be parsed."""


class SymmetryError(IntegralFormatError):
    """Integrals break the real-orbital permutation symmetry."""


@dataclass
class FermionIntegrals:
    """Spatial-orbital integrals; ``g`` is in chemists' notation ``(ij|kl)``."""

    n_spatial: int
    h: np.ndarray
    g: np.ndarray
    e_nuc: float
    n_electrons: int | None = None
    geometry_tag: str = ""

    def __post_init__(self):
        n = self.n_spatial
        self.h = np.asarray(self.h, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.h.shape != (n, n) or self.g.shape != (n, n, n, n):
            raise ValueError("integral shapes do not match n_spatial")
        if not np.allclose(self.h, self.h.T, atol=SYMMETRY_TOL, rtol=0):
            raise SymmetryError("one-electron integrals are not symmetric")
        g = self.g
        for perm in (g.transpose(1, 0, 2, 3), g.transpose(0, 1, 3, 2), g.transpose(2, 3, 0, 1)):
            if not np.allclose(g, perm, atol=SYMMETRY_TOL, rtol=0):
                raise SymmetryError("two-electron integrals break 8-fold symmetry")

    @property
    def n_modes(self) -> int:
        return 2 * self.n_spatial


def _chem_images(i, j, k, l):
    return {
        (i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
        (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i),
    }  # fmt: skip


def _assign(arr, index, value, what):
    old = arr[index]
    if not np.isnan(old) and abs(old - value) > SYMMETRY_TOL:
        raise SymmetryError(f"{what} entry {index} given inconsistent values {old!r} and {value!r}")
    arr[index] = value


def parse_fcidump(text: str, geometry_tag: str = "") -> FermionIntegrals:
    """Parse FCIDUMP text (1-based indices, chemists' two-electron order)."""
    match = re.search(r"&FCI(.*?)(&END|/)", text, flags=re.S | re.I)
    if not match:
        raise IntegralFormatError("missing &FCI ... &END header")
    header = match.group(1)
    norb = re.search(r"NORB\s*=\s*(\d+)", header, flags=re.I)
    if not norb:
        raise IntegralFormatError("header lacks NORB")
    n = int(norb.group(1))
    nelec = re.search(r"NELEC\s*=\s*(\d+)", header, flags=re.I)

    h = np.full((n, n), np.nan)
    g = np.full((n, n, n, n), np.nan)
    e_nuc = None
    for lineno, line in enumerate(text[match.end() :].splitlines(), 1):
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 5:
            raise IntegralFormatError(f"record {lineno}: expected 'value i j k l', got {line!r}")
        try:
            value = float(fields[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(f) for f in fields[1:])
        except ValueError as exc:
            raise IntegralFormatError(f"record {lineno}: {exc}") from None
        if max(i, j, k, l) > n or min(i, j, k, l) < 0:
            raise IntegralFormatError(f"record {lineno}: index out of range for NORB={n}")
        if i == j == k == l == 0:
            e_nuc = value
        elif k == l == 0 and j > 0:
            _assign(h, (i - 1, j - 1), value, "h")
            _assign(h, (j - 1, i - 1), value, "h")
        elif j == k == l == 0:
            continue  # orbital energy records
        else:
            for idx in _chem_images(i - 1, j - 1, k - 1, l - 1):
                _assign(g, idx, value, "g")
    if e_nuc is None:
        raise IntegralFormatError("no nuclear-repulsion record (0 0 0 0)")
    return FermionIntegrals(
        n_spatial=n,
        h=np.nan_to_num(h, nan=0.0),
        g=np.nan_to_num(g, nan=0.0),
        e_nuc=e_nuc,
        n_electrons=int(nelec.group(1)) if nelec else None,
        geometry_tag=geometry_tag,
    )


def load_fcidump(path) -> FermionIntegrals:
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise IntegralFormatError(f"{path} is empty")
    return parse_fcidump(text, geometry_tag=path.stem)


def write_fcidump(ints: FermionIntegrals, path, tol: float = 1e-14) -> None:
    n = ints.n_spatial
    lines = [f" &FCI NORB={n},NELEC={ints.n_electrons or 0},MS2=0,", " &END"]
    for i, j, k, l in product(range(n), repeat=4):
        if i >= j and k >= l and (i * (i + 1) // 2 + j) >= (k * (k + 1) // 2 + l):
            if abs(ints.g[i, j, k, l]) > tol:
                lines.append(f"{ints.g[i, j, k, l]:.16e} {i + 1} {j + 1} {k + 1} {l + 1}")
    for i in range(n):
        for j in range(i + 1):
            if abs(ints.h[i, j]) > tol:
                lines.append(f"{ints.h[i, j]:.16e} {i + 1} {j + 1} 0 0")
    lines.append(f"{ints.e_nuc:.16e} 0 0 0 0")
    Path(path).write_text("\n".join(lines) + "\n")


def bundled_h2_dir() -> Path:
    return Path(str(files("symvqe") / "data" / "h2"))


def bundled_h2_distances() -> list[float]:
    return sorted(float(p.stem[1:]) for p in bundled_h2_dir().glob("d*.fcid"))


def h2_fcidump_path(distance: float, directory=None) -> Path:
    """File for one bond distance, named ``d{distance:.3f}.fcid``."""
    directory = Path(directory) if directory is not None else bundled_h2_dir()
    path = directory / f"d{distance:.3f}.fcid"
    if not path.exists():
        raise FileNotFoundError(f"no integral file for distance {distance} in {directory}")
    return path


# ---------------------------------------------------------------------------
# Fermionic operators

CREATE, ANNIHILATE = True, False


@dataclass
class FermionOperator:
    """Sum of ladder-operator products.

    Each term is ``(coeff, ((mode, is_creation), ...))`` applied right to
    left like an ordinary operator product, i.e. the tuple reads as written.
    """

    n_modes: int
    terms: list[tuple[float, tuple[tuple[int, bool], ...]]] = field(default_factory=list)

    def __post_init__(self):
        for _, ladder in self.terms:
            for mode, _ in ladder:
                if not 0 <= mode < self.n_modes:
                    raise ValueError(f"mode {mode} outside 0..{self.n_modes - 1}")

    def adjoint_terms(self):
        return [(c, tuple((m, not d) for m, d in reversed(ladder))) for c, ladder in self.terms]

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        def collect(terms):
            out: dict = {}
            for c, ladder in terms:
                out[ladder] = out.get(ladder, 0.0) + c
            return out

        a, b = collect(self.terms), collect(self.adjoint_terms())
        return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in a.keys() | b.keys())


def second_quantized(ints: FermionIntegrals, tol: float = 1e-14) -> FermionOperator:
    """Spin-orbital Hamiltonian ``sum h_ij a+_i a_j + sum g_ijkl a+_i a+_j a_k a_l``.

    The physicists' ``g_ijkl`` carries the conventional factor 1/2 and is
    ``(i l | j k) / 2`` in chemists' notation, nonzero only when spin(i) ==
    spin(l) and spin(j) == spin(k). The nuclear repulsion is not included.
    """
    n = ints.n_spatial
    n_modes = 2 * n
    terms = []
    for sigma in (0, 1):
        for p, q in product(range(n), repeat=2):
            c = ints.h[p, q]
            if abs(c) > tol:
                terms.append((float(c), ((p + sigma * n, CREATE), (q + sigma * n, ANNIHILATE))))
    for sigma, tau in product((0, 1), repeat=2):
        for p, q, r, s in product(range(n), repeat=4):
            # a+_{p sigma} a+_{r tau} a_{s tau} a_{q sigma}
            c = 0.5 * ints.g[p, q, r, s]
            i, j, k, l = p + sigma * n, r + tau * n, s + tau * n, q + sigma * n
            if abs(c) <= tol or i == j or k == l:
                continue
            terms.append((float(c), ((i, CREATE), (j, CREATE), (k, ANNIHILATE), (l, ANNIHILATE))))
    return FermionOperator(n_modes, terms)


_SINGLE_MUL = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}  # fmt: skip


def pauli_product(a: PauliString, b: PauliString) -> tuple[complex, PauliString]:
    """Return ``(phase, p)`` with ``a @ b == phase * p``."""
    phase = 1 + 0j
    letters = {}
    for q in range(a.n_qubits):
        ph, letter = _SINGLE_MUL[(a.letter(q), b.letter(q))]
        phase *= ph
        letters[q] = letter
    return phase, PauliString.from_dict(a.n_qubits, letters)


def _mul_sparse(x: dict, y: dict) -> dict:
    out: dict = {}
    for pa, ca in x.items():
        for pb, cb in y.items():
            ph, p = pauli_product(pa, pb)
            out[p] = out.get(p, 0) + ph * ca * cb
    return out


def jw_ladder(mode: int, n_modes: int, creation: bool) -> dict[PauliString, complex]:
    """Single ladder operator as ``{PauliString: coeff}``: Z-string below ``mode``."""
    z = (1 << mode) - 1
    x_part = PauliString(n_modes, 1 << mode, z)
    y_part = PauliString(n_modes, 1 << mode, z | (1 << mode))
    # X and Y on the target qubit; Z on qubits below it
    return {x_part: 0.5, y_part: (-0.5j if creation else 0.5j)}


def jordan_wigner(op: FermionOperator, tol: float = 1e-12, ladder=jw_ladder) -> PauliSum:
    """Map a Hermitian fermion operator onto a real-weighted Pauli sum."""
    n = op.n_modes
    total: dict[PauliString, complex] = {}
    for coeff, seq in op.terms:
        acc = {PauliString.identity(n): complex(coeff)}
        for mode, creation in seq:
            acc = _mul_sparse(acc, ladder(mode, n, creation))
        for p, c in acc.items():
            total[p] = total.get(p, 0) + c
    worst = max((abs(c.imag) for c in total.values()), default=0.0)
    if worst > 1e-10:
        raise ValueError(f"operator is not Hermitian (imaginary Pauli weight {worst:.3e})")
    return simplify(PauliSum(n, [(float(c.real), p) for p, c in total.items()]), tol=tol)


def molecular_hamiltonian(ints: FermionIntegrals) -> PauliSum:
    """Qubit Hamiltonian without nuclear repulsion."""
    return jordan_wigner(second_quantized(ints))


def _sparse_matrix(op: dict, n: int) -> np.ndarray:
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for p, c in op.items():
        out += c * pauli_to_matrix(p)
    return out


def anticommutation_check(n_modes: int, tol: float = 1e-12, ladder=jw_ladder) -> dict:
    """Verify canonical anticommutators of the mapped ladder operators densely.

    Returns ``{"ok": bool, "max_error": float, "failures": [...]}``.
    """
    if n_modes > 6:
        raise ValueError("anticommutation_check is a dense oracle; n_modes <= 6")
    ann = [_sparse_matrix(ladder(p, n_modes, False), n_modes) for p in range(n_modes)]
    cre = [_sparse_matrix(ladder(p, n_modes, True), n_modes) for p in range(n_modes)]
    eye = np.eye(1 << n_modes)
    worst, failures = 0.0, []
    for p, q in product(range(n_modes), repeat=2):
        mixed = ann[p] @ cre[q] + cre[q] @ ann[p] - (eye if p == q else 0)
        pure = ann[p] @ ann[q] + ann[q] @ ann[p]
        for name, m in (("{a_p, a_q+}", mixed), ("{a_p, a_q}", pure)):
            err = float(np.max(np.abs(m)))
            worst = max(worst, err)
            if err > tol:
                failures.append((name, p, q, err))
    return {"ok": not failures, "max_error": worst, "failures": failures}
