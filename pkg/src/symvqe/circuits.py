"""Gates, circuits and the ansatz families compared in the experiments.

Two-qubit gate matrices are written in the basis ``|00>, |01>, |10>, |11>``
where the *first* listed qubit is the least-significant bit. For ``CNOT``
the first qubit is the control.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from math import comb, factorial

import numpy as np

GATE_ARITY = {"X": 1, "RY": 1, "RZ": 1, "H": 1, "Sdg": 1, "CZ": 2, "CNOT": 2, "A": 2, "PSWAP": 2}
GATE_SLOTS = {"X": 0, "RY": 1, "RZ": 1, "H": 0, "Sdg": 0, "CZ": 0, "CNOT": 0, "A": 2, "PSWAP": 1}
CNOT_COST = {"CNOT": 1, "CZ": 1, "A": 3, "PSWAP": 2}
NATIVE_KINDS = frozenset({"X", "RY", "RZ", "H", "Sdg", "CNOT"})


@dataclass(frozen=True)
class Param:
    """Reference to free parameter ``index`` of the enclosing circuit."""

    index: int

    def __repr__(self):
        return f"p{self.index}"


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.qubits) != GATE_ARITY[self.kind]:
            raise ValueError(f"{self.kind} acts on {GATE_ARITY[self.kind]} qubit(s)")
        if len(self.params) != GATE_SLOTS[self.kind]:
            raise ValueError(f"{self.kind} takes {GATE_SLOTS[self.kind]} parameter(s)")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.kind} needs distinct qubits, got {self.qubits}")

    @property
    def is_bound(self) -> bool:
        return not any(isinstance(p, Param) for p in self.params)

    def matrix(self) -> np.ndarray:
        if not self.is_bound:
            raise ValueError(f"gate {self} has unbound parameters")
        return gate_matrix(self.kind, *self.params)

    def __str__(self):
        args = ",".join(f"{p:.6g}" if not isinstance(p, Param) else repr(p) for p in self.params)
        q = ",".join(map(str, self.qubits))
        return f"{self.kind}({args}) q[{q}]" if self.params else f"{self.kind} q[{q}]"


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()
    n_free_params: int = 0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        seen = set()
        for g in self.gates:
            if any(not 0 <= q < self.n_qubits for q in g.qubits):
                raise ValueError(f"{g} touches a qubit outside 0..{self.n_qubits - 1}")
            seen.update(p.index for p in g.params if isinstance(p, Param))
        if seen != set(range(self.n_free_params)):
            raise ValueError("free parameter indices must be exactly 0..n_free_params-1")

    def __add__(self, other: Circuit) -> Circuit:
        """Concatenate; parameters of ``other`` are renumbered after ours."""
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit count mismatch")
        shift = self.n_free_params
        moved = [
            replace(g, params=tuple(Param(p.index + shift) if isinstance(p, Param) else p for p in g.params))
            for g in other.gates
        ]
        return Circuit(self.n_qubits, self.gates + tuple(moved), shift + other.n_free_params)

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_json(self) -> str:
        def slot(p):
            return {"free": p.index} if isinstance(p, Param) else float(p)

        records = [{"kind": g.kind, "qubits": list(g.qubits), "params": [slot(p) for p in g.params]} for g in self.gates]
        return json.dumps({"n_qubits": self.n_qubits, "n_free_params": self.n_free_params, "gates": records})

    @classmethod
    def from_json(cls, text: str) -> Circuit:
        data = json.loads(text)

        def slot(p):
            return Param(p["free"]) if isinstance(p, dict) else float(p)

        gates = [Gate(r["kind"], tuple(r["qubits"]), tuple(slot(p) for p in r["params"])) for r in data["gates"]]
        return cls(data["n_qubits"], gates, data["n_free_params"])

    def __str__(self):
        head = f"Circuit(n_qubits={self.n_qubits}, free_params={self.n_free_params})"
        return "\n".join([head] + [f"  {g}" for g in self.gates])


# ---------------------------------------------------------------------------
# Gate matrices


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def a_gate_matrix(theta: float, phi: float) -> np.ndarray:
    """Particle-number conserving two-qubit gate A(theta, phi)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, np.exp(1j * phi) * s, 0],
            [0, np.exp(-1j * phi) * s, -c, 0],
            [0, 0, 0, 1],
        ],
        dtype=complex,
    )


def pswap_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[1, 0, 0, 0], [0, c, -1j * s, 0], [0, -1j * s, c, 0], [0, 0, 0, 1]], dtype=complex)


_FIXED = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Sdg": np.diag([1, -1j]),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex),
}


def gate_matrix(kind: str, *params: float) -> np.ndarray:
    if kind in _FIXED:
        return _FIXED[kind]
    if kind == "RY":
        return ry(params[0])
    if kind == "RZ":
        return rz(params[0])
    if kind == "A":
        return a_gate_matrix(*params)
    if kind == "PSWAP":
        return pswap_matrix(params[0])
    raise ValueError(f"unknown gate kind {kind!r}")


# ---------------------------------------------------------------------------
# Native decompositions (all over RY, RZ, CNOT; exact up to global phase)


def _rx(q, angle):
    return [Gate("RZ", (q,), (np.pi / 2,)), Gate("RY", (q,), (angle,)), Gate("RZ", (q,), (-np.pi / 2,))]


def _h(q):
    return [Gate("RZ", (q,), (np.pi,)), Gate("RY", (q,), (np.pi / 2,))]


def _x(q):
    return [Gate("RZ", (q,), (np.pi,)), Gate("RY", (q,), (np.pi,))]


def _xy_rotation(a, b, angle):
    """``exp(-i angle (XX + YY))`` on qubits ``a`` (control side) and ``b``."""
    w = _rx(a, np.pi / 2) + _rx(b, np.pi / 2)
    w_dag = _rx(a, -np.pi / 2) + _rx(b, -np.pi / 2)
    core = [Gate("CNOT", (a, b))] + _rx(a, 2 * angle) + [Gate("RZ", (b,), (2 * angle,)), Gate("CNOT", (a, b))]
    return w + core + w_dag


def _merge_rotations(gates):
    out: list[Gate] = []
    for g in gates:
        if g.kind in ("RY", "RZ"):
            for j in range(len(out) - 1, -1, -1):
                prev = out[j]
                if g.qubits[0] in prev.qubits:
                    if prev.kind == g.kind:
                        out[j] = Gate(g.kind, g.qubits, (prev.params[0] + g.params[0],))
                        break
                    out.append(g)
                    break
            else:
                out.append(g)
        else:
            out.append(g)
    # a 2*pi rotation is -I on one qubit: a global phase
    return [g for g in out if not (g.kind in ("RY", "RZ") and _is_full_turn(g.params[0]))]


def _is_full_turn(angle):
    r = np.remainder(angle, 2 * np.pi)
    return bool(np.isclose(r, 0, rtol=0, atol=1e-13) or np.isclose(r, 2 * np.pi, rtol=0, atol=1e-13))


def decompose_a_gate(theta: float, phi: float, qubits=(0, 1)) -> list[Gate]:
    """A(theta, phi) as RY/RZ/CNOT with exactly three CNOTs.

    Uses A(t, p) = RZ_a(p) . A(0, 0) . G(t) . RZ_a(-p) where A(0, 0) is the
    one-CNOT phase gate X_a CZ X_a and G(t) is a two-CNOT real rotation in
    the single-excitation subspace.
    """
    a, b = qubits
    seq = [Gate("RZ", (a,), (-phi,))]
    # G(t) = exp(i t/2 (Y_b X_a - X_b Y_a)) = S_a^dag . exp(i t/2 (XX + YY)) . S_a
    seq += [Gate("RZ", (a,), (np.pi / 2,))]
    seq += _xy_rotation(a, b, -theta / 2)
    seq += [Gate("RZ", (a,), (-np.pi / 2,))]
    # X_a CZ X_a, with CZ = H_b CNOT H_b
    seq += _x(a) + _h(b) + [Gate("CNOT", (a, b))] + _h(b) + _x(a)
    seq += [Gate("RZ", (a,), (phi,))]
    return _merge_rotations(seq)


def decompose_gate(g: Gate) -> list[Gate]:
    if not g.is_bound:
        raise ValueError("decomposition needs bound parameters")
    if g.kind == "A":
        return decompose_a_gate(*g.params, qubits=g.qubits)
    if g.kind == "CZ":
        a, b = g.qubits
        return [Gate("H", (b,)), Gate("CNOT", (a, b)), Gate("H", (b,))]
    if g.kind == "PSWAP":
        return _merge_rotations(_xy_rotation(*g.qubits, g.params[0] / 4))
    return [g]


def decompose(c: Circuit) -> Circuit:
    """Rewrite a bound circuit over the native set {X, RY, RZ, H, Sdg, CNOT}."""
    if c.n_free_params:
        raise ValueError("decomposition needs a fully bound circuit")
    gates = [h for g in c.gates for h in decompose_gate(g)]
    return Circuit(c.n_qubits, gates, 0)


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Dense unitary (qubit 0 = least-significant index bit); test oracle."""
    n = c.n_qubits
    dim = 1 << n
    u = np.eye(dim, dtype=complex)
    for g in c.gates:
        u = embed(g.matrix(), g.qubits, n) @ u
    return u


def embed(m: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Full-register matrix of a local gate by explicit index mapping."""
    dim = 1 << n_qubits
    k = len(qubits)
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        local_in = sum(((col >> q) & 1) << i for i, q in enumerate(qubits))
        base = col
        for q in qubits:
            base &= ~(1 << q)
        for local_out in range(1 << k):
            amp = m[local_out, local_in]
            if amp == 0:
                continue
            row = base
            for i, q in enumerate(qubits):
                row |= ((local_out >> i) & 1) << q
            out[row, col] += amp
    return out


# ---------------------------------------------------------------------------
# Ansatz construction


@dataclass(frozen=True)
class SectorSpec:
    """Symmetry sector: ``n_particles`` electrons with spin projection ``sz``."""

    n_qubits: int
    n_particles: int
    sz: float = 0.0
    total_spin: float | None = None

    def __post_init__(self):
        n, m = self.n_qubits, self.n_particles
        if n < 2 or n % 2:
            raise ValueError(f"sector needs an even qubit count, got {n}")
        if not 0 <= m <= n:
            raise ValueError(f"particle number {m} outside 0..{n}")
        up, down = m / 2 + self.sz, m / 2 - self.sz
        if not (float(up).is_integer() and float(down).is_integer()) or not (0 <= up <= n // 2 and 0 <= down <= n // 2):
            raise ValueError(f"no (N={m}, Sz={self.sz}) sector on {n} qubits")

    @property
    def n_up(self) -> int:
        return int(self.n_particles / 2 + self.sz)

    @property
    def n_down(self) -> int:
        return int(self.n_particles / 2 - self.sz)

    @property
    def label(self) -> str:
        return f"N{self.n_particles}_Sz{self.sz:+g}"

    def active_blocks(self) -> list[int]:
        """Block offsets whose occupation is neither empty nor full."""
        half = self.n_qubits // 2
        return [off for off, occ in ((0, self.n_up), (half, self.n_down)) if 0 < occ < half]

    def occupied_qubits(self) -> list[int]:
        half = self.n_qubits // 2
        return list(range(self.n_up)) + list(range(half, half + self.n_down))

    def dimension(self) -> int:
        half = self.n_qubits // 2
        return comb(half, self.n_up) * comb(half, self.n_down)


@dataclass(frozen=True)
class ResourceReport:
    n_free_params: int
    n_cnots: int
    depth: int


class _ParamCounter:
    def __init__(self):
        self.n = 0

    def __call__(self):
        self.n += 1
        return Param(self.n - 1)


def build_aswap(sector: SectorSpec, layers: int = 1) -> Circuit:
    """Symmetry-preserving ansatz from tiled A gates.

    X gates fill the lowest qubits of each spin block. Each layer places A
    gates on neighbouring pairs inside every partially-filled block (brick
    offsets alternate in blocks wider than two qubits). When both blocks are
    active, consecutive layers are joined by an A(0, 0) gate on the pair
    straddling the block boundary: it moves no particles but correlates the
    two spin species, which a single layer cannot do. The last free phase
    parameter is pinned to zero.
    """
    if layers < 0:
        raise ValueError("layers must be >= 0")
    n, half = sector.n_qubits, sector.n_qubits // 2
    gates = [Gate("X", (q,)) for q in sector.occupied_qubits()]
    active = sector.active_blocks()
    new = _ParamCounter()
    a_gates: list[list] = []
    for layer in range(layers):
        if layer and len(active) == 2:
            gates.append(Gate("A", (half - 1, half), (0.0, 0.0)))
        offset = layer % 2 if half > 2 else 0
        for block in active:
            for i in range(offset, half - 1, 2):
                spec = [block + i, block + i + 1, new(), new()]
                a_gates.append(spec)
                gates.append(spec)
    if a_gates:
        a_gates[-1][3] = 0.0
    # renumber so free indices stay contiguous after pinning
    remap: dict[int, int] = {}
    out = []
    for g in gates:
        if isinstance(g, list):
            params = []
            for p in g[2:]:
                if isinstance(p, Param):
                    p = Param(remap.setdefault(p.index, len(remap)))
                params.append(p)
            out.append(Gate("A", (g[0], g[1]), tuple(params)))
        else:
            out.append(g)
    return Circuit(n, out, len(remap))


def entangler_map(n_qubits: int, entanglement: str) -> list[tuple[int, int]]:
    if entanglement == "full":
        return [(i, j) for i in range(n_qubits) for j in range(i + 1, n_qubits)]
    if entanglement == "linear":
        return [(i, i + 1) for i in range(n_qubits - 1)]
    raise ValueError(f"entanglement must be 'full' or 'linear', got {entanglement!r}")


def build_adhoc(kind: str, n_qubits: int, depth: int, entanglement: str = "full", occupied=()) -> Circuit:
    """Hardware-style ansatz: rotation layers interleaved with entanglers.

    ``kind`` is ``"RY"``, ``"RYRZ"`` or ``"SwapRZ"``. ``occupied`` lists qubits
    flipped by X gates first; the particle-conserving SwapRZ needs this to
    leave the vacuum.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    pairs = entangler_map(n_qubits, entanglement)
    new = _ParamCounter()
    gates = [Gate("X", (q,)) for q in occupied]

    def rotations():
        for q in range(n_qubits):
            if kind in ("RY", "RYRZ"):
                gates.append(Gate("RY", (q,), (new(),)))
            if kind in ("RYRZ", "SwapRZ"):
                gates.append(Gate("RZ", (q,), (new(),)))

    if kind not in ("RY", "RYRZ", "SwapRZ"):
        raise ValueError(f"unknown ad hoc ansatz {kind!r}")
    rotations()
    for _ in range(depth):
        for a, b in pairs:
            if kind == "SwapRZ":
                gates.append(Gate("PSWAP", (a, b), (new(),)))
            else:
                gates.append(Gate("CZ", (a, b)))
        rotations()
    return Circuit(n_qubits, gates, new.n)


def circuit_depth(c: Circuit) -> int:
    level = [0] * c.n_qubits
    for g in c.gates:
        top = max(level[q] for q in g.qubits) + 1
        for q in g.qubits:
            level[q] = top
    return max(level, default=0)


def resources(c: Circuit) -> ResourceReport:
    """Free parameters, CNOT count (A=3, PSWAP=2, CZ=1) and native depth."""
    n_cnots = sum(CNOT_COST.get(g.kind, 0) for g in c.gates)
    # depth on the native gate set; parameter values do not change structure
    bound = bind_parameters(c, np.full(c.n_free_params, 0.3)) if c.n_free_params else c
    return ResourceReport(c.n_free_params, n_cnots, circuit_depth(decompose(bound)))


def fold_cnots(c: Circuit, fold: int) -> Circuit:
    """Replace every CNOT by ``fold`` copies (odd) to amplify its noise."""
    if fold < 1 or fold % 2 == 0:
        raise ValueError(f"fold must be an odd integer >= 1, got {fold}")
    gates = []
    for g in c.gates:
        gates.extend([g] * fold if g.kind == "CNOT" else [g])
    return Circuit(c.n_qubits, gates, c.n_free_params)


def bind_parameters(c: Circuit, values) -> Circuit:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != c.n_free_params:
        raise ValueError(f"expected {c.n_free_params} parameter values, got {values.size}")
    gates = [
        replace(g, params=tuple(float(values[p.index]) if isinstance(p, Param) else p for p in g.params))
        for g in c.gates
    ]
    return Circuit(c.n_qubits, gates, 0)


def parameter_count(mode: str, n: int, m: int | None = None, s: float | None = None) -> int:
    """Variational parameter count for a register of ``n`` spin orbitals.

    ``full_hilbert``: 2(2^n - 1); ``fixed_n``: 2(C(n, m) - 1);
    ``fixed_n_s_sz``: the spin-adapted count for ``m`` electrons with total
    spin ``s``, evaluated exactly in rational arithmetic.
    """
    if mode == "full_hilbert":
        return 2 * (2**n - 1)
    if m is None or not 0 <= m <= n:
        raise ValueError("fixed-particle modes need 0 <= m <= n")
    if mode == "fixed_n":
        return 2 * (comb(n, m) - 1)
    if mode != "fixed_n_s_sz":
        raise ValueError(f"unknown mode {mode!r}")
    if n % 2 or s is None:
        raise ValueError("fixed_n_s_sz needs even n and a total spin s")
    s = Fraction(s).limit_denominator(2)
    half_m = Fraction(m, 2)
    top = half_m - s
    if s < 0 or top < 0 or top.denominator != 1:
        raise ValueError(f"total spin {s} impossible for {m} electrons")
    total = Fraction(0)
    for k in range(int(top) + 1):
        a = half_m - k - s
        b = half_m - k + s + 1
        total += (
            comb(n // 2, k)
            * comb(n // 2 - k, m - 2 * k)
            * Fraction((2 * s + 1) * factorial(m - 2 * k), factorial(int(a)) * factorial(int(b)))
        )
    if total.denominator != 1:
        raise ArithmeticError(f"non-integer parameter count {total}")
    return int(total)
