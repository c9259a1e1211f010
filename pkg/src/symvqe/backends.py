"""Statevector and density-matrix simulators plus calibrated device noise.

States are stored with qubit 0 as the least-significant index bit, matching
:mod:`symvqe.pauli`. Internally gates act on a ``(2,) * n`` tensor view where
qubit ``q`` lives on axis ``n - 1 - q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib.resources import files
from pathlib import Path

import numpy as np

from .circuits import Circuit, Param, gate_matrix
from .pauli import PauliString, PauliSum

CPTP_TOL = 1e-10


class DeviceModelError(ValueError):
    """Device calibration data is missing or inconsistent."""


@dataclass
class Statevector:
    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> Statevector:
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def basis(cls, bitstring: str) -> Statevector:
        amps = np.zeros(1 << len(bitstring), dtype=complex)
        amps[int(bitstring, 2)] = 1.0
        return cls(len(bitstring), amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_density_matrix(self) -> DensityMatrix:
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass
class DensityMatrix:
    n_qubits: int
    data: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> DensityMatrix:
        return Statevector.zero(n_qubits).to_density_matrix()

    def probabilities(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.data)), 0.0, None)

    def check(self, tol: float = 1e-10, eig_floor: float = -1e-8) -> None:
        """Raise if not Hermitian, unit-trace and positive semidefinite."""
        rho = self.data
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > tol:
            raise ValueError(f"density matrix trace {np.trace(rho).real:.12f} != 1")
        if np.linalg.eigvalsh(rho).min() < eig_floor:
            raise ValueError("density matrix has a negative eigenvalue")


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def is_cptp(self, tol: float = CPTP_TOL) -> bool:
        total = sum(k.conj().T @ k for k in self.operators)
        return bool(np.max(np.abs(total - np.eye(self.dim))) <= tol)

    def superoperator(self) -> np.ndarray:
        """Row-major vectorisation: ``vec(K rho K^+) = (K kron K*) vec(rho)``."""
        return sum(np.kron(k, k.conj()) for k in self.operators)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.operators)

    def compose(self, after: KrausChannel) -> KrausChannel:
        """Channel ``after . self`` (``self`` acts first)."""
        return KrausChannel(tuple(b @ a for b in after.operators for a in self.operators))

    def tensor(self, other: KrausChannel) -> KrausChannel:
        """``self`` on the low qubit, ``other`` on the high one."""
        return KrausChannel(tuple(np.kron(b, a) for b in other.operators for a in self.operators))


def unitary_channel(u: np.ndarray) -> KrausChannel:
    return KrausChannel((np.asarray(u, dtype=complex),))


def thermal_relaxation_channel(t1: float, t2: float, duration: float) -> KrausChannel:
    """Zero-temperature relaxation: amplitude damping followed by dephasing.

    Populations relax with ``1 - exp(-duration / t1)``; the extra dephasing
    makes coherences decay by exactly ``exp(-duration / t2)``. Times share
    one unit; ``math.inf`` disables a mechanism.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if t1 <= 0 or t2 <= 0 or t2 > 2 * t1 * (1 + 1e-12):
        raise ValueError(f"need 0 < t2 <= 2 t1, got t1={t1}, t2={t2}")
    gamma = -math.expm1(-duration / t1) if math.isfinite(t1) else 0.0
    # coherence left after damping alone is sqrt(1 - gamma) = exp(-duration / (2 t1))
    rate = (1.0 / t2 if math.isfinite(t2) else 0.0) - (0.5 / t1 if math.isfinite(t1) else 0.0)
    lam = -math.expm1(-2 * duration * max(rate, 0.0))
    damp = (
        np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
    )
    dephase = (
        np.array([[1, 0], [0, math.sqrt(1 - lam)]], dtype=complex),
        np.array([[0, 0], [0, math.sqrt(lam)]], dtype=complex),
    )
    return KrausChannel(tuple(d @ a for d in dephase for a in damp))


_PAULI_1Q = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def depolarizing_channel(p: float, n_qubits: int = 1) -> KrausChannel:
    """``rho -> (1 - p) rho + p I / 2^n`` as weighted Pauli Kraus operators."""
    if not 0 <= p <= 1:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    if n_qubits not in (1, 2):
        raise ValueError("depolarizing channel supports 1 or 2 qubits")
    paulis = _PAULI_1Q if n_qubits == 1 else tuple(np.kron(b, a) for b in _PAULI_1Q for a in _PAULI_1Q)
    d2 = len(paulis)
    weights = [1 - p + p / d2] + [p / d2] * (d2 - 1)
    return KrausChannel(tuple(math.sqrt(w) * P for w, P in zip(weights, paulis)))


# ---------------------------------------------------------------------------
# Device models


@dataclass(frozen=True)
class QubitCalibration:
    t1_us: float
    t2_us: float
    p1_given0: float = 0.0
    p0_given1: float = 0.0


@dataclass(frozen=True)
class GateCalibration:
    error_rate: float
    duration_ns: float


@dataclass(frozen=True)
class DeviceModel:
    name: str
    qubits: tuple[QubitCalibration, ...]
    gates: dict = field(default_factory=dict)
    stretch: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if self.stretch <= 0:
            raise DeviceModelError("stretch must be positive")
        for i, q in enumerate(self.qubits):
            t1, t2 = self.t1_us(i), self.t2_us(i)
            if not (t1 > 0 and 0 < t2 <= 2 * t1 * (1 + 1e-12)):
                raise DeviceModelError(f"qubit {i}: need 0 < t2 <= 2 t1 (t1={t1}, t2={t2})")
            if not (0 <= q.p1_given0 <= 1 and 0 <= q.p0_given1 <= 1):
                raise DeviceModelError(f"qubit {i}: readout probabilities outside [0, 1]")
        for kind, g in self.gates.items():
            if not 0 <= g.error_rate <= 1 or g.duration_ns < 0:
                raise DeviceModelError(f"gate {kind}: invalid calibration {g}")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)

    def t1_us(self, q: int) -> float:
        return self.qubits[q].t1_us * self.stretch

    def t2_us(self, q: int) -> float:
        return self.qubits[q].t2_us * self.stretch

    def readout(self, n_qubits: int | None = None) -> list[tuple[float, float]]:
        """Per-qubit ``(p1_given0, p0_given1)`` for the first ``n_qubits``."""
        qs = self.qubits[: n_qubits if n_qubits is not None else len(self.qubits)]
        return [(q.p1_given0, q.p0_given1) for q in qs]

    def gate(self, kind: str) -> GateCalibration:
        try:
            return self.gates[kind]
        except KeyError:
            raise DeviceModelError(f"device {self.name!r} has no calibration for gate {kind!r}") from None

    @classmethod
    def noiseless(cls, n_qubits: int, kinds=("X", "RY", "RZ", "H", "Sdg", "CNOT", "CZ", "A", "PSWAP")) -> DeviceModel:
        qubits = [QubitCalibration(math.inf, math.inf)] * n_qubits
        return cls("noiseless", qubits, {k: GateCalibration(0.0, 0.0) for k in kinds})

    @classmethod
    def readout_only(cls, n_qubits: int, p: float) -> DeviceModel:
        base = cls.noiseless(n_qubits)
        return replace(base, name=f"readout-{p:g}", qubits=[QubitCalibration(math.inf, math.inf, p, p)] * n_qubits)

    def to_dict(self) -> dict:
        def num(x):
            return None if math.isinf(x) else x

        return {
            "name": self.name,
            "qubits": [
                {"t1_us": num(q.t1_us), "t2_us": num(q.t2_us), "readout": {"p1_given0": q.p1_given0, "p0_given1": q.p0_given1}}
                for q in self.qubits
            ],
            "gates": [{"kind": k, "error_rate": g.error_rate, "duration_ns": g.duration_ns} for k, g in self.gates.items()],
            "stretch": self.stretch,
        }

    @classmethod
    def from_dict(cls, data: dict) -> DeviceModel:
        def num(x):
            return math.inf if x is None else float(x)

        try:
            qubits = [
                QubitCalibration(num(q["t1_us"]), num(q["t2_us"]), float(q["readout"]["p1_given0"]), float(q["readout"]["p0_given1"]))
                for q in data["qubits"]
            ]
            gates = {g["kind"]: GateCalibration(float(g["error_rate"]), float(g["duration_ns"])) for g in data["gates"]}
            return cls(str(data["name"]), qubits, gates, float(data.get("stretch", 1.0)))
        except (KeyError, TypeError) as exc:
            raise DeviceModelError(f"malformed device description: {exc!r}") from None


def load_device(path) -> DeviceModel:
    """Load a device JSON file, or a bundled device by name (``"vigo"``)."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and (bundled_devices_dir() / f"{path}.json").exists():
        p = bundled_devices_dir() / f"{path}.json"
    return DeviceModel.from_dict(json.loads(p.read_text()))


def save_device(dev: DeviceModel, path) -> None:
    Path(path).write_text(json.dumps(dev.to_dict(), indent=2) + "\n")


def bundled_devices_dir() -> Path:
    return Path(str(files("symvqe") / "data" / "devices"))


BUNDLED_DEVICES = ("vigo", "boeblingen", "ourense", "johannesburg")


def stretch_device(dev: DeviceModel, factor: float) -> DeviceModel:
    """Scale every T1 and T2 by ``factor``; nothing else changes."""
    if not factor > 0:
        raise DeviceModelError(f"stretch factor must be positive, got {factor}")
    qubits = [replace(q, t1_us=q.t1_us * factor, t2_us=q.t2_us * factor) for q in dev.qubits]
    return replace(dev, qubits=qubits)


# ---------------------------------------------------------------------------
# Simulation kernels


def _axes(qubits, n, offset=0):
    # local index has qubits[0] as LSB, so the most significant local bit comes first
    return [offset + n - 1 - q for q in reversed(qubits)]


def _apply_operator(tensor: np.ndarray, op: np.ndarray, axes: list[int]) -> np.ndarray:
    k = len(axes)
    op_t = op.reshape((2,) * (2 * k))
    out = np.tensordot(op_t, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def _apply_superop(rho_t: np.ndarray, superop: np.ndarray, qubits, n: int) -> np.ndarray:
    k = len(qubits)
    axes = _axes(qubits, n) + _axes(qubits, n, offset=n)
    moved = np.moveaxis(rho_t, axes, list(range(2 * k)))
    shape = moved.shape
    out = (superop @ moved.reshape(1 << (2 * k), -1)).reshape(shape)
    return np.moveaxis(out, list(range(2 * k)), axes)


def sv_run(c: Circuit, initial: Statevector | None = None) -> Statevector:
    """Apply a bound circuit to ``|0...0>`` (or ``initial``)."""
    n = c.n_qubits
    state = initial if initial is not None else Statevector.zero(n)
    psi = np.array(state.amplitudes, dtype=complex)
    for g in c.gates:
        psi = _apply_gate(psi, g.matrix(), g.qubits, n)
    return Statevector(n, psi)


def sv_run_params(c: Circuit, values) -> Statevector:
    """``sv_run(bind_parameters(c, values))`` without building bound gates."""
    values = np.asarray(values, dtype=float)
    if values.size != c.n_free_params:
        raise ValueError(f"expected {c.n_free_params} parameter values, got {values.size}")
    n = c.n_qubits
    psi = Statevector.zero(n).amplitudes
    for g in c.gates:
        params = [values[p.index] if isinstance(p, Param) else p for p in g.params]
        psi = _apply_gate(psi, gate_matrix(g.kind, *params), g.qubits, n)
    return Statevector(n, psi)


def _apply_gate(psi: np.ndarray, m: np.ndarray, qubits, n: int) -> np.ndarray:
    if len(qubits) == 1:
        # bit q of the flat index is the middle axis of this view
        return np.matmul(m, psi.reshape(-1, 2, 1 << qubits[0])).reshape(-1)
    return np.ascontiguousarray(_apply_operator(psi.reshape((2,) * n), m, _axes(qubits, n))).reshape(-1)


@lru_cache(maxsize=4096)
def _pauli_action_cached(x_mask: int, z_mask: int, dim: int):
    idx = np.arange(dim)
    parity = np.zeros(dim, dtype=np.int64)
    q = 0
    while z_mask >> q:
        if (z_mask >> q) & 1:
            parity ^= (idx >> q) & 1
        q += 1
    n_y = bin(x_mask & z_mask).count("1")
    phase = (1j**n_y) * (1 - 2 * parity)
    flipped, phase = idx ^ x_mask, phase
    flipped.flags.writeable = False
    phase.flags.writeable = False
    return flipped, phase


def _pauli_action(p: PauliString, dim: int):
    return _pauli_action_cached(p.x_mask, p.z_mask, dim)


def sv_expectation(psi: Statevector, h: PauliSum) -> float:
    if psi.n_qubits != h.n_qubits:
        raise ValueError(f"state has {psi.n_qubits} qubits, operator {h.n_qubits}")
    amps = psi.amplitudes
    total = 0j
    for coeff, p in h.terms:
        flipped, phase = _pauli_action(p, amps.size)
        total += coeff * np.vdot(amps[flipped], phase * amps)
    return float(total.real)


def dm_expectation(rho: DensityMatrix, h: PauliSum) -> float:
    if rho.n_qubits != h.n_qubits:
        raise ValueError(f"state has {rho.n_qubits} qubits, operator {h.n_qubits}")
    data = rho.data
    idx = np.arange(data.shape[0])
    total = 0j
    for coeff, p in h.terms:
        flipped, phase = _pauli_action(p, data.shape[0])
        # Tr(rho P) = sum_i phase_i rho[i ^ x, i]
        total += coeff * np.sum(phase * data[flipped, idx])
    return float(total.real)


@lru_cache(maxsize=4096)
def _noisy_gate_superop(kind, params, relax, duration_ns, error_rate):
    """Local superoperator: ideal gate, then relaxation, then depolarizing."""
    k = len(relax)
    chan = unitary_channel(gate_matrix(kind, *params))
    if duration_ns > 0:
        relax_chans = [thermal_relaxation_channel(t1 * 1e3, t2 * 1e3, duration_ns) for t1, t2 in relax]
        local = relax_chans[0] if k == 1 else relax_chans[0].tensor(relax_chans[1])
        chan = chan.compose(local)
    sup = chan.superoperator()
    if error_rate > 0:
        sup = depolarizing_channel(error_rate, k).superoperator() @ sup
    return sup


def dm_run(c: Circuit, dev: DeviceModel, initial: DensityMatrix | None = None) -> DensityMatrix:
    """Noisy evolution of a bound circuit; readout error is left to sampling."""
    n = c.n_qubits
    if dev.n_qubits < n:
        raise DeviceModelError(f"device {dev.name!r} has {dev.n_qubits} qubits, circuit needs {n}")
    rho = (initial if initial is not None else DensityMatrix.zero(n)).data.reshape((2,) * (2 * n))
    for g in c.gates:
        if not g.is_bound:
            raise ValueError(f"gate {g} has unbound parameters")
        cal = dev.gate(g.kind)
        relax = tuple((dev.t1_us(q), dev.t2_us(q)) for q in g.qubits)
        sup = _noisy_gate_superop(g.kind, tuple(float(p) for p in g.params), relax, cal.duration_ns, cal.error_rate)
        rho = _apply_superop(rho, sup, g.qubits, n)
    dim = 1 << n
    return DensityMatrix(n, np.ascontiguousarray(rho).reshape(dim, dim))


def apply_channel(rho: DensityMatrix, channel: KrausChannel, qubits) -> DensityMatrix:
    """Apply a local Kraus channel to selected qubits of a density matrix."""
    n = rho.n_qubits
    out = _apply_superop(rho.data.reshape((2,) * (2 * n)), channel.superoperator(), tuple(qubits), n)
    return DensityMatrix(n, np.ascontiguousarray(out).reshape(rho.data.shape))
