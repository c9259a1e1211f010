"""Shot sampling, grouped Pauli estimation and error mitigation.

Three mitigation strategies compose in a fixed order: readout (SPAM)
correction, then particle-number post-selection on Z-basis groups, then
Richardson extrapolation across CNOT fold factors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .backends import DensityMatrix, DeviceModel, Statevector, dm_run, sv_run
from .circuits import Circuit, Gate, decompose, fold_cnots
from .pauli import MeasurementGroup, PauliSum

log = logging.getLogger(__name__)

DEFAULT_SHOTS = 8192
MAX_CONDITION = 1e8

SPAM = "SPAM"
SYMMETRY = "SYMMETRY"
RICHARDSON = "RICHARDSON"


class MitigationError(RuntimeError):
    pass


class EmptyPostselectionError(MitigationError):
    """Every shot violated the particle-number constraint."""


class IllConditionedError(MitigationError):
    """Calibration matrix too ill-conditioned to invert safely."""


@dataclass
class Counts:
    """Bitstring histogram; values may be fractional after SPAM correction."""

    n_qubits: int
    shots: float
    table: dict[str, float]

    def __post_init__(self):
        for b, v in self.table.items():
            if len(b) != self.n_qubits or v < 0:
                raise ValueError(f"invalid count entry {b!r}: {v}")
        if abs(sum(self.table.values()) - self.shots) > 1e-6 * max(1.0, self.shots):
            raise ValueError("counts do not sum to shots")

    @classmethod
    def from_vector(cls, n_qubits: int, vec) -> Counts:
        """Histogram from a length-2^n vector indexed by integer bitstring."""
        vec = np.asarray(vec, dtype=float)
        table = {format(i, f"0{n_qubits}b"): float(v) for i, v in enumerate(vec) if v > 0}
        return cls(n_qubits, float(vec.sum()), table)

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(1 << self.n_qubits)
        for b, v in self.table.items():
            vec[int(b, 2)] = v
        return vec

    def to_json(self) -> str:
        return json.dumps({"shots": self.shots, "table": self.table}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Counts:
        data = json.loads(text)
        table = data["table"]
        n = len(next(iter(table))) if table else 0
        return cls(n, data["shots"], table)


@dataclass
class CalibrationMatrix:
    """Column j is the measured distribution of prepared basis state j.

    ``shots_per_state`` is the sample size behind each column, or None for
    an exactly known matrix; it feeds the calibration term of error bars.
    """

    n_qubits: int
    entries: np.ndarray
    shots_per_state: int | None = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        dim = 1 << self.n_qubits
        if self.entries.shape != (dim, dim):
            raise ValueError(f"calibration matrix must be {dim}x{dim}")
        if np.any(self.entries < -1e-12) or np.any(self.entries > 1 + 1e-12):
            raise ValueError("calibration entries outside [0, 1]")
        if np.max(np.abs(self.entries.sum(axis=0) - 1)) > 1e-10:
            raise ValueError("calibration columns must sum to 1")

    def to_json(self) -> str:
        return json.dumps(
            {"n_qubits": self.n_qubits, "shots_per_state": self.shots_per_state, "entries": self.entries.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> CalibrationMatrix:
        data = json.loads(text)
        return cls(data["n_qubits"], np.array(data["entries"]), data.get("shots_per_state"))


@dataclass(frozen=True)
class MitigationConfig:
    spam: bool = False
    symmetry: bool = False
    target_particles: int | None = None
    richardson: bool = False
    folds: tuple[int, ...] = (1, 3, 5)
    degree: int = 1

    def __post_init__(self):
        folds = tuple(self.folds)
        object.__setattr__(self, "folds", folds)
        if not folds or folds[0] != 1 or any(f % 2 == 0 for f in folds) or any(b <= a for a, b in zip(folds, folds[1:])):
            raise ValueError(f"fold factors must be odd, strictly increasing and start at 1: {folds}")
        if self.symmetry and self.target_particles is None:
            raise ValueError("symmetry post-selection needs target_particles")
        if self.richardson and len(folds) < self.degree + 1:
            raise ValueError("not enough fold factors for the requested fit degree")

    @property
    def tags(self) -> frozenset:
        return frozenset(t for t, on in ((SPAM, self.spam), (SYMMETRY, self.symmetry), (RICHARDSON, self.richardson)) if on)

    @classmethod
    def from_label(cls, label: str, target_particles: int | None = None, folds=(1, 3, 5), degree: int = 1) -> MitigationConfig:
        """Parse combined labels such as ``"none"``, ``"spamsyre"`` or ``"sy,re"``."""
        text = label.lower().replace(",", "").replace("+", "").replace("symmetry", "sy").replace("richardson", "re")
        if text == "none":
            text = ""
        flags = {"spam": False, "sy": False, "re": False}
        for token in ("spam", "sy", "re"):
            if token in text:
                flags[token] = True
                text = text.replace(token, "", 1)
        if text:
            raise ValueError(f"unrecognised mitigation label {label!r}")
        return cls(flags["spam"], flags["sy"], target_particles, flags["re"], tuple(folds), degree)


@dataclass
class EnergyEstimate:
    value: float
    std_error: float
    shots_used: int
    mitigation_tags: frozenset = frozenset()
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")


# ---------------------------------------------------------------------------
# Sampling


def measurement_circuit(group: MeasurementGroup) -> Circuit:
    """Post-rotations mapping the group's shared basis onto Z."""
    gates = []
    for q in range(group.n_qubits):
        letter = group.basis_letter(q)
        if letter == "X":
            gates.append(Gate("H", (q,)))
        elif letter == "Y":
            gates += [Gate("Sdg", (q,)), Gate("H", (q,))]
    return Circuit(group.n_qubits, gates, 0)


def _readout_pairs(readout, n_qubits):
    if readout is None:
        return [(0.0, 0.0)] * n_qubits
    readout = list(readout)
    if len(readout) < n_qubits:
        raise ValueError("readout model covers fewer qubits than the state")
    return readout[:n_qubits]


def confusion_matrix(readout, n_qubits: int) -> np.ndarray:
    """Exact tensor-product readout matrix (column = prepared state)."""
    t = np.ones((1, 1))
    for p10, p01 in _readout_pairs(readout, n_qubits):
        t = np.kron(np.array([[1 - p10, p01], [p10, 1 - p01]]), t)
    return t


def sample_probabilities(probs: np.ndarray, n_qubits: int, shots: int, readout=None, seed=None) -> Counts:
    """Draw ``shots`` outcomes then flip each bit with its readout error."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    probs = np.clip(np.asarray(probs, dtype=float), 0, None)
    outcomes = rng.choice(probs.size, size=shots, p=probs / probs.sum())
    pairs = _readout_pairs(readout, n_qubits)
    if any(p10 or p01 for p10, p01 in pairs):
        bits = (outcomes[:, None] >> np.arange(n_qubits)) & 1
        p_flip = np.where(bits == 0, [p for p, _ in pairs], [p for _, p in pairs])
        bits ^= (rng.random(bits.shape) < p_flip).astype(bits.dtype)
        outcomes = (bits << np.arange(n_qubits)).sum(axis=1)
    return Counts.from_vector(n_qubits, np.bincount(outcomes, minlength=probs.size))


def sample_counts(state: Statevector | DensityMatrix, shots: int, readout=None, seed=None) -> Counts:
    return sample_probabilities(state.probabilities(), state.n_qubits, shots, readout, seed)


def _parity_signs(n_qubits: int, support: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    parity = np.zeros(idx.size, dtype=np.int64)
    for q in range(n_qubits):
        if (support >> q) & 1:
            parity ^= (idx >> q) & 1
    return 1 - 2 * parity


def estimate_expectations(counts: Counts, group: MeasurementGroup, hamiltonian: PauliSum, exact: bool = False):
    """Per-member ``(values, std_errors)`` from post-rotated counts.

    Errors are binomial, ``sqrt((1 - e^2) / shots)``; ``exact=True`` marks
    the table as an exact distribution and zeroes them.
    """
    vec = counts.to_vector()
    total = vec.sum()
    values, errors = [], []
    for idx in group.members:
        p = hamiltonian.terms[idx][1]
        e = float(np.dot(_parity_signs(counts.n_qubits, p.support), vec) / total)
        values.append(e)
        errors.append(0.0 if exact else float(np.sqrt(max(1 - e * e, 0.0) / counts.shots)))
    return np.array(values), np.array(errors)


def symmetry_postselect(counts: Counts, m: int) -> Counts:
    """Keep only bitstrings with Hamming weight ``m``."""
    kept = {b: v for b, v in counts.table.items() if b.count("1") == m and v > 0}
    if not kept:
        raise EmptyPostselectionError(f"no shots with particle number {m}")
    return Counts(counts.n_qubits, float(sum(kept.values())), kept)


def build_spam_matrix(sampler, n_qubits: int, shots_per_state: int, seed=0) -> CalibrationMatrix:
    """Measure every basis state prepared with X gates.

    ``sampler(circuit, shots, seed) -> Counts`` executes a bound circuit.
    """
    if shots_per_state < 1:
        raise ValueError("shots_per_state must be >= 1")
    dim = 1 << n_qubits
    seeds = np.random.SeedSequence(seed).spawn(dim)
    cols = []
    for j in range(dim):
        prep = Circuit(n_qubits, [Gate("X", (q,)) for q in range(n_qubits) if (j >> q) & 1], 0)
        counts = sampler(prep, shots_per_state, seeds[j])
        vec = counts.to_vector()
        cols.append(vec / vec.sum())
    return CalibrationMatrix(n_qubits, np.column_stack(cols), shots_per_state)


def apply_spam_correction(counts: Counts, cal: CalibrationMatrix) -> Counts:
    """Least-squares unfold of the readout confusion, clamped and rescaled."""
    if cal.n_qubits != counts.n_qubits:
        raise ValueError("calibration and counts disagree on qubit count")
    cond = np.linalg.cond(cal.entries)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise IllConditionedError(f"calibration condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    y = counts.to_vector()
    x, *_ = np.linalg.lstsq(cal.entries, y, rcond=None)
    x = np.clip(x, 0, None)
    if x.sum() <= 0:
        raise MitigationError("SPAM correction removed every count")
    x *= y.sum() / x.sum()
    return Counts.from_vector(counts.n_qubits, x)


def richardson_extrapolate(points, degree: int = 1) -> EnergyEstimate:
    """Polynomial least-squares fit of energy vs fold factor, read at zero.

    ``points`` holds ``(fold_factor, energy, std_error)`` triples. The
    intercept is a fixed linear combination of the energies, so its error
    propagates exactly from the inputs.
    """
    pts = [(float(f), float(e), float(s)) for f, e, s in points]
    factors = np.array([p[0] for p in pts])
    if len(pts) < degree + 1:
        raise ValueError(f"degree-{degree} fit needs at least {degree + 1} points, got {len(pts)}")
    if len(set(factors)) != len(factors):
        raise ValueError("fold factors must be distinct")
    vander = np.vander(factors, degree + 1, increasing=True)
    weights = np.linalg.pinv(vander)[0]
    energies = np.array([p[1] for p in pts])
    errors = np.array([p[2] for p in pts])
    value = float(weights @ energies)
    std = float(np.sqrt(np.sum((weights * errors) ** 2)))
    return EnergyEstimate(value, std, 0, frozenset({RICHARDSON}))


# ---------------------------------------------------------------------------
# Execution and energy assembly


@dataclass
class Backend:
    """Executes bound circuits: ``"statevector"`` or ``"noisy"`` (density matrix).

    The device supplies readout errors for both kinds and gate noise for the
    noisy kind. Noisy circuits are rewritten into native gates first.
    """

    kind: str = "statevector"
    device: DeviceModel | None = None

    def __post_init__(self):
        if self.kind not in ("statevector", "noisy"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "noisy" and self.device is None:
            raise ValueError("noisy backend requires a device model")

    def native(self, c: Circuit) -> Circuit:
        return decompose(c) if self.kind == "noisy" else c

    def prepare(self, c: Circuit, initial=None):
        if self.kind == "noisy":
            return dm_run(decompose(c), self.device, initial)
        return sv_run(c, initial)

    def readout(self, n_qubits: int):
        return self.device.readout(n_qubits) if self.device is not None else None

    def sample(self, c: Circuit, shots: int, seed=None) -> Counts:
        """Prepare and measure ``c`` in the computational basis."""
        return sample_counts(self.prepare(c), shots, self.readout(c.n_qubits), seed)


_SPAM_CACHE: dict = {}


def spam_matrix_for(backend: Backend, n_qubits: int, shots: int = DEFAULT_SHOTS, seed: int = 0) -> CalibrationMatrix:
    """Calibration matrix built once per (device, shots, seed) and reused."""
    dev = backend.device
    key = (backend.kind, json.dumps(dev.to_dict(), sort_keys=True) if dev else None, n_qubits, shots, seed)
    if key not in _SPAM_CACHE:
        _SPAM_CACHE[key] = build_spam_matrix(backend.sample, n_qubits, shots, seed)
    return _SPAM_CACHE[key]


def _propagated_errors(raw, corrected, keep, signs, cal, exact):
    """Delta-method errors of post-selected, SPAM-corrected expectations.

    Each value is ``e = sum_S s x / sum_S x`` with ``x = A^-1 y`` for a
    diagonal observable ``s``. Its
    gradient with respect to the raw counts ``y`` is ``A^-T dE/dx``; shot
    noise enters through the multinomial covariance of ``y`` and
    calibration noise through that of each column of ``A``.
    """
    if exact:
        return np.zeros(len(signs))
    shots = raw.sum()
    p = raw / shots
    kept = corrected * keep
    total = kept.sum()
    have_cal = cal is not None
    finite_cal = have_cal and cal.shots_per_state is not None
    errors = []
    for s in signs:
        e = float(np.dot(s, kept) / total)
        grad_x = keep * (s - e) / total
        grad_y = np.linalg.solve(cal.entries.T, grad_x) if have_cal else grad_x
        var = shots * (np.dot(p, grad_y**2) - np.dot(p, grad_y) ** 2)
        if finite_cal:
            a = cal.entries
            col_var = (a.T @ grad_y**2 - (a.T @ grad_y) ** 2) / cal.shots_per_state
            var += float(np.dot(corrected**2, col_var))
        errors.append(np.sqrt(max(var, 0.0)))
    return np.array(errors)


def _group_estimate(hamiltonian, group, counts, config, cal, warnings, exact=False):
    n = counts.n_qubits
    raw = counts.to_vector()
    corrected = raw
    used_cal = None
    if config.spam and cal is not None:
        try:
            corrected = apply_spam_correction(counts, cal).to_vector()
            used_cal = cal
        except IllConditionedError as exc:
            warnings.append(f"SPAM correction skipped: {exc}")
    keep = np.ones(raw.size)
    if config.symmetry and group.z_only:
        weights = np.array([bin(i).count("1") for i in range(raw.size)])
        mask = (weights == config.target_particles).astype(float)
        if np.dot(mask, corrected) > 0:
            keep = mask
        else:
            warnings.append(
                f"post-selection fell back to raw counts: no shots with particle number {config.target_particles}"
            )
    members = [i for i in group.members if not hamiltonian.terms[i][1].is_identity()]
    # the group energy is one diagonal observable on the shared sample
    diag = sum(hamiltonian.terms[i][0] * _parity_signs(n, hamiltonian.terms[i][1].support) for i in members)
    kept = corrected * keep
    energy = float(np.dot(diag, kept) / kept.sum())
    (error,) = _propagated_errors(raw, corrected, keep, [diag], used_cal, exact)
    return energy, float(error**2)


def energy_from_groups(
    hamiltonian: PauliSum,
    groups: list[MeasurementGroup],
    backend: Backend,
    circuit: Circuit,
    shots: int | None = DEFAULT_SHOTS,
    mitigation: MitigationConfig | None = None,
    e_offset: float = 0.0,
    seed=0,
    spam_matrix: CalibrationMatrix | None = None,
) -> EnergyEstimate:
    """Estimate ``<H> + e_offset`` from one measured experiment per group.

    ``shots=None`` replaces sampling by the exact outcome distribution
    (including the readout confusion), giving zero statistical error.
    Identity terms are added exactly.
    """
    config = mitigation or MitigationConfig()
    n = hamiltonian.n_qubits
    if circuit.n_qubits != n:
        raise ValueError("circuit and Hamiltonian disagree on qubit count")
    constant = hamiltonian.identity_coefficient() + e_offset
    measured = [g for g in groups if any(not hamiltonian.terms[i][1].is_identity() for i in g.members)]
    if not measured:
        return EnergyEstimate(constant, 0.0, 0, config.tags)
    cal = None
    if config.spam:
        cal = spam_matrix if spam_matrix is not None else spam_matrix_for(backend, n, shots or DEFAULT_SHOTS)
    folds = config.folds if config.richardson else (1,)
    seeds = np.random.SeedSequence(seed).spawn(len(folds) * len(measured))
    readout = backend.readout(n)
    warnings: list[str] = []
    points = []
    native = backend.native(circuit)
    for fi, fold in enumerate(folds):
        state = backend.prepare(fold_cnots(native, fold))
        energy, var = constant, 0.0
        for gi, group in enumerate(measured):
            post = measurement_circuit(group)
            rotated = backend.prepare(post, initial=state) if post.gates else state
            if shots is None:
                counts = Counts.from_vector(n, confusion_matrix(readout, n) @ rotated.probabilities())
            else:
                counts = sample_counts(rotated, shots, readout, seeds[fi * len(measured) + gi])
            e, v = _group_estimate(hamiltonian, group, counts, config, cal, warnings, exact=shots is None)
            energy += e
            var += v
        points.append((fold, energy, float(np.sqrt(var))))
    shots_used = (shots or 0) * len(measured) * len(folds)
    if config.richardson:
        est = richardson_extrapolate(points, config.degree)
        value, std = est.value, est.std_error
    else:
        value, std = points[0][1], points[0][2]
    for w in warnings:
        log.warning(w)
    return EnergyEstimate(value, std, shots_used, config.tags, warnings)
