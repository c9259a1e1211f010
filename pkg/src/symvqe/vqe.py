"""VQE orchestration: ground states, symmetry-sector scans and dissociation curves."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .backends import DeviceModel, dm_expectation, load_device, stretch_device, sv_expectation, sv_run, sv_run_params
from .circuits import Circuit, SectorSpec, bind_parameters, build_adhoc, build_aswap
from .fermion import FermionIntegrals, h2_fcidump_path, load_fcidump, molecular_hamiltonian
from .mitigation import Backend, MitigationConfig, energy_from_groups, spam_matrix_for
from .optimizers import (
    Bounds,
    ObjectiveFunction,
    OptimizerResult,
    direct_minimize,
    lbfgs_fd_minimize,
    multistart,
    nelder_mead_minimize,
)
from .pauli import PauliSum, group_qubitwise_commuting, number_operator, pauli_to_matrix, sz_operator

CHEMICAL_ACCURACY = 1.5e-3
ANSATZ_KINDS = ("aswap", "ry", "ryrz", "swaprz")
BACKENDS = ("statevector", "sampled", "noisy")
OPTIMIZERS = ("lbfgs", "direct", "neldermead")
DEFAULT_BUDGETS = {"lbfgs": 10000, "direct": 300, "neldermead": 400}
DEFAULT_SECTORS = ((0, 0.0), (1, 0.5), (2, 0.0), (2, 1.0), (3, 0.5), (4, 0.0))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VqeRunConfig:
    """Everything needed to reproduce one VQE run.

    ``layers=None`` picks the ASWAP layer count automatically: two layers
    (with a spin-coupling gate between them) when both spin blocks are
    partially filled, else one. ``mitigation`` is a combined label such as
    ``"spamsyre"``; Richardson runs only at the final re-evaluation unless
    ``richardson_in_loop`` is set. ``target_accuracy`` stops a multistart
    once a run lands that close to the exact energy.
    """

    ansatz: str = "aswap"
    n_qubits: int = 4
    n_particles: int = 2
    sz: float = 0.0
    depth: int = 1
    entanglement: str = "full"
    layers: int | None = None
    backend: str = "statevector"
    device: str | None = None
    stretch: float = 1.0
    shots: int = 8192
    optimizer: str = "lbfgs"
    budget: int | None = None
    n_starts: int = 1
    mitigation: str = "none"
    folds: tuple[int, ...] = (1, 3, 5)
    fit_degree: int = 1
    richardson_in_loop: bool = False
    final_shots_factor: int = 4
    target_accuracy: float | None = None
    seed: int = 0
    spam_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "folds", tuple(self.folds))
        if self.ansatz not in ANSATZ_KINDS:
            raise ConfigError(f"ansatz must be one of {ANSATZ_KINDS}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.backend == "noisy" and not self.device:
            raise ConfigError("the noisy backend requires a device file")
        if self.optimizer == "lbfgs" and self.backend != "statevector":
            raise ConfigError("lbfgs needs the exact statevector backend")
        if self.shots < 1:
            raise ConfigError("shots must be >= 1")
        if self.n_starts < 1 or (self.budget is not None and self.budget < 1):
            raise ConfigError("n_starts and budget must be >= 1")
        if self.depth < 0 or (self.layers is not None and self.layers < 0):
            raise ConfigError("depth and layers must be >= 0")
        if self.stretch <= 0:
            raise ConfigError("stretch must be positive")
        try:
            self.sector
            self.mitigation_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def sector(self) -> SectorSpec:
        return SectorSpec(self.n_qubits, self.n_particles, self.sz)

    @property
    def calibration_seed(self) -> int:
        return self.seed if self.spam_seed is None else self.spam_seed

    @property
    def effective_budget(self) -> int:
        return self.budget if self.budget is not None else DEFAULT_BUDGETS[self.optimizer]

    def mitigation_config(self, final: bool = True) -> MitigationConfig:
        cfg = MitigationConfig.from_label(self.mitigation, self.n_particles, self.folds, self.fit_degree)
        if not final and not self.richardson_in_loop:
            cfg = replace(cfg, richardson=False)
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["folds"] = list(self.folds)
        return d


@dataclass
class VqeResult:
    energy: float
    exact_energy: float
    abs_error: float
    params: list[float]
    n_evaluations: int
    n_expectation: float
    sz_expectation: float
    std_error: float = 0.0
    mitigation_tags: list[str] = field(default_factory=list)
    sector: str | None = None
    nearest_eigen_index: int = 0
    evaluations_to_accuracy: int | None = None
    geometry: str = ""
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def exact_diagonalize(h: PauliSum, e_offset: float = 0.0) -> np.ndarray:
    return np.linalg.eigvalsh(pauli_to_matrix(h)) + e_offset


def sector_basis(n_qubits: int, n_particles: int, sz: float) -> np.ndarray:
    """Computational basis indices with the given particle number and S_z."""
    half = n_qubits // 2
    idx = np.arange(1 << n_qubits)
    up = np.array([bin(i & ((1 << half) - 1)).count("1") for i in idx])
    down = np.array([bin(i >> half).count("1") for i in idx])
    return idx[(up + down == n_particles) & np.isclose((up - down) / 2, sz)]


def sector_eigenvalues(h: PauliSum, n_particles: int, sz: float, e_offset: float = 0.0) -> np.ndarray:
    """Spectrum of ``h`` restricted to one (N, S_z) sector.

    The molecular Hamiltonian conserves both quantum numbers, so the sector
    block of the dense matrix is exactly its projection.
    """
    basis = sector_basis(h.n_qubits, n_particles, sz)
    if basis.size == 0:
        raise ValueError(f"empty sector N={n_particles}, Sz={sz}")
    m = pauli_to_matrix(h)
    return np.linalg.eigvalsh(m[np.ix_(basis, basis)]) + e_offset


def build_circuit(config: VqeRunConfig) -> Circuit:
    sector = config.sector
    if config.ansatz == "aswap":
        layers = config.layers
        if layers is None:
            layers = 2 if len(sector.active_blocks()) == 2 else 1
        return build_aswap(sector, layers)
    kind = {"ry": "RY", "ryrz": "RYRZ", "swaprz": "SwapRZ"}[config.ansatz]
    occupied = sector.occupied_qubits() if kind == "SwapRZ" else ()
    return build_adhoc(kind, config.n_qubits, config.depth, config.entanglement, occupied)


def make_backend(config: VqeRunConfig) -> Backend:
    if config.backend == "statevector" or (config.backend == "sampled" and not config.device):
        return Backend("statevector")
    dev = config.device if isinstance(config.device, DeviceModel) else load_device(config.device)
    if config.stretch != 1.0:
        dev = stretch_device(dev, config.stretch)
    return Backend("noisy" if config.backend == "noisy" else "statevector", dev)


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([abs(int(p)) for p in parts]).generate_state(1)[0])


def make_objective(config: VqeRunConfig, hamiltonian: PauliSum, groups, circuit: Circuit, e_nuc: float, backend: Backend | None = None) -> ObjectiveFunction:
    """Energy objective over the circuit's free parameters.

    The exact path returns ``<H> + e_nuc`` with zero error; sampled paths
    seed the k-th call from ``(seed, k)``, so identical runs agree exactly.
    """
    if config.backend == "statevector":
        dense = pauli_to_matrix(hamiltonian)

        def exact(x):
            amps = sv_run_params(circuit, x).amplitudes
            return float(np.vdot(amps, dense @ amps).real) + e_nuc

        return ObjectiveFunction(circuit.n_free_params, exact)

    backend = backend or make_backend(config)
    mit = config.mitigation_config(final=False)
    cal = spam_matrix_for(backend, hamiltonian.n_qubits, config.shots, config.calibration_seed) if mit.spam else None
    counter = {"k": 0}

    def sampled(x):
        counter["k"] += 1
        est = energy_from_groups(
            hamiltonian, groups, backend, bind_parameters(circuit, x), config.shots, mit, e_nuc,
            seed=_derive_seed(config.seed, counter["k"]), spam_matrix=cal,
        )
        return est.value, est.std_error

    return ObjectiveFunction(circuit.n_free_params, sampled, stochastic=True)


def optimize(config: VqeRunConfig, objective: ObjectiveFunction, target: float | None = None) -> OptimizerResult:
    dim = objective.arity
    bounds = Bounds.box(dim, 0.0, 2 * math.pi)
    budget = config.effective_budget
    if config.optimizer == "direct":
        # DIRECT is deterministic given the box; extra starts would repeat it
        return direct_minimize(objective, bounds, budget)
    if config.optimizer == "neldermead":
        def run(x0):
            return nelder_mead_minimize(objective, x0, step=0.5, budget=max(budget, dim + 1), tol=1e-10)
    else:
        def run(x0):
            return lbfgs_fd_minimize(objective, x0, budget=budget)
    return multistart(run, config.n_starts, config.seed, bounds, target=target)


def _hamiltonian_parts(ints: FermionIntegrals):
    h = molecular_hamiltonian(ints)
    return h, group_qubitwise_commuting(h)


def run_ground(config: VqeRunConfig, ints: FermionIntegrals, exact_energy: float | None = None) -> VqeResult:
    """Optimize, then re-evaluate the best parameters with more shots."""
    h, groups = _hamiltonian_parts(ints)
    if h.n_qubits != config.n_qubits:
        raise ConfigError(f"integrals give {h.n_qubits} qubits, config says {config.n_qubits}")
    circuit = build_circuit(config)
    spectrum = exact_diagonalize(h, ints.e_nuc)
    if exact_energy is None:
        if config.ansatz == "aswap":
            exact_energy = float(sector_eigenvalues(h, config.n_particles, config.sz, ints.e_nuc)[0])
        else:
            exact_energy = float(spectrum[0])
    backend = make_backend(config)
    objective = make_objective(config, h, groups, circuit, ints.e_nuc, backend)

    if circuit.n_free_params == 0:
        opt = OptimizerResult(np.zeros(0), math.nan, 0, [], "no free parameters")
    else:
        target = exact_energy + config.target_accuracy if config.target_accuracy is not None else None
        opt = optimize(config, objective, target)
    params = opt.best_params
    bound = bind_parameters(circuit, params)

    warnings: list[str] = []
    if config.backend == "statevector":
        energy = sv_expectation(sv_run(bound), h) + ints.e_nuc
        std = 0.0
        tags: list[str] = []
    else:
        est = energy_from_groups(
            h, groups, backend, bound, config.shots * config.final_shots_factor, config.mitigation_config(final=True),
            ints.e_nuc, seed=_derive_seed(config.seed, 0, 1),
            spam_matrix=spam_matrix_for(backend, h.n_qubits, config.shots, config.calibration_seed) if config.mitigation_config().spam else None,
        )
        energy, std, tags, warnings = est.value, est.std_error, sorted(est.mitigation_tags), est.warnings

    n_op, sz_op = number_operator(h.n_qubits), sz_operator(h.n_qubits)
    if backend.kind == "noisy":
        rho = backend.prepare(bound)
        n_mean, sz_mean = dm_expectation(rho, n_op), dm_expectation(rho, sz_op)
    else:
        psi = sv_run(bound)
        n_mean, sz_mean = sv_expectation(psi, n_op), sv_expectation(psi, sz_op)

    evals_to = opt.evaluations_to(exact_energy + CHEMICAL_ACCURACY) if opt.trace else None
    return VqeResult(
        energy=float(energy),
        exact_energy=float(exact_energy),
        abs_error=float(abs(energy - exact_energy)),
        params=[float(p) for p in params],
        n_evaluations=opt.n_evaluations,
        n_expectation=float(n_mean),
        sz_expectation=float(sz_mean),
        std_error=float(std),
        mitigation_tags=list(tags),
        sector=config.sector.label if config.ansatz in ("aswap", "swaprz") else None,
        nearest_eigen_index=int(np.argmin(np.abs(spectrum - energy))),
        evaluations_to_accuracy=evals_to,
        geometry=ints.geometry_tag,
        warnings=warnings,
    )


def _pool_map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _sector_task(args):
    config, ints = args
    return run_ground(config, ints)


def sector_scan(template: VqeRunConfig, ints: FermionIntegrals, sectors=DEFAULT_SECTORS, jobs: int = 1) -> list[VqeResult]:
    """Independent ASWAP runs per (N, S_z) sector, each against its own exact minimum."""
    tasks = []
    for i, (m, sz) in enumerate(sectors):
        SectorSpec(template.n_qubits, m, sz)
        cfg = replace(template, ansatz="aswap", n_particles=m, sz=sz, seed=_derive_seed(template.seed, i), spam_seed=template.calibration_seed)
        tasks.append((cfg, ints))
    return _pool_map(_sector_task, tasks, jobs)


def _curve_task(args):
    config, path = args
    return run_ground(config, load_fcidump(path))


def dissociation_curve(config: VqeRunConfig, distances, directory=None, jobs: int = 1) -> list[tuple[float, VqeResult]]:
    """One VQE per bond distance with independent seeds, in distance order."""
    paths = [h2_fcidump_path(d, directory) for d in distances]
    # the SPAM calibration stays tied to the master seed so one matrix serves the curve
    spam_seed = config.calibration_seed
    tasks = [(replace(config, seed=_derive_seed(config.seed, i), spam_seed=spam_seed), p) for i, p in enumerate(paths)]
    results = _pool_map(_curve_task, tasks, jobs)
    return list(zip([float(d) for d in distances], results))


CURVE_COLUMNS = ("distance", "energy", "exact_energy", "abs_err", "abs_log_err", "n_mean", "sz_mean", "evals")


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, float) else str(x)


def curve_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_COLUMNS)
    for d, r in rows:
        log_err = math.log10(r.abs_error) if r.abs_error > 0 else -math.inf
        writer.writerow([_fmt(v) for v in (d, r.energy, r.exact_energy, r.abs_error, log_err, r.n_expectation, r.sz_expectation, r.n_evaluations)])
    return buf.getvalue()
