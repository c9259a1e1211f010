import json
import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from symvqe.backends import sv_expectation, sv_run
from symvqe.circuits import bind_parameters
from symvqe.fermion import h2_fcidump_path, load_fcidump
from symvqe.pauli import PauliSum, number_operator, sz_operator
from symvqe.vqe import (
    CHEMICAL_ACCURACY,
    CURVE_COLUMNS,
    ConfigError,
    VqeRunConfig,
    build_circuit,
    curve_csv,
    dissociation_curve,
    exact_diagonalize,
    make_objective,
    run_ground,
    sector_basis,
    sector_eigenvalues,
    sector_scan,
)


def test_exact_diagonalize_trivial():
    h = PauliSum.from_list([(0.5, "IZ"), (0.5, "ZI")])
    assert_allclose(exact_diagonalize(h), [-1, 0, 0, 1], atol=1e-14)
    assert_allclose(exact_diagonalize(PauliSum.from_list([(1.0, "Z")]), 2.0), [1, 3])


def test_h2_spectrum(h2_ham, h2_ints):
    spectrum = exact_diagonalize(h2_ham, h2_ints.e_nuc)
    assert spectrum.size == 16 and np.all(np.diff(spectrum) >= 0)
    assert spectrum[0] == pytest.approx(-1.137306, abs=1e-5)


def test_sector_blocks_partition_spectrum(h2_ham):
    sectors = [(m, sz) for m in range(5) for sz in np.arange(-m / 2, m / 2 + 0.5, 1.0) if len(sector_basis(4, m, sz))]
    assert sum(len(sector_basis(4, m, sz)) for m, sz in sectors) == 16
    blocks = np.sort(np.concatenate([sector_eigenvalues(h2_ham, m, sz) for m, sz in sectors]))
    assert_allclose(blocks, exact_diagonalize(h2_ham), atol=1e-10)
    assert math.comb(4, 2) == sum(len(sector_basis(4, 2, sz)) for sz in (-1, 0, 1))
    with pytest.raises(ValueError):
        sector_eigenvalues(h2_ham, 2, 2.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(backend="noisy"),
        dict(backend="sampled", optimizer="lbfgs"),
        dict(ansatz="uccsd"),
        dict(shots=0),
        dict(n_particles=5),
        dict(sz=0.5),
        dict(mitigation="bogus"),
        dict(stretch=0.0),
        dict(optimizer="direct", backend="sampled", folds=(1, 2)),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        VqeRunConfig(**kwargs)


def test_config_dict_roundtrip():
    cfg = VqeRunConfig(ansatz="ry", depth=2, backend="sampled", optimizer="direct", mitigation="spamsy")
    assert VqeRunConfig(**{**cfg.to_dict(), "folds": tuple(cfg.to_dict()["folds"])}) == cfg
    json.dumps(cfg.to_dict())


def test_auto_layers():
    assert build_circuit(VqeRunConfig()).n_free_params == 7
    assert build_circuit(VqeRunConfig(layers=1)).n_free_params == 3
    assert build_circuit(VqeRunConfig(n_particles=1, sz=0.5)).n_free_params == 1


def test_exact_objective_matches_expectation(h2_ints, h2_ham, h2_groups):
    cfg = VqeRunConfig()
    circuit = build_circuit(cfg)
    f = make_objective(cfg, h2_ham, h2_groups, circuit, h2_ints.e_nuc)
    x = np.linspace(0.1, 1.3, circuit.n_free_params)
    value, std = f(x)
    assert std == 0.0
    assert value == pytest.approx(sv_expectation(sv_run(bind_parameters(circuit, x)), h2_ham) + h2_ints.e_nuc, abs=1e-12)


def test_sampled_objective_is_seeded(h2_ints, h2_ham, h2_groups):
    cfg = VqeRunConfig(backend="sampled", optimizer="direct", shots=500, seed=9)
    circuit = build_circuit(cfg)
    x = np.full(circuit.n_free_params, 0.4)
    f1 = make_objective(cfg, h2_ham, h2_groups, circuit, h2_ints.e_nuc)
    f2 = make_objective(cfg, h2_ham, h2_groups, circuit, h2_ints.e_nuc)
    first = [f1(x) for _ in range(3)]
    assert first == [f2(x) for _ in range(3)]
    assert len({v for v, _ in first}) == 3  # fresh shots per call


def test_noisy_objective_respects_variational_bound(h2_ints, h2_ham, h2_groups):
    cfg = VqeRunConfig(backend="noisy", device="vigo", optimizer="direct", mitigation="spamsy")
    circuit = build_circuit(cfg)
    f = make_objective(cfg, h2_ham, h2_groups, circuit, h2_ints.e_nuc)
    e0 = exact_diagonalize(h2_ham, h2_ints.e_nuc)[0]
    rng = np.random.default_rng(0)
    for _ in range(50):
        value, std = f(rng.uniform(0, 2 * np.pi, circuit.n_free_params))
        assert value >= e0 - 3 * std


def test_ground_aswap_noiseless(h2_ints):
    r = run_ground(VqeRunConfig(n_starts=3), h2_ints)
    assert r.abs_error < CHEMICAL_ACCURACY
    assert r.abs_error == pytest.approx(abs(r.energy - r.exact_energy))
    assert abs(r.n_expectation - 2) < 1e-10 and abs(r.sz_expectation) < 1e-10
    assert r.nearest_eigen_index == 0 and r.sector == "N2_Sz+0"
    assert r.evaluations_to_accuracy is not None and r.evaluations_to_accuracy <= r.n_evaluations


def test_trace_is_variational_and_symmetric(h2_ints, h2_ham, h2_groups):
    from symvqe.vqe import optimize

    cfg = VqeRunConfig(seed=3)
    circuit = build_circuit(cfg)
    f = make_objective(cfg, h2_ham, h2_groups, circuit, h2_ints.e_nuc)
    res = optimize(cfg, f)
    e0 = exact_diagonalize(h2_ham, h2_ints.e_nuc)[0]
    assert min(e.value for e in res.trace) >= e0 - 1e-10
    n_op, sz_op = number_operator(4), sz_operator(4)
    for entry in res.trace[::10]:
        psi = sv_run(bind_parameters(circuit, np.array(entry.params)))
        assert abs(sv_expectation(psi, n_op) - 2) < 1e-10
        assert abs(sv_expectation(psi, sz_op)) < 1e-10


def test_ry_depth_one_stalls_above_chemical_accuracy(h2_ints):
    # one CZ layer between RY layers cannot leave the Hartree-Fock energy
    r = run_ground(VqeRunConfig(ansatz="ry", depth=1, n_starts=5), h2_ints)
    assert r.abs_error > CHEMICAL_ACCURACY
    deep = run_ground(VqeRunConfig(ansatz="ry", depth=2, n_starts=10, target_accuracy=1e-4), h2_ints)
    assert deep.abs_error < CHEMICAL_ACCURACY


def test_empty_sector_is_exact(h2_ints):
    # no electrons: every number operator vanishes, leaving nuclear repulsion
    r = run_ground(VqeRunConfig(n_particles=0), h2_ints)
    assert r.n_evaluations == 0
    assert r.energy == pytest.approx(h2_ints.e_nuc, abs=1e-12)
    assert r.abs_error < 1e-12


def test_sector_scan_noiseless(h2_ints):
    results = sector_scan(VqeRunConfig(n_starts=3), h2_ints)
    assert len(results) == 6
    for r in results:
        assert r.abs_error < CHEMICAL_ACCURACY


def test_run_is_reproducible(h2_ints):
    cfg = VqeRunConfig(backend="sampled", optimizer="neldermead", budget=40, shots=300, seed=4, mitigation="sy")
    assert run_ground(cfg, h2_ints).to_json() == run_ground(cfg, h2_ints).to_json()


def test_dissociation_curve_rows_and_csv(tmp_path):
    rows = dissociation_curve(VqeRunConfig(), [1.0])
    assert len(rows) == 1 and rows[0][0] == 1.0
    rows = dissociation_curve(VqeRunConfig(), [0.5, 2.0, 1.0], jobs=2)
    assert [d for d, _ in rows] == [0.5, 2.0, 1.0]
    assert all(r.abs_error < CHEMICAL_ACCURACY for _, r in rows)
    serial = dissociation_curve(VqeRunConfig(), [0.5, 2.0, 1.0], jobs=1)
    assert [r.to_json() for _, r in rows] == [r.to_json() for _, r in serial]
    lines = curve_csv(rows).splitlines()
    assert lines[0].split(",") == list(CURVE_COLUMNS) and len(lines) == 4
    with pytest.raises(FileNotFoundError):
        dissociation_curve(VqeRunConfig(), [0.75])


def test_integral_qubit_mismatch(h2_ints):
    with pytest.raises(ConfigError):
        run_ground(VqeRunConfig(n_qubits=6), h2_ints)


def test_geometry_is_recorded():
    r = run_ground(replace(VqeRunConfig(), n_starts=1), load_fcidump(h2_fcidump_path(1.5)))
    assert "1.5" in r.geometry
