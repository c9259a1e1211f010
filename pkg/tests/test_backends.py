import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from symvqe.backends import (
    BUNDLED_DEVICES,
    DensityMatrix,
    DeviceModel,
    DeviceModelError,
    GateCalibration,
    KrausChannel,
    QubitCalibration,
    Statevector,
    apply_channel,
    depolarizing_channel,
    dm_expectation,
    dm_run,
    load_device,
    save_device,
    stretch_device,
    sv_expectation,
    sv_run,
    sv_run_params,
    thermal_relaxation_channel,
)
from symvqe.circuits import Circuit, Gate, SectorSpec, bind_parameters, build_aswap, circuit_unitary, decompose
from symvqe.pauli import PauliSum, pauli_to_matrix

KINDS_1Q = ("X", "RY", "RZ", "H", "Sdg")


def random_circuit(rng, n=4, n_gates=20, native=False):
    gates = []
    kinds = ["X", "RY", "RZ", "H", "Sdg", "CNOT"] + ([] if native else ["CZ", "A", "PSWAP"])
    for _ in range(n_gates):
        kind = kinds[rng.integers(len(kinds))]
        if kind in ("CNOT", "CZ", "A", "PSWAP"):
            qubits = tuple(int(q) for q in rng.choice(n, 2, replace=False))
        else:
            qubits = (int(rng.integers(n)),)
        n_params = {"RY": 1, "RZ": 1, "PSWAP": 1, "A": 2}.get(kind, 0)
        gates.append(Gate(kind, qubits, tuple(rng.uniform(-math.pi, math.pi, n_params))))
    return Circuit(n, gates, 0)


def test_x_on_qubit_zero():
    psi = sv_run(Circuit(2, [Gate("X", (0,))], 0))
    assert_allclose(psi.amplitudes, Statevector.basis("01").amplitudes)


def test_aswap_at_zero_is_reference_basis_state():
    c = bind_parameters(build_aswap(SectorSpec(4, 2, 0)), np.zeros(3))
    amps = sv_run(c).amplitudes
    k = int(np.argmax(np.abs(amps)))
    assert format(k, "04b") == "0101"
    assert abs(abs(amps[k]) - 1) < 1e-12 and abs(amps[k].imag) < 1e-12


def test_sv_run_matches_dense_unitary_and_is_normalized():
    rng = np.random.default_rng(3)
    for _ in range(100):
        c = random_circuit(rng)
        psi = sv_run(c).amplitudes
        assert_allclose(psi, circuit_unitary(c)[:, 0], atol=1e-10)
        assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_sv_run_params_matches_bind():
    c = build_aswap(SectorSpec(4, 2, 0), layers=2)
    x = np.linspace(0.1, 2.0, c.n_free_params)
    assert_allclose(sv_run_params(c, x).amplitudes, sv_run(bind_parameters(c, x)).amplitudes, atol=1e-14)


def test_unbound_parameters_rejected():
    with pytest.raises(ValueError):
        sv_run(build_aswap(SectorSpec(4, 2, 0)))


def test_expectation_basics(h2_ham):
    z = PauliSum.from_list([(1.0, "Z")])
    assert sv_expectation(Statevector.basis("0"), z) == pytest.approx(1.0)
    assert sv_expectation(Statevector.basis("1"), z) == pytest.approx(-1.0)
    m = pauli_to_matrix(h2_ham)
    w, v = np.linalg.eigh(m)
    assert sv_expectation(Statevector(4, v[:, 0].astype(complex)), h2_ham) == pytest.approx(w[0], abs=1e-10)
    with pytest.raises(ValueError):
        sv_expectation(Statevector.basis("01"), h2_ham)


def test_expectation_matches_dense_for_random_states(h2_ham):
    rng = np.random.default_rng(0)
    m = pauli_to_matrix(h2_ham)
    for _ in range(20):
        v = rng.normal(size=16) + 1j * rng.normal(size=16)
        v /= np.linalg.norm(v)
        psi = Statevector(4, v)
        assert sv_expectation(psi, h2_ham) == pytest.approx(np.vdot(v, m @ v).real, abs=1e-12)
        assert dm_expectation(psi.to_density_matrix(), h2_ham) == pytest.approx(np.vdot(v, m @ v).real, abs=1e-12)


def test_thermal_relaxation_limits():
    ident = thermal_relaxation_channel(50.0, 70.0, 0.0)
    rho = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
    assert_allclose(ident.apply(rho), rho, atol=1e-14)
    assert_allclose(thermal_relaxation_channel(math.inf, math.inf, 100.0).apply(rho), rho, atol=1e-14)
    decayed = thermal_relaxation_channel(1.0, 1.5, 50.0).apply(np.diag([0.0, 1.0]).astype(complex))
    assert_allclose(decayed, np.diag([1.0, 0.0]), atol=1e-6)
    with pytest.raises(ValueError):
        thermal_relaxation_channel(10.0, 25.0, 1.0)


def test_thermal_relaxation_rates():
    t1, t2, t = 80.0, 60.0, 7.0
    ch = thermal_relaxation_channel(t1, t2, t)
    plus = np.full((2, 2), 0.5, dtype=complex)
    out = ch.apply(plus)
    assert abs(out[0, 1]) == pytest.approx(0.5 * math.exp(-t / t2), rel=1e-12)
    excited = ch.apply(np.diag([0.0, 1.0]).astype(complex))
    assert excited[0, 0].real == pytest.approx(1 - math.exp(-t / t1), rel=1e-12)


def test_depolarizing_channel():
    rho = np.array([[0.9, 0.1], [0.1, 0.1]], dtype=complex)
    assert_allclose(depolarizing_channel(0.0).apply(rho), rho, atol=1e-15)
    assert_allclose(depolarizing_channel(1.0).apply(rho), np.eye(2) / 2, atol=1e-15)
    assert depolarizing_channel(0.37).is_cptp()
    assert depolarizing_channel(0.37, 2).is_cptp()
    with pytest.raises(ValueError):
        depolarizing_channel(1.2)


def test_channels_are_cptp():
    rng = np.random.default_rng(1)
    for _ in range(50):
        t1 = rng.uniform(1, 200)
        t2 = rng.uniform(0.1, 2 * t1)
        assert thermal_relaxation_channel(t1, t2, rng.uniform(0, 500)).is_cptp()
        assert depolarizing_channel(rng.uniform(), int(rng.integers(1, 3))).is_cptp()


def test_non_cptp_detected():
    assert not KrausChannel((np.eye(2) * 1.1,)).is_cptp()


def test_noiseless_device_matches_statevector():
    rng = np.random.default_rng(5)
    dev = DeviceModel.noiseless(4)
    for _ in range(10):
        c = random_circuit(rng, native=True)
        psi = sv_run(c).amplitudes
        assert_allclose(dm_run(c, dev).data, np.outer(psi, psi.conj()), atol=1e-10)


def test_full_depolarizing_x_gate():
    dev = DeviceModel("bad-x", [QubitCalibration(math.inf, math.inf)], {"X": GateCalibration(1.0, 0.0)})
    rho = dm_run(Circuit(1, [Gate("X", (0,))], 0), dev)
    assert_allclose(rho.data, np.eye(2) / 2, atol=1e-12)


def test_missing_calibration():
    dev = DeviceModel("tiny", [QubitCalibration(50, 50)] * 2, {"X": GateCalibration(0.0, 10.0)})
    with pytest.raises(DeviceModelError):
        dm_run(Circuit(2, [Gate("CNOT", (0, 1))], 0), dev)


@pytest.mark.parametrize("name", BUNDLED_DEVICES)
def test_dm_run_keeps_valid_state(name):
    dev = load_device(name)
    rng = np.random.default_rng(11)
    for _ in range(25):
        rho = dm_run(random_circuit(rng, native=True), dev)
        rho.check(tol=1e-10, eig_floor=-1e-8)


def test_fully_depolarized_h2_energy(h2_ham):
    rho = DensityMatrix(4, np.eye(16, dtype=complex) / 16)
    assert dm_expectation(rho, h2_ham) == pytest.approx(h2_ham.identity_coefficient(), abs=1e-12)
    rho1 = DensityMatrix(1, np.eye(2, dtype=complex) / 2)
    assert dm_expectation(rho1, PauliSum.from_list([(1.0, "Z")])) == pytest.approx(0.0)


def test_apply_channel_on_subsystem():
    rho = DensityMatrix.zero(2)
    out = apply_channel(rho, depolarizing_channel(1.0), [1])
    assert_allclose(out.data, np.kron(np.eye(2) / 2, np.diag([1, 0])), atol=1e-14)


def test_device_json_roundtrip(tmp_path):
    dev = load_device("vigo")
    path = tmp_path / "dev.json"
    save_device(dev, path)
    assert load_device(path) == dev
    assert set(dev.gates) >= {"X", "RY", "RZ", "H", "Sdg", "CNOT"}


def test_device_invariants():
    with pytest.raises(DeviceModelError):
        DeviceModel("bad", [QubitCalibration(10.0, 30.0)], {})
    with pytest.raises(DeviceModelError):
        DeviceModel("bad", [QubitCalibration(10.0, 10.0, 1.5, 0.0)], {})
    with pytest.raises(DeviceModelError):
        DeviceModel.from_dict({"name": "x"})


def test_stretch_device():
    dev = load_device("vigo")
    assert stretch_device(dev, 1.0) == dev
    s4 = stretch_device(dev, 4.0)
    for a, b in zip(dev.qubits, s4.qubits):
        assert b.t1_us == pytest.approx(4 * a.t1_us) and b.t2_us == pytest.approx(4 * a.t2_us)
        assert (b.p1_given0, b.p0_given1) == (a.p1_given0, a.p0_given1)
    assert s4.gates == dev.gates and s4.stretch == dev.stretch
    with pytest.raises(DeviceModelError):
        stretch_device(dev, 0.0)


def test_relaxation_only_converges_to_ideal_with_stretch():
    base = load_device("vigo")
    dev = DeviceModel(
        "relax-only", base.qubits, {k: GateCalibration(0.0, g.duration_ns) for k, g in base.gates.items()}
    )
    c = decompose(bind_parameters(build_aswap(SectorSpec(4, 2, 0), layers=2), np.linspace(0.2, 1.4, 7)))
    psi = sv_run(c).amplitudes
    infid = []
    for factor in (1.0, 10.0, 100.0, 1e4):
        rho = dm_run(c, stretch_device(dev, factor)).data
        infid.append(1 - np.vdot(psi, rho @ psi).real)
    assert all(a > b for a, b in zip(infid, infid[1:]))
    assert infid[-1] < 1e-4
