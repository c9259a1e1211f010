import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from symvqe.circuits import (
    Circuit,
    Gate,
    Param,
    SectorSpec,
    a_gate_matrix,
    bind_parameters,
    build_adhoc,
    build_aswap,
    circuit_unitary,
    decompose,
    decompose_a_gate,
    fold_cnots,
    parameter_count,
    resources,
)

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def _equal_up_to_phase(u, v, atol=1e-10):
    k = np.unravel_index(np.argmax(np.abs(v)), v.shape)
    phase = u[k] / v[k]
    return abs(abs(phase) - 1) < atol and np.allclose(u, phase * v, atol=atol)


def test_a_gate_reference_points():
    assert_allclose(a_gate_matrix(0, 0), np.diag([1, 1, -1, 1]))
    m = a_gate_matrix(math.pi / 2, 0)
    assert_allclose(m[1:3, 1:3], [[0, 1], [1, 0]], atol=1e-15)


@given(angles, angles)
def test_a_gate_unitary_and_number_conserving(theta, phi):
    m = a_gate_matrix(theta, phi)
    assert_allclose(m.conj().T @ m, np.eye(4), atol=1e-12)
    assert m[0, 0] == 1 and m[3, 3] == 1


def test_a_gate_decomposition_random_sample():
    rng = np.random.default_rng(7)
    worst = 0.0
    for theta, phi in rng.uniform(-math.pi, math.pi, (100, 2)):
        seq = decompose_a_gate(theta, phi)
        assert sum(g.kind == "CNOT" for g in seq) == 3
        assert {g.kind for g in seq} <= {"RY", "RZ", "CNOT"}
        u = circuit_unitary(Circuit(2, seq, 0))
        v = a_gate_matrix(theta, phi)
        phase = u[0, 0] / v[0, 0]
        worst = max(worst, np.max(np.abs(u - phase * v)))
    assert worst < 1e-10


@pytest.mark.parametrize("theta,phi", [(0.0, 0.0), (math.pi / 2, 0.0)])
def test_a_gate_decomposition_reference_points(theta, phi):
    u = circuit_unitary(Circuit(2, decompose_a_gate(theta, phi), 0))
    assert _equal_up_to_phase(u, a_gate_matrix(theta, phi))


@settings(max_examples=25)
@given(st.lists(angles, min_size=7, max_size=7))
def test_decompose_preserves_unitary(values):
    c = bind_parameters(build_aswap(SectorSpec(4, 2, 0), layers=2), values)
    d = decompose(c)
    assert {g.kind for g in d.gates} <= {"X", "RY", "RZ", "H", "Sdg", "CNOT"}
    assert _equal_up_to_phase(circuit_unitary(d), circuit_unitary(c))


def test_pswap_and_cz_decompositions():
    c = Circuit(3, [Gate("PSWAP", (0, 2), (0.83,)), Gate("CZ", (1, 2))], 0)
    assert _equal_up_to_phase(circuit_unitary(decompose(c)), circuit_unitary(c))


def test_aswap_ground_sector_layout():
    c = build_aswap(SectorSpec(4, 2, 0), layers=1)
    xs = [g.qubits[0] for g in c.gates if g.kind == "X"]
    assert sorted(xs) == [0, 2]
    assert c.count("A") == 2
    rep = resources(c)
    assert (rep.n_free_params, rep.n_cnots) == (3, 6)


@pytest.mark.parametrize("m,n_x", [(0, 0), (4, 4)])
def test_aswap_trivial_sectors(m, n_x):
    c = build_aswap(SectorSpec(4, m, 0))
    assert c.count("X") == n_x and c.count("A") == 0 and c.n_free_params == 0


def test_aswap_two_layers_adds_spin_coupler():
    c = build_aswap(SectorSpec(4, 2, 0), layers=2)
    couplers = [g for g in c.gates if g.kind == "A" and g.qubits == (1, 2)]
    assert len(couplers) == 1 and couplers[0].params == (0.0, 0.0)
    assert resources(c).n_free_params == 7


def test_aswap_single_block_sector_ignores_coupler():
    c = build_aswap(SectorSpec(4, 1, 0.5), layers=2)
    assert all(g.qubits == (0, 1) for g in c.gates if g.kind == "A")


def test_invalid_sector():
    with pytest.raises(ValueError):
        SectorSpec(4, 2, 1.5)
    with pytest.raises(ValueError):
        SectorSpec(4, 5, 0)


def test_adhoc_counts():
    assert resources(build_adhoc("RY", 4, 1, "full")).n_free_params == 8
    assert resources(build_adhoc("RY", 4, 1, "linear")) .n_cnots == 3
    assert resources(build_adhoc("RYRZ", 4, 1, "full")).n_free_params == 16
    rep = resources(build_adhoc("RY", 4, 0))
    assert (rep.n_free_params, rep.n_cnots) == (4, 0)
    assert resources(build_adhoc("SwapRZ", 4, 1, "full")).n_cnots == 12
    with pytest.raises(ValueError):
        build_adhoc("UCC", 4, 1)


def test_resources_of_empty_and_cz():
    assert resources(Circuit(2, [], 0)) == resources(Circuit(2, [], 0))
    rep = resources(Circuit(2, [], 0))
    assert (rep.n_free_params, rep.n_cnots, rep.depth) == (0, 0, 0)
    assert resources(Circuit(2, [Gate("CZ", (0, 1))], 0)).n_cnots == 1


def test_fold_cnots():
    c = decompose(bind_parameters(build_aswap(SectorSpec(4, 2, 0)), [0.3, 1.1, -0.4]))
    assert c.count("CNOT") == 6
    assert fold_cnots(c, 1) == c
    f3 = fold_cnots(c, 3)
    assert f3.count("CNOT") == 18
    assert_allclose(circuit_unitary(f3), circuit_unitary(c), atol=1e-12)
    with pytest.raises(ValueError):
        fold_cnots(c, 2)


def test_bind_parameters():
    c = build_aswap(SectorSpec(4, 2, 0))
    b = bind_parameters(c, [0.1, 0.2, 0.3])
    assert b.n_free_params == 0 and resources(b).n_free_params == 0
    assert [g.kind for g in b.gates] == [g.kind for g in c.gates]
    with pytest.raises(ValueError):
        bind_parameters(c, [0.1])


def test_circuit_json_roundtrip():
    c = build_aswap(SectorSpec(4, 2, 0), layers=2)
    assert Circuit.from_json(c.to_json()) == c


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("CNOT", (0, 0))
    with pytest.raises(ValueError):
        Gate("RY", (0,), ())
    with pytest.raises(ValueError):
        Circuit(2, [Gate("RY", (0,), (Param(1),))], 1)


def test_parameter_count_closed_forms():
    assert parameter_count("full_hilbert", 2) == 6
    assert parameter_count("fixed_n", 4, 2) == 10
    assert parameter_count("fixed_n_s_sz", 4, 2, 0) == 3
    with pytest.raises(ValueError):
        parameter_count("fixed_n_s_sz", 4, 2, 2)


def _eq2_sympy(n, m, s):
    k = sympy.Symbol("k", integer=True, nonnegative=True)
    s = sympy.Rational(s)
    m2 = sympy.Rational(m, 2)
    term = (
        sympy.binomial(n // 2, k)
        * sympy.binomial(n // 2 - k, m - 2 * k)
        * (2 * s + 1)
        * sympy.factorial(m - 2 * k)
        / (sympy.factorial(m2 - k - s) * sympy.factorial(m2 - k + s + 1))
    )
    return sum(term.subs(k, kk) for kk in range(int(m2 - s) + 1))


def test_parameter_count_matches_symbolic_evaluation():
    for n in (2, 4, 6, 8):
        for m in range(n + 1):
            s = sympy.Rational(m % 2, 2)
            while s <= sympy.Rational(m, 2):
                assert parameter_count("fixed_n_s_sz", n, m, float(s)) == _eq2_sympy(n, m, s), (n, m, s)
                s += 1


@pytest.mark.parametrize("theta", [1e-10, -1e-7, 3e-5, 2 * math.pi - 1e-9])
def test_decompose_tiny_angles(theta):
    # rotations a hair away from a full turn must survive decomposition
    c = Circuit(2, [Gate("A", (0, 1), (theta, -theta))], 0)
    assert _equal_up_to_phase(circuit_unitary(decompose(c)), circuit_unitary(c), atol=1e-13)
