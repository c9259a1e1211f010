import pytest

from symvqe.fermion import h2_fcidump_path, load_fcidump, molecular_hamiltonian
from symvqe.pauli import group_qubitwise_commuting


@pytest.fixture(scope="session")
def h2_ints():
    return load_fcidump(h2_fcidump_path(0.735))


@pytest.fixture(scope="session")
def h2_ham(h2_ints):
    return molecular_hamiltonian(h2_ints)


@pytest.fixture(scope="session")
def h2_groups(h2_ham):
    return group_qubitwise_commuting(h2_ham)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
