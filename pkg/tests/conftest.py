from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from topolattice.lattice import (SOI_COUPLING_MAP, InterfaceLatticeSpec, PhysicalGeometry,
                                 build_hamiltonian, build_interface_sequence,
                                 couplings_from_gaps)

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "topolattice" / "configs"

# waveguide gaps (nm) and site counts of the three silicon superlattices
DEVICES = {
    4: ((235, 261, 235), 120, 81),
    5: ((282, 330, 330, 282), 125, 81),
    6: ((225, 230, 255, 230, 225), 140, 85),
}

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def device(J: int, gaps=None):
    g, gi, n = DEVICES[J]
    cell = couplings_from_gaps(PhysicalGeometry(tuple(gaps or g), gi), SOI_COUPLING_MAP)
    seq = build_interface_sequence(InterfaceLatticeSpec.for_sites(cell, n))
    return cell, seq, build_hamiltonian(seq)


def bloch_reference(intra, tau, k):
    """Independent Bloch matrix: chain bonds plus the wrap-around bond."""
    J = len(intra) + 1
    H = np.zeros((J, J), dtype=complex)
    for i, t in enumerate(intra):
        H[i, i + 1] = H[i + 1, i] = t
    H[0, J - 1] += tau * np.exp(-1j * k)
    H[J - 1, 0] += tau * np.exp(1j * k)
    return H


def chain_reference(values):
    n = len(values) + 1
    H = np.zeros((n, n))
    for i, t in enumerate(values):
        H[i, i + 1] = H[i + 1, i] = t
    return H


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[n]
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n:2d}: {msg}")


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR
