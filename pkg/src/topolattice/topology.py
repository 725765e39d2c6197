"""Winding numbers, Zak phases and band-resolved windings of 1D
superlattice cells, plus (t, tau) phase diagrams.

Odd-J cells are not bipartite on their own (the bond cycle has odd
length), so the chiral block is taken from the even chain obtained by
repeating the central intracell coupling once.  For J=3 this gives
det q = t^2 + tau t e^{-ik}; for J=5, t1^2 t2 + tau t2^2 e^{-ik}.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, TransitionError, ValidationError
from .lattice import UnitCellSpec
from .spectral import bloch_hamiltonian

TRANSITION_RTOL = 1e-12
MAX_NK = 1 << 16


def chiral_chain(cell: UnitCellSpec) -> tuple[float, ...]:
    """Even-length intracell list used for the chiral block."""
    t = cell.intracell
    if cell.J % 2 == 0:
        return t
    mid = len(t) // 2
    return t[:mid] + (t[mid],) + t[mid:]


@dataclass(frozen=True)
class ChiralBlock:
    """det q(k) = C + R e^{-ik} for a nearest-neighbour cell."""

    C: float
    R: float
    chain: tuple[float, ...]
    intercell: float

    def q(self, k) -> np.ndarray:
        """Sublattice block H[A, B] (A = even sites, B = odd sites)."""
        k = np.asarray(k, dtype=float)
        n = len(self.chain) + 1
        H = np.zeros(k.shape + (n, n), dtype=complex)
        for i, t in enumerate(self.chain):
            H[..., i, i + 1] = t
            H[..., i + 1, i] = t
        H[..., 0, n - 1] = self.intercell * np.exp(-1j * k)
        H[..., n - 1, 0] = self.intercell * np.exp(1j * k)
        return H[..., 0::2, 1::2]

    def det(self, k) -> np.ndarray:
        return np.linalg.det(self.q(k))


def chiral_block(cell: UnitCellSpec) -> ChiralBlock:
    chain = chiral_chain(cell)
    C = float(np.prod(chain[0::2]))
    R = float(cell.intercell * np.prod(chain[1::2]))
    return ChiralBlock(C, R, chain, cell.intercell)


@dataclass
class InvariantReport:
    nu_total: int | None
    at_transition: bool
    zak: tuple[float, ...] | None = None
    band_winding: tuple[int, ...] | None = None


def winding_circle(cell: UnitCellSpec) -> InvariantReport:
    """nu = 1 when the circle C + R e^{-ik} encloses the origin (R > |C|)."""
    cb = chiral_block(cell)
    scale = max(cb.R, abs(cb.C))
    if abs(cb.R - abs(cb.C)) < TRANSITION_RTOL * scale:
        return InvariantReport(None, True)
    return InvariantReport(1 if cb.R > abs(cb.C) else 0, False)


def winding_integral(cell: UnitCellSpec, n_k: int = 256, orientation: int = 1) -> int:
    """Winding of det q(k) around the origin, from its unwrapped phase.

    The grid is doubled until no step changes the phase by more than pi/4.
    ``orientation=-1`` traverses the zone from +pi to -pi.
    """
    cb = chiral_block(cell)
    scale = max(cb.R, abs(cb.C))
    nk = max(int(n_k), 16)
    while True:
        k = np.linspace(-np.pi, np.pi, nk + 1)
        if orientation < 0:
            k = k[::-1]
        d = cb.det(k)
        if np.min(np.abs(d)) < TRANSITION_RTOL * scale:
            raise TransitionError("det q(k) vanishes on the grid: gap closed")
        steps = np.angle(d[1:] / d[:-1])
        if np.max(np.abs(steps)) < np.pi / 4:
            break
        if nk >= MAX_NK:
            raise NumericalError("winding grid refinement did not converge")
        nk *= 2
    # det q = C + R e^{-ik} runs clockwise for increasing k
    total = -steps.sum() / (2 * np.pi)
    return int(round(total))


def _inversion(J: int) -> np.ndarray:
    return np.eye(J)[::-1]


def trim_parities(cell: UnitCellSpec, k0: float, degeneracy_tol: float = 1e-10) -> np.ndarray:
    """Inversion eigenvalue (+1/-1) of each band at a TRIM."""
    H = bloch_hamiltonian(cell, k0).real
    w, v = np.linalg.eigh(H)
    gaps = np.diff(w)
    scale = max(np.abs(w).max(), 1e-300)
    if gaps.size and gaps.min() < degeneracy_tol * scale:
        raise TransitionError(f"degenerate level at k={k0:g}: parity ill-defined")
    p = np.einsum("im,ij,jm->m", v, _inversion(cell.J), v)
    return np.sign(p).astype(int)


def zak_trim(cell: UnitCellSpec) -> tuple[float, ...]:
    """Zak phase of each band in {0, pi} from the TRIM parity product."""
    prod = trim_parities(cell, 0.0) * trim_parities(cell, math.pi)
    return tuple(0.0 if s > 0 else math.pi for s in prod)


def band_winding_wilson(cell: UnitCellSpec, n_k: int = 256) -> tuple[int, ...]:
    """Unwrapped Berry phase of each band across the zone, divided by pi.

    Eigenvectors are gauge-fixed so their component on the last cell site
    (the site carrying the e^{ik} corner) is real and positive; the link
    phases arg<u_k|u_{k+dk}> are then summed without wrapping.  The grid is
    doubled until every link phase is below pi/4.
    """
    J = cell.J
    nk = max(int(n_k), 16)
    while True:
        k = np.linspace(-np.pi, np.pi, nk + 1)
        w, v = np.linalg.eigh(bloch_hamiltonian(cell, k))
        dmin = np.min(np.diff(w, axis=1)) if J > 1 else np.inf
        if dmin < 1e-10 * max(np.abs(w).max(), 1e-300):
            raise TransitionError("bands touch on the grid")
        anchor = v[:, J - 1, :]
        amag = np.abs(anchor)
        if amag.min() < 1e-9:
            raise NumericalError("gauge anchor vanishes: band winding undefined in this gauge")
        v = v * (np.conj(anchor) / amag)[:, None, :]
        links = np.angle(np.einsum("kin,kin->kn", np.conj(v[:-1]), v[1:]))
        if np.max(np.abs(links)) < np.pi / 4:
            break
        if nk >= MAX_NK:
            raise NumericalError("Wilson-loop grid refinement did not converge")
        nk *= 2
    phases = -links.sum(axis=0) / np.pi
    return tuple(int(round(x)) for x in phases)


def invariants(cell: UnitCellSpec, n_k: int = 256) -> InvariantReport:
    rep = winding_circle(cell)
    if rep.at_transition:
        return rep
    try:
        rep.zak = zak_trim(cell)
        rep.band_winding = band_winding_wilson(cell, n_k)
    except TransitionError:
        rep.at_transition = True
    return rep


@dataclass
class PhaseDiagram:
    t: np.ndarray  # (n_t,)
    tau: np.ndarray  # (n_tau,)
    nu_total: np.ndarray  # (n_t, n_tau) int, -1 at transitions
    band_winding: np.ndarray  # (n_t, n_tau, J) float, nan at transitions
    at_transition: np.ndarray  # (n_t, n_tau) bool

    @property
    def J(self) -> int:
        return self.band_winding.shape[-1]

    def rows(self):
        for i, t in enumerate(self.t):
            for j, tau in enumerate(self.tau):
                yield t, tau, self.nu_total[i, j], self.band_winding[i, j]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["t", "tau", "nu_total"] + [f"nu_band_{n + 1}" for n in range(self.J)])
            for t, tau, nu, bw in self.rows():
                bw_s = ["" if math.isnan(x) else str(int(x)) for x in bw]
                wr.writerow([repr(float(t)), repr(float(tau)), int(nu)] + bw_s)


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("TOPOLATTICE_THREADS")
    return max(1, int(env)) if env else 1


def phase_diagram(template: UnitCellSpec, t_values, tau_values, n_k: int = 256,
                  workers: int | None = None) -> PhaseDiagram:
    """Invariants on a (t, tau) grid.  Intracell couplings are the template's
    scaled so the first one equals t; the template fixes their ratios."""
    t_values = np.asarray(t_values, dtype=float)
    tau_values = np.asarray(tau_values, dtype=float)
    if np.any(t_values <= 0) or np.any(tau_values <= 0):
        raise ValidationError("t and tau ranges must be positive")
    ratios = np.array(template.intracell) / template.intracell[0]
    J = template.J
    jobs = [(i, j) for i in range(t_values.size) for j in range(tau_values.size)]

    def run(ij):
        i, j = ij
        cell = UnitCellSpec(tuple(ratios * t_values[i]), tau_values[j], template.lattice_constant)
        return invariants(cell, n_k)

    n_w = _worker_count(workers)
    if n_w > 1:
        with ThreadPoolExecutor(n_w) as ex:
            reps = list(ex.map(run, jobs))
    else:
        reps = [run(ij) for ij in jobs]
    nu = np.full((t_values.size, tau_values.size), -1, dtype=int)
    bw = np.full((t_values.size, tau_values.size, J), np.nan)
    tr = np.zeros((t_values.size, tau_values.size), dtype=bool)
    for (i, j), r in zip(jobs, reps):
        tr[i, j] = r.at_transition
        if r.nu_total is not None and not r.at_transition:
            nu[i, j] = r.nu_total
        if r.band_winding is not None and not r.at_transition:
            bw[i, j] = r.band_winding
    return PhaseDiagram(t_values, tau_values, nu, bw, tr)
