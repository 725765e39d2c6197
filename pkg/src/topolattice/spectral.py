"""Finite-lattice eigensystems, Bloch bands, gap sizes, gap-closure points
and interface-mode decay lengths.

Wavevectors are dimensionless (k measured in units of 1/a), so the Brillouin
zone is [-pi, pi].  Decay lengths are returned in units of the lattice
constant a.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import ValidationError
from .lattice import UnitCellSpec

SYM_TOL = 1e-12
CLOSED_TOL = 1e-12


# --------------------------------------------------------------------------
# finite lattices


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending propagation constants with orthonormal real eigenvectors
    (columns).  ``parity`` is +1/-1 for mirror-even/odd modes and 0 when the
    lattice is not mirror symmetric or the mode is degenerate."""

    values: np.ndarray
    vectors: np.ndarray
    ipr: np.ndarray
    parity: np.ndarray
    interface: np.ndarray
    norm: float
    chiral_defect: float

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def center(self) -> int:
        return self.n // 2

    def interface_modes(self) -> np.ndarray:
        return np.flatnonzero(self.interface)

    def bulk_modes(self) -> np.ndarray:
        return np.flatnonzero(~self.interface)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip each column so its first non-negligible component is positive."""
    thresh = 1e-8 * np.abs(vecs).max(axis=0)
    first = np.argmax(np.abs(vecs) > thresh, axis=0)
    signs = np.sign(vecs[first, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _mirror_basis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal mirror-even and mirror-odd site combinations."""
    even, odd = [], []
    for i in range(n // 2):
        e = np.zeros(n)
        e[i] = e[n - 1 - i] = 1 / math.sqrt(2)
        o = np.zeros(n)
        o[i], o[n - 1 - i] = -1 / math.sqrt(2), 1 / math.sqrt(2)
        even.append(e)
        odd.append(o)
    if n % 2:
        e = np.zeros(n)
        e[n // 2] = 1.0
        even.append(e)
    return np.array(even).T, np.array(odd).reshape(len(odd), n).T


def _eigh_by_parity(H: np.ndarray):
    """Diagonalise a mirror-symmetric H sector by sector so every mode has
    exact parity, even for near-degenerate pairs bound to the two ends."""
    Be, Bo = _mirror_basis(H.shape[0])
    we, ve = np.linalg.eigh(Be.T @ H @ Be)
    w = [we]
    v = [Be @ ve]
    par = [np.ones(we.size, dtype=int)]
    if Bo.shape[1]:
        wo, vo = np.linalg.eigh(Bo.T @ H @ Bo)
        w.append(wo)
        v.append(Bo @ vo)
        par.append(-np.ones(wo.size, dtype=int))
    w = np.concatenate(w)
    v = np.hstack(v)
    par = np.concatenate(par)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order], par[order]


def eigensystem(H: np.ndarray, cell: UnitCellSpec | None = None,
                center_weight: float = 0.5) -> EigenSystem:
    """Diagonalise a real symmetric lattice Hamiltonian.

    Interface tags need the unit cell (for the infinite-lattice gaps).  A mode
    is tagged when its energy sits strictly inside a gap, its inverse
    participation ratio exceeds 4/N and more than ``center_weight`` of its
    weight lies within N/4 sites of the centre.  The last condition keeps
    states bound to the outer chain ends out of the interface set.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"Hamiltonian must be square, got {H.shape}")
    norm = float(np.abs(H).max()) or 1.0
    if not np.allclose(H, H.T, rtol=0, atol=SYM_TOL * norm):
        raise ValidationError("Hamiltonian is not symmetric")
    mirror_ok = bool(np.allclose(H, H[::-1, ::-1], rtol=0, atol=SYM_TOL * norm))
    if mirror_ok:
        w, v, parity = _eigh_by_parity(H)
    else:
        w, v = np.linalg.eigh(H)
        parity = np.zeros(w.size, dtype=int)
    v = _fix_signs(v)
    n = w.size
    ipr = np.sum(v ** 4, axis=0)
    spec_norm = float(np.max(np.abs(w)))
    chiral = float(np.max(np.abs(w + w[::-1]))) / (spec_norm or 1.0)
    tags = np.zeros(n, dtype=bool)
    if cell is not None:
        gaps = band_gap_intervals(cell)
        c, q = n // 2, n // 4
        cw = np.sum(v[max(c - q, 0): c + q + 1] ** 2, axis=0)
        in_gap = np.zeros(n, dtype=bool)
        for lo, hi in gaps:
            in_gap |= (w > lo) & (w < hi)
        tags = in_gap & (ipr > 4.0 / n) & (cw > center_weight)
    for a in (w, v, ipr, parity, tags):
        a.flags.writeable = False
    return EigenSystem(w, v, ipr, parity, tags, spec_norm, chiral)


def interface_indices(es: EigenSystem, cell: UnitCellSpec | None = None) -> np.ndarray:
    if cell is not None and not es.interface.any():
        # retag with the given cell
        H = (es.vectors * es.values) @ es.vectors.T
        es = eigensystem(H, cell)
    return es.interface_modes()


def residuals(H: np.ndarray, es: EigenSystem) -> tuple[float, float]:
    """(max |H v - beta v| / ||H||, max |V^T V - I|)."""
    V = es.vectors
    r = np.abs(H @ V - V * es.values).max() / (np.abs(H).max() or 1.0)
    o = np.abs(V.T @ V - np.eye(V.shape[1])).max()
    return float(r), float(o)


# --------------------------------------------------------------------------
# Bloch bands


def bloch_hamiltonian(cell: UnitCellSpec, k) -> np.ndarray:
    """J x J Bloch matrix (or a stack for array ``k``) with the intercell
    bond on the corners: H[0, J-1] = tau e^{-ik}, H[J-1, 0] = tau e^{ik}."""
    k = np.asarray(k, dtype=float)
    J = cell.J
    H = np.zeros(k.shape + (J, J), dtype=complex)
    for i, t in enumerate(cell.intracell):
        H[..., i, i + 1] = t
        H[..., i + 1, i] = t
    H[..., 0, J - 1] = cell.intercell * np.exp(-1j * k)
    H[..., J - 1, 0] = cell.intercell * np.exp(1j * k)
    return H


def bloch_levels(cell: UnitCellSpec, k) -> np.ndarray:
    return np.linalg.eigvalsh(bloch_hamiltonian(cell, k))


@dataclass(frozen=True, eq=False)
class BandStructure:
    k: np.ndarray
    bands: np.ndarray  # (n_k, J), sorted per k

    def lipschitz_bound(self, cell: UnitCellSpec) -> float:
        """Largest allowed change of any band between adjacent k points.
        Only the corner entries depend on k, so |d beta/dk| <= tau."""
        return cell.intercell * float(np.max(np.diff(self.k)))


def band_structure(cell: UnitCellSpec, n_k: int = 257) -> BandStructure:
    """Bands on a uniform grid over [-pi, pi]; an even ``n_k`` is bumped by
    one so that both k=0 and k=pi are on the grid."""
    if n_k < 16:
        raise ValidationError("n_k must be >= 16")
    if n_k % 2 == 0:
        n_k += 1
    k = np.linspace(-np.pi, np.pi, n_k)
    return BandStructure(k, bloch_levels(cell, k))


def _refine_extremum(cell, j, k_grid, idx, sign):
    """Golden-section refinement of band j's extremum around grid index."""
    lo = k_grid[max(idx - 1, 0)]
    hi = k_grid[min(idx + 1, k_grid.size - 1)]
    if hi <= lo:
        return sign * bloch_levels(cell, k_grid[idx])[j]
    f = lambda kk: sign * bloch_levels(cell, kk)[j]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return min(res.fun, f(k_grid[idx]))


def band_edges(cell: UnitCellSpec, n_k: int = 129) -> np.ndarray:
    """(J, 2) array of [min, max] for each band, refined off-grid."""
    bs = band_structure(cell, n_k)
    edges = np.empty((cell.J, 2))
    for j in range(cell.J):
        b = bs.bands[:, j]
        edges[j, 0] = _refine_extremum(cell, j, bs.k, int(np.argmin(b)), 1.0)
        edges[j, 1] = -_refine_extremum(cell, j, bs.k, int(np.argmax(b)), -1.0)
    return edges


def numeric_gaps(cell: UnitCellSpec, n_k: int = 129) -> np.ndarray:
    """J-1 gap sizes: bottom of band j+1 minus top of band j."""
    e = band_edges(cell, n_k)
    return np.maximum(e[1:, 0] - e[:-1, 1], 0.0)


def band_gap_intervals(cell: UnitCellSpec) -> list[tuple[float, float]]:
    """Open energy intervals of the J-1 gaps.  For nearest-neighbour chains
    band edges sit at k=0 and k=pi, so the TRIM levels are exact."""
    lv = np.vstack([bloch_levels(cell, 0.0), bloch_levels(cell, np.pi)])
    lo, hi = lv.min(axis=0), lv.max(axis=0)
    return [(float(hi[j]), float(lo[j + 1])) for j in range(cell.J - 1)]


# --------------------------------------------------------------------------
# gap closures by bisection


def _parity_bases(J: int):
    even, odd = [], []
    for i in range(J // 2):
        e = np.zeros(J)
        e[i] = e[J - 1 - i] = 1 / math.sqrt(2)
        o = np.zeros(J)
        o[i], o[J - 1 - i] = 1 / math.sqrt(2), -1 / math.sqrt(2)
        even.append(e)
        odd.append(o)
    if J % 2:
        e = np.zeros(J)
        e[J // 2] = 1.0
        even.append(e)
    return np.array(even).T, np.array(odd).T


def trim_parity_levels(cell: UnitCellSpec, k0: float):
    """Levels at a TRIM split into inversion-even and inversion-odd sectors.

    At k=0 and k=pi the Bloch matrix is real and commutes with the site
    reversal i -> J-1-i, so the two sectors can be diagonalised separately.
    """
    H = bloch_hamiltonian(cell, k0).real
    Be, Bo = _parity_bases(cell.J)
    return np.linalg.eigvalsh(Be.T @ H @ Be), np.linalg.eigvalsh(Bo.T @ H @ Bo)


def _labelled_levels(cell, k0):
    e, o = trim_parity_levels(cell, k0)
    lab = [(x, 0, i) for i, x in enumerate(e)] + [(x, 1, i) for i, x in enumerate(o)]
    return sorted(lab)


@dataclass(frozen=True)
class Closure:
    gap: int  # 1-based: gap g lies between bands g and g+1
    tau: float
    k: float


def gap_closures(cell: UnitCellSpec, tau_range: tuple[float, float] | None = None,
                 n_scan: int = 400) -> list[Closure]:
    """Intercell couplings at which a gap closes, with the intracell
    couplings held fixed.

    Closures of a nearest-neighbour chain happen at a TRIM where two levels
    of opposite inversion parity cross, so the difference of the two tracked
    levels changes sign and is bracketed by Brent's method to ~1e-15.
    """
    t = np.array(cell.intracell)
    if tau_range is None:
        tau_range = (1e-3 * t.min(), 10.0 * t.max())
    grid = np.geomspace(tau_range[0], tau_range[1], n_scan)

    def with_tau(x):
        return UnitCellSpec(cell.intracell, x, cell.lattice_constant)

    found = []
    for k0 in (0.0, math.pi):
        prev = [_labelled_levels(with_tau(x), k0) for x in grid]
        for a in range(n_scan - 1):
            lab = prev[a]
            for j in range(cell.J - 1):
                la, lb = lab[j], lab[j + 1]
                if la[1] == lb[1]:
                    continue

                def f(x, la=la, lb=lb):
                    s = trim_parity_levels(with_tau(x), k0)
                    return s[lb[1]][lb[2]] - s[la[1]][la[2]]

                fa, fb = f(grid[a]), f(grid[a + 1])
                if fa == 0.0:
                    root = grid[a]
                elif fa * fb < 0:
                    root = brentq(f, grid[a], grid[a + 1], xtol=1e-15, rtol=1e-15)
                else:
                    continue
                found.append(Closure(j + 1, float(root), k0))
    # a crossing is seen from both sides of the bracket; keep one per gap
    found.sort(key=lambda c: (c.gap, c.tau))
    out: list[Closure] = []
    for c in found:
        if out and out[-1].gap == c.gap and abs(out[-1].tau - c.tau) <= 1e-9 * c.tau:
            continue
        out.append(c)
    return out


# --------------------------------------------------------------------------
# closed forms


def _j6_cardano(t1, t2, t3, tau, k):
    """Squared chiral energies of the J=6 cell from the cubic
    lambda^3 + p lambda^2 + q lambda + r = 0, where lambda are eigenvalues of
    M = Q Q^dagger for the 3x3 chiral block Q."""
    k = np.asarray(k, dtype=float)
    Q = np.zeros(k.shape + (3, 3), dtype=complex)
    Q[..., 0, 0] = t1
    Q[..., 0, 2] = tau * np.exp(-1j * k)
    Q[..., 1, 0] = t2
    Q[..., 1, 1] = t3
    Q[..., 2, 1] = t2
    Q[..., 2, 2] = t1
    M = Q @ np.conj(np.swapaxes(Q, -1, -2))
    trM = np.trace(M, axis1=-2, axis2=-1).real
    trM2 = np.trace(M @ M, axis1=-2, axis2=-1).real
    p = -trM
    q = 0.5 * (trM ** 2 - trM2)
    r = -(t1 ** 4 * t3 ** 2 + t2 ** 4 * tau ** 2 + 2 * t1 ** 2 * t2 ** 2 * t3 * tau * np.cos(k))
    # trigonometric Cardano for three real roots
    a = q - p ** 2 / 3
    b = 2 * p ** 3 / 27 - p * q / 3 + r
    m = 2 * np.sqrt(np.maximum(-a / 3, 0))
    am = a * m
    arg = np.clip(np.divide(3 * b, am, out=np.zeros_like(am), where=am != 0), -1, 1)
    th = np.arccos(arg) / 3
    roots = np.stack([m * np.cos(th - 2 * np.pi * i / 3) for i in range(3)], axis=-1) - p[..., None] / 3
    lam = np.sort(np.maximum(roots, 0.0), axis=-1)
    return np.sqrt(lam), (p, q, r)


@dataclass
class GapEntry:
    gap: int
    numeric: float
    closed_form: float | None = None
    relative_error: float | None = None
    closed: bool = False


@dataclass
class DecayLength:
    name: str
    gaps: tuple[int, ...]
    value: float  # units of a; inf at a closure, nan where the form does not apply
    diverges: bool = False
    applicable: bool = True


@dataclass
class GapReport:
    J: int
    couplings: dict
    gaps: list[GapEntry]
    critical_couplings: dict
    decay_lengths: list[DecayLength]
    conditional: bool = False
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [clean(v) for v in x]
            if isinstance(x, np.generic):
                return clean(x.item())
            return x

        return clean({
            "J": self.J,
            "couplings": self.couplings,
            "gaps": [vars(g) for g in self.gaps],
            "critical_couplings": self.critical_couplings,
            "decay_lengths": [vars(d) for d in self.decay_lengths],
            "conditional": self.conditional,
            "notes": self.notes,
            "extra": self.extra,
        })


def _xi_log(x: float) -> tuple[float, bool]:
    """a / |ln|x||, with an infinity flag at x = 1."""
    lx = abs(math.log(abs(x)))
    if lx < CLOSED_TOL:
        return math.inf, True
    return 1.0 / lx, False


def _xi_arccosh(x: float) -> tuple[float, bool, bool]:
    if x < 1.0 - CLOSED_TOL:
        return math.nan, False, False
    if x <= 1.0 + CLOSED_TOL:
        return math.inf, True, True
    return 1.0 / math.acosh(x), False, True


def j5_exact_closures(t1: float, t2: float) -> tuple[float, float]:
    """Both gap-closing intercell couplings of the J=5 cell, from the exact
    condition t2^2 X^2 - (t1^4 - t1^2 t2^2 + 2 t2^4) X + t1^2 t2^4 = 0 with
    X = tau^2 (resultant of the TRIM characteristic polynomials)."""
    a = t2 ** 2
    b = -(t1 ** 4 - t1 ** 2 * t2 ** 2 + 2 * t2 ** 4)
    c = t1 ** 2 * t2 ** 4
    disc = math.sqrt(b * b - 4 * a * c)
    x_lo, x_hi = (-b - disc) / (2 * a), (-b + disc) / (2 * a)
    return math.sqrt(x_lo), math.sqrt(x_hi)


def decay_lengths(cell: UnitCellSpec) -> list[DecayLength]:
    """Tabulated edge-mode decay lengths for J=3..6 (units of a)."""
    J, tau = cell.J, cell.intercell
    t = cell.intracell
    out = []
    if J == 3:
        v, d = _xi_log(tau / t[0])
        out.append(DecayLength("xi", (1, 2), v, d))
    elif J == 4:
        t1, t2 = t[0], t[1]
        v, d = _xi_log(t1 ** 2 / (tau * t2))
        out.append(DecayLength("xi_0", (2,), v, d))
        v, d = _xi_log(t2 / tau)
        out.append(DecayLength("xi_1", (1, 3), v, d))
    elif J == 5:
        t1, t2 = t[0], t[1]
        tau1 = t1 * t2 / math.hypot(t1, t2)
        tau2 = math.hypot(t1, t2)
        v, d, ok = _xi_arccosh(tau / tau1)
        out.append(DecayLength("xi_1", (1, 4), v, d, ok))
        v, d, ok = _xi_arccosh(tau2 / tau)
        out.append(DecayLength("xi_2", (2, 3), v, d, ok))
    elif J == 6:
        t1, t2, t3 = t[0], t[1], t[2]
        v, d = _xi_log(t1 ** 2 * t3 / (t2 ** 2 * tau))
        out.append(DecayLength("xi_C", (3,), v, d))
        v, d, ok = _xi_arccosh((tau ** 2 + t3 ** 2 - t1 ** 2) / (2 * t2 * t3))
        out.append(DecayLength("xi_pm", (1, 2, 4, 5), v, d, ok))
    else:
        raise ValidationError(f"closed forms exist for J=3..6 only, got J={J}")
    return out


def decay_length_at(cell: UnitCellSpec, beta: float) -> float:
    """Decay length (units of a) of an evanescent solution at energy beta.

    det(beta - H(k)) = P(beta) - c cos k for a nearest-neighbour chain, so
    continuing k -> pi + i kappa (or i kappa) gives
    kappa = arccosh|P/c|.  Valid for any J and any in-gap energy.
    """
    eye = np.eye(cell.J)
    d0 = np.linalg.det(beta * eye - bloch_hamiltonian(cell, 0.0)).real
    dp = np.linalg.det(beta * eye - bloch_hamiltonian(cell, math.pi)).real
    P, c = 0.5 * (d0 + dp), 0.5 * (dp - d0)
    x = abs(P / c)
    if x <= 1.0:
        return math.inf
    return 1.0 / math.acosh(x)


def closed_form_report(cell: UnitCellSpec, n_k: int = 129) -> GapReport:
    """Closed-form gap sizes, critical couplings and decay lengths next to
    their numeric counterparts."""
    J, tau = cell.J, cell.intercell
    if J not in (3, 4, 5, 6):
        raise ValidationError(f"closed forms exist for J=3..6 only, got J={J}")
    t = cell.intracell
    num = numeric_gaps(cell, n_k)
    scale = max(max(t), tau)
    closed_form: list[float | None] = [None] * (J - 1)
    crit: dict = {}
    notes: list[str] = []
    extra: dict = {}
    conditional = False

    if J == 3:
        g = abs(3 * tau - math.sqrt(8 * t[0] ** 2 + tau ** 2)) / 2
        closed_form = [g, g]
        crit["tau"] = t[0]
    elif J == 4:
        t1, t2 = t[0], t[1]
        T = math.sqrt(4 * t1 ** 2 + (t2 - tau) ** 2)
        closed_form = [abs(t2 - tau), abs(t2 + tau - T), abs(t2 - tau)]
        crit["tau_outer"] = t2
        crit["tau_central"] = t1 ** 2 / t2
    elif J == 5:
        t1, t2 = t[0], t[1]
        crit["tau_1"] = t1 * t2 / math.hypot(t1, t2)
        crit["tau_2"] = math.hypot(t1, t2)
        conditional = abs(t1 / t2 - 4.0 / 3.0) > 1e-12
        if conditional:
            notes.append("tau_1/tau_2 forms are stated for t1/t2 = 4/3 only")
        lo, hi = j5_exact_closures(t1, t2)
        extra["tau_exact"] = [lo, hi]
        notes.append("gap sizes are numeric only for J=5")
    else:
        t1, t2, t3 = t[0], t[1], t[2]
        A = t1 ** 2 - t3 ** 2
        root = math.sqrt(A * A + 4 * t2 ** 2 * t3 ** 2)
        crit["tau_C"] = t1 ** 2 * t3 / t2 ** 2
        crit["tau_plus"] = (-A + root) / (2 * t3)
        crit["tau_minus"] = (-A - root) / (2 * t3)
        notes.append("tau_minus is negative; the physical closure sits at |tau_minus|")
        E, (p, q, r) = _j6_cardano(t1, t2, t3, tau, np.array([0.0, math.pi]))
        d_c = 2 * E[:, 0].min()
        d_in = E[:, 1].min() - E[:, 0].max()
        d_out = E[:, 2].min() - E[:, 1].max()
        closed_form = [max(d_out, 0.0), max(d_in, 0.0), d_c, max(d_in, 0.0), max(d_out, 0.0)]
        extra["cardano"] = {"k": [0.0, math.pi], "p": p.tolist(), "q": q.tolist(), "r": r.tolist()}

    entries = []
    for j in range(J - 1):
        cf = closed_form[j]
        n = float(num[j])
        rel = None
        if cf is not None:
            rel = abs(cf - n) / max(abs(n), CLOSED_TOL * scale)
        entries.append(GapEntry(j + 1, n, cf, rel, n <= CLOSED_TOL * scale))
    return GapReport(
        J=J,
        couplings={"intracell": list(t), "intercell": tau},
        gaps=entries,
        critical_couplings=crit,
        decay_lengths=decay_lengths(cell),
        conditional=conditional,
        notes=notes,
        extra=extra,
    )


# --------------------------------------------------------------------------
# numeric decay fits


def fit_decay_length(vec: np.ndarray, J: int, center: int | None = None,
                     floor: float = 1e-12) -> float:
    """Exponential decay length (units of a) of a mode, fitted on the
    per-cell maxima of |v| to the right of ``center``.

    The first cell and the last two cells are skipped to avoid the
    interface core and the chain end.
    """
    a = np.abs(np.asarray(vec, dtype=float))
    if center is None:
        center = a.size // 2
    tail = a[center + 1:]
    cells = tail.size // J
    env = tail[: cells * J].reshape(cells, J).max(axis=1)
    m = np.arange(cells)
    sel = (env > floor * env.max()) & (m >= 1) & (m <= cells - 3)
    if sel.sum() < 2:
        return math.nan
    slope = np.polyfit(m[sel], np.log(env[sel]), 1)[0]
    return -1.0 / slope if slope < 0 else math.inf


def mode_gap_index(cell: UnitCellSpec, beta: float) -> int | None:
    """1-based index of the gap containing ``beta``, or None."""
    for j, (lo, hi) in enumerate(band_gap_intervals(cell)):
        if lo < beta < hi:
            return j + 1
    return None
