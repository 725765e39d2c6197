"""Entanglement and mode-structure analysis of biphoton amplitudes.

Conventions: psi[n, m] is the amplitude for the signal photon in waveguide n
and the idler in waveguide m (array indices); site labels count from the
interface waveguide 0, negative to the left.  Mode-pair mismatch is
Delta beta_mn = beta_m(signal) + beta_n(idler), the rate at which the
projected amplitude <v_m|psi|v_n> rotates under the evolution equation.
"""

from __future__ import annotations

import csv
import math
import string
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .spectral import EigenSystem

ORTHO_TOL = 1e-8
SMALL_PHASE = 1e-6


def _psi(state) -> np.ndarray:
    return np.asarray(getattr(state, "psi", state))


def site_labels(n: int) -> np.ndarray:
    return np.arange(n) - n // 2


# --------------------------------------------------------------------------
# correlation maps


@dataclass(eq=False)
class CorrelationMap:
    intensities: np.ndarray
    sites: np.ndarray  # centre-zero labels of rows and columns

    def symmetric(self, tol: float = 1e-10) -> bool:
        m = np.abs(self.intensities).max() or 1.0
        return bool(np.abs(self.intensities - self.intensities.T).max() <= tol * m)


def correlation_map(state, window: int | tuple[int, int] | None = None,
                    normalize: bool = False) -> CorrelationMap:
    """|psi|^2 cropped to a window of site labels.  An integer w selects
    -w..w; a pair (lo, hi) selects lo..hi inclusive."""
    psi = _psi(state)
    n = psi.shape[0]
    labels = site_labels(n)
    if window is None:
        lo, hi = labels[0], labels[-1]
    elif isinstance(window, (int, np.integer)):
        lo, hi = -int(window), int(window)
    else:
        lo, hi = int(window[0]), int(window[1])
    if hi < lo:
        raise ValidationError("empty correlation window")
    if lo < labels[0] or hi > labels[-1]:
        raise ValidationError(f"window {lo}..{hi} exceeds lattice {labels[0]}..{labels[-1]}")
    sel = slice(lo + n // 2, hi + n // 2 + 1)
    I = np.abs(psi[sel, sel]) ** 2
    if normalize and I.max() > 0:
        I = I / I.max()
    return CorrelationMap(I, np.arange(lo, hi + 1))


# --------------------------------------------------------------------------
# eigenmode populations


@dataclass(eq=False)
class ModePopulationMatrix:
    populations: np.ndarray
    signal_modes: np.ndarray
    idler_modes: np.ndarray
    labels: list[str]
    normalized: bool = False

    def as_dict(self) -> dict:
        return {
            "labels": self.labels,
            "signal_modes": self.signal_modes.tolist(),
            "idler_modes": self.idler_modes.tolist(),
            "normalized": self.normalized,
            "populations": self.populations.tolist(),
        }


def mode_labels(n: int) -> list[str]:
    letters = string.ascii_uppercase
    return [letters[i] if i < 26 else f"M{i}" for i in range(n)]


def _check_orthonormal(es: EigenSystem):
    V = es.vectors
    if np.abs(V.T @ V - np.eye(V.shape[1])).max() > ORTHO_TOL:
        raise ValidationError("eigenvectors are not orthonormal")


def _default_subset(es: EigenSystem) -> np.ndarray:
    idx = es.interface_modes()
    return idx if idx.size else np.arange(es.n)


def project(state, eig_s: EigenSystem, eig_i: EigenSystem) -> np.ndarray:
    """Amplitudes <v_s(m)| psi |v_i(n)> over the full eigenbases."""
    return eig_s.vectors.T @ _psi(state) @ eig_i.vectors


def mode_populations(state, eig_s: EigenSystem, eig_i: EigenSystem,
                     subset=None, normalize: bool = False) -> ModePopulationMatrix:
    """B_mn = |<v_s(m)|psi|v_i(n)>|^2 over a mode subset (interface modes by
    default, labelled A, B, ... in ascending propagation constant)."""
    _check_orthonormal(eig_s)
    _check_orthonormal(eig_i)
    if subset is None:
        ms, mi = _default_subset(eig_s), _default_subset(eig_i)
    else:
        ms = mi = np.asarray(subset, dtype=int)
    B = np.abs(project(state, eig_s, eig_i)[np.ix_(ms, mi)]) ** 2
    if normalize and B.sum() > 0:
        B = B / B.sum()
    return ModePopulationMatrix(B, np.asarray(ms), np.asarray(mi), mode_labels(len(ms)), normalize)


def overlap_coefficients(eig_s: EigenSystem, eig_i: EigenSystem, profile) -> np.ndarray:
    """C_mn = sum_x v_s(m)[x] v_i(n)[x] profile[x] (profile = A_p^2 shape)."""
    return eig_s.vectors.T @ (np.asarray(profile)[:, None] * eig_i.vectors)


def analytic_population(C, dbeta, L, drive):
    """|2 drive C / dbeta sin(dbeta L / 2)|^2, with the (drive C L)^2 limit
    used when |dbeta L| < 1e-6."""
    C = np.asarray(C, dtype=complex)
    dbeta = np.asarray(dbeta, dtype=float)
    L = np.asarray(L, dtype=float)
    x = dbeta * L
    small = np.abs(x) < SMALL_PHASE
    safe = np.where(small, 1.0, dbeta)
    amp = np.where(small, drive * C * L, 2 * drive * C / safe * np.sin(0.5 * x))
    return np.abs(amp) ** 2


def mismatch(eig_s: EigenSystem, eig_i: EigenSystem, m: int, n: int) -> float:
    return float(eig_s.values[m] + eig_i.values[n])


def mismatch_predictions(eig_s: EigenSystem, eig_i: EigenSystem, pairs) -> list[dict]:
    """Per-pair mismatch, first node 2 pi/|dbeta| and first maximum pi/|dbeta|."""
    out = []
    for m, n in pairs:
        d = mismatch(eig_s, eig_i, m, n)
        if d == 0.0:
            lz = lm = math.inf
        else:
            lz, lm = 2 * math.pi / abs(d), math.pi / abs(d)
        out.append({"m": int(m), "n": int(n), "dbeta": d, "L_zero": lz, "L_max": lm})
    return out


def mixed_parity_mask(eig_s: EigenSystem, eig_i: EigenSystem, ms=None, mi=None) -> np.ndarray:
    """True where the signal and idler modes have opposite mirror parity."""
    ps = eig_s.parity if ms is None else eig_s.parity[ms]
    pi_ = eig_i.parity if mi is None else eig_i.parity[mi]
    if np.any(ps == 0) or np.any(pi_ == 0):
        raise ValidationError("parity undefined: lattice is not mirror symmetric")
    return (ps[:, None] * pi_[None, :]) < 0


def parity_leakage(state, eig_s: EigenSystem, eig_i: EigenSystem) -> float:
    """Largest mixed-parity population relative to the largest population,
    over the full eigenbases.  A centre-symmetric pump forbids those pairs."""
    B = np.abs(project(state, eig_s, eig_i)) ** 2
    mx = B.max()
    if mx == 0:
        return 0.0
    return float(B[mixed_parity_mask(eig_s, eig_i)].max() / mx)


# --------------------------------------------------------------------------
# entanglement measures


@dataclass
class EntanglementMetrics:
    K: float
    F: float | None
    spectrum: np.ndarray


def schmidt_spectrum(state) -> np.ndarray:
    """Normalised Schmidt weights p_i = s_i^2 / sum s^2, descending."""
    s = np.linalg.svd(_psi(state), compute_uv=False)
    tot = np.sum(s ** 2)
    if tot == 0:
        raise ValidationError("Schmidt decomposition of a zero state is undefined")
    return s ** 2 / tot


def schmidt_number(state) -> float:
    """K = 1 / sum p_i^2 from the amplitude SVD."""
    p = schmidt_spectrum(state)
    return float(1.0 / np.sum(p ** 2))


def schmidt_number_from_intensity(intensity) -> float:
    """Approximate K from an intensity map: amplitudes are taken as
    sqrt(counts) with zero phases.  Phases are unknown in measured maps, so
    this is an estimate, not the amplitude Schmidt number."""
    I = np.asarray(intensity, dtype=float)
    if np.any(I < 0):
        raise ValidationError("intensities must be non-negative")
    return schmidt_number(np.sqrt(I))


def fidelity(state, reference) -> float:
    """|<ref|psi>|^2 / (||ref||^2 ||psi||^2), Frobenius inner product."""
    a = _psi(reference)
    b = _psi(state)
    if a.shape != b.shape:
        raise ValidationError("states have different shapes")
    if np.array_equal(a, b) and np.any(a):
        return 1.0
    na = np.vdot(a, a).real
    nb = np.vdot(b, b).real
    if na == 0 or nb == 0:
        raise ValidationError("fidelity with a zero state is undefined")
    return float(min(abs(np.vdot(a, b)) ** 2 / (na * nb), 1.0))


def entanglement_metrics(state, reference=None) -> EntanglementMetrics:
    p = schmidt_spectrum(state)
    F = fidelity(state, reference) if reference is not None else None
    return EntanglementMetrics(float(1.0 / np.sum(p ** 2)), F, p)


# --------------------------------------------------------------------------
# output powers and similarity


def output_powers(state) -> np.ndarray:
    """Photon count per waveguide at the facet: signal plus idler marginals."""
    I = np.abs(_psi(state)) ** 2
    return I.sum(axis=1) + I.sum(axis=0)


def mirror_asymmetry(powers) -> float:
    """max |P(n) - P(-n)| / max P."""
    P = np.asarray(powers, dtype=float)
    m = P.max()
    return float(np.abs(P - P[::-1]).max() / m) if m > 0 else 0.0


def intensity_similarity(p, q) -> float:
    """Bhattacharyya coefficient sum sqrt(p q) of two normalised
    non-negative arrays (power profiles or correlation maps)."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValidationError("arrays have different shapes")
    if np.any(p < 0) or np.any(q < 0):
        raise ValidationError("intensities must be non-negative")
    sp_, sq = p.sum(), q.sum()
    if sp_ == 0 or sq == 0:
        raise ValidationError("similarity of an empty distribution is undefined")
    return float(min(np.sum(np.sqrt(p / sp_ * q / sq)), 1.0))


# --------------------------------------------------------------------------
# measured maps


def load_measured_csv(path, n_sites: int | None = None) -> CorrelationMap:
    """Read a coincidence map with columns site_s, site_i, counts (centre-zero
    labels).  Missing cells count as zero."""
    rows = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        need = {"site_s", "site_i", "counts"}
        if rd.fieldnames is None or not need <= set(rd.fieldnames):
            raise ValidationError(f"measured CSV needs columns {sorted(need)}")
        for r in rd:
            try:
                rows.append((int(r["site_s"]), int(r["site_i"]), float(r["counts"])))
            except ValueError as exc:
                raise ValidationError(f"bad row in measured CSV: {r}") from exc
    if not rows:
        raise ValidationError("measured CSV has no rows")
    lo = min(min(a, b) for a, b, _ in rows)
    hi = max(max(a, b) for a, b, _ in rows)
    if n_sites is not None:
        lo, hi = -(n_sites // 2), n_sites - 1 - n_sites // 2
    w = max(-lo, hi)
    sites = np.arange(-w, w + 1)
    I = np.zeros((sites.size, sites.size))
    for a, b, c in rows:
        if c < 0:
            raise ValidationError("counts must be non-negative")
        I[a + w, b + w] += c
    return CorrelationMap(I, sites)
