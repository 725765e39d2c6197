"""Superlattice construction: unit cells, gap-to-coupling conversion,
mirror-symmetric interface chains, Hamiltonians and coupling disorder.

Units are SI throughout (couplings in 1/m, lengths in m) except physical
gaps, which are given in nm.  For dimensionless work set
``lattice_constant=1`` and use couplings of order one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InterfaceWarning, ValidationError
from .rng import stream

FAB_MIN_GAP_NM = 70.0
_SYM_RTOL = 1e-12


def _is_palindrome(values, rtol=_SYM_RTOL) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.allclose(v, v[::-1], rtol=rtol, atol=0.0))


@dataclass(frozen=True)
class UnitCellSpec:
    """J-site cell with intracell couplings t_1..t_{J-1} and intercell tau."""

    intracell: tuple[float, ...]
    intercell: float
    lattice_constant: float = 1.0

    def __post_init__(self):
        t = tuple(float(x) for x in self.intracell)
        object.__setattr__(self, "intracell", t)
        object.__setattr__(self, "intercell", float(self.intercell))
        object.__setattr__(self, "lattice_constant", float(self.lattice_constant))
        if len(t) < 2:
            raise ValidationError(f"J must be >= 3, got J={len(t) + 1}")
        allc = np.array(t + (self.intercell,))
        if not np.all(np.isfinite(allc)) or np.any(allc <= 0):
            raise ValidationError(f"couplings must be positive and finite: {allc.tolist()}")
        if not (self.lattice_constant > 0 and math.isfinite(self.lattice_constant)):
            raise ValidationError("lattice_constant must be positive")
        if not _is_palindrome(t):
            raise ValidationError(f"cell is not inversion symmetric (t_j != t_(J-j)): {list(t)}")

    @property
    def J(self) -> int:
        return len(self.intracell) + 1

    @property
    def cycle(self) -> tuple[float, ...]:
        """Bond cycle t_1, ..., t_{J-1}, tau."""
        return self.intracell + (self.intercell,)

    def scaled(self, factor: float) -> "UnitCellSpec":
        return UnitCellSpec(tuple(factor * x for x in self.intracell),
                            factor * self.intercell, self.lattice_constant)

    @classmethod
    def from_unique(cls, J: int, unique, intercell: float, lattice_constant: float = 1.0):
        """Build a symmetric cell from the first ceil((J-1)/2) couplings."""
        unique = [float(u) for u in unique]
        n = J - 1
        half = (n + 1) // 2
        if len(unique) != half:
            raise ValidationError(f"J={J} needs {half} independent intracell couplings")
        t = unique + unique[: n - half][::-1]
        return cls(tuple(t), intercell, lattice_constant)


@dataclass(frozen=True)
class PhysicalGeometry:
    """Inter-waveguide gaps of one unit cell, in nm."""

    intracell_gaps: tuple[float, ...]
    intercell_gap: float
    width: float = 500.0
    height: float = 220.0
    wavelength: float = 1550.0

    def __post_init__(self):
        g = tuple(float(x) for x in self.intracell_gaps)
        object.__setattr__(self, "intracell_gaps", g)
        object.__setattr__(self, "intercell_gap", float(self.intercell_gap))
        for name in ("width", "height", "wavelength"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for gap in g + (self.intercell_gap,):
            if not math.isfinite(gap) or gap < FAB_MIN_GAP_NM:
                raise ValidationError(
                    f"gap {gap} nm is below the {FAB_MIN_GAP_NM:g} nm fabrication minimum")
        if len(g) < 2:
            raise ValidationError("need at least two intracell gaps (J >= 3)")
        if not _is_palindrome(g):
            raise ValidationError(f"intracell gaps are not mirror symmetric: {list(g)}")


@dataclass(frozen=True)
class CouplingMap:
    """Evanescent coupling model t(g) = kappa0 * exp(-g / g0)."""

    kappa0: float
    g0: float

    def __post_init__(self):
        if not (self.kappa0 > 0 and self.g0 > 0):
            raise ValidationError("kappa0 and g0 must be positive")

    def coupling(self, gap_nm):
        return self.kappa0 * np.exp(-np.asarray(gap_nm, dtype=float) / self.g0)


# Least-squares fit of the exponential model to the J=5 gap sweep
# (t1 gap 260/282/310 nm, t2 = 330 nm, tau = 125 nm): central gap sizes
# 7.19e3/9.38e3/1.13e4 1/m and outer/central gap ratios 7.46/5.70/4.70.
# Residuals stay below 9 %.  Illustrative, not a measured calibration.
SOI_COUPLING_MAP = CouplingMap(kappa0=1.99455e5, g0=115.748)


def couplings_from_gaps(geom: PhysicalGeometry, cmap: CouplingMap,
                        lattice_constant: float = 1.0) -> UnitCellSpec:
    t = tuple(float(x) for x in cmap.coupling(geom.intracell_gaps))
    tau = float(cmap.coupling(geom.intercell_gap))
    return UnitCellSpec(t, tau, lattice_constant)


@dataclass(frozen=True)
class InterfaceLatticeSpec:
    """Mirror-symmetric chain of ``half_cells`` cells on each side of a
    central waveguide.  ``interface_offset`` picks the bond of the cell cycle
    that touches the centre; 0 puts t_1 on both sides of waveguide 0."""

    cell: UnitCellSpec
    half_cells: int
    interface_offset: int = 0

    def __post_init__(self):
        if int(self.half_cells) < 1:
            raise ValidationError("half_cells must be >= 1")
        if not 0 <= int(self.interface_offset) < self.cell.J:
            raise ValidationError(f"interface_offset must be in 0..{self.cell.J - 1}")

    @property
    def n_sites(self) -> int:
        return 2 * self.half_cells * self.cell.J + 1

    @classmethod
    def for_sites(cls, cell: UnitCellSpec, n_sites: int, interface_offset: int = 0):
        """Largest mirror chain with at most ``n_sites`` sites."""
        m = (n_sites - 1) // (2 * cell.J)
        return cls(cell, m, interface_offset)


@dataclass(frozen=True, eq=False)
class CouplingSequence:
    """Nearest-neighbour couplings of an N-site chain, left to right."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, CouplingSequence) and np.array_equal(self.values, other.values)

    @property
    def n_sites(self) -> int:
        return self.values.size + 1

    @property
    def center(self) -> int:
        """Array index of waveguide 0 (odd-length chains)."""
        return self.n_sites // 2

    def site_labels(self) -> np.ndarray:
        """Waveguide labels with the interface at 0, negative to the left."""
        return np.arange(self.n_sites) - self.center

    def is_mirror_symmetric(self, rtol: float = _SYM_RTOL) -> bool:
        return _is_palindrome(self.values, rtol)

    def scaled(self, factor: float) -> "CouplingSequence":
        return CouplingSequence(self.values * factor)


def build_interface_sequence(spec: InterfaceLatticeSpec, validate: bool = True) -> CouplingSequence:
    """Right half repeats the cell cycle from ``interface_offset``; the left
    half is its mirror image.

    With ``validate`` the chain is diagonalised and the number of
    centre-localised midgap modes compared with J-1; a mismatch is reported
    as an :class:`InterfaceWarning`, not raised.
    """
    cyc = spec.cell.cycle
    J = spec.cell.J
    n_right = spec.half_cells * J
    right = [cyc[(spec.interface_offset + i) % J] for i in range(n_right)]
    seq = CouplingSequence(np.array(right[::-1] + right))
    if validate:
        from .spectral import eigensystem, interface_indices

        found = len(interface_indices(eigensystem(build_hamiltonian(seq)), spec.cell))
        if found != J - 1:
            warnings.warn(
                f"interface lattice (J={J}, offset={spec.interface_offset}, N={seq.n_sites}) "
                f"hosts {found} midgap interface modes, expected {J - 1}",
                InterfaceWarning, stacklevel=2)
    return seq


def build_hamiltonian(seq: CouplingSequence) -> np.ndarray:
    """Dense symmetric tridiagonal matrix with zero diagonal."""
    v = seq.values if isinstance(seq, CouplingSequence) else np.asarray(seq, dtype=float)
    if v.size == 0:
        raise ValidationError("empty coupling sequence")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise ValidationError("couplings must be positive and finite")
    n = v.size + 1
    H = np.zeros((n, n))
    i = np.arange(n - 1)
    H[i, i + 1] = v
    H[i + 1, i] = v
    return H


@dataclass(frozen=True)
class DisorderSpec:
    """Relative Gaussian coupling disorder: each coupling is multiplied by
    delta_i ~ N(1, level**2) drawn from the stream (seed, realization_index)."""

    level: float
    seed: int = 0
    realization_index: int = 0

    def __post_init__(self):
        if not (self.level >= 0 and math.isfinite(self.level)):
            raise ValidationError("disorder level must be >= 0")


def disorder_factors(n: int, d: DisorderSpec) -> np.ndarray:
    """The delta vector for ``n`` couplings.  Reuse it for the pump, signal
    and idler chains so all three see the same fabricated device."""
    if d.level == 0:
        return np.ones(n)
    gen = stream(d.seed, d.realization_index)
    return 1.0 + d.level * gen.normals(n)


def disordered_sequence(seq: CouplingSequence, d: DisorderSpec,
                        factors: np.ndarray | None = None) -> CouplingSequence:
    if d.level == 0:
        return seq
    if factors is None:
        factors = disorder_factors(len(seq), d)
    return CouplingSequence(seq.values * factors[: len(seq)])


@dataclass(frozen=True)
class LatticeModel:
    """A resolved lattice: the chain that is simulated, plus the unit cell and
    interface spec it came from when built from a cell description."""

    sequence: CouplingSequence
    cell: UnitCellSpec | None = None
    interface: InterfaceLatticeSpec | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_sites(self) -> int:
        return self.sequence.n_sites
