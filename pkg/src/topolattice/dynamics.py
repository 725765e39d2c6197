"""Pump and biphoton propagation along z.

The pump obeys i dA/dz = H_p A and is solved exactly in the eigenbasis of
H_p.  The biphoton amplitude obeys

    i dpsi/dz = H_s psi + psi H_i* + gamma psi0 diag(A_p(z)^2)

starting from psi(0) = 0.  Two independent integrators are provided:

* ``split_step``: in the joint eigenbasis the linear part is a pure phase
  exp(-i (beta_m + beta_n) h), applied exactly in two half steps around a
  midpoint source kick.  Step size is controlled by step doubling, and the
  accepted step is Richardson-extrapolated.
* ``crank_nicolson``: second-order implicit scheme on the site basis, with
  the N^2 x N^2 Kronecker operator factored once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.constants
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, NumericalError, ValidationError


def nonlinear_gamma(n2: float, a_eff: float, lambda0: float) -> float:
    """Kerr nonlinearity gamma = omega0 n2 / (c A_eff), omega0 = 2 pi c / lambda0."""
    if not (n2 > 0 and a_eff > 0 and lambda0 > 0):
        raise ValidationError("n2, A_eff and lambda0 must be positive")
    c = scipy.constants.c
    omega0 = 2 * math.pi * c / lambda0
    return omega0 * n2 / (c * a_eff)


@dataclass(frozen=True)
class NonlinearSource:
    """gamma in 1/(W m); psi0 is an overall generation efficiency.  A zero
    gamma switches the source off."""

    gamma: float
    psi0: float = 1.0
    n2: float | None = None
    a_eff: float | None = None
    lambda0: float | None = None

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ValidationError("gamma must be >= 0")
        if not math.isfinite(self.psi0):
            raise ValidationError("psi0 must be finite")

    @classmethod
    def from_material(cls, n2: float, a_eff: float, lambda0: float, psi0: float = 1.0):
        return cls(nonlinear_gamma(n2, a_eff, lambda0), psi0, n2, a_eff, lambda0)

    @property
    def strength(self) -> float:
        return self.gamma * self.psi0


@dataclass(frozen=True)
class PropagationConfig:
    length: float
    samples: int = 11
    local_tol: float = 1e-8
    global_tol: float = 1e-6
    method: str = "split_step"
    max_steps: int = 2_000_000
    cn_steps: int | None = None

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValidationError("propagation length must be positive")
        if self.samples < 2:
            raise ValidationError("need at least 2 output samples")
        if not (self.local_tol > 0 and self.global_tol > 0):
            raise ValidationError("tolerances must be positive")
        if self.method not in ("split_step", "crank_nicolson"):
            raise ValidationError(f"unknown method {self.method!r}")

    @property
    def z(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.samples)


def _eig(H: np.ndarray):
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError("Hamiltonian must be square")
    if np.iscomplexobj(H):
        if not np.allclose(H, H.conj().T, atol=1e-12 * np.abs(H).max()):
            raise ValidationError("Hamiltonian must be Hermitian")
        if np.abs(H.imag).max() > 0:
            raise ValidationError("complex lattice Hamiltonians are not supported")
        H = H.real
    if not np.allclose(H, H.T, atol=1e-12 * (np.abs(H).max() or 1.0)):
        raise ValidationError("Hamiltonian must be symmetric")
    return np.linalg.eigh(H)


# --------------------------------------------------------------------------
# pump


class PumpField:
    """Undepleted linear pump, exact at any z through the eigenbasis of H_p."""

    def __init__(self, H: np.ndarray, a0: np.ndarray):
        a0 = np.asarray(a0, dtype=complex)
        w, V = _eig(H)
        if a0.shape != (w.size,):
            raise ValidationError(f"pump input has shape {a0.shape}, lattice has {w.size} sites")
        self.H = np.asarray(H, dtype=float)
        self.betas = w
        self.modes = V
        self.a0 = a0
        self.modal = V.T @ a0

    @property
    def n_sites(self) -> int:
        return self.betas.size

    def at(self, z: float) -> np.ndarray:
        return self.modes @ (self.modal * np.exp(-1j * self.betas * z))

    def squared(self, z: float) -> np.ndarray:
        A = self.at(z)
        return A * A

    def power(self) -> float:
        return float(np.vdot(self.a0, self.a0).real)

    def bulk_fraction(self, interface: np.ndarray) -> float:
        """Share of pump power launched into modes outside ``interface``."""
        p = np.abs(self.modal) ** 2
        mask = np.ones(p.size, dtype=bool)
        mask[np.asarray(interface, dtype=int)] = False
        return float(p[mask].sum() / p.sum())


class ConstantPump:
    """Pump profile frozen along z (no coupling), for closed-form checks."""

    def __init__(self, a: np.ndarray):
        self.a = np.asarray(a, dtype=complex)

    @property
    def n_sites(self) -> int:
        return self.a.size

    def at(self, z: float) -> np.ndarray:
        return self.a

    def squared(self, z: float) -> np.ndarray:
        return self.a * self.a


def single_site_input(n_sites: int, site: int = 0, power: float = 1.0) -> np.ndarray:
    """Pump launched into one waveguide; ``site`` uses centre-zero labels."""
    c = n_sites // 2
    idx = c + site
    if not 0 <= idx < n_sites:
        raise ValidationError(f"site {site} outside the lattice")
    a = np.zeros(n_sites, dtype=complex)
    a[idx] = math.sqrt(power)
    return a


@dataclass(eq=False)
class PumpTrajectory:
    z: np.ndarray
    amplitudes: np.ndarray  # (S, N)

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def propagate_pump(H: np.ndarray, a0: np.ndarray, cfg: PropagationConfig) -> tuple[PumpField, PumpTrajectory]:
    field_ = PumpField(H, a0)
    z = cfg.z
    amps = np.array([field_.at(zz) for zz in z])
    return field_, PumpTrajectory(z, amps)


# --------------------------------------------------------------------------
# biphoton


@dataclass(eq=False)
class BiphotonState:
    psi: np.ndarray
    z: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.psi)):
            raise NumericalError("non-finite biphoton amplitude")


@dataclass(eq=False)
class BiphotonTrajectory:
    z: np.ndarray
    psi: np.ndarray  # (S, N, N)
    method: str
    stats: dict = field(default_factory=dict)

    def state(self, i: int = -1) -> BiphotonState:
        return BiphotonState(self.psi[i], float(self.z[i]))

    @property
    def final(self) -> BiphotonState:
        return self.state(-1)


def _check_inputs(H_s, H_i, pump):
    H_s = np.asarray(H_s)
    H_i = np.asarray(H_i)
    if H_s.shape != H_i.shape or H_s.shape[0] != pump.n_sites:
        raise ValidationError("signal, idler and pump dimensions differ")


class _SplitStep:
    """Exponential-midpoint stepper in the joint eigenbasis."""

    def __init__(self, H_s, H_i, pump, src: NonlinearSource):
        self.ws, self.Vs = _eig(H_s)
        # H_i is real, so H_i* = H_i
        self.wi, self.Vi = _eig(H_i)
        self.omega = self.ws[:, None] + self.wi[None, :]
        self.pump = pump
        self.g = src.strength
        self.n_src = 0

    def source(self, z: float) -> np.ndarray:
        self.n_src += 1
        a2 = self.pump.squared(z)
        return self.g * ((self.Vs.T * a2) @ self.Vi)

    def step(self, phi, z, h, s_mid=None):
        if s_mid is None:
            s_mid = self.source(z + 0.5 * h)
        half = np.exp(-0.5j * self.omega * h)
        return half * (half * phi - 1j * h * s_mid), s_mid

    def to_sites(self, phi):
        return self.Vs @ phi @ self.Vi.T


def _split_step_run(H_s, H_i, pump, src, cfg: PropagationConfig, tol: float):
    ss = _SplitStep(H_s, H_i, pump, src)
    n = ss.ws.size
    zs = cfg.z
    out = np.zeros((zs.size, n, n), dtype=complex)
    phi = np.zeros((n, n), dtype=complex)
    if ss.g == 0:
        return out, {"accepted": 0, "rejected": 0, "source_evals": 0}
    # first guess: resolve the fastest populated phase and the source scale
    wmax = float(np.abs(ss.omega).max()) or 1.0
    h = min(cfg.length / 10, 0.1 / wmax)
    z = 0.0
    acc = rej = 0
    hmin, hmax = math.inf, 0.0
    for k in range(1, zs.size):
        target = zs[k]
        while z < target:
            if acc + rej > cfg.max_steps:
                raise ConvergenceError(
                    "split-step budget exhausted",
                    {"z": z, "h": h, "accepted": acc, "rejected": rej})
            hh = min(h, target - z)
            last = hh >= target - z - 1e-15 * cfg.length
            big, s_big = ss.step(phi, z, hh)
            mid, _ = ss.step(phi, z, 0.5 * hh)
            two, _ = ss.step(mid, z + 0.5 * hh, 0.5 * hh)
            diff = two - big
            err = np.linalg.norm(diff) / 3.0
            scale = np.linalg.norm(two) + hh * np.linalg.norm(s_big)
            if err <= tol * scale or hh < 1e-14 * cfg.length:
                phi = two + diff / 3.0
                z = target if last else z + hh
                acc += 1
                hmin, hmax = min(hmin, hh), max(hmax, hh)
                fac = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * (tol * scale / err) ** (1 / 3)))
                if not last:
                    h = hh * fac
                else:
                    h = max(h, hh * fac)
            else:
                rej += 1
                h = hh * max(0.2, 0.9 * (tol * scale / err) ** (1 / 3))
        out[k] = ss.to_sites(phi)
    stats = {"accepted": acc, "rejected": rej, "source_evals": ss.n_src,
             "h_min": hmin, "h_max": hmax, "local_tol": tol}
    return out, stats


def propagate_biphoton(H_s, H_i, pump, src: NonlinearSource,
                       cfg: PropagationConfig) -> BiphotonTrajectory:
    """Adaptive symmetrised split-step integration from vacuum."""
    _check_inputs(H_s, H_i, pump)
    if cfg.method == "crank_nicolson":
        return propagate_biphoton_cn(H_s, H_i, pump, src, cfg)
    t0 = time.perf_counter()
    psi, stats = _split_step_run(H_s, H_i, pump, src, cfg, cfg.local_tol)
    stats["seconds"] = time.perf_counter() - t0
    return BiphotonTrajectory(cfg.z, psi, "split_step", stats)


def default_cn_steps(H_s, H_i, pump, cfg: PropagationConfig, rel: float = 2e-4) -> int:
    """Step count keeping the Crank-Nicolson phase error of the populated
    modes near ``rel``.  CN advances a phase Omega h with error
    ~ (Omega h)^3 / 12 per step."""
    ws = np.linalg.eigvalsh(np.asarray(H_s, dtype=float))
    wi = np.linalg.eigvalsh(np.asarray(H_i, dtype=float))
    wp = getattr(pump, "betas", None)
    om = np.abs(ws).max() + np.abs(wi).max()
    if wp is not None:
        om = max(om, 2 * np.abs(wp).max())
    # total phase error ~ Omega^3 h^2 L / 12 <= rel * Omega L
    h = math.sqrt(12 * rel) / om if om > 0 else cfg.length
    return max(int(math.ceil(cfg.length / h)), cfg.samples - 1)


def propagate_biphoton_cn(H_s, H_i, pump, src: NonlinearSource,
                          cfg: PropagationConfig) -> BiphotonTrajectory:
    """Crank-Nicolson on vec(psi) with trapezoidal source."""
    _check_inputs(H_s, H_i, pump)
    t0 = time.perf_counter()
    H_s = np.asarray(H_s, dtype=float)
    H_i = np.asarray(H_i, dtype=float)
    n = H_s.shape[0]
    zs = cfg.z
    out = np.zeros((zs.size, n, n), dtype=complex)
    g = src.strength
    if g == 0:
        return BiphotonTrajectory(zs, out, "crank_nicolson", {"steps": 0})
    steps = cfg.cn_steps or default_cn_steps(H_s, H_i, pump, cfg)
    per = int(math.ceil(steps / (zs.size - 1)))
    eye = sp.identity(n, format="csr")
    # column-major vec: vec(A X) = (I kron A) vec X, vec(X B) = (B^T kron I) vec X
    L = sp.kron(eye, sp.csr_matrix(H_s)) + sp.kron(sp.csr_matrix(H_i.conj().T), eye)
    L = L.tocsc()
    I2 = sp.identity(n * n, format="csc")
    total = 0
    x = np.zeros(n * n, dtype=complex)
    lu_cache: dict[float, object] = {}

    def src_vec(z):
        s = np.zeros((n, n), dtype=complex)
        s[np.diag_indices(n)] = g * pump.squared(z)
        return s.reshape(-1, order="F")

    try:
        for k in range(1, zs.size):
            h = (zs[k] - zs[k - 1]) / per
            key = round(h / cfg.length, 15)
            if key not in lu_cache:
                lu_cache[key] = (splu((I2 + 0.5j * h * L).tocsc()), (I2 - 0.5j * h * L).tocsr())
            lu, rhs_op = lu_cache[key]
            z = zs[k - 1]
            s0 = src_vec(z)
            for _ in range(per):
                s1 = src_vec(z + h)
                x = lu.solve(rhs_op @ x - 0.5j * h * (s0 + s1))
                s0 = s1
                z += h
                total += 1
            out[k] = x.reshape(n, n, order="F")
    except RuntimeError as exc:  # singular factor
        raise NumericalError(f"Crank-Nicolson linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalError("Crank-Nicolson produced non-finite values")
    stats = {"steps": total, "h": cfg.length / total, "seconds": time.perf_counter() - t0}
    return BiphotonTrajectory(zs, out, "crank_nicolson", stats)


def relative_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-snapshot ||a - b||_F / ||b||_F (zero where both vanish)."""
    a = np.asarray(a)
    b = np.asarray(b)
    num = np.linalg.norm((a - b).reshape(a.shape[0], -1), axis=1)
    den = np.linalg.norm(b.reshape(b.shape[0], -1), axis=1)
    out = np.zeros_like(num)
    nz = den > 0
    out[nz] = num[nz] / den[nz]
    out[~nz & (num > 0)] = math.inf
    return out


@dataclass
class Certificate:
    passed: bool
    max_relative_difference: float
    coarse_tol: float
    fine_tol: float
    target: float
    fine: BiphotonTrajectory


def certify(H_s, H_i, pump, src: NonlinearSource, cfg: PropagationConfig,
            coarse: BiphotonTrajectory | None = None) -> Certificate:
    """Step-halving certificate: rerun at local_tol/100 and compare."""
    if coarse is None:
        coarse = propagate_biphoton(H_s, H_i, pump, src, cfg)
    fine_tol = cfg.local_tol / 100
    t0 = time.perf_counter()
    psi, stats = _split_step_run(H_s, H_i, pump, src, cfg, fine_tol)
    stats["seconds"] = time.perf_counter() - t0
    fine = BiphotonTrajectory(cfg.z, psi, "split_step", stats)
    d = float(relative_distance(coarse.psi, fine.psi).max())
    return Certificate(d < cfg.global_tol, d, cfg.local_tol, fine_tol, cfg.global_tol, fine)


def propagate_exact_constant(H_s, H_i, pump, src: NonlinearSource, z) -> np.ndarray:
    """Closed-form psi(z) for a z-independent or eigen-decomposed pump.

    Each eigen-pair (m, n) is driven by source components oscillating at
    beta_p + beta_q, so the z-integral is elementary.  Cost grows with the
    number of pump modes squared; intended as an oracle.
    """
    ws, Vs = _eig(H_s)
    wi, Vi = _eig(H_i)
    om = ws[:, None] + wi[None, :]
    z = np.atleast_1d(np.asarray(z, dtype=float))
    g = src.strength
    if isinstance(pump, PumpField):
        keep = np.flatnonzero(np.abs(pump.modal) > 1e-14 * np.abs(pump.modal).max())
        a = pump.modal[keep]
        V = pump.modes[:, keep]
        w = pump.betas[keep]
        terms = []
        for i in range(keep.size):
            for j in range(keep.size):
                prof = a[i] * a[j] * V[:, i] * V[:, j]
                terms.append((w[i] + w[j], g * ((Vs.T * prof) @ Vi)))
    else:
        terms = [(0.0, g * ((Vs.T * pump.squared(0.0)) @ Vi))]
    out = np.zeros((z.size,) + om.shape, dtype=complex)
    for nu, S in terms:
        d = om - nu
        for k, zz in enumerate(z):
            # -i int_0^z exp(-i om (z - s)) exp(-i nu s) ds
            small = np.abs(d * zz) < 1e-8
            f = np.where(small, zz * np.exp(-1j * nu * zz),
                         (np.exp(-1j * nu * zz) - np.exp(-1j * om * zz))
                         / np.where(small, 1.0, 1j * d))
            out[k] += -1j * S * f
    return np.array([Vs @ phi @ Vi.T for phi in out])
