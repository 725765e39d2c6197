"""Disorder Monte-Carlo: coupling-disorder ensembles, Schmidt number and
fidelity statistics, and paired comparisons between designs."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import fidelity, schmidt_number
from .dynamics import (NonlinearSource, PropagationConfig, PumpField,
                       propagate_biphoton, single_site_input)
from .errors import NumericalError, ValidationError
from .lattice import CouplingSequence, UnitCellSpec, build_hamiltonian
from .rng import stream


@dataclass(frozen=True, eq=False)
class DeviceSpec:
    """A waveguide array plus how it is driven.

    Signal and idler chains default to the pump chain; ``signal_scale`` and
    ``idler_scale`` rescale every coupling to mimic wavelength dispersion of
    the evanescent coupling.
    """

    sequence: CouplingSequence
    cell: UnitCellSpec | None = None
    pump_site: int = 0
    pump_power: float = 1.0
    signal_scale: float = 1.0
    idler_scale: float = 1.0
    name: str = "device"

    def hamiltonians(self, factors: np.ndarray | None = None):
        v = self.sequence.values
        if factors is not None:
            v = v * factors[: v.size]
        seq = CouplingSequence(v)
        H_p = build_hamiltonian(seq)
        H_s = H_p if self.signal_scale == 1.0 else build_hamiltonian(seq.scaled(self.signal_scale))
        H_i = H_p if self.idler_scale == 1.0 else build_hamiltonian(seq.scaled(self.idler_scale))
        return H_p, H_s, H_i

    def pump_input(self) -> np.ndarray:
        return single_site_input(self.sequence.n_sites, self.pump_site, self.pump_power)


def simulate_final(device: DeviceSpec, src: NonlinearSource, prop: PropagationConfig,
                   factors: np.ndarray | None = None):
    H_p, H_s, H_i = device.hamiltonians(factors)
    pump = PumpField(H_p, device.pump_input())
    last = PropagationConfig(prop.length, 2, prop.local_tol, prop.global_tol,
                             prop.method, prop.max_steps, prop.cn_steps)
    return propagate_biphoton(H_s, H_i, pump, src, last).final.psi


@dataclass(frozen=True, eq=False)
class EnsembleConfig:
    device: DeviceSpec
    levels: tuple[float, ...]
    realizations: int
    seed: int
    propagation: PropagationConfig
    source: NonlinearSource = NonlinearSource(1.0)
    workers: int | None = None

    def __post_init__(self):
        if self.realizations < 1:
            raise ValidationError("realizations must be >= 1")
        lv = tuple(float(x) for x in self.levels)
        if not lv or any(not (x >= 0 and math.isfinite(x)) for x in lv):
            raise ValidationError("disorder levels must be finite and >= 0")
        object.__setattr__(self, "levels", lv)


def realization_factors(n: int, seed: int, level_index: int, realization: int,
                        level: float) -> np.ndarray:
    """delta_i ~ N(1, level^2) from the stream (seed, level index, realization)."""
    if level == 0:
        return np.ones(n)
    return 1.0 + level * stream(seed, level_index, realization).normals(n)


@dataclass
class Record:
    level_index: int
    level: float
    realization: int
    K: float
    F: float
    ok: bool = True
    error: str = ""


@dataclass
class LevelStats:
    level: float
    n_ok: int
    n_failed: int
    K_mean: float
    K_std: float
    K_min: float
    K_max: float
    F_mean: float
    F_std: float
    F_min: float
    F_max: float


def _moments(x):
    x = list(x)
    if not x:
        return (math.nan,) * 4
    m = math.fsum(x) / len(x)
    s = math.sqrt(math.fsum((v - m) ** 2 for v in x) / len(x))
    return m, s, min(x), max(x)


@dataclass
class EnsembleStats:
    name: str
    seed: int
    clean_K: float
    levels: list[LevelStats]
    records: list[Record] = field(default_factory=list)

    def level(self, value: float) -> LevelStats:
        for s in self.levels:
            if s.level == value:
                return s
        raise KeyError(value)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "clean_K": self.clean_K,
            "levels": [vars(s) for s in self.levels],
        }


def _workers(n: int | None) -> int:
    if n is not None:
        return max(1, int(n))
    env = os.environ.get("TOPOLATTICE_THREADS")
    return max(1, int(env)) if env else 1


def _aggregate(name, seed, clean_K, levels, records) -> EnsembleStats:
    records = sorted(records, key=lambda r: (r.level_index, r.realization))
    out = []
    for li, lv in enumerate(levels):
        rs = [r for r in records if r.level_index == li]
        good = [r for r in rs if r.ok]
        km = _moments(r.K for r in good)
        fm = _moments(r.F for r in good)
        out.append(LevelStats(lv, len(good), len(rs) - len(good), *km, *fm))
    return EnsembleStats(name, seed, clean_K, out, records)


def run_disorder_ensemble(cfg: EnsembleConfig) -> EnsembleStats:
    """Propagate every (level, realization) member and compare each with the
    clean device.  Members are independent, so the result does not depend on
    scheduling; failed members are recorded and left out of the statistics."""
    dev = cfg.device
    ref = simulate_final(dev, cfg.source, cfg.propagation)
    clean_K = schmidt_number(ref)
    n = len(dev.sequence)
    jobs = [(li, lv, r) for li, lv in enumerate(cfg.levels) for r in range(cfg.realizations)]

    def run(job):
        li, lv, r = job
        try:
            if lv == 0:
                psi = ref
            else:
                f = realization_factors(n, cfg.seed, li, r, lv)
                psi = simulate_final(dev, cfg.source, cfg.propagation, f)
            return Record(li, lv, r, schmidt_number(psi), fidelity(psi, ref))
        except (NumericalError, ValidationError) as exc:
            return Record(li, lv, r, math.nan, math.nan, False, str(exc))

    nw = _workers(cfg.workers)
    if nw > 1:
        with ThreadPoolExecutor(nw) as ex:
            records = list(ex.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    return _aggregate(dev.name, cfg.seed, clean_K, list(cfg.levels), records)


@dataclass
class PairedReport:
    name_a: str
    name_b: str
    levels: list[float]
    dK_mean: list[float]
    dF_mean: list[float]
    pairs: list[tuple[int, int, float, float]]  # level index, realization, dK, dF
    stats_a: EnsembleStats
    stats_b: EnsembleStats

    def summary(self) -> dict:
        return {
            "design_a": self.name_a,
            "design_b": self.name_b,
            "levels": self.levels,
            "dK_mean": self.dK_mean,
            "dF_mean": self.dF_mean,
            "a": self.stats_a.summary(),
            "b": self.stats_b.summary(),
        }


def compare_designs(cfg_a: EnsembleConfig, cfg_b: EnsembleConfig) -> PairedReport:
    """Run both designs on the same disorder streams and report a - b."""
    if cfg_a.levels != cfg_b.levels:
        raise ValidationError("designs must share disorder levels")
    if cfg_a.seed != cfg_b.seed or cfg_a.realizations != cfg_b.realizations:
        raise ValidationError("designs must share seed and realization count")
    sa = run_disorder_ensemble(cfg_a)
    sb = run_disorder_ensemble(cfg_b)
    ra = {(r.level_index, r.realization): r for r in sa.records}
    pairs = []
    for r in sb.records:
        a = ra[(r.level_index, r.realization)]
        if a.ok and r.ok:
            pairs.append((r.level_index, r.realization, a.K - r.K, a.F - r.F))
    dK, dF = [], []
    for li in range(len(cfg_a.levels)):
        p = [x for x in pairs if x[0] == li]
        dK.append(math.fsum(x[2] for x in p) / len(p) if p else math.nan)
        dF.append(math.fsum(x[3] for x in p) / len(p) if p else math.nan)
    return PairedReport(sa.name, sb.name, list(cfg_a.levels), dK, dF, pairs, sa, sb)
