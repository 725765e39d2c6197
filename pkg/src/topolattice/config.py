"""JSON run configurations (schema version 1).

A config holds a lattice description plus optional sections for the pump,
nonlinear source, propagation, analysis, disorder, ensemble, band and
topology settings.  The lattice may be written inline at the top level or
under ``"lattice"``, in one of three forms:

* couplings:  ``{"J", "intracell", "intercell", "lattice_constant",
  "half_cells" | "n_sites", "interface_offset"}``
* geometry:   ``{"geometry": {"intracell_gaps_nm", "intercell_gap_nm", ...},
  "coupling_map": {"kappa0", "g0_nm"} | "soi_fit", "half_cells" | "n_sites",
  "interface_offset"}``
* explicit chain: ``{"couplings": [...]}`` (N-1 values, left to right)
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import NonlinearSource, PropagationConfig
from .ensemble import DeviceSpec, EnsembleConfig
from .errors import InterfaceWarning, ValidationError
from .lattice import (SOI_COUPLING_MAP, CouplingMap, CouplingSequence,
                      DisorderSpec, InterfaceLatticeSpec, LatticeModel,
                      PhysicalGeometry, UnitCellSpec, build_interface_sequence,
                      couplings_from_gaps)

SCHEMA_VERSION = 1


def _get(d: dict, key: str, kind, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ValidationError(f"missing required field {key!r}")
        return default
    val = d[key]
    try:
        if kind is int and (isinstance(val, bool) or float(val) != int(val)):
            raise ValueError
        return kind(val)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"field {key!r} has invalid value {val!r}") from exc


def coupling_map_from_dict(d) -> CouplingMap:
    if d is None or d == "soi_fit":
        return SOI_COUPLING_MAP
    if not isinstance(d, dict):
        raise ValidationError("coupling_map must be an object or \"soi_fit\"")
    return CouplingMap(_get(d, "kappa0", float, required=True), _get(d, "g0_nm", float, required=True))


def geometry_from_dict(d: dict) -> PhysicalGeometry:
    gaps = d.get("intracell_gaps_nm")
    if not isinstance(gaps, list):
        raise ValidationError("geometry.intracell_gaps_nm must be a list")
    return PhysicalGeometry(
        tuple(float(g) for g in gaps),
        _get(d, "intercell_gap_nm", float, required=True),
        _get(d, "width_nm", float, 500.0),
        _get(d, "height_nm", float, 220.0),
        _get(d, "wavelength_nm", float, 1550.0),
    )


def lattice_from_dict(d: dict, validate: bool = True) -> LatticeModel:
    """Resolve any supported lattice description into a LatticeModel."""
    if not isinstance(d, dict):
        raise ValidationError("lattice spec must be a JSON object")
    meta = {}
    if "couplings" in d:
        vals = d["couplings"]
        if not isinstance(vals, list) or not vals:
            raise ValidationError("couplings must be a non-empty list")
        seq = CouplingSequence(np.array(vals, dtype=float))
        if np.any(seq.values <= 0) or not np.all(np.isfinite(seq.values)):
            raise ValidationError("couplings must be positive and finite")
        cell = None
        if "cell" in d:
            c = d["cell"]
            cell = UnitCellSpec(tuple(c["intracell"]), float(c["intercell"]),
                                float(c.get("lattice_constant", 1.0)))
        return LatticeModel(seq, cell, None, meta)
    if "geometry" in d:
        geom = geometry_from_dict(d["geometry"])
        cmap = coupling_map_from_dict(d.get("coupling_map"))
        cell = couplings_from_gaps(geom, cmap, _get(d, "lattice_constant", float, 1.0))
        meta["coupling_map"] = {"kappa0": cmap.kappa0, "g0_nm": cmap.g0}
    else:
        intra = d.get("intracell")
        if not isinstance(intra, list):
            raise ValidationError("lattice needs 'intracell', 'geometry' or 'couplings'")
        cell = UnitCellSpec(tuple(float(x) for x in intra),
                            _get(d, "intercell", float, required=True),
                            _get(d, "lattice_constant", float, 1.0))
        J = _get(d, "J", int)
        if J is not None and J != cell.J:
            raise ValidationError(f"J={J} does not match {len(intra)} intracell couplings")
    offset = _get(d, "interface_offset", int, 0)
    if "half_cells" in d:
        spec = InterfaceLatticeSpec(cell, _get(d, "half_cells", int), offset)
    elif "n_sites" in d:
        spec = InterfaceLatticeSpec.for_sites(cell, _get(d, "n_sites", int), offset)
    else:
        raise ValidationError("lattice needs 'half_cells' or 'n_sites'")
    seq = build_interface_sequence(spec, validate=validate)
    return LatticeModel(seq, cell, spec, meta)


@dataclass
class RunConfig:
    raw: dict
    lattice: LatticeModel
    name: str = "run"
    pump_site: int = 0
    pump_power: float = 1.0
    signal_scale: float = 1.0
    idler_scale: float = 1.0
    source: NonlinearSource = field(default_factory=lambda: NonlinearSource(1.0))
    propagation: PropagationConfig | None = None
    window: int = 3
    disorder: DisorderSpec | None = None
    ensemble: dict | None = None
    bands_nk: int = 257
    topology: dict | None = None
    defect_scales: dict | None = None
    warnings: list[str] = field(default_factory=list)

    def device(self) -> DeviceSpec:
        return DeviceSpec(self.lattice.sequence, self.lattice.cell, self.pump_site,
                          self.pump_power, self.signal_scale, self.idler_scale, self.name)

    def ensemble_config(self, seed: int | None = None) -> EnsembleConfig:
        if self.ensemble is None:
            raise ValidationError("config has no 'ensemble' section")
        if self.propagation is None:
            raise ValidationError("ensemble runs need a 'propagation' section")
        e = self.ensemble
        levels = e.get("levels")
        if not isinstance(levels, list):
            raise ValidationError("ensemble.levels must be a list")
        return EnsembleConfig(
            self.device(), tuple(levels), _get(e, "realizations", int, required=True),
            seed if seed is not None else _get(e, "seed", int, 0),
            self.propagation, self.source, _get(e, "workers", int))

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _source_from_dict(d: dict) -> NonlinearSource:
    psi0 = _get(d, "psi0", float, 1.0)
    if "gamma" in d:
        return NonlinearSource(_get(d, "gamma", float), psi0)
    if {"n2", "a_eff", "lambda0"} <= set(d):
        return NonlinearSource.from_material(float(d["n2"]), float(d["a_eff"]), float(d["lambda0"]), psi0)
    raise ValidationError("source needs 'gamma' or n2/a_eff/lambda0")


def _propagation_from_dict(d: dict) -> PropagationConfig:
    return PropagationConfig(
        _get(d, "length", float, required=True),
        _get(d, "samples", int, 11),
        _get(d, "local_tol", float, 1e-8),
        _get(d, "global_tol", float, 1e-6),
        d.get("method", "split_step"),
        _get(d, "max_steps", int, 2_000_000),
        _get(d, "cn_steps", int),
    )


def _apply_defects(model: LatticeModel, d: dict | None) -> LatticeModel:
    """Scale individual bonds: {"bond_offsets": [-1, 0], "factor": 4} scales
    the bonds whose left site is centre + offset."""
    if not d:
        return model
    offs = d.get("bond_offsets")
    if not isinstance(offs, list):
        raise ValidationError("defect.bond_offsets must be a list")
    factor = _get(d, "factor", float, required=True)
    v = np.array(model.sequence.values)
    c = model.sequence.center
    for o in offs:
        i = c + int(o)
        if not 0 <= i < v.size:
            raise ValidationError(f"defect bond offset {o} outside the lattice")
        v[i] *= factor
    return LatticeModel(CouplingSequence(v), model.cell, model.interface,
                        dict(model.meta, defect=d))


def config_from_dict(raw: dict, seed: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    ver = raw.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ValidationError(f"unsupported schema_version {ver!r}; expected {SCHEMA_VERSION}")
    raw = json.loads(json.dumps(raw))  # private copy
    if seed is not None:
        if "ensemble" in raw:
            raw["ensemble"]["seed"] = int(seed)
        if "disorder" in raw:
            raw["disorder"]["seed"] = int(seed)
    lat = raw.get("lattice", raw)
    caught = []
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always", InterfaceWarning)
        model = lattice_from_dict(lat)
        caught = [str(x.message) for x in w if issubclass(x.category, InterfaceWarning)]
    model = _apply_defects(model, raw.get("defect"))
    cfg = RunConfig(raw, model, name=str(raw.get("name", "run")), warnings=caught)
    pump = raw.get("pump", {})
    cfg.pump_site = _get(pump, "site", int, 0)
    cfg.pump_power = _get(pump, "power", float, 1.0)
    if not cfg.pump_power > 0:
        raise ValidationError("pump power must be positive")
    disp = raw.get("dispersion", {})
    cfg.signal_scale = _get(disp, "signal_scale", float, 1.0)
    cfg.idler_scale = _get(disp, "idler_scale", float, 1.0)
    if not (cfg.signal_scale > 0 and cfg.idler_scale > 0):
        raise ValidationError("dispersion scales must be positive")
    if "source" in raw:
        cfg.source = _source_from_dict(raw["source"])
    if "propagation" in raw:
        cfg.propagation = _propagation_from_dict(raw["propagation"])
    an = raw.get("analysis", {})
    cfg.window = _get(an, "window", int, 3)
    if "disorder" in raw:
        d = raw["disorder"]
        cfg.disorder = DisorderSpec(_get(d, "level", float, required=True),
                                    _get(d, "seed", int, 0), _get(d, "realization", int, 0))
    cfg.ensemble = raw.get("ensemble")
    cfg.bands_nk = _get(raw.get("bands", {}), "n_k", int, 257)
    cfg.topology = raw.get("topology")
    return cfg


def load_config(path, seed: int | None = None) -> RunConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"config file not found: {p}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(raw, seed)


def json_safe(obj):
    """Replace non-finite floats and numpy scalars for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj
