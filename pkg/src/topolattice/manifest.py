"""Output writers and run manifests.

Result files never contain timestamps, so identical inputs give identical
bytes.  Wall-clock time lives only in the manifest, next to the content
hashes of every file the run produced.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, canonical_json, json_safe

TOOL_VERSION = "0.1.0"
MANIFEST_NAME = "manifest.json"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    p = Path(path)
    p.write_text(buf.getvalue())
    return p


def write_json(path, obj) -> Path:
    p = Path(path)
    p.write_text(json.dumps(json_safe(obj), indent=2, sort_keys=True) + "\n")
    return p


@dataclass
class RunManifest:
    command: str
    config: dict
    config_hash: str
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    wall_seconds: float = 0.0
    stats: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    schema_version: int = SCHEMA_VERSION
    python: str = field(default_factory=lambda: sys.version.split()[0])
    numpy: str = np.__version__

    def add_output(self, path) -> None:
        p = Path(path)
        self.outputs[p.name] = sha256_file(p)

    def add_input(self, path) -> None:
        p = Path(path)
        self.inputs[str(p)] = sha256_file(p)

    def write(self, out_dir) -> Path:
        return write_json(Path(out_dir) / MANIFEST_NAME, asdict(self))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())


def verify_outputs(manifest: dict, out_dir) -> dict[str, bool]:
    """Recompute the hash of each listed output and compare."""
    d = Path(out_dir)
    return {name: (d / name).exists() and sha256_file(d / name) == h
            for name, h in manifest["outputs"].items()}


# --------------------------------------------------------------------------
# structured result files


def write_trajectory(out_dir, stem: str, z, psi, labels) -> tuple[Path, Path]:
    """CSV of |psi|^2 per snapshot (one row per z, row-major flattening over
    (signal site, idler site)) plus a JSON sidecar with z and dimensions."""
    psi = np.asarray(psi)
    n = psi.shape[1]
    cols = [f"I[{a};{b}]" for a in labels for b in labels]
    rows = ([repr(float(zz))] + (np.abs(p) ** 2).ravel().tolist() for zz, p in zip(z, psi))
    c = write_csv(Path(out_dir) / f"{stem}.csv", ["z"] + cols, rows)
    j = write_json(Path(out_dir) / f"{stem}.json", {
        "z": list(map(float, z)), "n_sites": n, "site_labels": list(map(int, labels)),
        "layout": "row per z; columns I[signal;idler], signal-major",
    })
    return c, j


def write_bands(path, bands) -> Path:
    J = bands.bands.shape[1]
    rows = ([k, *b] for k, b in zip(bands.k, bands.bands))
    return write_csv(path, ["k"] + [f"band_{j + 1}" for j in range(J)], rows)


def write_ensemble(out_dir, stats, stem: str = "ensemble") -> tuple[Path, Path]:
    rows = [(r.level, r.realization, r.K, r.F, int(r.ok)) for r in stats.records]
    c = write_csv(Path(out_dir) / f"{stem}.csv", ["level", "realization", "K", "F", "ok"], rows)
    j = write_json(Path(out_dir) / f"{stem}_summary.json", stats.summary())
    return c, j


def write_matrix(path, M, row_labels, col_labels) -> Path:
    rows = ([rl, *r] for rl, r in zip(row_labels, np.asarray(M).tolist()))
    return write_csv(path, ["row"] + list(col_labels), rows)
