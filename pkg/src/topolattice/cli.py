"""Command-line front end.

    topolattice {bands,topology,propagate,analyze,ensemble,report}
                --config PATH [--out DIR] [--seed U64] [--format csv|json|svg] [--quiet]

Exit status: 0 on success, 1 on usage or validation errors, 2 on numerical
failures.  Every run writes ``manifest.json`` into the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis as an
from .config import RunConfig, config_from_dict, json_safe
from .dynamics import (PumpField, propagate_biphoton, propagate_biphoton_cn,
                       propagate_pump)
from .ensemble import run_disorder_ensemble
from .errors import NumericalError, ValidationError
from .lattice import disorder_factors
from .manifest import (RunManifest, write_bands, write_csv, write_ensemble,
                       write_json, write_matrix, write_trajectory)
from .spectral import band_structure, closed_form_report, eigensystem, numeric_gaps
from .topology import invariants, phase_diagram

COMMANDS = ("bands", "topology", "propagate", "analyze", "ensemble", "report")
U64 = 1 << 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < U64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topolattice", description="Topological waveguide lattice simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "bands": "band structure and gap report",
        "topology": "winding invariants and optional phase diagram",
        "propagate": "pump and biphoton propagation trajectories",
        "analyze": "correlation map, mode populations, K, F, parity and mismatch",
        "ensemble": "disorder ensemble statistics",
        "report": "bundle of band, analysis and heatmap outputs",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--config", required=True, help="JSON config (or a manifest.json to rerun)")
        s.add_argument("--out", default="topolattice_out", help="output directory")
        s.add_argument("--seed", type=_seed, help="override the disorder/ensemble seed")
        s.add_argument("--format", choices=("csv", "json", "svg"), default="csv",
                       help="csv: CSV tables plus JSON summaries; json: JSON only; svg: csv plus figures")
        s.add_argument("--quiet", action="store_true", help="suppress the console summary")
        if name == "analyze":
            s.add_argument("--measured", help="measured coincidence CSV (site_s, site_i, counts)")
    return p


def _load(path: str, seed: int | None) -> RunConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    if isinstance(raw, dict) and "command" in raw and isinstance(raw.get("config"), dict):
        raw = raw["config"]  # rerun from a manifest
    return config_from_dict(raw, seed)


class _Run:
    def __init__(self, args, cfg: RunConfig, out: Path):
        self.args, self.cfg, self.out = args, cfg, out
        self.fmt = args.format
        self.manifest = RunManifest(
            args.command, cfg.raw, cfg.config_hash(),
            seed=(cfg.ensemble or cfg.raw.get("disorder") or {}).get("seed"),
            warnings=list(cfg.warnings))
        self.summary: dict = {}

    def table(self, name, header, rows):
        rows = list(rows)
        if self.fmt == "json":
            self.json(name, {"columns": header, "rows": rows})
        else:
            self.manifest.add_output(write_csv(self.out / f"{name}.csv", header, rows))

    def json(self, name, obj):
        self.manifest.add_output(write_json(self.out / f"{name}.json", obj))

    def file(self, path):
        self.manifest.add_output(path)

    @property
    def svg(self) -> bool:
        return self.fmt == "svg" or self.args.command == "report"


def _need_cell(cfg: RunConfig):
    if cfg.lattice.cell is None:
        raise ValidationError("this command needs a unit-cell lattice description")
    return cfg.lattice.cell


def _hamiltonians(cfg: RunConfig):
    dev = cfg.device()
    factors = None
    if cfg.disorder is not None and cfg.disorder.level > 0:
        factors = disorder_factors(len(dev.sequence), cfg.disorder)
    return dev, dev.hamiltonians(factors)


def cmd_bands(run: _Run):
    cfg = run.cfg
    cell = _need_cell(cfg)
    bs = band_structure(cell, cfg.bands_nk)
    if run.fmt == "json":
        run.json("bands", {"k": bs.k, "bands": bs.bands})
    else:
        run.file(write_bands(run.out / "bands.csv", bs))
    rep = closed_form_report(cell).to_dict()
    rep["numeric_gaps"] = numeric_gaps(cell).tolist()
    run.json("gaps", rep)
    if run.svg:
        from .plotting import bands_svg
        run.file(bands_svg(run.out / "bands.svg", bs.k, bs.bands, f"J={cell.J}"))
    run.summary["gaps"] = rep["numeric_gaps"]


def cmd_topology(run: _Run):
    cfg = run.cfg
    cell = _need_cell(cfg)
    top = cfg.topology or {}
    n_k = int(top.get("n_k", 256))
    inv = invariants(cell, n_k)
    run.json("invariants", {"J": cell.J, "nu_total": inv.nu_total, "at_transition": inv.at_transition,
                            "zak": inv.zak, "band_winding": inv.band_winding})
    run.summary["nu_total"] = inv.nu_total
    run.summary["band_winding"] = inv.band_winding
    if "t_range" in top or "tau_range" in top:
        res = int(top.get("resolution", 50))
        t0, t1 = top.get("t_range", [0.02, 1.0])
        u0, u1 = top.get("tau_range", [0.02, 1.0])
        pd = phase_diagram(cell, np.linspace(t0, t1, res), np.linspace(u0, u1, res), n_k)
        rows = [(t, tau, nu, *["" if np.isnan(x) else int(x) for x in bw]) for t, tau, nu, bw in pd.rows()]
        run.table("phase_diagram", ["t", "tau", "nu_total"] + [f"nu_band_{j + 1}" for j in range(pd.J)], rows)
        if run.svg:
            from .plotting import phase_svg
            run.file(phase_svg(run.out / "phase_diagram.svg", pd.t, pd.tau, pd.nu_total, f"J={cell.J}"))
        run.summary["phase_points"] = int(pd.nu_total.size)


def _propagate(run: _Run):
    cfg = run.cfg
    if cfg.propagation is None:
        raise ValidationError("config needs a 'propagation' section")
    dev, (H_p, H_s, H_i) = _hamiltonians(cfg)
    a0 = dev.pump_input()
    pump, ptraj = propagate_pump(H_p, a0, cfg.propagation)
    if cfg.propagation.method == "crank_nicolson":
        tr = propagate_biphoton_cn(H_s, H_i, pump, cfg.source, cfg.propagation)
    else:
        tr = propagate_biphoton(H_s, H_i, pump, cfg.source, cfg.propagation)
    run.manifest.stats = {k: v for k, v in tr.stats.items()}
    return dev, (H_p, H_s, H_i), pump, ptraj, tr


def cmd_propagate(run: _Run):
    dev, _, _, ptraj, tr = _propagate(run)
    labels = dev.sequence.site_labels()
    P = ptraj.powers
    run.table("pump_powers", ["z"] + [f"P[{s}]" for s in labels], ([z, *p] for z, p in zip(ptraj.z, P)))
    if run.fmt == "json":
        run.json("biphoton", {"z": tr.z, "site_labels": labels, "intensity": np.abs(tr.psi) ** 2})
    else:
        for p in write_trajectory(run.out, "biphoton", tr.z, tr.psi, labels):
            run.file(p)
    if run.svg:
        from .plotting import heatmap_svg
        run.file(heatmap_svg(run.out / "biphoton_final.svg", np.abs(tr.final.psi) ** 2, labels,
                             f"z = {tr.z[-1]:.4g}"))
    run.summary["steps"] = tr.stats.get("accepted", tr.stats.get("steps"))


def _analysis(run: _Run, dev, Hs, tr) -> dict:
    cfg = run.cfg
    H_p, H_s, H_i = Hs
    cell = cfg.lattice.cell
    cs = cell.scaled(cfg.signal_scale) if cell is not None else None
    ci = cell.scaled(cfg.idler_scale) if cell is not None else None
    es, ei = eigensystem(H_s, cs), eigensystem(H_i, ci)
    psi = tr.final.psi
    cmap = an.correlation_map(psi, min(cfg.window, dev.sequence.n_sites // 2))
    run.table("correlation_map", ["signal_site"] + [str(s) for s in cmap.sites],
              ([s, *r] for s, r in zip(cmap.sites, cmap.intensities.tolist())))
    mp = an.mode_populations(psi, es, ei)
    run.json("mode_populations", dict(mp.as_dict(),
                                      signal_betas=es.values[mp.signal_modes],
                                      idler_betas=ei.values[mp.idler_modes]))
    pairs = [(m, n) for m in mp.signal_modes for n in mp.idler_modes]
    metrics = an.entanglement_metrics(psi)
    out = {
        "K": metrics.K,
        "schmidt_spectrum_top": metrics.spectrum[:10],
        "n_interface_signal": int(mp.signal_modes.size),
        "n_interface_idler": int(mp.idler_modes.size),
        "mismatch": an.mismatch_predictions(es, ei, pairs),
        "mirror_asymmetry": an.mirror_asymmetry(an.output_powers(psi)),
    }
    if dev.sequence.is_mirror_symmetric() and cfg.disorder is None and cfg.pump_site == 0:
        out["parity_leakage"] = max(an.parity_leakage(tr.state(i), es, ei)
                                    for i in range(1, len(tr.z)))
    if cfg.disorder is not None and cfg.disorder.level > 0:
        from .ensemble import simulate_final
        ref = simulate_final(dev, cfg.source, cfg.propagation)
        out["F"] = an.fidelity(psi, ref)
    measured = getattr(run.args, "measured", None)
    if measured:
        meas = an.load_measured_csv(measured)
        run.manifest.add_input(measured)
        w = int(meas.sites[-1])
        sim = an.correlation_map(psi, min(w, dev.sequence.n_sites // 2))
        if sim.sites.size != meas.sites.size:
            raise ValidationError("measured map is wider than the simulated lattice")
        out["measured_similarity"] = an.intensity_similarity(sim.intensities, meas.intensities)
        out["measured_K_estimate"] = an.schmidt_number_from_intensity(meas.intensities)
    run.json("analysis", out)
    if run.svg:
        from .plotting import heatmap_svg, matrix_svg, profile_svg
        run.file(heatmap_svg(run.out / "correlation_map.svg", cmap.intensities, cmap.sites,
                             "coincidence map"))
        run.file(matrix_svg(run.out / "mode_populations.svg", mp.populations, mp.labels, mp.labels,
                            "interface-mode populations"))
        run.file(profile_svg(run.out / "output_powers.svg", dev.sequence.site_labels(),
                             an.output_powers(psi), "facet output"))
    run.summary.update(K=metrics.K, interface_block=list(mp.populations.shape))
    return out


def cmd_analyze(run: _Run):
    dev, Hs, _, _, tr = _propagate(run)
    _analysis(run, dev, Hs, tr)


def cmd_ensemble(run: _Run):
    ec = run.cfg.ensemble_config()
    run.manifest.seed = ec.seed
    stats = run_disorder_ensemble(ec)
    if run.fmt == "json":
        run.json("ensemble", {"records": [vars(r) for r in stats.records], "summary": stats.summary()})
    else:
        for p in write_ensemble(run.out, stats):
            run.file(p)
    if run.svg:
        from .plotting import ensemble_svg
        run.file(ensemble_svg(run.out / "ensemble.svg", [json_safe(stats.summary())]))
    run.summary.update(clean_K=stats.clean_K,
                       F_mean={s.level: s.F_mean for s in stats.levels})


def cmd_report(run: _Run):
    if run.cfg.lattice.cell is not None:
        cmd_bands(run)
    dev, Hs, _, _, tr = _propagate(run)
    _analysis(run, dev, Hs, tr)
    from .plotting import heatmap_svg
    labels = dev.sequence.site_labels()
    run.file(heatmap_svg(run.out / "biphoton_full.svg", np.abs(tr.final.psi) ** 2, labels,
                         "full correlation map"))
    if run.fmt != "json":
        write_matrix(run.out / "biphoton_final.csv", np.abs(tr.final.psi) ** 2, labels, labels)
        run.file(run.out / "biphoton_final.csv")


HANDLERS = {"bands": cmd_bands, "topology": cmd_topology, "propagate": cmd_propagate,
            "analyze": cmd_analyze, "ensemble": cmd_ensemble, "report": cmd_report}


def run_command(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        cfg = _load(args.config, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        run = _Run(args, cfg, out)
        run.manifest.add_input(args.config)
        HANDLERS[args.command](run)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    run.manifest.wall_seconds = time.perf_counter() - t0
    run.manifest.write(out)
    if not args.quiet:
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
        print(json.dumps(json_safe(dict(run.summary, outputs=sorted(run.manifest.outputs))), indent=1))
    return 0


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
