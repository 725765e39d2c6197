"""Acceptance criteria 1-12.

Each test prints one PASS/FAIL line (plus indented detail lines) and then
asserts the verdict, so a FAIL line always comes with a failing test.  The
summary table at the end of the pytest run repeats the verdicts.
"""

from __future__ import annotations

import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, CONFIG_DIR, DEVICES, device
from topolattice import analysis as an
from topolattice.cli import run_command
from topolattice.dynamics import (ConstantPump, NonlinearSource, PropagationConfig, PumpField,
                                  certify, propagate_biphoton, propagate_biphoton_cn,
                                  relative_distance, single_site_input)
from topolattice.ensemble import DeviceSpec, EnsembleConfig, run_disorder_ensemble
from topolattice.lattice import (SOI_COUPLING_MAP, InterfaceLatticeSpec, PhysicalGeometry,
                                 UnitCellSpec, build_hamiltonian, build_interface_sequence,
                                 couplings_from_gaps)
from topolattice.spectral import (bloch_hamiltonian, bloch_levels, closed_form_report,
                                  decay_length_at, decay_lengths, eigensystem,
                                  fit_decay_length, gap_closures, mode_gap_index)
from topolattice.topology import phase_diagram

L500 = 500e-6


def report(capsys, n: int, ok: bool, msg: str, details=()):
    ACCEPTANCE[n] = (ok, msg)
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {msg}")
        for d in details:
            print(f"    {d}")
    assert ok, msg


def _workers() -> int:
    env = os.environ.get("TOPOLATTICE_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


# --------------------------------------------------------------------------


def test_criterion_01_j3_phase_diagram(capsys):
    t = np.linspace(0.02, 1.0, 50)
    t0 = time.perf_counter()
    pd = phase_diagram(UnitCellSpec((1.0, 1.0), 1.0), t, t)
    dt = time.perf_counter() - t0
    bad = []
    for i, ti in enumerate(t):
        for j, tau in enumerate(t):
            if i == j:
                continue  # tau = t is the transition line itself
            want = (1, 2, 1) if tau > ti else (0, 0, 0)
            got = tuple(int(x) for x in pd.band_winding[i, j]) if not pd.at_transition[i, j] else None
            if got != want:
                bad.append((ti, tau, got))
    ok = not bad and dt < 10
    report(capsys, 1, ok, f"J=3 band windings on 50x50 grid: {2450 - len(bad)}/2450 exact, {dt:.2f} s (< 10 s)",
           [f"mismatches: {bad[:5]}"] if bad else [])


def test_criterion_02_closed_form_gaps(capsys):
    rng = np.random.default_rng(20240)
    t0 = time.perf_counter()
    worst = {}
    for J in (3, 4):
        errs = []
        while len(errs) < 200:
            half = J // 2
            u = list(rng.uniform(0.1, 2.0, half))
            cell = UnitCellSpec(tuple(u + u[: J - 1 - half][::-1]), rng.uniform(0.1, 2.0))
            rep = closed_form_report(cell)
            scale = max(max(cell.intracell), cell.intercell)
            if min(g.numeric for g in rep.gaps) < 1e-3 * scale:
                continue  # too close to a closure to be a valid gapped cell
            errs.append(max(g.relative_error for g in rep.gaps))
        worst[J] = max(errs)
    # J=5 at t1/t2 = 4/3
    j5 = []
    for t2 in (0.6, 0.75, 1.2):
        t1 = 4 * t2 / 3
        cell = UnitCellSpec((t1, t2, t2, t1), 1.0)
        crit = closed_form_report(cell).critical_couplings
        found = [c.tau for c in gap_closures(cell)]
        for key in ("tau_1", "tau_2"):
            near = min(found, key=lambda x: abs(x - crit[key]))
            j5.append((key, t1, t2, crit[key], near, abs(near - crit[key]) / near))
    worst[5] = max(r[-1] for r in j5)
    # J=6: random cells, all three critical couplings
    j6 = []
    for _ in range(40):
        t1, t2, t3 = rng.uniform(0.3, 1.5, 3)
        cell = UnitCellSpec((t1, t2, t3, t2, t1), 1.0)
        crit = closed_form_report(cell).critical_couplings
        targets = (("tau_C", crit["tau_C"]), ("tau_plus", crit["tau_plus"]),
                   ("|tau_minus|", abs(crit["tau_minus"])))
        top = 2 * max(x for _, x in targets)  # scan window wide enough for every closure
        found = [c.tau for c in gap_closures(cell, (1e-3, top), 600)]
        for key, target in targets:
            near = min(found, key=lambda x: abs(x - target))
            j6.append(abs(near - target) / target)
    worst[6] = max(j6)
    dt = time.perf_counter() - t0
    ok = all(worst[J] <= 1e-6 for J in worst) and dt < 60
    det = [f"J={J}: max relative error {worst[J]:.2e} ({'ok' if worst[J] <= 1e-6 else 'exceeds 1e-6'})"
           for J in (3, 4, 5, 6)]
    det += [f"J=5 {k} (t1={a:.3g}, t2={b:.3g}): formula {f:.6f}, bisection {x:.6f}, rel {r:.2e}"
            for k, a, b, f, x, r in j5[:2]]
    det.append(f"runtime {dt:.1f} s (< 60 s)")
    report(capsys, 2, ok, "closed-form gaps (J=3,4) and critical couplings (J=5,6) within 1e-6", det)


def test_criterion_03_j5_zero_mode(capsys):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        t1, t2, tau = rng.uniform(0.05, 3.0, 3)
        cell = UnitCellSpec((t1, t2, t2, t1), tau)
        for k in (-math.pi / 2, math.pi / 2):
            w = bloch_levels(cell, k)
            norm = np.linalg.norm(bloch_hamiltonian(cell, k), 2)
            worst = max(worst, abs(w[2]) / norm)
    report(capsys, 3, worst < 1e-10,
           f"J=5 middle band at k=+-pi/2a: max |beta|/||H|| = {worst:.1e} over 100 cells (< 1e-10)")


DECAY_CELLS = [
    (3, UnitCellSpec((0.5, 0.5), 1.0)),
    (4, UnitCellSpec((0.6, 0.8, 0.6), 1.2)),
    # the first J=5 cell only binds its outer pair tightly enough to be tagged
    (5, UnitCellSpec((0.8, 0.6, 0.6, 0.8), 1.3)),
    (5, UnitCellSpec((0.5, 1.0, 1.0, 0.5), 0.9)),
    (6, UnitCellSpec((0.7, 0.8, 0.6, 0.8, 0.7), 1.4)),
]


@pytest.mark.filterwarnings("ignore::topolattice.errors.InterfaceWarning")
def test_criterion_04_decay_lengths(capsys):
    rows, ok = [], True
    compared = 0
    for J, cell in DECAY_CELLS:
        seq = build_interface_sequence(InterfaceLatticeSpec.for_sites(cell, 81))
        es = eigensystem(build_hamiltonian(seq), cell)
        table = decay_lengths(cell)
        for i in es.interface_modes():
            beta = es.values[i]
            if beta < -1e-12:
                continue  # chiral partner has the same profile envelope
            g = mode_gap_index(cell, beta)
            fit = fit_decay_length(es.vectors[:, i], J)
            cont = decay_length_at(cell, beta)
            for d in table:
                if g in d.gaps and d.applicable and math.isfinite(d.value) and d.value <= 5:
                    rel = abs(fit - d.value) / d.value
                    compared += 1
                    good = rel <= 0.05
                    ok &= good
                    rows.append(f"J={J} N={seq.n_sites} beta={beta:+.4f} gap {g}: fit {fit:.4f} a, "
                                f"{d.name} {d.value:.4f} a, rel {rel:.1%} {'ok' if good else '> 5%'}; "
                                f"continued-k form {cont:.4f} a ({abs(fit - cont) / cont:.1%})")
    ok &= compared > 0
    report(capsys, 4, ok, f"interface-mode decay fits vs tabulated xi within 5% ({compared} comparisons)", rows)


@pytest.mark.slow
def test_criterion_05_integrator_cross_validation(capsys):
    t0 = time.perf_counter()
    rows, ok = [], True
    for J in (4, 5, 6):
        cell, seq, H = device(J)
        pump = PumpField(H, single_site_input(seq.n_sites))
        cfg = PropagationConfig(L500, samples=21)
        src = NonlinearSource(1.0)
        ss = propagate_biphoton(H, H, pump, src, cfg)
        cn = propagate_biphoton_cn(H, H, pump, src, cfg)
        disc = float(relative_distance(cn.psi, ss.psi)[1:].max())
        cert = certify(H, H, pump, src, cfg, ss)
        good = disc <= 2e-3 and cert.passed
        ok &= good
        rows.append(f"J={J} N={seq.n_sites}: split-step vs CN {disc:.2e} (<= 2e-3), "
                    f"step-halving certificate {cert.max_relative_difference:.1e} (<= 1e-6), "
                    f"{ss.stats['accepted']} split steps, {cn.stats['steps']} CN steps")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    rows.append(f"runtime {dt:.1f} s (< 300 s)")
    report(capsys, 5, ok, "split-step/Crank-Nicolson agreement and global error certificate", rows)


def test_criterion_06_analytic_population(capsys):
    cell, seq, H = device(5)
    es = eigensystem(H, cell)
    idx = es.interface_modes()
    a = single_site_input(seq.n_sites)
    src = NonlinearSource(1.0)
    pairs = [(m, n) for m in idx for n in idx]
    dbeta = np.array([es.values[m] + es.values[n] for m, n in pairs])
    L = 4 * math.pi / np.abs(dbeta).max()
    cfg = PropagationConfig(L, samples=41, local_tol=1e-10)
    tr = propagate_biphoton(H, H, ConstantPump(a), src, cfg)
    C = an.overlap_coefficients(es, es, a * a)
    phi = np.array([es.vectors.T @ p @ es.vectors for p in tr.psi])
    worst_rel, worst_peak = 0.0, 0.0
    for (m, n), d in zip(pairs, dbeta):
        num = np.abs(phi[:, m, n]) ** 2
        ana = an.analytic_population(C[m, n], d, tr.z, src.strength)
        peak = ana.max()
        if peak == 0:
            continue
        sel = ana > 1e-6 * peak
        worst_rel = max(worst_rel, float(np.max(np.abs(num[sel] - ana[sel]) / ana[sel])))
        worst_peak = max(worst_peak, float(np.max(np.abs(num - ana)) / peak))
    ok = worst_rel <= 2e-3 and worst_peak <= 2e-3
    report(capsys, 6, ok,
           f"constant-pump B_mn vs closed form over |dbeta L| in [0, 4pi]: max relative {worst_rel:.1e}",
           [f"{len(pairs)} interface pairs, 41 samples to L = {L * 1e3:.3f} mm; "
            f"max deviation / pair peak {worst_peak:.1e}; points below 1e-6 of the peak judged by the latter"])


@pytest.mark.slow
def test_criterion_07_mismatch_node(capsys):
    cfg = json.loads((CONFIG_DIR / "j6_dispersion.json").read_text())
    ss_, si_ = cfg["dispersion"]["signal_scale"], cfg["dispersion"]["idler_scale"]
    cell, seq, H = device(6)
    Hs, Hi = build_hamiltonian(seq.scaled(ss_)), build_hamiltonian(seq.scaled(si_))
    es, ei = eigensystem(Hs, cell.scaled(ss_)), eigensystem(Hi, cell.scaled(si_))
    A, E = es.interface_modes()[0], ei.interface_modes()[-1]
    pred = an.mismatch_predictions(es, ei, [(A, E)])[0]
    L0 = pred["L_zero"]
    pump = PumpField(H, single_site_input(seq.n_sites))
    tr = propagate_biphoton(Hs, Hi, pump, NonlinearSource(1.0), PropagationConfig(1.6 * L0, samples=401))
    B = np.array([abs(es.vectors[:, A] @ p @ ei.vectors[:, E]) ** 2 for p in tr.psi])
    z = tr.z
    lo, hi = np.searchsorted(z, pred["L_max"]), np.searchsorted(z, 1.5 * L0)
    j = lo + int(np.argmin(B[lo:hi]))
    # quadratic through the grid minimum and its neighbours
    c = np.polyfit(z[j - 1: j + 2] - z[j], B[j - 1: j + 2], 2)
    node = z[j] - c[1] / (2 * c[0]) if c[0] > 0 else z[j]
    rel = abs(node - L0) / L0
    report(capsys, 7, rel <= 0.03,
           f"J=6 AE node at {node * 1e3:.4f} mm vs 2pi/|dbeta_AE| = {L0 * 1e3:.4f} mm ({rel:.2%}, <= 3%)",
           [f"dbeta_AE = {pred['dbeta']:.1f} 1/m with signal/idler coupling scales {ss_}/{si_}; "
            f"node depth B/B_max = {B[j] / B.max():.1e}"])


def test_criterion_08_parity_selection(capsys):
    cell, seq, H = device(6)
    es = eigensystem(H, cell)
    pump = PumpField(H, single_site_input(seq.n_sites))
    tr = propagate_biphoton(H, H, pump, NonlinearSource(1.0), PropagationConfig(L500, samples=11))
    leak = [an.parity_leakage(tr.state(i), es, es) for i in range(1, len(tr.z))]
    worst = max(leak)
    report(capsys, 8, worst <= 1e-10,
           f"J=6 mixed-parity populations / max entry <= {worst:.1e} at all 10 snapshots (<= 1e-10)")


def test_criterion_09_mirror_symmetric_output(capsys):
    rows, ok = [], True
    j3 = couplings_from_gaps(PhysicalGeometry((282, 282), 125), SOI_COUPLING_MAP)
    cells = {3: (j3, build_interface_sequence(InterfaceLatticeSpec.for_sites(j3, 81)))}
    for J in (4, 5, 6):
        c, s, _ = device(J)
        cells[J] = (c, s)
    for J, (cell, seq) in cells.items():
        H = build_hamiltonian(seq)
        pump = PumpField(H, single_site_input(seq.n_sites))
        psi = propagate_biphoton(H, H, pump, NonlinearSource(1.0), PropagationConfig(L500, 2)).final
        P = an.output_powers(psi)
        asym = an.mirror_asymmetry(P)
        sim = an.intensity_similarity(P, P[::-1])
        good = asym <= 1e-10 and abs(sim - 1) <= 1e-12
        ok &= good
        rows.append(f"J={J} N={seq.n_sites}: max |P(n)-P(-n)|/max P = {asym:.1e}, self-similarity {sim:.15f}")
    report(capsys, 9, ok, "facet powers mirror symmetric within 1e-10 for J=3..6", rows)


@pytest.mark.slow
def test_criterion_10_disorder_robustness(capsys):
    t0 = time.perf_counter()
    rows, stats = [], {}
    for J in (4, 5, 6):
        cell, seq, _ = device(J)
        cfg = EnsembleConfig(DeviceSpec(seq, cell, name=f"J{J}"), (0.0, 0.1), 50, 20240,
                             PropagationConfig(L500, 2), NonlinearSource(1.0), _workers())
        st = run_disorder_ensemble(cfg)
        stats[J] = st
        d = st.level(0.1)
        rows.append(f"J={J} N={seq.n_sites}: clean K {st.clean_K:.4f}; D=10%: mean F {d.F_mean:.4f} "
                    f"(> 0.95 {'ok' if d.F_mean > 0.95 else 'no'}), mean K {d.K_mean:.4f} "
                    f"({abs(d.K_mean - st.clean_K) / st.clean_K:.1%} from clean, <= 10%), "
                    f"{d.n_ok} ok / {d.n_failed} failed")
    dt = time.perf_counter() - t0
    f_ok = all(stats[J].level(0.1).F_mean > 0.95 for J in stats)
    k_ok = all(abs(stats[J].level(0.1).K_mean - stats[J].clean_K) <= 0.1 * stats[J].clean_K for J in stats)
    order = stats[4].clean_K < stats[5].clean_K < stats[6].clean_K
    rows.append(f"clean K strictly increasing with J: {order}; runtime {dt:.0f} s (< 1800 s)")
    ok = f_ok and k_ok and order and dt < 1800
    report(capsys, 10, ok, "disorder ensembles: F > 0.95 and K within 10% at D=10%, K rising with J", rows)


def test_criterion_11_gap_population_monotonicity(capsys):
    blocks, rows = [], []
    for g1 in (260, 282, 310):
        g = (g1, 330, 330, g1)
        cell, seq, H = device(5, g)
        es = eigensystem(H, cell)
        pump = PumpField(H, single_site_input(seq.n_sites))
        psi = propagate_biphoton(H, H, pump, NonlinearSource(1.0), PropagationConfig(L500, 2)).final
        mp = an.mode_populations(psi, es, es)
        assert mp.populations.shape == (4, 4)
        bc = mp.populations[1:3, 1:3]
        blocks.append(bc)
        rows.append(f"t1 gap {g1} nm: BB {bc[0, 0]:.3e}, BC {bc[0, 1]:.3e}, CC {bc[1, 1]:.3e}")
    b = np.array(blocks)
    ok = bool(np.all(np.diff(b, axis=0) > 0))
    report(capsys, 11, ok, "J=5 central-mode (B,C) populations strictly increase with the central gap", rows)


@pytest.mark.slow
def test_criterion_12_determinism(tmp_path, capsys, monkeypatch):
    cfg = CONFIG_DIR / "j4_disorder.json"
    outs = []
    for name, threads in (("a", "1"), ("b", "3")):
        monkeypatch.setenv("TOPOLATTICE_THREADS", threads)
        d = tmp_path / name
        assert run_command(["ensemble", "--config", str(cfg), "--seed", "7", "--out", str(d), "--quiet"]) == 0
        outs.append(d)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("ensemble.csv", "ensemble_summary.json"))
    ma, mb = (json.loads((d / "manifest.json").read_text())["outputs"] for d in outs)
    ok = same and ma == mb
    report(capsys, 12, ok, "repeated seeded ensemble runs give bitwise-identical result files",
           [f"ensemble --config j4_disorder.json --seed 7 with 1 and 3 worker threads; "
            f"hashes {sorted(ma.items())}"])
