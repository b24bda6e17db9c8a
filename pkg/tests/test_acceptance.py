"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line through ``acceptance_report`` before
asserting, so the summary lists all ten criteria even when some fail.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from dressedqd import analytic as an
from dressedqd import cascade as cs
from dressedqd import cli
from dressedqd import photonics as ph
from dressedqd import qcore as qc
from dressedqd import system as sy
from dressedqd.phonon import PhononParams, PolaronQuantities, b_factor, thermal_occupation
from dressedqd.qcore import HBAR

SCENARIOS = Path(__file__).resolve().parents[1] / "scripts" / "scenarios"
BATH = PhononParams(alpha=0.004, omega_b=8.36, temperature=4.5)


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.s = time.perf_counter() - self.t0


def stark_sweep(phonons: bool):
    """Rows of the stark-scan experiment over delta/shift = 0..25 in steps of 1."""
    doc = json.loads((SCENARIOS / ("stark_scan_phonons.json" if phonons else "stark_scan.json")).read_text())
    cfg = cli.parse_scenario(doc)
    cols = cli.EXPERIMENTS[cfg.experiment].columns(cfg)
    rows = np.array(cli.compute_rows(cfg), dtype=float)
    return {c: rows[:, i] for i, c in enumerate(cols)}


# ---------------------------------------------------------------------------

def test_c01_polaron_renormalization(acceptance_report):
    with Clock() as c:
        b = b_factor(BATH)
        b2 = PolaronQuantities.compute(BATH).b_squared
    ok = abs(b - 0.87) <= 0.01 and abs(b2 - 0.757) <= 0.02 and c.s < 1.0
    acceptance_report(1, "polaron <B>", ok, f"<B> = {b:.5f}, <B>^2 = {b2:.4f}, {c.s:.2f} s")
    assert b == pytest.approx(0.87, abs=0.01)
    assert b2 == pytest.approx(0.757, abs=0.02)
    assert c.s < 1.0


def test_c02_purity(acceptance_report):
    sc = ph.Scenario(cascade=cs.CascadeParams(pulse_area=math.pi, tau_p=1.7),
                     mode="pulsed", initial="G")
    with Clock() as c:
        g2 = ph.g2_zero(sc)
    ok = abs(g2 / 1.75e-3 - 1) <= 0.15 and c.s < 30
    acceptance_report(2, "pulsed g2[0]", ok, f"g2[0] = {g2:.4e} (target 1.75e-3 +- 15%), {c.s:.1f} s")
    assert g2 == pytest.approx(1.75e-3, rel=0.15)
    assert c.s < 30


def test_c03_stark_sweep_no_phonons(acceptance_report):
    with Clock() as c:
        s = stark_sweep(False)
    r = s["delta_over_shift"]
    i0, i20 = np.flatnonzero(r == 0)[0], np.flatnonzero(r == 20)[0]
    # the 0.66 starting value is the dominant-peak indistinguishability I_+
    I0, I20 = s["I_plus"][i0], s["I_plus"][i20]
    N0, N20 = s["N_ph"][i0], s["N_ph"][i20]
    checks = {"I(0)": abs(I0 - 0.66) <= 0.03, "I(20)>0.95": I20 > 0.95,
              "N(0)": abs(N0 - 0.50) <= 0.02, "N(20)>0.90": N20 > 0.90, "time": c.s < 180}
    failed = [k for k, v in checks.items() if not v]
    acceptance_report(3, "Stark sweep, no phonons", not failed,
                      f"I+ {I0:.4f} -> {I20:.4f} (I_total {s['I_total'][i0]:.4f} -> "
                      f"{s['I_total'][i20]:.4f}), N_ph {N0:.4f} -> {N20:.4f}, "
                      f"I+(25) = {s['I_plus'][-1]:.4f}, {c.s:.1f} s"
                      + (f"; failed {failed}" if failed else ""))
    assert I0 == pytest.approx(0.66, abs=0.03)
    assert N0 == pytest.approx(0.50, abs=0.02)
    assert N20 > 0.90
    assert I20 > 0.95
    assert c.s < 180


def test_c04_phonon_limited_maximum(acceptance_report):
    with Clock() as c:
        s = stark_sweep(True)
        off = stark_sweep(False)
    r = s["delta_over_shift"]
    k = int(np.argmax(s["I_plus"]))
    Imax, at = s["I_plus"][k], r[k]
    below = bool(np.all(s["I_plus"] <= off["I_plus"] + 1e-12)
                 and np.all(s["I_total"] <= off["I_total"] + 1e-12))
    ok = abs(Imax - 0.904) <= 0.02 and abs(at - 20) <= 5 and below and c.s < 300
    acceptance_report(4, "phonon-limited maximum", ok,
                      f"max I+ = {Imax:.4f} at delta/shift = {at:g} "
                      f"(max I_total = {s['I_total'].max():.4f}), "
                      f"phonons never raise I: {below}, {c.s:.1f} s")
    assert Imax == pytest.approx(0.904, abs=0.02)
    assert at == pytest.approx(20, abs=5)
    assert below
    assert c.s < 300


def test_c05_damped_rabi_oracle(acceptance_report):
    with Clock() as c:
        p = cs.CascadeParams(omega_cw=18.0, gamma_X=1.32, gamma_XX=2.64)
        L = qc.build_liouvillian(cs.hamiltonian(p, "reduced"), cs.collapse_terms(p))
        t = np.linspace(0, 5 * HBAR / 1.32, 5001)
        tr = qc.evolve(cs.proj(cs.XV), L, t)
        xv, _ = an.rho_analytic(an.AnalyticParams(omega_cw=18.0, gamma_X=1.32), t)
        dev = float(np.abs(tr.population(cs.XV) - xv).max())
        v, x = tr.population(cs.XV), tr.population(cs.XX)
        # contrast e^{-3 g t/4} cos(W t): extrema equally spaced by half a period
        period = ph.oscillation_period(t, (v - x) / (v + x))
    ok = dev < 0.03 and abs(period - 229.7) <= 2 and c.s < 10
    acceptance_report(5, "damped Rabi oracle", ok,
                      f"max |dev| = {dev:.4f}, period = {period:.2f} ps, {c.s:.2f} s")
    assert dev < 0.03
    assert period == pytest.approx(229.7, abs=2)
    assert c.s < 10


def _spectra(w, d, ax):
    sc = ph.Scenario(cascade=cs.CascadeParams(omega_cw=w, delta=d, gamma_inc=0.01),
                     mode="full", initial="G")
    return (ph.emission_spectrum(sc, "X", "steady", ax),
            ph.emission_spectrum(sc, "XX", "steady", ax))


def _height(s, pos):
    i = int(np.argmin(np.abs(s.detuning - pos)))
    return s.values[max(i - 2, 0):i + 3].max()


def test_c06_spectral_lines(acceptance_report):
    step = 0.5
    ax = np.arange(-350, 350 + step / 2, step)
    details, ok = [], True
    with Clock() as c:
        for w in (20.0, 50.0, 100.0):
            sx, sxx = _spectra(w, 0.0, ax)
            xp = sx.peaks(2)
            xxp = sxx.peaks(3)
            split = xp[1] - xp[0]
            good = (abs(split - w) <= step and abs(xxp[0] + w) <= step
                    and abs(xxp[2] - w) <= step and abs(xxp[1]) <= step)
            ok &= good
            details.append(f"W={w:g}: X split {split:.1f}, XX {xxp[0]:.1f}/{xxp[1]:.1f}/{xxp[2]:.1f}")
        d, w = 130.0, 100.0
        eta = math.hypot(w, d)
        sx, sxx = _spectra(w, d, ax)
        # X doublet: (d - eta)/2 against (d + eta)/2; XX doublet: -d + eta against -d - eta
        rx = _height(sx, (d - eta) / 2) / _height(sx, (d + eta) / 2)
        rxx = _height(sxx, -d + eta) / _height(sxx, -d - eta)
        asym = rx > 1 and rxx > 1
    ok &= asym and c.s < 60
    details.append(f"d=130: X (d-eta)/2 over (d+eta)/2 = {rx:.1f}, "
                   f"XX (-d+eta) over (-d-eta) = {rxx:.1f}")
    acceptance_report(6, "spectral lines", ok, "; ".join(details) + f", {c.s:.1f} s")
    assert ok


def test_c07_visibility(acceptance_report):
    with Clock() as c:
        ifp = ph.InterferometerParams(rt_ratio=1.15, fringe_contrast=0.99)
        chi = ifp.chi_corr
        v = ph.corrected_visibility(0.945, ifp)
    ok = abs(chi - 1.0303) <= 5e-4 and abs(v - 0.974) <= 0.002 and c.s < 1
    acceptance_report(7, "visibility correction", ok, f"chi = {chi:.5f}, V_corr = {v:.4f}")
    assert chi == pytest.approx(1.0303, abs=5e-4)
    assert v == pytest.approx(0.974, abs=0.002)


def test_c08_thermal_occupation(acceptance_report):
    with Clock() as c:
        n = float(thermal_occupation(3240.0, 4.5))
    ok = abs(n / 2.4e-4 - 1) <= 0.05 and c.s < 1
    acceptance_report(8, "thermal occupation", ok, f"n = {n:.4e}")
    assert n == pytest.approx(2.4e-4, rel=0.05)


def _acceptance_trajectories():
    """(label, trajectory) for every scenario used by the other criteria.

    Propagation runs without the built-in positivity guard so the invariants
    are measured here rather than aborting the first offending run.
    """
    def run(sc, T=None):
        return qc.evolve(sc.rho0, sc.liouvillian, sc.time_grid(T), check=False)

    shift = -12.0
    out = []
    for ratio, bath in ((0, None), (20, None), (0, BATH), (20, BATH)):
        d = ratio * shift
        p = cs.CascadeParams(delta=d, omega_cw=cs.drive_for_shift(shift, d))
        tag = "phonons" if bath else "no phonons"
        out.append((f"stark {ratio} {tag}", run(ph.Scenario(cascade=p, phonon=bath))))
    out.append(("pi pulse", run(ph.Scenario(cascade=cs.CascadeParams(), mode="pulsed",
                                              initial="G"))))
    p5 = cs.CascadeParams(omega_cw=18.0, gamma_XX=2.64)
    out.append(("damped Rabi", run(ph.Scenario(cascade=p5))))
    p6 = cs.CascadeParams(omega_cw=100.0, delta=130.0, gamma_inc=0.01)
    out.append(("spectra d=130", run(ph.Scenario(cascade=p6, mode="full", initial="G"))))
    # cw-ratio runs: full frame over one 12.2 ns period; the step map is exact here
    t = np.linspace(0, 12200.0, 24401)
    for bath in (None, BATH):
        L = sy.liouvillian(cs.CascadeParams(omega_cw=100.0), "full", bath)
        for init in ("XV", "G"):
            tag = "phonons" if bath else "no phonons"
            out.append((f"cw ratio W=100 {init} {tag}",
                        qc.evolve(sy.initial_state(init), L, t, keep_maps=False, check=False)))
    return out


def test_c09_property_suite(acceptance_report, tmp_path):
    results = {}
    with Clock() as c:
        worst = {"trace": 0.0, "herm": 0.0, "mineig": 0.0}
        negative = []
        for label, tr in _acceptance_trajectories():
            S = np.array(tr.states)
            worst["trace"] = max(worst["trace"], np.abs(np.trace(S, axis1=1, axis2=2) - 1).max())
            worst["herm"] = max(worst["herm"], np.abs(S - S.conj().transpose(0, 2, 1)).max())
            low = np.linalg.eigvalsh(0.5 * (S + S.conj().transpose(0, 2, 1)))[:, 0].min()
            worst["mineig"] = min(worst["mineig"], low)
            if low < -1e-9:
                negative.append(f"{label}: {low:.1e}")
        results["trace"] = worst["trace"] < 1e-9
        results["hermiticity"] = worst["herm"] < 1e-10
        results["positivity"] = worst["mineig"] >= -1e-9

        sc = ph.Scenario(cascade=cs.CascadeParams(omega_cw=109.98, delta=-240.0))
        tr = sc.trajectory()
        qrt = 0.0
        for A, B, sw in ((cs.SP_X, cs.SM_X, False), (cs.SP_X @ cs.SM_X, cs.SM_X, True)):
            grid = qc.two_time(A, B, tr, [0.0, 10.0], sandwich=sw)
            ref = [np.trace(A @ B @ r @ (B.conj().T if sw else np.eye(4))) for r in tr.states]
            qrt = max(qrt, np.abs(grid.values[:, 0] - np.array(ref)).max())
        results["qrt"] = qrt < 1e-10

        I1 = ph.indistinguishability(ph.Scenario(cascade=cs.CascadeParams()))
        results["I=1"] = abs(I1 - 1) <= 1e-3

        p = cs.CascadeParams(omega_cw=40.0, delta=-20.0, gamma_inc=0.05)
        L = sy.liouvillian(p, "full")
        ss = qc.steady_state(L)
        late = qc.unvec(L.propagator(50 / p.rate("gamma_X")) @ qc.vec(cs.proj(cs.G)), 4)
        ss_dev = np.abs(ss - late).max()
        results["steady"] = ss_dev < 1e-6

        doc = json.loads((SCENARIOS / "stark_scan.json").read_text())
        doc["sweep"]["grid"] = [0, 20]
        path = tmp_path / "s.json"
        path.write_text(json.dumps(doc))
        for d in ("a", "b"):
            cli.main(["run", str(path), "--out", str(tmp_path / d)])
        same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
                   for f in ("stark_scan.csv", "stark_scan.meta.json"))
        results["rerun"] = same
    ok = all(results.values()) and c.s < 60
    acceptance_report(9, "property suite", ok,
                      f"trace {worst['trace']:.1e}, herm {worst['herm']:.1e}, "
                      f"min eig {worst['mineig']:.1e}, QRT {qrt:.1e}, I = {I1:.6f}, "
                      f"steady {ss_dev:.1e}, byte-identical {same}, {c.s:.1f} s"
                      + (f"; negative eigenvalues in [{'; '.join(negative)}]" if negative else ""))
    assert results == {k: True for k in results}
    assert c.s < 60


def test_c10_cw_pulse_ratio(acceptance_report):
    doc = json.loads((SCENARIOS / "cw_ratio.json").read_text())
    with Clock() as c:
        cfg = cli.parse_scenario(doc)
        rows = np.array(cli.compute_rows(cfg), dtype=float)
    w, on, off = rows[:, 0], rows[:, 1], rows[:, 2]
    mono = bool(np.all(np.diff(on) < 0) and np.all(np.diff(off) < 0))
    below = on[-1] <= off[-1]
    ok = mono and below and c.s < 60
    acceptance_report(10, "cw-vs-pulse ratio", ok,
                      f"W {w[0]:g}..{w[-1]:g}: ratio {off[0]:.4g} -> {off[-1]:.4g} without phonons, "
                      f"{on[0]:.4g} -> {on[-1]:.4g} with; monotone {mono}, {c.s:.1f} s")
    assert mono
    assert below
    assert c.s < 60
