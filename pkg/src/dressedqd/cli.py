"""Command-line scenario runner.

    simulate run <scenario.json> [--out DIR] [--threads N]
    simulate validate <scenario.json>
    simulate list-experiments

Scenario files are JSON with ``"schema_version": 1``; unknown keys anywhere
are rejected.  Energies are hbar-scaled ueV and times ps.  Every run writes a
CSV (9 significant digits) and a ``.meta.json`` next to it; neither contains
timestamps, so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from . import cascade as cs
from . import photonics as ph
from . import qcore as qc
from .cascade import CascadeParams
from .phonon import PhononParams, b_factor
from .qcore import ConvergenceError

log = logging.getLogger("dressedqd")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3

TOP_KEYS = {"schema_version", "experiment", "cascade", "phonon", "sweep",
            "settings", "numerics", "output"}
NUMERICS = {"window": 15.0, "min_points": 2000, "phase_step": 0.25, "pulse_step": 0.05}


class InputError(ValueError):
    """Schema or parameter problem, reported with a field path."""


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    sweep_vars: tuple
    settings: dict  # allowed keys with defaults
    columns: Callable  # cfg -> list of column names
    point: Callable  # (cfg, value) -> list of rows


@dataclass(frozen=True)
class Config:
    experiment: str
    cascade: CascadeParams
    phonon: Optional[PhononParams]
    variable: str
    grid: tuple
    settings: dict
    numerics: dict
    output: str

    def scenario(self, cascade: CascadeParams, **kw) -> ph.Scenario:
        return ph.Scenario(cascade=cascade, phonon=self.phonon, **self.numerics, **kw)

    def swept(self, value: float) -> CascadeParams:
        if self.variable in ("omega_cw", "delta", "pulse_area"):
            return self.cascade.replace(**{self.variable: float(value)})
        if self.variable == "delta_over_shift":
            shift = self.settings["target_shift"]
            delta = value * shift
            return self.cascade.replace(delta=delta, omega_cw=cs.drive_for_shift(shift, delta))
        return self.cascade


def _axis(cfg: Config) -> np.ndarray:
    a = cfg.settings["axis"]
    n = int(round((a["stop"] - a["start"]) / a["step"]))
    return a["start"] + a["step"] * np.arange(n + 1)


def _spectrum_columns(cfg):
    tr = cfg.settings["transition"]
    cols = [f"{cfg.variable}_ueV", "detuning_from_bare_line_ueV"]
    unit = "per_ps_ueV" if cfg.settings["kind"] == "steady" else "per_ueV"
    if tr in ("X", "both"):
        cols.append(f"S_X_{unit}")
    if tr in ("XX", "both"):
        cols.append(f"S_XX_{unit}")
    return cols


def _spectrum_point(cfg, value):
    s = cfg.settings
    sc = cfg.scenario(cfg.swept(value), mode=s["mode"], initial=s["initial"])
    ax = _axis(cfg)
    cols = []
    for tr in ("X", "XX"):
        if s["transition"] in (tr, "both"):
            cols.append(ph.emission_spectrum(sc, tr, s["kind"], ax).values)
    return [[value, d, *(c[i] for c in cols)] for i, d in enumerate(ax)]


def _rabi_point(cfg, value):
    sc = cfg.scenario(cfg.swept(value), mode="pulsed", initial="G")
    R = ph.integrated_state(sc)
    gx = sc.cascade.rate("gamma_X")
    return [[value, value / math.pi, gx * R[cs.XV, cs.XV].real,
             sc.cascade.rate("gamma_XX") / 2 * R[cs.XX, cs.XX].real]]


def _time_trace_rows(cfg):
    s = cfg.settings
    sc = cfg.scenario(cfg.cascade, mode=s["mode"], initial=s["initial"])
    t = np.asarray(cfg.grid, dtype=float)
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
    tr = qc.evolve(sc.rho0, sc.liouvillian, t, keep_maps=False)
    pops = [tr.population(i) for i in range(cs.DIM)]
    cols = pops
    if s["irf_fwhm_ps"] is not None:
        _, conv = ph.irf_convolve(t, pops[cs.XV], s["irf_fwhm_ps"], extend=False)
        cols = pops + [conv]
    keep = slice(0, None) if cfg.grid[0] == 0.0 else slice(1, None)
    return [list(r) for r in np.column_stack([t, *cols])[keep]]


def _time_trace_columns(cfg):
    cols = ["time_ps", "rho_G", "rho_XH", "rho_XV", "rho_XX"]
    if cfg.settings["irf_fwhm_ps"] is not None:
        cols.append("rho_XV_irf")
    return cols


def _undressed(p: CascadeParams) -> bool:
    return p.omega_cw == 0 and p.delta == 0


def _indist_point(cfg, value):
    p = cfg.swept(value)
    sc = cfg.scenario(p, mode=cfg.settings["mode"], initial="XV")
    row = [value]
    if cfg.variable == "delta_over_shift":
        row += [p.delta, p.omega_cw]
    m = ph.metrics(sc)
    row += [m.indist, m.indist_plus, m.indist_minus, m.n_ph, m.n_plus, m.n_minus]
    return [row]


def _indist_columns(cfg):
    head = ["omega_cw_ueV"]
    if cfg.variable == "delta_over_shift":
        head = ["delta_over_shift", "delta_ueV", "omega_cw_ueV"]
    return head + ["I_total", "I_plus", "I_minus", "N_ph", "N_plus", "N_minus"]


def _purity_point(cfg, value):
    p = cfg.swept(value)
    sc = cfg.scenario(p, mode="pulsed", initial="G")
    gp = gm = float("nan")
    if not _undressed(p):
        gp, gm = ph.or_nan(ph.g2_zero, sc, "plus"), ph.or_nan(ph.g2_zero, sc, "minus")
    return [[value, ph.photon_number(sc), ph.or_nan(ph.g2_zero, sc, "all"), gp, gm]]


def _cw_ratio_point(cfg, value):
    p = cfg.swept(value)
    rep = cfg.settings["rep_period_ps"]
    row = [value, ph.cw_pulse_ratio(cfg.scenario(p), rep)]
    if cfg.phonon is not None:
        row.append(ph.cw_pulse_ratio(ph.Scenario(cascade=p, **cfg.numerics), rep))
    return [row]


def _cw_ratio_columns(cfg):
    cols = ["omega_cw_ueV", "ratio"]
    if cfg.phonon is not None:
        cols.append("ratio_no_phonons")
    return cols


def _dressed_point(cfg, value):
    p = cfg.swept(value)
    pair = cs.dressed_states(p.omega_cw, p.delta)
    ep, em = cs.corrected_eigenenergies(p)
    kp, km = pair.ket_plus.real, pair.ket_minus.real
    return [[value, p.delta, pair.eta, pair.energy_plus, pair.energy_minus, ep, em,
             cs.stark_shift(p.omega_cw, p.delta),
             kp[cs.XV], kp[cs.XX], km[cs.XV], km[cs.XX]]]


EXPERIMENTS = {e.name: e for e in [
    Experiment("spectrum-map", "incoherent X/XX spectra against cw Rabi energy",
               ("omega_cw",),
               {"transition": "both", "kind": "steady", "mode": "full", "initial": "G",
                "axis": {"start": -150.0, "stop": 150.0, "step": 0.5}},
               _spectrum_columns, _spectrum_point),
    Experiment("detuning-map", "incoherent X/XX spectra against cw detuning",
               ("delta",),
               {"transition": "both", "kind": "steady", "mode": "full", "initial": "G",
                "axis": {"start": -300.0, "stop": 300.0, "step": 0.5}},
               _spectrum_columns, _spectrum_point),
    Experiment("rabi-scan", "emitted X_V and XX photons against pulse area (pulsed frame)",
               ("pulse_area",), {},
               lambda cfg: ["pulse_area_rad", "pulse_area_over_pi", "N_ph", "N_XX"],
               _rabi_point),
    Experiment("time-trace", "level populations on the sweep time grid",
               ("time",), {"mode": "pulsed", "initial": "G", "irf_fwhm_ps": None},
               _time_trace_columns, None),
    Experiment("indist-scan", "I, I+-, N_ph, N+- against cw Rabi energy",
               ("omega_cw",), {"mode": "reduced"}, _indist_columns, _indist_point),
    Experiment("stark-scan", "I, I+-, N_ph, N+- at fixed ac Stark shift against delta/shift",
               ("delta_over_shift",), {"mode": "reduced", "target_shift": -12.0},
               _indist_columns, _indist_point),
    Experiment("purity", "pulsed g2[0] (total and per peak) against cw Rabi energy",
               ("omega_cw",), {},
               lambda cfg: ["omega_cw_ueV", "N_ph", "g2_total", "g2_plus", "g2_minus"],
               _purity_point),
    Experiment("cw-ratio", "pulsed/cw photon ratio over one repetition period",
               ("omega_cw",), {"rep_period_ps": 12200.0}, _cw_ratio_columns, _cw_ratio_point),
    Experiment("dressed-info", "dressed energies, kets and Stark shift",
               ("omega_cw", "delta"), {},
               lambda cfg: ["swept_ueV", "delta_ueV", "eta_ueV", "E_plus_ueV", "E_minus_ueV",
                            "E_plus_corrected_ueV", "E_minus_corrected_ueV",
                            "stark_shift_ueV", "ket_plus_XV", "ket_plus_XX",
                            "ket_minus_XV", "ket_minus_XX"],
               _dressed_point),
]}


# ---------------------------------------------------------------------------
# schema


def _grid(spec, path: str) -> tuple:
    if isinstance(spec, list):
        vals = spec
    elif isinstance(spec, dict):
        extra = set(spec) - {"start", "stop", "num"}
        if extra or len(spec) != 3:
            raise InputError(f"{path}: expected a list or {{start, stop, num}}, got keys {sorted(spec)}")
        num = spec["num"]
        if not isinstance(num, int) or num < 1:
            raise InputError(f"{path}.num: must be a positive integer")
        vals = np.linspace(float(spec["start"]), float(spec["stop"]), num).tolist()
    else:
        raise InputError(f"{path}: expected a list or {{start, stop, num}}")
    if not vals:
        raise InputError(f"{path}: sweep grid is empty")
    try:
        vals = tuple(float(v) for v in vals)
    except (TypeError, ValueError):
        raise InputError(f"{path}: grid values must be numbers") from None
    if not all(math.isfinite(v) for v in vals):
        raise InputError(f"{path}: grid values must be finite")
    return vals


def _merge(defaults: dict, given, path: str) -> dict:
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise InputError(f"{path}: expected an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise InputError(f"{path}: unknown fields {sorted(unknown)}")
    out = dict(defaults)
    for k, v in given.items():
        if isinstance(defaults[k], dict):
            out[k] = _merge(defaults[k], v, f"{path}.{k}")
        else:
            out[k] = v
    return out


def _params(cls, d, path: str):
    if not isinstance(d, dict):
        raise InputError(f"{path}: expected an object")
    for k in d:
        if k in cls.__dataclass_fields__ and d[k] is not None and not isinstance(d[k], (int, float)):
            raise InputError(f"{path}.{k}: expected a number")
    try:
        return cls.from_dict(d)
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None


def parse_scenario(doc) -> Config:
    if not isinstance(doc, dict):
        raise InputError("scenario: expected a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise InputError(f"scenario: unknown fields {sorted(unknown)}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InputError(f"schema_version: expected {SCHEMA_VERSION}, got {doc.get('schema_version')!r}")
    name = doc.get("experiment")
    if name not in EXPERIMENTS:
        raise InputError(f"experiment: unknown {name!r}; choose from {sorted(EXPERIMENTS)}")
    exp = EXPERIMENTS[name]
    cascade = _params(CascadeParams, doc.get("cascade", {}), "cascade")
    phonon = None
    if doc.get("phonon") is not None:
        phonon = _params(PhononParams, doc["phonon"], "phonon")
    sweep = doc.get("sweep")
    if not isinstance(sweep, dict) or set(sweep) != {"variable", "grid"}:
        raise InputError("sweep: expected an object with exactly 'variable' and 'grid'")
    if sweep["variable"] not in exp.sweep_vars:
        raise InputError(f"sweep.variable: {name} sweeps one of {list(exp.sweep_vars)}, "
                         f"got {sweep['variable']!r}")
    grid = _grid(sweep["grid"], "sweep.grid")
    settings = _merge(exp.settings, doc.get("settings"), "settings")
    numerics = _merge(NUMERICS, doc.get("numerics"), "numerics")
    output = doc.get("output", f"{name}.csv")
    if not isinstance(output, str) or not output or os.path.isabs(output) or ".." in Path(output).parts:
        raise InputError("output: expected a relative file name")
    cfg = Config(name, cascade, phonon, sweep["variable"], grid, settings, numerics, output)
    _check_settings(cfg)
    return cfg


def _check_settings(cfg: Config) -> None:
    s = cfg.settings
    try:
        ph.Scenario(cascade=cfg.cascade, **cfg.numerics)
    except (TypeError, ValueError) as e:
        raise InputError(f"numerics: {e}") from None
    if "mode" in s and s["mode"] not in cs.MODES:
        raise InputError(f"settings.mode: must be one of {list(cs.MODES)}")
    if "initial" in s and s["initial"] not in ph.INITIAL:
        raise InputError(f"settings.initial: must be one of {list(ph.INITIAL)}")
    if "transition" in s and s["transition"] not in ("X", "XX", "both"):
        raise InputError("settings.transition: must be 'X', 'XX' or 'both'")
    if "kind" in s:
        if s["kind"] not in ("steady", "pulsed"):
            raise InputError("settings.kind: must be 'steady' or 'pulsed'")
        if s["kind"] == "steady" and cfg.cascade.gamma_inc <= 0:
            raise InputError("cascade.gamma_inc: steady spectra need gamma_inc > 0")
        if s["kind"] == "steady" and s["mode"] == "pulsed":
            raise InputError("settings.mode: steady spectra need a time-independent frame")
        a = s["axis"]
        if not (a["step"] > 0 and a["stop"] > a["start"]):
            raise InputError("settings.axis: need step > 0 and stop > start")
    if cfg.experiment == "time-trace":
        g = np.asarray(cfg.grid)
        if np.any(g < 0) or np.any(np.diff(g) <= 0):
            raise InputError("sweep.grid: times must be >= 0 and strictly increasing")
        w = s["irf_fwhm_ps"]
        if w is not None:
            if len(g) < 2 or not np.allclose(np.diff(g), g[1] - g[0], rtol=1e-9, atol=0):
                raise InputError("sweep.grid: IRF convolution needs a uniform time grid")
            if w < 2 * (g[1] - g[0]):
                raise InputError("settings.irf_fwhm_ps: IRF width below two grid steps")
    if cfg.variable == "delta_over_shift":
        shift = s["target_shift"]
        for v in cfg.grid:
            try:
                cs.drive_for_shift(shift, v * shift)
            except ValueError as e:
                raise InputError(f"sweep.grid: delta/shift = {v}: drive_for_shift precondition "
                                 f"violated ({e})") from None
    if "rep_period_ps" in s and not s["rep_period_ps"] > 0:
        raise InputError("settings.rep_period_ps: must be > 0")
    for v in cfg.grid:
        try:
            p = cfg.swept(v)
        except ValueError as e:
            raise InputError(f"sweep.grid: value {v}: {e}") from None
        if cfg.experiment == "dressed-info" and p.omega_cw == 0 and p.delta == 0:
            raise InputError(f"sweep.grid: value {v}: dressed states degenerate at omega_cw = delta = 0")


def lint(cfg: Config) -> list:
    """Physics warnings that do not stop a run."""
    out = []
    if cfg.experiment in ("indist-scan", "stark-scan"):
        for v in cfg.grid:
            p = cfg.swept(v)
            if 0 < p.eta < 5 * p.gamma_X:
                out.append(f"eta = {p.eta:.3g} ueV < 5 gamma_X at {cfg.variable} = {v}: "
                           "peak decomposition unreliable")
    big = max(abs(cfg.cascade.delta), cfg.cascade.omega_cw,
              *(abs(cfg.swept(v).delta) + cfg.swept(v).omega_cw for v in cfg.grid))
    if big > 0 and cfg.cascade.E_B / big < 5:
        out.append("E_B / max(|delta|, omega_cw) < 5: reduced model and line corrections unreliable")
    return out


def load(path) -> Config:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from None
    return parse_scenario(doc)


# ---------------------------------------------------------------------------
# running


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    s = f"{x:.9g}"
    return "0" if s == "-0" else s


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _run_point(args):
    cfg, value = args
    return EXPERIMENTS[cfg.experiment].point(cfg, value)


def compute_rows(cfg: Config, threads: int = 1) -> list:
    exp = EXPERIMENTS[cfg.experiment]
    if exp.point is None:
        return _time_trace_rows(cfg)
    jobs = [(cfg, v) for v in cfg.grid]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def metadata(cfg: Config) -> dict:
    phon = cfg.phonon
    b = b_factor(phon) if phon is not None else 1.0
    grids = {}
    if cfg.experiment not in ("dressed-info", "cw-ratio", "time-trace"):
        mode = cfg.settings.get("mode", "pulsed")
        if cfg.experiment in ("rabi-scan", "purity"):
            mode = "pulsed"
        pts = []
        for v in cfg.grid:
            sc = cfg.scenario(cfg.swept(v), mode=mode)
            t = sc.time_grid()
            pts.append({"value": v, "T_ps": sc.T, "points": len(t),
                        "max_step_ps": float(np.max(np.diff(t)))})
        grids["time_grids"] = pts
    if "axis" in cfg.settings:
        grids["detuning_axis_ueV"] = cfg.settings["axis"]
    return {
        "tool": "dressedqd",
        "tool_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "cascade": cfg.cascade.to_dict(),
        "phonon": phon.to_dict() if phon is not None else None,
        "sweep": {"variable": cfg.variable, "grid": list(cfg.grid)},
        "settings": cfg.settings,
        "numerics": cfg.numerics,
        "grids": grids,
        "b_factor": b,
        "b_factor_squared": b * b,
        "units": {"energy": "ueV (hbar-scaled)", "time": "ps"},
        "basis": list(cs.BASIS),
    }


def run(cfg: Config, out_dir: Path, threads: int = 1) -> Path:
    exp = EXPERIMENTS[cfg.experiment]
    rows = compute_rows(cfg, threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / cfg.output
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(to_csv(exp.columns(cfg), rows), encoding="utf-8", newline="")
    meta_path = csv_path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(metadata(cfg), indent=2, sort_keys=True) + "\n",
                         encoding="utf-8", newline="")
    if cfg.experiment == "dressed-info":
        for r in rows:
            print(f"omega_cw/delta sweep {r[0]:g}: E+ = {r[3]:.6g} ueV, E- = {r[4]:.6g} ueV, "
                  f"|+> = {r[9]:.6g}|XX> + {r[8]:.6g}|XV>, |-> = {r[11]:.6g}|XX> + {r[10]:.6g}|XV>")
    return csv_path


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("SIM_THREADS")
        if env is None or env == "":
            return 1
        try:
            n = int(env)
        except ValueError:
            raise InputError(f"SIM_THREADS: expected an integer, got {env!r}") from None
    if n < 1:
        raise InputError("threads must be >= 1")
    return n


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=".", help="output directory (default: .)")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker processes for sweeps (default: $SIM_THREADS or 1)")
    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    sub.add_parser("list-experiments", help="list available experiments")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")

    if args.cmd == "list-experiments":
        for name in sorted(EXPERIMENTS):
            e = EXPERIMENTS[name]
            print(f"{name:14s} sweep {'|'.join(e.sweep_vars):18s} {e.summary}")
        return EXIT_OK
    try:
        cfg = load(args.scenario)
        if args.cmd == "validate":
            for w in lint(cfg):
                print(f"warning: {w}")
            print("ok")
            return EXIT_OK
        path = run(cfg, Path(args.out), _threads(args.threads))
        print(f"wrote {path}")
        return EXIT_OK
    except ValueError as e:  # InputError and parameter errors raised mid-run
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as e:
        print(f"convergence error: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
