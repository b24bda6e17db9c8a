"""Emission observables: spectra, photon numbers, indistinguishability, purity.

All observables are computed from a :class:`Scenario`, which fixes the
cascade parameters, the phonon bath (or none), the rotating frame and the
observation window.  Double time integrals run over the triangle
t + tau <= T of the observation window using the trajectory's own propagators
(``qcore.correlation_integral``); for time-independent generators the closed
form on the square [0, T]^2 is available as a cross-check (``route="exact"``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks

from . import cascade as cs
from . import qcore as qc
from . import system
from .cascade import CascadeParams
from .phonon import PhononParams
from .qcore import HBAR, ConvergenceError

log = logging.getLogger(__name__)

PEAKS = ("all", "plus", "minus")
INITIAL = ("G", "XH", "XV", "XX")
TAIL_TOL = 1e-6


@dataclass(frozen=True)
class Scenario:
    """One simulation setting.

    ``window`` is the observation window in exciton lifetimes 1/gamma_X.  The
    uniform time step is the smaller of T/(min_points - 1) and
    phase_step / (fastest Bohr frequency of the drive-on Hamiltonian);
    ``pulse_step`` is used inside the pulse window.
    """

    cascade: CascadeParams = field(default_factory=CascadeParams)
    phonon: Optional[PhononParams] = None
    mode: str = "reduced"
    initial: str = "XV"
    window: float = 15.0
    min_points: int = 2000
    phase_step: float = 0.25
    pulse_step: float = 0.05

    def __post_init__(self):
        if self.mode not in cs.MODES:
            raise ValueError(f"mode must be one of {cs.MODES}")
        if self.initial not in INITIAL:
            raise ValueError(f"initial must be one of {INITIAL}")
        if self.window <= 0 or self.min_points < 3:
            raise ValueError("window must be > 0 and min_points >= 3")
        if self.phase_step <= 0 or self.pulse_step <= 0:
            raise ValueError("step controls must be > 0")

    def replace(self, **kw) -> "Scenario":
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return Scenario(**d)

    @property
    def T(self) -> float:
        gx = self.cascade.rate("gamma_X")
        if gx <= 0:
            raise ValueError("observation window needs gamma_X > 0")
        return self.window / gx

    @property
    def rho0(self) -> np.ndarray:
        return system.initial_state(self.initial)

    @cached_property
    def liouvillian(self) -> qc.Liouvillian:
        return system.liouvillian(self.cascade, self.mode, self.phonon)

    def time_grid(self, T: Optional[float] = None, refine: int = 1) -> np.ndarray:
        T = self.T if T is None else T
        H = cs.hamiltonian(self.cascade, self.mode, t=self.cascade.pulse_center)
        ev = np.linalg.eigvalsh(H)
        wmax = (ev[-1] - ev[0]) / HBAR
        h = T / (self.min_points - 1)
        if wmax > 0:
            h = min(h, self.phase_step / wmax)
        h /= refine
        if self.mode != "pulsed":
            n = int(math.ceil(T / h))
            return np.linspace(0.0, T, n + 1)
        lo, hi = cs.pulse_window(self.cascade)
        hi = min(max(hi, 0.0), T)
        nf = max(1, int(math.ceil(hi / (self.pulse_step / refine))))
        fine = np.linspace(0.0, hi, nf + 1)
        nc = max(1, int(math.ceil((T - hi) / h)))
        coarse = np.linspace(hi, T, nc + 1)
        return np.concatenate([fine, coarse[1:]])

    def trajectory(self, refine: int = 1, T: Optional[float] = None) -> qc.Trajectory:
        if refine == 1 and T is None:
            return self._trajectory
        return qc.evolve(self.rho0, self.liouvillian, self.time_grid(T, refine))

    @cached_property
    def _trajectory(self) -> qc.Trajectory:
        return qc.evolve(self.rho0, self.liouvillian, self.time_grid())

    @property
    def exact_available(self) -> bool:
        return not self.liouvillian.time_dependent


# ---------------------------------------------------------------------------
# single-time integrals


def integrated_state(sc: Scenario, route: str = "auto") -> np.ndarray:
    """int_0^T rho(t) dt."""
    route = _route(sc, route)
    if route == "exact":
        return qc.integrated_state(sc.liouvillian, sc.rho0, sc.T)
    tr = sc.trajectory()
    return np.trapezoid(tr.states, tr.times, axis=0)


def _route(sc: Scenario, route: str) -> str:
    if route == "auto":
        return "exact" if sc.exact_available else "grid"
    if route not in ("exact", "grid"):
        raise ValueError("route must be 'auto', 'exact' or 'grid'")
    if route == "exact" and not sc.exact_available:
        raise ValueError("exact route needs a time-independent generator")
    return route


def _check_tail(sc: Scenario) -> None:
    if sc.initial == "G":
        return
    if sc.exact_available:
        rho_T = qc.unvec(sc.liouvillian.propagator(sc.T) @ qc.vec(sc.rho0), cs.DIM)
        peak = 1.0
    else:
        tr = sc.trajectory()
        rho_T = tr.states[-1]
        peak = tr.population(cs.XV).max()
    tail = rho_T[cs.XV, cs.XV].real
    if tail > TAIL_TOL * peak:
        log.warning("X_V population at the window end is %.2e of its peak; "
                    "photon numbers are truncated", tail / peak)


def photon_number(sc: Scenario, route: str = "auto") -> float:
    """N_ph = gamma_X int <sigma+_X sigma-_X> dt over the window."""
    _check_tail(sc)
    R = integrated_state(sc, route)
    return sc.cascade.rate("gamma_X") * R[cs.XV, cs.XV].real


@dataclass(frozen=True)
class PeakNumbers:
    n_plus: float
    n_minus: float
    cross: float  # coherence contribution, n_plus + n_minus + cross = N_ph
    rho_plus: float  # int rho_+ dt (ps)
    rho_minus: float


def peak_decomposition(sc: Scenario, route: str = "auto") -> PeakNumbers:
    """Split N_ph between the dressed peaks.

    N+- = (gamma_X/2)(1 -+ d/eta) int rho_+- dt and the dropped coherence term
    cross = -(gamma_X W/eta) int Re rho_+- dt, so the three sum to N_ph.
    """
    p = sc.cascade
    pair = cs.dressed_states(p.omega_cw, p.delta)
    gx = p.rate("gamma_X")
    if pair.eta < 5 * p.gamma_X:
        log.warning("eta = %.3g ueV < 5 gamma_X: peaks overlap and N+- is ill defined", pair.eta)
    R = integrated_state(sc, route)
    kp, km = pair.ket_plus, pair.ket_minus
    rp = (kp.conj() @ R @ kp).real
    rm = (km.conj() @ R @ km).real
    rpm = kp.conj() @ R @ km
    n_plus = gx / 2 * (1 - p.delta / pair.eta) * rp
    n_minus = gx / 2 * (1 + p.delta / pair.eta) * rm
    # <X_V|+><X_V|-> = -W/(2 eta) in the ket convention of dressed_states
    cpm = kp[cs.XV].conj() * km[cs.XV]
    cross = 2 * gx * (cpm * rpm).real
    return PeakNumbers(n_plus, n_minus, cross, rp, rm)


# ---------------------------------------------------------------------------
# two-time figures of merit


def _peak_ops(p: CascadeParams, peak: str):
    if peak not in PEAKS:
        raise ValueError(f"peak must be one of {PEAKS}")
    if peak == "all":
        return cs.SM_X, None
    pair = cs.dressed_states(p.omega_cw, p.delta)
    return pair.sigma_minus(peak), pair.projector(peak)


def _double_integral(sc: Scenario, A, B, sandwich, squared, route, refine=1) -> float:
    route = _route(sc, route)
    if route == "exact":
        return qc.exact_correlation_integral(A, B, sc.liouvillian, sc.rho0, sc.T,
                                             sandwich=sandwich, squared=squared).real
    return qc.correlation_integral(A, B, sc.trajectory(refine), sandwich=sandwich,
                                   squared=squared).real


def _normalization(sc: Scenario, peak: str, proj, route: str) -> float:
    R = integrated_state(sc, route)
    if peak == "all":
        n = sc.cascade.rate("gamma_X") * R[cs.XV, cs.XV].real
        return n * n / (2 * sc.cascade.rate("gamma_X") ** 2)
    r = np.trace(proj @ R).real
    return 0.5 * r * r


def indistinguishability(sc: Scenario, peak: str = "all", route: str = "auto",
                         refine_check: bool = False) -> float:
    """HOM indistinguishability of the X_V photons, or of one dressed peak.

    I   = (2 gamma_X^2 / N_ph^2) int int |g1(t, tau)|^2
    I+- = int int |g1+-|^2 / (1/2 [int rho+- dt]^2), with sigma+- = |G><+-|.

    ``refine_check`` repeats the grid route at half the step and raises
    ConvergenceError if the value moves by more than 0.005.
    """
    sm, proj = _peak_ops(sc.cascade, peak)
    sp = qc.dagger(sm)
    norm = _normalization(sc, peak, proj, route)
    if norm <= 0:
        raise ValueError("no photons emitted in this channel")
    val = _double_integral(sc, sp, sm, False, True, route) / norm
    if refine_check and _route(sc, route) == "grid":
        fine = _double_integral(sc, sp, sm, False, True, "grid", refine=2) / norm
        if abs(fine - val) > 0.005:
            raise ConvergenceError(
                f"indistinguishability not grid converged: {val:.5f} vs {fine:.5f}")
    return val


def g2_zero(sc: Scenario, peak: str = "all", route: str = "auto",
            refine_check: bool = False) -> float:
    """Pulse-wise coincidence measure g2[0] of the X_V photons or of one peak.

    Same normalizations as :func:`indistinguishability`, with the integrand
    <sigma+(t) sigma+(t+tau) sigma-(t+tau) sigma-(t)>.
    """
    sm, proj = _peak_ops(sc.cascade, peak)
    sp = qc.dagger(sm)
    norm = _normalization(sc, peak, proj, route)
    if norm <= 0:
        raise ValueError("no photons emitted in this channel")
    val = _double_integral(sc, sp @ sm, sm, True, False, route) / norm
    if refine_check and _route(sc, route) == "grid":
        fine = _double_integral(sc, sp @ sm, sm, True, False, "grid", refine=2) / norm
        if abs(fine - val) > 0.1 * max(abs(fine), 1e-12):
            raise ConvergenceError(f"g2[0] not grid converged: {val:.4e} vs {fine:.4e}")
    if -1e-12 < val < 0:
        val = 0.0  # roundoff
    return val


@dataclass(frozen=True)
class Metrics:
    n_ph: float
    n_plus: float
    n_minus: float
    indist: float
    indist_plus: float
    indist_minus: float
    g2_zero: float
    g2_plus: float
    g2_minus: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def or_nan(f, sc: Scenario, peak: str, route: str = "auto") -> float:
    """f(sc, peak, route), or NaN if that channel emits no photons."""
    try:
        return f(sc, peak, route)
    except ValueError as err:
        if "no photons" not in str(err):
            raise
        return float("nan")


def metrics(sc: Scenario, route: str = "auto") -> Metrics:
    """All figures of merit for one scenario.

    Per-peak values are NaN if undressed; any value is NaN for a channel that
    emits no photons (e.g. the empty dressed line at zero drive).
    """
    p = sc.cascade
    dressed = not (p.omega_cw == 0 and p.delta == 0)
    n_ph = photon_number(sc, route)
    nan = float("nan")

    def guarded(f, peak):
        return or_nan(f, sc, peak, route)

    if dressed:
        pk = peak_decomposition(sc, route)
        ip, im = guarded(indistinguishability, "plus"), guarded(indistinguishability, "minus")
        gp, gm = guarded(g2_zero, "plus"), guarded(g2_zero, "minus")
        npl, nmi = pk.n_plus, pk.n_minus
    else:
        npl = nmi = ip = im = gp = gm = nan
    return Metrics(n_ph, npl, nmi, guarded(indistinguishability, "all"), ip, im,
                   guarded(g2_zero, "all"), gp, gm)


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class Spectrum:
    """Incoherent emission spectrum against detuning from a bare line.

    values are photon-number densities per ueV: the integral over the axis is
    the incoherent photon rate (1/ps, steady) or photon number (pulsed).
    """

    detuning: np.ndarray  # ueV
    values: np.ndarray
    transition: str
    kind: str

    def __post_init__(self):
        d = np.diff(self.detuning)
        if len(d) and not np.allclose(d, d[0], rtol=1e-9, atol=0):
            raise ValueError("spectrum axis must be uniform")

    @property
    def units(self) -> str:
        return "1/(ps ueV)" if self.kind == "steady" else "1/ueV"

    def peaks(self, n: int, min_rel_height: float = 1e-4) -> np.ndarray:
        """Detunings of the n highest local maxima, sorted by position."""
        return self.detuning[self.peak_indices(n, min_rel_height)]

    def peak_indices(self, n: int, min_rel_height: float = 1e-4) -> np.ndarray:
        idx, _ = find_peaks(self.values, height=min_rel_height * self.values.max())
        top = idx[np.argsort(self.values[idx])[::-1][:n]]
        return np.sort(top)


def _lowering(transition: str) -> np.ndarray:
    if transition == "X":
        return cs.SM_X
    if transition == "XX":
        return cs.SM_XX
    raise ValueError("transition must be 'X' or 'XX'")


def _channel_rate(p: CascadeParams, transition: str) -> float:
    # V-polarized decay rate of the chosen transition (1/ps)
    return p.rate("gamma_X") if transition == "X" else p.rate("gamma_XX") / 2


def emission_spectrum(sc: Scenario, transition: str, kind: str, detuning) -> Spectrum:
    """Incoherent spectrum of the V-polarized X or XX line.

    ``kind='steady'`` uses the stationary state (needs gamma_inc > 0 and a
    time-independent generator); ``kind='pulsed'`` integrates the two-time
    correlator of the connected operator C = sigma- - <sigma-> over the
    observation window and checks that doubling the window changes the
    spectrum by less than 1% of its maximum.
    """
    detuning = np.asarray(detuning, dtype=float)
    sm = _lowering(transition)
    p = sc.cascade
    nu = (detuning + cs.bare_offset(p, sc.mode, transition)) / HBAR
    scale = _channel_rate(p, transition) / (math.pi * HBAR)
    if kind == "steady":
        vals = _steady_spectrum(sc, sm, nu)
    elif kind == "pulsed":
        vals = _pulsed_spectrum(sc.trajectory(), sm, nu)
        vals2 = _pulsed_spectrum(sc.trajectory(T=2 * sc.T), sm, nu)
        if np.max(np.abs(vals2 - vals)) > 0.01 * max(np.max(np.abs(vals2)), 1e-300):
            raise ConvergenceError("pulsed spectrum changes by > 1% on window doubling")
    else:
        raise ValueError("kind must be 'steady' or 'pulsed'")
    return Spectrum(detuning, scale * vals, transition, kind)


def _steady_spectrum(sc: Scenario, sm: np.ndarray, nu: np.ndarray) -> np.ndarray:
    if sc.cascade.gamma_inc <= 0:
        raise ValueError("steady spectra need gamma_inc > 0")
    L = sc.liouvillian
    if L.time_dependent:
        raise ValueError("steady spectra need a time-independent generator")
    rho = qc.steady_state(L)
    d2 = cs.DIM ** 2
    sp = qc.dagger(sm)
    x = rho @ sp
    y = qc.vec(x - np.trace(x) * rho)
    # y is traceless, so (L - P) with P = |rho><1| inverts L on it
    M = L.matrix - np.outer(qc.vec(rho), qc.vec(np.eye(cs.DIM)))
    row = qc.trace_row(sm)
    out = np.empty(len(nu))
    eye = np.eye(d2)
    for k, w in enumerate(nu):
        z = np.linalg.solve(M + 1j * w * eye, -y)
        out[k] = (row @ z).real
    return out


def _pulsed_spectrum(traj: qc.Trajectory, sm: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Re int int_{t+tau<=T} e^{i nu tau} <C+(t) C(t+tau)> over the grid."""
    times = traj.times
    w = qc._trap_weights(times)
    own = np.append(np.diff(times) / 2, 0.0)
    sp = qc.dagger(sm)
    row = qc.trace_row(sm)
    Y = []
    for r in traj.states:
        x = r @ sp
        Y.append(qc.vec(x - np.trace(x) * r))
    Y = np.array(Y).T  # (d2, n)
    # Z[:, nu] = sum_k w_k e^{-i nu t_k} U(t_j, t_k) y_k
    ph = np.exp(-1j * np.outer(times, nu))  # (n, n_nu)
    Z = w[0] * Y[:, :1] * ph[0][None, :]
    total = w[0] * np.conj(ph[0]) * (row @ Z) + w[0] * (own[0] - w[0]) * (row @ Y[:, 0])
    for j in range(1, len(times)):
        Z = traj.maps[j - 1] @ Z + w[j] * Y[:, j:j + 1] * ph[j][None, :]
        total += w[j] * np.conj(ph[j]) * (row @ Z)
        total += w[j] * (own[j] - w[j]) * (row @ Y[:, j])
    return total.real


# ---------------------------------------------------------------------------
# interferometer and detector models


@dataclass(frozen=True)
class InterferometerParams:
    rt_ratio: float = 1.15
    fringe_contrast: float = 0.99

    def __post_init__(self):
        if self.rt_ratio <= 0:
            raise ValueError("rt_ratio must be > 0")
        if not 0 < self.fringe_contrast <= 1:
            raise ValueError("fringe_contrast must be in (0, 1]")

    @property
    def chi_corr(self) -> float:
        """(R^2 + T^2) / (2RT(1-eps)^2)."""
        r = self.rt_ratio
        return (r * r + 1) / (2 * r * self.fringe_contrast ** 2)


def hom_visibility(indist: float, g2: float, ifp: InterferometerParams = InterferometerParams()):
    """(V_raw, V_corr, chi_corr) for a source with the given I and g2[0]."""
    if g2 < 0:
        raise ValueError("g2 must be >= 0")
    chi = ifp.chi_corr
    v_raw = (indist / chi - g2) / (1 + g2)
    return v_raw, chi * v_raw, chi


def corrected_visibility(v_raw: float, ifp: InterferometerParams = InterferometerParams()) -> float:
    return ifp.chi_corr * v_raw


FWHM_PER_SIGMA = 2 * math.sqrt(2 * math.log(2))


def irf_convolve(times, trace, width: float, kind: str = "fwhm", extend: bool = True):
    """Convolve a uniformly sampled trace with a unit-area Gaussian.

    ``width`` is a FWHM (default) or a standard deviation (``kind='sigma'``).
    With ``extend`` the axis is padded by 6 sigma on both sides with zeros, so
    the summed signal is conserved exactly; otherwise the axis is kept and the
    edges are continued with their end values, which leaves constants intact.
    Returns (times, convolved).
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(trace, dtype=float)
    if t.shape != f.shape or t.ndim != 1 or len(t) < 2:
        raise ValueError("times and trace must be 1-d arrays of equal length")
    dt = t[1] - t[0]
    if dt <= 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform and increasing")
    if kind not in ("fwhm", "sigma"):
        raise ValueError("kind must be 'fwhm' or 'sigma'")
    if width < 2 * dt:
        raise ValueError(f"IRF width {width} is below two grid steps ({2 * dt})")
    sigma = width / FWHM_PER_SIGMA if kind == "fwhm" else width
    s = sigma / dt
    if extend:
        pad = int(math.ceil(6 * s))
        f = np.concatenate([np.zeros(pad), f, np.zeros(pad)])
        t = t[0] + dt * np.arange(-pad, len(t) + pad)
        return t, gaussian_filter1d(f, s, mode="constant", cval=0.0, truncate=6.0)
    return t, gaussian_filter1d(f, s, mode="nearest", truncate=6.0)


# ---------------------------------------------------------------------------
# cw background


def cw_pulse_ratio(sc: Scenario, rep_period: float = 12200.0) -> float:
    """N_ph(init X_V) / N_ph(init G) accumulated over one repetition period.

    Always uses the full frame, where the cw laser also drives G-X_V far off
    resonance.  Returns +inf (with a warning) when the cw run emits nothing.
    """
    if rep_period <= 0:
        raise ValueError("rep_period must be > 0")
    L = system.liouvillian(sc.cascade, "full", sc.phonon)
    gx = sc.cascade.rate("gamma_X")

    def n_ph(init):
        R = qc.integrated_state(L, system.initial_state(init), rep_period)
        return gx * R[cs.XV, cs.XV].real

    num, den = n_ph("XV"), n_ph("G")
    if den <= 1e-300:
        log.warning("no cw-driven emission; ratio reported as +inf")
        return math.inf
    return num / den


def oscillation_period(times, signal) -> float:
    """Mean spacing of successive extrema (maxima and minima), doubled.

    Extrema are refined by a parabola through the three samples around each
    one.  A damped cosine A e^{-a t} cos(w t) has equally spaced extrema, so
    normalize any decaying envelope away before calling this.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(signal, dtype=float)
    ext = []
    for sgn in (1, -1):
        idx, _ = find_peaks(sgn * f)
        for i in idx:
            y0, y1, y2 = f[i - 1], f[i], f[i + 1]
            den = y0 - 2 * y1 + y2
            off = 0.5 * (y0 - y2) / den if den != 0 else 0.0
            ext.append(t[i] + off * (t[i + 1] - t[i]))
    if len(ext) < 2:
        raise ValueError("fewer than two extrema in the trace")
    ext = np.sort(ext)
    return 2 * float(np.mean(np.diff(ext)))
