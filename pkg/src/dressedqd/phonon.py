"""LA-phonon coupling in the polaron frame.

Spectral density J(w) = alpha w^3 exp(-w^2 / 2 w_b^2) with w in 1/ps.  The
bath correlation phi(tau) and the drive attenuation <B> = exp(-phi(0)/2) come
from Gauss-Legendre quadrature over w.

Scattering channel
------------------
Each driven transition k (raising operator s_k, post-attenuation Rabi
frequency W_k, displacement factor d_k = change in exciton number times the
coupling ratio) contributes the polaron interaction

    H_I = sum_k (hbar W_k / 2<B_k>) (s_k dB_k^+ + s_k^+ dB_k^-),  dB = B - <B>.

Second-order Born-Markov with the drives frozen at time t gives

    d rho/dt = - sum_{a,b} (W_a W_b / 4) [S_a, S^_ab rho] + h.c.,
    S^_ab   = int_0^inf dtau K_ab(tau) S_b(-tau),
    K_ab    = exp(-s_a s_b d_a d_b phi(tau)) - 1,

where S ranges over raising (s=+1) and lowering (s=-1) parts of every drive
and S_b(-tau) = exp(-i H tau) S_b exp(i H tau) uses the polaron-frame system
Hamiltonian.  For a single transition this is the usual
<B>^2 (cosh phi - 1) / <B>^2 sinh phi quadrature form.  The half-range
Fourier integrals are done with Simpson's rule on the tabulated phi.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .qcore import HBAR, ConvergenceError, dagger, spost, spre

KB = 86.17333262  # ueV / K


@dataclass(frozen=True)
class PhononParams:
    alpha: float = 0.004  # ps^2
    omega_b: float = 8.36  # 1/ps
    temperature: float = 4.5  # K
    xx_coupling: float = 2.0  # biexciton coupling / exciton coupling

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.omega_b <= 0:
            raise ValueError("omega_b must be > 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhononParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown phonon fields: {sorted(unknown)}")
        return cls(**d)


def spectral_density(p: PhononParams, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be >= 0")
    return p.alpha * omega ** 3 * np.exp(-omega ** 2 / (2 * p.omega_b ** 2))


def thermal_occupation(E, T):
    """Bose-Einstein occupation for energy E (ueV) at temperature T (K)."""
    E = np.asarray(E, dtype=float)
    if np.any(E <= 0):
        raise ValueError("energy must be > 0")
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(E / (KB * T))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _nodes(p: PhononParams, n: int):
    """Composite 20-point Gauss-Legendre rule with ~n nodes on [0, 12 w_b]."""
    wmax = 12.0 * p.omega_b
    panels = max(1, n // 20)
    edges = np.linspace(0.0, wmax, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    om = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return om, w


def _coth_half(p: PhononParams, om):
    return 1.0 / np.tanh(HBAR * om / (2 * KB * p.temperature))


def _phi_quad(p: PhononParams, tau, n: int) -> np.ndarray:
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    om, w = _nodes(p, n)
    f = spectral_density(p, om) / om ** 2 * w
    c = _coth_half(p, om)
    arg = np.outer(tau, om)
    return np.cos(arg) @ (f * c) - 1j * (np.sin(arg) @ f)


def phonon_correlation(p: PhononParams, tau, n_nodes: int = 4000) -> np.ndarray:
    """phi(tau) = int dw J/w^2 [coth(hbar w / 2kT) cos(w tau) - i sin(w tau)]."""
    out = _phi_quad(p, tau, n_nodes)
    return out if np.ndim(tau) else out[0]


def b_factor(p: PhononParams, rtol: float = 1e-6) -> float:
    """<B> = exp(-phi(0)/2), checked under node doubling."""
    n = 200
    prev = _phi_quad(p, 0.0, n)[0].real
    while True:
        n *= 2
        cur = _phi_quad(p, 0.0, n)[0].real
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300) or n > 100_000:
            break
        prev = cur
    if not math.isfinite(cur) or abs(cur - prev) > rtol * max(abs(cur), 1e-300):
        raise ConvergenceError("<B> quadrature did not converge")
    return math.exp(-0.5 * cur)


@dataclass(frozen=True)
class PolaronQuantities:
    """Tabulated phi(tau) on a uniform grid plus <B>."""

    params: PhononParams
    tau: np.ndarray
    phi: np.ndarray
    b_factor: float
    tail_cutoff: float
    _kernels: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def compute(cls, p: PhononParams, dtau: float = 0.01, tail_cutoff: float = 20.0,
                n_nodes: int = 4000, tol: float = 1e-6) -> "PolaronQuantities":
        n = int(round(tail_cutoff / dtau)) + 1
        tau = np.linspace(0.0, tail_cutoff, n)
        phi = _phi_quad(p, tau, n_nodes)
        if p.alpha > 0 and abs(phi[-1]) > tol:
            raise ConvergenceError(
                f"phi table not converged: |phi({tail_cutoff} ps)| = {abs(phi[-1]):.2e}")
        return cls(p, tau, phi, math.exp(-0.5 * phi[0].real), tail_cutoff)

    @property
    def b_squared(self) -> float:
        return self.b_factor ** 2

    @cached_property
    def _spline(self):
        return CubicSpline(self.tau, self.phi)

    def phi_at(self, tau) -> np.ndarray:
        """Interpolated phi, with phi(-tau) = conj(phi(tau)) and 0 past the cutoff."""
        tau = np.asarray(tau, dtype=float)
        a = np.abs(tau)
        val = np.where(a <= self.tail_cutoff, self._spline(np.minimum(a, self.tail_cutoff)), 0)
        return np.where(tau < 0, np.conj(val), val)

    def kernel(self, product: float) -> np.ndarray:
        """exp(-product * phi(tau)) - 1 on the table grid."""
        key = round(float(product), 12)
        k = self._kernels.get(key)
        if k is None:
            k = np.expm1(-product * self.phi)
            self._kernels[key] = k
        return k

    def half_fourier(self, product: float, nu) -> np.ndarray:
        """int_0^cutoff K(tau) exp(-i nu tau) dtau for each nu (1/ps)."""
        nu = np.atleast_1d(np.asarray(nu, dtype=float))
        K = self.kernel(product)
        ph = np.exp(-1j * np.outer(nu, self.tau))
        return simpson(ph * K, x=self.tau, axis=1)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.tau, self.phi.real, self.phi.imag])
        np.savetxt(path, data, delimiter=",", fmt="%.9g",
                   header="tau_ps,phi_real,phi_imag", comments="")


@dataclass(frozen=True)
class Drive:
    """A coherently driven transition: raising operator, Rabi freq (1/ps), factor."""

    raising: np.ndarray
    omega: float
    displacement: float = 1.0


def scattering_superoperator(pq: PolaronQuantities, H_sys: np.ndarray,
                             drives: Sequence[Drive], hbar: float = HBAR) -> np.ndarray:
    """Phonon scattering generator (1/ps) for the frozen drives; see module doc."""
    d = H_sys.shape[0]
    out = np.zeros((d * d, d * d), dtype=complex)
    active = [dr for dr in drives if dr.omega != 0 and dr.displacement != 0]
    if pq.params.alpha == 0 or not active:
        return out
    E, V = np.linalg.eigh(H_sys)
    w = E / hbar
    diff = w[:, None] - w[None, :]  # (n, m) -> w_n - w_m
    ops = []
    for dr in active:
        ops.append((dr.raising, +1, dr.omega, dr.displacement))
        ops.append((dagger(dr.raising), -1, dr.omega, dr.displacement))
    Vd = dagger(V)
    fourier = {}
    for Sa, sa, wa, da in ops:
        acc = np.zeros((d, d), dtype=complex)
        for Sb, sb, wb, db in ops:
            prod = sa * sb * da * db
            F = fourier.get(prod)
            if F is None:
                F = pq.half_fourier(prod, diff.ravel()).reshape(d, d)
                fourier[prod] = F
            Sb_eig = Vd @ Sb @ V
            acc += (wa * wb / 4) * (V @ (Sb_eig * F) @ Vd)
        # X -> Sa acc X - acc X Sa, plus its Hermitian conjugate
        M = spre(Sa @ acc) - _sprepost(acc, Sa)
        accd, Sad = dagger(acc), dagger(Sa)
        Mh = spost(accd @ Sad) - _sprepost(Sad, accd)
        out -= M + Mh
    return out


def _sprepost(A, B):
    return np.kron(B.T, A)
