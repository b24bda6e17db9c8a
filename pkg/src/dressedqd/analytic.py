"""Closed-form results used to cross-check the numerical engine."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import cascade as cs
from .qcore import HBAR

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalyticParams:
    gamma_X: float = 1.32  # ueV
    omega_cw: float = 18.0  # ueV
    delta: float = 0.0  # ueV
    E_B: float = 3240.0  # ueV

    def __post_init__(self):
        if self.gamma_X <= 0:
            raise ValueError("gamma_X must be > 0")
        if self.omega_cw < 0:
            raise ValueError("omega_cw must be >= 0")
        if self.E_B <= 0:
            raise ValueError("E_B must be > 0")

    @property
    def eta(self) -> float:
        return math.hypot(self.omega_cw, self.delta)


def rho_analytic(p: AnalyticParams, t):
    """Damped Rabi populations (rho_XV, rho_XX) from |X_V> with gamma_XX = 2 gamma_X.

    rho_XV = e^{-g t}/2 (1 + e^{-3 g t/4} cos W t), rho_XX = e^{-g t} - rho_XV.
    Valid for resonant dressing (delta = 0) well above the linewidth.
    """
    if p.delta != 0:
        raise ValueError("the damped Rabi formula assumes delta = 0")
    if p.omega_cw < 5 * p.gamma_X:
        log.warning("omega_cw/gamma_X = %.2f < 5; formula assumes strong dressing",
                    p.omega_cw / p.gamma_X)
    t = np.asarray(t, dtype=float)
    g = p.gamma_X / HBAR
    w = p.omega_cw / HBAR
    env = np.exp(-g * t)
    xv = 0.5 * env * (1 + np.exp(-0.75 * g * t) * np.cos(w * t))
    return xv, env - xv


def rabi_period(p: AnalyticParams) -> float:
    """2 pi hbar / (hbar W) in ps."""
    return 2 * math.pi * HBAR / p.omega_cw


def bare_decay(gamma: float, t):
    """e^{-gamma t / hbar} for gamma in ueV and t in ps."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    return np.exp(-gamma * np.asarray(t, dtype=float) / HBAR)


@dataclass(frozen=True)
class LinePositions:
    """Line offsets (ueV) from the bare XX and X lines."""

    xx_center: float
    xx_lower: float  # -delta - eta
    xx_upper: float  # -delta + eta
    x_minus: float  # (delta - eta)/2
    x_plus: float  # (delta + eta)/2

    def biexciton(self) -> tuple:
        return (self.xx_lower, self.xx_center, self.xx_upper)

    def exciton(self) -> tuple:
        return (self.x_minus, self.x_plus)

    def as_list(self) -> list:
        return [*self.biexciton(), *self.exciton()]


def peak_positions(p: AnalyticParams) -> LinePositions:
    """Dressed-state line offsets: XX at -d, -d -+ eta; X at (d -+ eta)/2."""
    d, eta = p.delta, p.eta
    return LinePositions(-d, -d - eta, -d + eta, (d - eta) / 2, (d + eta) / 2)


def corrected_peak_positions(p: AnalyticParams) -> LinePositions:
    """Line offsets including the far-detuned dressing of G-X_V.

    The dressed doublet comes from ``cascade.corrected_eigenenergies``.  The
    exciton lines also move by the light shift of |G>, which the same
    elimination puts at -W^2/(4 E_B), so they sit at E'_+- + d/2 + W^2/(4 E_B).
    """
    cp = cs.CascadeParams(E_B=p.E_B, gamma_X=p.gamma_X, delta=p.delta, omega_cw=p.omega_cw)
    ep, em = cs.corrected_eigenenergies(cp)
    d, w = p.delta, p.omega_cw
    split = ep - em
    g_shift = w * w / (4 * p.E_B)
    return LinePositions(-d, -d - split, -d + split,
                         em + d / 2 + g_shift, ep + d / 2 + g_shift)


def dominant_exciton_offset(p: AnalyticParams) -> float:
    """Offset of the dominant exciton line, -stark_shift; ~ -W^2/(4 d) for |d| >> W."""
    return -cs.stark_shift(p.omega_cw, p.delta)
