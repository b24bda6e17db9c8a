"""Biexciton-exciton cascade: basis, Hamiltonians, dissipators, dressed states.

Basis order is fixed to (G, X_H, X_V, XX).  Energies are in ueV, times in ps;
rates given in ueV are converted with hbar when collapse terms are built.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .qcore import HBAR, LindbladTerm

log = logging.getLogger(__name__)

BASIS = ("G", "XH", "XV", "XX")
G, XH, XV, XX = range(4)
DIM = 4

MODES = ("full", "reduced", "pulsed")


def ket(i: int) -> np.ndarray:
    v = np.zeros(DIM, dtype=complex)
    v[i] = 1.0
    return v


def outer(i: int, j: int) -> np.ndarray:
    """|i><j|"""
    m = np.zeros((DIM, DIM), dtype=complex)
    m[i, j] = 1.0
    return m


def proj(i: int) -> np.ndarray:
    return outer(i, i)


# sigma^-_X = |G><X_V|, sigma^-_XX = |X_V><XX|
SM_X = outer(G, XV)
SP_X = outer(XV, G)
SM_XX = outer(XV, XX)
SP_XX = outer(XX, XV)
SX_X = SM_X + SP_X
SX_XX = SM_XX + SP_XX
SZ_XX = proj(XX) - proj(XV)


@dataclass(frozen=True)
class CascadeParams:
    """Ladder parameters.  Energies and rates in ueV (hbar-scaled), times in ps.

    ``omega_cw`` is the post-attenuation cw Rabi energy.  ``t0`` defaults to
    5 tau_p so the pulse starts at t = 0.
    """

    E_B: float = 3240.0
    gamma_X: float = 1.32
    gamma_XX: float = 2.53
    gamma_pd: float = 0.0
    gamma_inc: float = 0.0
    delta: float = 0.0
    omega_cw: float = 0.0
    pulse_area: float = math.pi
    tau_p: float = 1.7
    t0: Optional[float] = None

    def __post_init__(self):
        for name in ("gamma_X", "gamma_XX", "gamma_pd", "gamma_inc"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.E_B <= 0:
            raise ValueError("E_B must be > 0")
        if self.tau_p <= 0:
            raise ValueError("tau_p must be > 0")
        if self.omega_cw < 0:
            raise ValueError("omega_cw must be >= 0")

    @property
    def pulse_center(self) -> float:
        return 5 * self.tau_p if self.t0 is None else self.t0

    @property
    def eta(self) -> float:
        return math.hypot(self.omega_cw, self.delta)

    def rate(self, name: str) -> float:
        """Rate in 1/ps."""
        return getattr(self, name) / HBAR

    def replace(self, **kw) -> "CascadeParams":
        d = asdict(self)
        d.update(kw)
        return CascadeParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown cascade fields: {sorted(unknown)}")
        return cls(**d)


def pulse_envelope(p: CascadeParams, t) -> np.ndarray:
    """Gaussian Rabi frequency Omega(t) in 1/ps; integrates to ``pulse_area``."""
    omega0 = p.pulse_area / (p.tau_p * math.sqrt(math.pi))
    t = np.asarray(t, dtype=float)
    return omega0 * np.exp(-((t - p.pulse_center) ** 2) / p.tau_p ** 2)


def pulse_window(p: CascadeParams, width: float = 5.0) -> tuple:
    t0 = p.pulse_center
    return (t0 - width * p.tau_p, t0 + width * p.tau_p)


def hamiltonian(p: CascadeParams, mode: str = "reduced", t: Optional[float] = None,
                drives: bool = True) -> np.ndarray:
    """System Hamiltonian in ueV for one of the rotating frames.

    full:    2d|XX><XX| + d|XV><XV| - E_B|G><G| + (W/2)(sx_XX + sx_X)
    reduced: (d/2) sz_XX + (W/2) sx_XX
    pulsed:  d|XX><XX| + (W/2) sx_XX + (hbar Omega(t)/2) sx_X
             (the paper's pulsed case is d = 0)

    ``drives=False`` returns the bare diagonal of the same frame.
    """
    d = p.delta
    w = p.omega_cw if drives else 0.0
    if mode == "full":
        H = 2 * d * proj(XX) + d * proj(XV) - p.E_B * proj(G) + w / 2 * (SX_XX + SX_X)
    elif mode == "reduced":
        H = d / 2 * SZ_XX + w / 2 * SX_XX
    elif mode == "pulsed":
        if t is None and drives:
            raise ValueError("pulsed Hamiltonian needs a time")
        H = d * proj(XX) + w / 2 * SX_XX
        if drives:
            H = H + HBAR * float(pulse_envelope(p, t)) / 2 * SX_X
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return H


def bare_offset(p: CascadeParams, mode: str, transition: str) -> float:
    """Rotating-frame frequency (ueV) of a bare transition.

    Emission at rotating-frame energy ``e`` sits at ``e - bare_offset`` from
    the bare line.
    """
    H = hamiltonian(p, mode, t=None, drives=False).real
    if transition == "X":
        return H[XV, XV] - H[G, G]
    if transition == "XX":
        return H[XX, XX] - H[XV, XV]
    raise ValueError(f"unknown transition {transition!r}")


def collapse_terms(p: CascadeParams) -> list:
    """Radiative, pure-dephasing and incoherent-pump channels (rates in 1/ps)."""
    gx, gxx, gpd, ginc = (p.rate(n) for n in ("gamma_X", "gamma_XX", "gamma_pd", "gamma_inc"))
    spec = [
        (gx / 2, SM_X, "rad X_V"),
        (gx / 2, outer(G, XH), "rad X_H"),
        (gxx / 4, SM_XX, "rad XX->X_V"),
        (gxx / 4, outer(XH, XX), "rad XX->X_H"),
        (gpd / 2, SP_X @ SM_X, "deph X_V"),
        (gpd / 2, proj(XH), "deph X_H"),
        (gpd, SP_XX @ SM_XX, "deph XX"),
        (ginc / 2, outer(XX, G), "pump G->XX"),
    ]
    return [LindbladTerm(r, A, lab) for r, A, lab in spec if r > 0]


@dataclass(frozen=True)
class DressedPair:
    energy_plus: float
    energy_minus: float
    ket_plus: np.ndarray
    ket_minus: np.ndarray
    eta: float

    def sigma_minus(self, branch: str) -> np.ndarray:
        """|G><+-| lowering operator of one exciton peak."""
        k = self.ket_plus if branch == "plus" else self.ket_minus
        return np.outer(ket(G), np.conj(k))

    def projector(self, branch: str) -> np.ndarray:
        k = self.ket_plus if branch == "plus" else self.ket_minus
        return np.outer(k, np.conj(k))


def dressed_states(omega_cw: float, delta: float) -> DressedPair:
    """Eigenstates of the driven {X_V, XX} block.

    |+-> ~ W|XX> - (d -+ eta)|X_V>, energies +-eta/2.  The cancelling branch
    uses d - s*eta = -W^2/(d + s*eta) to stay accurate for W << |d|.
    """
    if omega_cw == 0 and delta == 0:
        raise ValueError("dressed states are degenerate for omega_cw = delta = 0")
    w, d = float(omega_cw), float(delta)
    eta = math.hypot(w, d)
    kets = []
    for s in (+1, -1):
        if d != 0 and math.copysign(1, d) == s:
            c = -w * w / (d + s * eta)
        else:
            c = d - s * eta
        v = np.zeros(DIM, dtype=complex)
        v[XX] = w
        v[XV] = -c
        n = np.linalg.norm(v)
        if n == 0:
            v[XX] = 1.0
        else:
            v /= n
        kets.append(v)
    return DressedPair(eta / 2, -eta / 2, kets[0], kets[1], eta)


def corrected_eigenenergies(p: CascadeParams) -> tuple:
    """Dressed energies after adiabatic elimination of |G> (ueV)."""
    w, d, eb = p.omega_cw, p.delta, p.E_B
    big = max(abs(d), w)
    if big > 0 and eb / big < 5:
        log.warning("E_B / max(|delta|, omega_cw) = %.2f < 5; expansion unreliable", eb / big)
    eta2 = w * w + d * d
    offset = w * w / (8 * eb)
    half = 0.5 * math.sqrt(w ** 4 / (16 * eb * eb) + eta2 - d * w * w / (2 * eb))
    return offset + half, offset - half


def stark_shift(omega_cw: float, delta: float) -> float:
    """Shift (bare minus shifted, ueV) of the dominant exciton branch.

    The dominant branch is |+> for delta <= 0 (line at (d + eta)/2) and |-> for
    delta > 0 (line at (d - eta)/2).  At delta = 0 the |+> branch is taken.
    """
    eta = math.hypot(omega_cw, delta)
    if delta <= 0:
        return -(delta + eta) / 2
    return -(delta - eta) / 2


def drive_for_shift(target_shift: float, delta: float) -> float:
    """cw Rabi energy giving ``stark_shift == target_shift`` at this detuning."""
    disc = target_shift * (target_shift + delta)
    if disc < 0:
        raise ValueError(
            f"no drive reaches shift {target_shift} ueV at delta {delta} ueV: "
            "target_shift*(target_shift+delta) must be >= 0")
    if (target_shift > 0 and delta <= 0) or (target_shift < 0 and delta > 0):
        raise ValueError(
            f"shift {target_shift} ueV is not on the dominant branch for delta {delta} ueV "
            "(need target_shift and delta of the same sign)")
    return 2 * math.sqrt(disc)
