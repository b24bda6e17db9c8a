"""Assemble the cascade master equation, optionally with the phonon channel."""
from __future__ import annotations

from functools import lru_cache
from typing import Optional

import numpy as np

from . import cascade as cs
from .phonon import Drive, PhononParams, PolaronQuantities, scattering_superoperator
from .qcore import HBAR, Liouvillian, build_liouvillian, hamiltonian_super, lindblad_super

def polaron(p: Optional[PhononParams]) -> Optional[PolaronQuantities]:
    """phi table for ``p``, or None when phonons are off."""
    if p is None or p.alpha == 0:
        return None
    return _polaron(p)


@lru_cache(maxsize=16)
def _polaron(p: PhononParams) -> PolaronQuantities:
    return PolaronQuantities.compute(p)


def drives(p: cs.CascadeParams, mode: str, pp: Optional[PhononParams], t: Optional[float] = None):
    dxx = 1.0 if pp is None else pp.xx_coupling - 1.0
    out = [Drive(cs.SP_XX, p.omega_cw / HBAR, dxx)]
    if mode == "full":
        out.append(Drive(cs.SP_X, p.omega_cw / HBAR, 1.0))
    elif mode == "pulsed" and t is not None:
        out.append(Drive(cs.SP_X, float(cs.pulse_envelope(p, t)), 1.0))
    return out


def liouvillian(p: cs.CascadeParams, mode: str = "reduced",
                phonons: Optional[PhononParams] = None) -> Liouvillian:
    """Generator of the cascade in the chosen frame.

    ``pulsed`` returns a time-dependent generator that is constant outside the
    pulse window t0 +- 5 tau_p.
    """
    pq = polaron(phonons)
    terms = cs.collapse_terms(p)
    diss = lindblad_super(terms, cs.DIM)

    def gen_at(t):
        H = cs.hamiltonian(p, mode, t)
        L = hamiltonian_super(H) + diss
        if pq is not None:
            L = L + scattering_superoperator(pq, H, drives(p, mode, phonons, t))
        return L

    if mode != "pulsed":
        H = cs.hamiltonian(p, mode)
        build_liouvillian(H, terms)  # validates Hermiticity / rates
        return Liouvillian(dim=cs.DIM, matrix=gen_at(None))

    H_off = cs.hamiltonian(p, "pulsed", drives=False) + p.omega_cw / 2 * cs.SX_XX
    static = hamiltonian_super(H_off) + diss
    if pq is not None:
        static = static + scattering_superoperator(pq, H_off, drives(p, "reduced", phonons))
    return Liouvillian(dim=cs.DIM, matrix=static, generator=gen_at,
                       active_window=cs.pulse_window(p))


def initial_state(name: str) -> np.ndarray:
    idx = {"G": cs.G, "XH": cs.XH, "XV": cs.XV, "XX": cs.XX}
    if name not in idx:
        raise ValueError(f"unknown initial state {name!r}")
    return cs.proj(idx[name])
