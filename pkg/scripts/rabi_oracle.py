"""Compare the numerical dressed decay from |X_V> with the damped Rabi formula.

    python3 scripts/rabi_oracle.py [--omega 18]
"""
import argparse

import numpy as np

from dressedqd import analytic as an
from dressedqd import cascade as cs
from dressedqd import photonics as ph
from dressedqd import qcore as qc
from dressedqd.qcore import HBAR


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--omega", type=float, default=18.0)
    ap.add_argument("--gamma", type=float, default=1.32)
    args = ap.parse_args()
    p = cs.CascadeParams(omega_cw=args.omega, gamma_X=args.gamma, gamma_XX=2 * args.gamma)
    L = qc.build_liouvillian(cs.hamiltonian(p, "reduced"), cs.collapse_terms(p))
    t = np.linspace(0, 5 * HBAR / args.gamma, 5001)
    tr = qc.evolve(cs.proj(cs.XV), L, t)
    ap_ = an.AnalyticParams(gamma_X=args.gamma, omega_cw=args.omega)
    xv, _ = an.rho_analytic(ap_, t)
    dev = np.abs(tr.population(cs.XV) - xv).max()
    v, x = tr.population(cs.XV), tr.population(cs.XX)
    period = ph.oscillation_period(t, (v - x) / (v + x))
    print(f"max |rho_XV - closed form| = {dev:.4f}")
    print(f"period: numeric {period:.2f} ps, 2 pi hbar / W = {an.rabi_period(ap_):.2f} ps")


if __name__ == "__main__":
    main()
