"""Print <B>, <B>^2 and n(E_B) for the LA-phonon bath and export phi(tau).

    python3 scripts/phonon_table.py [--alpha 0.004] [--omega-b 8.36] [--temperature 4.5]
"""
import argparse

from dressedqd.phonon import PhononParams, PolaronQuantities, b_factor, thermal_occupation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.004)
    ap.add_argument("--omega-b", type=float, default=8.36)
    ap.add_argument("--temperature", type=float, default=4.5)
    ap.add_argument("--E-B", type=float, default=3240.0)
    ap.add_argument("--csv", default="phi_table.csv")
    args = ap.parse_args()
    p = PhononParams(args.alpha, args.omega_b, args.temperature)
    b = b_factor(p)
    print(f"<B>     = {b:.6f}")
    print(f"<B>^2   = {b * b:.6f}")
    print(f"n(E_B)  = {float(thermal_occupation(args.E_B, args.temperature)):.4e}")
    PolaronQuantities.compute(p).to_csv(args.csv)
    print(f"phi(tau) written to {args.csv}")


if __name__ == "__main__":
    main()
