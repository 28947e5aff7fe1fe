"""Grid audit of the sinc-4 curvature constants against their closed forms.

    python3 scripts/audit_lpc.py --d 1 2
"""
import argparse
import time

from offgrid.lpc import audit_sinc4


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--s0", type=int, default=1)
    ap.add_argument("--grid-density", type=int, default=200)
    ap.add_argument("--trials", type=int, default=4000)
    args = ap.parse_args()

    for d in args.d:
        t0 = time.perf_counter()
        rep = audit_sinc4(d, s0=args.s0, tau=1.0, grid_density=args.grid_density, trials=args.trials)
        a = rep.audited
        print(f"d={d}  r0={rep.r0:.4g}  delta0={rep.delta0:.5g}  ({time.perf_counter() - t0:.1f}s)")
        print(f"  eps0: audited {a['eps0_hat']:.6g}  closed form {rep.eps0_lower:.6g}  "
              f"1/(512 d^3) {1 / (512 * d ** 3):.6g}")
        print(f"  eps2: audited {a['eps2_hat']:.6g}  closed form {rep.eps2_lower:.6g}")
        for key, val in sorted(a["b_hat"].items()):
            print(f"  B{key}: audited {val:.5g}  bound {(12 * d) ** (sum(key) / 2):.5g}")
        print(f"  passed: {rep.passed}")


if __name__ == "__main__":
    main()
