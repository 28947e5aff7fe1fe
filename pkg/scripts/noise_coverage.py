"""Monte Carlo coverage of the sketched noise-level bound.

Draws a fresh sketch and a fresh sample per replicate and counts how often the sketched
noise norm stays below the high-probability bound.

    python3 scripts/noise_coverage.py --n 10000 --m 256 --alpha 0.2 --reps 200
"""
import argparse

import numpy as np

from offgrid.pipeline import ExperimentConfig, resolve, simulate_mixture
from offgrid.sketching import draw_operator, noise_level_bound, sketch_dataset, sketched_noise


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--m", type=int, default=256)
    ap.add_argument("--alpha", type=float, default=0.2)
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    cfg = ExperimentConfig(weights=[0.2, 0.5, 0.3], positions=[0.0, 1.0, 2.0], m=args.m, alpha=args.alpha)
    res = resolve(cfg)
    mu0 = cfg.mu0
    bound = noise_level_bound(args.alpha, args.m, args.n, res.tau, res.law, cfg.c1, cfg.c2)
    norms = np.empty(args.reps)
    for r in range(args.reps):
        op = draw_operator(res.law, res.template, args.m, seed=r)
        sk = sketch_dataset(simulate_mixture(mu0, res.template, args.n, [r, args.n, 6]), op)
        norms[r] = sketched_noise(op, sk, mu0)
    cover = float(np.mean(norms <= bound.value))
    print(f"tau={res.tau:.5g}  bound={bound.value:.5g}  C_alpha_m={bound.c_alpha_m:.5g}")
    print(f"noise norm quantiles 50/90/99%: {np.quantile(norms, [0.5, 0.9, 0.99]).round(5).tolist()}")
    print(f"coverage {cover:.3f} (target {1 - args.alpha:.2f})")


if __name__ == "__main__":
    main()
