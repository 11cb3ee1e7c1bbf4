"""Compare the standard ADMM, the alternative ADMM and the grid-search dual.

Each row is one seeded two-group fixture; objectives should agree to
roughly 1e-4 across the three solvers.

    python3 scripts/solver_comparison.py --n 200 --seeds 0 1 2
"""

import argparse
import time

import numpy as np

from fairscore.constraints import build_features_geo, build_features_msp, estimate_marginals
from fairscore.estimators import fit_logistic, predict_proba
from fairscore.dual_solver import brute_force_dual, dual_objective, solve_dual_admm, solve_dual_admm_alt
from fairscore.synth import SynthConfig, generate


def fixture(seed, n, kind):
    data = generate(SynthConfig(n=n, signal=1.0, seed=seed))[0]
    r = predict_proba(fit_logistic(data.features, data.label, l2_reg=1e-3), data.features)
    est = estimate_marginals(data)
    if kind == "msp":
        feats = build_features_msp(data.protected, est)
    else:
        feats = build_features_geo(r, data.protected, est)
    return feats, r, est


def timed(fn):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4, 5])
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.02, 0.05, 0.1])
    ap.add_argument("--no-grid", action="store_true", help="skip the grid search (it runs on MSP rows only; the 4-D GEO grid is too slow)")
    args = ap.parse_args()

    print(f"{'kind':>4} {'seed':>4} {'eps':>5} {'admm':>11} {'alt':>11} {'grid':>11} "
          f"{'|alt-admm|':>10} {'|grid-admm|':>11} {'t admm':>7} {'t alt':>6} {'t grid':>6}")
    for kind in ("msp", "geo"):
        for seed in args.seeds:
            feats, r, est = fixture(seed, args.n, kind)
            for eps in args.epsilons:
                a, ta = timed(lambda: solve_dual_admm(feats, r, eps))
                b, tb = timed(lambda: solve_dual_admm_alt(feats, r, eps, est))
                if args.no_grid or kind == "geo":
                    grid, tg = np.nan, np.nan
                else:
                    lam, tg = timed(lambda: brute_force_dual(feats, r, eps))
                    grid = dual_objective(lam, feats, r, eps)
                print(f"{kind:>4} {seed:4d} {eps:5.2f} {a.objective:11.7f} {b.objective:11.7f} {grid:11.7f} "
                      f"{abs(a.objective - b.objective):10.2e} {abs(grid - a.objective):11.2e} "
                      f"{ta:7.3f} {tb:6.3f} {tg:6.2f}")


if __name__ == "__main__":
    main()
