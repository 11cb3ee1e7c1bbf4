"""Fairness/utility tradeoff over epsilon on a synthetic train/test split.

    python3 scripts/epsilon_sweep.py --n 8000 --constraint geo
"""

import argparse
import time

import numpy as np

from fairscore import metrics, pipeline
from fairscore.constraints import ConstraintSpec
from fairscore.synth import SynthConfig, generate

DEFAULT_EPSILONS = (0.01, 0.02, 0.05, 0.1, 0.2)


def sweep(train, test, kind, epsilons, mode="post"):
    rows = []
    for eps in epsilons:
        t = time.perf_counter()
        model = pipeline.fit(train, ConstraintSpec(kind, eps), mode=mode)
        secs = time.perf_counter() - t
        r, _, rp = pipeline.transform_details(model, test)
        rows.append({
            "epsilon": eps,
            "l1": float(np.abs(model.lam).sum()),
            "iters": model.solution["iterations"],
            "msp": metrics.msp_gap(rp, test.protected),
            "geo": metrics.geo_gap(rp, test.protected, test.label),
            "auc": metrics.auc(rp, test.label),
            "brier": metrics.brier_score(rp, test.label),
            "ce": metrics.cross_entropy_utility(r, rp),
            "secs": secs,
        })
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=8000)
    ap.add_argument("--signal", type=float, default=1.5)
    ap.add_argument("--proxy", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--constraint", choices=("msp", "geo"), default="msp")
    ap.add_argument("--epsilons", type=float, nargs="+", default=DEFAULT_EPSILONS)
    args = ap.parse_args()

    cfg = SynthConfig(n=args.n, signal=args.signal, proxy=args.proxy, seed=args.seed, test_fraction=0.5)
    train, test = generate(cfg)
    base = pipeline.fit(train, ConstraintSpec(args.constraint, 1.0))
    r = pipeline.original_scores(base, test)
    print(f"original  msp {metrics.msp_gap(r, test.protected):.4f}  "
          f"geo {metrics.geo_gap(r, test.protected, test.label):.4f}  "
          f"auc {metrics.auc(r, test.label):.4f}  brier {metrics.brier_score(r, test.label):.4f}")
    print(f"{'eps':>6} {'|lam|1':>8} {'iters':>6} {'msp':>7} {'geo':>7} {'auc':>7} {'brier':>7} {'CE':>8} {'fit s':>6}")
    for row in sweep(train, test, args.constraint, args.epsilons):
        print(f"{row['epsilon']:6.3f} {row['l1']:8.3f} {row['iters']:6d} {row['msp']:7.4f} {row['geo']:7.4f} "
              f"{row['auc']:7.4f} {row['brier']:7.4f} {row['ce']:8.5f} {row['secs']:6.2f}")


if __name__ == "__main__":
    main()
