"""Seeded problem instances shared by the unit and acceptance tests."""

import numpy as np

from fairscore.constraints import (ConstraintSpec, build_features_geo, build_features_msp,
                                   estimate_marginals)
from fairscore.data import Dataset
from fairscore.synth import SynthConfig, generate

DUAL_SEEDS = (0, 1, 2, 3, 4, 5)
DUAL_EPSILONS = (0.02, 0.05, 0.1)

# criterion 6/7/10 fixture; see the README for the generator settings
BIASED = SynthConfig(n=5000, group_fraction=0.5, base_rates=(0.7, 0.3), signal=1.5,
                     proxy=1.0, seed=0)


def small_problem(seed, n=200, kind="msp", shift=1.0):
    """Two groups with shifted score distributions; returns (features, scores, est)."""
    rng = np.random.default_rng(seed)
    a = (rng.random(n) < 0.4 + 0.2 * rng.random()).astype(int)
    logits = rng.normal(0.0, 1.5, n) + shift * (1 - 2 * a)
    r = 1.0 / (1.0 + np.exp(-logits))
    y = (rng.random(n) < r).astype(int)
    data = Dataset(features=np.zeros((n, 0)), protected=a, label=y, base_scores=r)
    est = estimate_marginals(data)
    if kind == "msp":
        feats = build_features_msp(a, est)
    else:
        feats = build_features_geo(r, a, est)
    return feats, r, est


def four_point():
    """Scores (0.9, 0.9) in group 0 and (0.1, 0.1) in group 1."""
    a = np.array([0, 0, 1, 1])
    r = np.array([0.9, 0.9, 0.1, 0.1])
    data = Dataset(features=np.zeros((4, 0)), protected=a, label=np.array([1, 1, 0, 0]))
    est = estimate_marginals(data)
    return build_features_msp(a, est), r, est


def biased_train():
    return generate(BIASED)[0]


def spec(kind, eps):
    return ConstraintSpec(kind, eps)
