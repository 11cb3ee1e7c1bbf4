"""Seeded two-group synthetic fixtures.

Each row has a group ``a`` and a label drawn with the group's base rate.
Feature ``x0`` is label signal, ``x0 ~ N(signal * (2y - 1), 1)``; feature
``x1 ~ N(proxy * (2a - 1), 1)`` leaks group membership. The ``score`` column
is the Bayes posterior ``p(y=1 | x0, a)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import Dataset, fmt, write_csv

HEADER = ("x0", "x1", "group", "label", "score")


@dataclass(frozen=True)
class SynthConfig:
    n: int = 5000
    group_fraction: float = 0.5     # share of rows in group 1
    base_rates: tuple = (0.7, 0.3)   # p(y=1 | a) for a = 0, 1
    signal: float = 1.5
    proxy: float = 1.0
    seed: int = 0
    test_fraction: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.group_fraction < 1:
            raise ValueError("group_fraction must lie in (0, 1)")
        if len(self.base_rates) != 2 or not all(0 < p < 1 for p in self.base_rates):
            raise ValueError("base_rates needs two values in (0, 1)")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")


def generate_rows(config: SynthConfig) -> np.ndarray:
    """``(n, 5)`` array with columns x0, x1, group, label, score."""
    rng = np.random.default_rng(config.seed)
    n = config.n
    a = (rng.random(n) < config.group_fraction).astype(int)
    rates = np.asarray(config.base_rates, dtype=float)[a]
    y = (rng.random(n) < rates).astype(int)
    x0 = config.signal * (2 * y - 1) + rng.standard_normal(n)
    x1 = config.proxy * (2 * a - 1) + rng.standard_normal(n)
    score = expit(logit(rates) + 2.0 * config.signal * x0)
    return np.column_stack([x0, x1, a, y, score])


def to_dataset(rows: np.ndarray, with_scores: bool = False) -> Dataset:
    return Dataset(
        features=rows[:, :2],
        protected=rows[:, 2].astype(int),
        label=rows[:, 3].astype(int),
        base_scores=rows[:, 4] if with_scores else None,
        feature_names=HEADER[:2],
    )


def split(rows: np.ndarray, test_fraction: float):
    n_test = int(round(test_fraction * rows.shape[0]))
    return rows[: rows.shape[0] - n_test], rows[rows.shape[0] - n_test:]


def generate(config: SynthConfig, with_scores: bool = False):
    """``(train, test)`` datasets; ``test`` is ``None`` when ``test_fraction`` is 0."""
    train, test = split(generate_rows(config), config.test_fraction)
    return to_dataset(train, with_scores), (to_dataset(test, with_scores) if test.size else None)


def write_rows(path, rows: np.ndarray, with_scores: bool = False) -> None:
    """CSV with x0, x1, group, label and, if asked, the Bayes ``score`` column."""
    k = 5 if with_scores else 4
    write_csv(path, HEADER[:k], ([fmt(r[0]), fmt(r[1]), str(int(r[2])), str(int(r[3])), fmt(r[4])][:k]
                                 for r in rows))
