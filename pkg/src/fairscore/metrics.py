"""Utility and group-fairness metrics for scores and thresholded predictions.

Gaps are max-over-groups absolute deviations of a group (or group-and-label
cell) mean from the corresponding overall mean.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .core_transform import binary_cross_entropy


class EmptyCellWarning(UserWarning):
    """A (group, label) cell had no samples and was left out of a gap."""


def _pair(scores, other):
    s = np.asarray(scores, dtype=float).reshape(-1)
    o = np.asarray(other).reshape(-1)
    if s.shape != o.shape:
        raise ValueError("inputs differ in length")
    if s.size == 0:
        raise ValueError("empty input")
    return s, o


def brier_score(scores, labels) -> float:
    s, y = _pair(scores, labels)
    return float(np.mean((s - y) ** 2))


def auc(scores, labels) -> float:
    """Mann-Whitney estimate of P(score_pos > score_neg), ties counting 1/2."""
    s, y = _pair(scores, labels)
    pos = y == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("auc needs both classes present")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s, y = _pair(scores, labels)
    return float(np.mean((s > threshold).astype(int) == y))


def group_means(scores, groups) -> dict:
    s, g = _pair(scores, groups)
    return {k: float(s[g == k].mean()) for k in np.unique(g).tolist()}


def msp_gap(scores, groups) -> float:
    s, g = _pair(scores, groups)
    overall = s.mean()
    return float(max(abs(m - overall) for m in group_means(s, g).values()))


def _cells(scores, groups, labels, all_groups=None):
    s, g = _pair(scores, groups)
    _, y = _pair(scores, labels)
    all_groups = np.unique(g).tolist() if all_groups is None else list(all_groups)
    out, empty = {}, []
    for v in (0, 1):
        in_y = y == v
        if not in_y.any():
            continue
        stratum = s[in_y].mean()
        for k in all_groups:
            m = in_y & (g == k)
            if m.any():
                out[(k, v)] = (float(s[m].mean()), float(stratum))
            else:
                empty.append((k, v))
    return out, empty


def geo_gap(scores, groups, labels, all_groups=None) -> float:
    """Largest |E[s | A=a, Y=y] - E[s | Y=y]|; empty cells are skipped with a warning."""
    cells, empty = _cells(scores, groups, labels, all_groups)
    if empty:
        warnings.warn(f"empty (group, label) cells skipped: {empty}", EmptyCellWarning, stacklevel=2)
    if not cells:
        raise ValueError("no non-empty (group, label) cell")
    return float(max(abs(m - s) for m, s in cells.values()))


def sp_gap(binary_preds, groups) -> float:
    return msp_gap(np.asarray(binary_preds, dtype=float), groups)


def eo_gap(binary_preds, groups, labels, all_groups=None) -> float:
    return geo_gap(np.asarray(binary_preds, dtype=float), groups, labels, all_groups)


def cross_entropy_utility(original_scores, transformed_scores) -> float:
    """Mean ``H_b(r_i, r'_i)``."""
    r, q = _pair(original_scores, transformed_scores)
    return float(np.mean(binary_cross_entropy(r, q)))


@dataclass
class MetricsReport:
    brier: float
    auc: float
    accuracy: float
    threshold: float
    cross_entropy: Optional[float]
    msp_gap: float
    geo_gap: float
    sp_gap: float
    eo_gap: float
    n: int
    per_group: dict = field(default_factory=dict)
    empty_cells: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(scores, labels, groups, threshold: float = 0.5, original_scores=None,
             group_names=None) -> MetricsReport:
    """All metrics in one report; ``groups`` are integer codes."""
    s, y = _pair(scores, labels)
    _, g = _pair(scores, groups)
    y = y.astype(int)
    g = g.astype(int)
    codes = sorted(np.unique(g).tolist()) if group_names is None else list(range(len(group_names)))
    names = {k: str(k if group_names is None else group_names[k]) for k in codes}
    preds = (s > threshold).astype(float)
    cells, empty = _cells(s, g, y, codes)
    _, empty_b = _cells(preds, g, y, codes)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmptyCellWarning)
        geo = geo_gap(s, g, y, codes)
        eo = eo_gap(preds, g, y, codes)
    per_group = {}
    for k in codes:
        m = g == k
        if not m.any():
            continue
        entry = {"n": int(m.sum()), "mean_score": float(s[m].mean()),
                 "positive_rate": float(preds[m].mean()),
                 "base_rate": float(y[m].mean())}
        for v, key in ((0, "mean_score_y0"), (1, "mean_score_y1")):
            if (k, v) in cells:
                entry[key] = cells[(k, v)][0]
        per_group[names[k]] = entry
    both = (y == 1).any() and (y == 0).any()
    return MetricsReport(
        brier=brier_score(s, y),
        auc=auc(s, y) if both else float("nan"),
        accuracy=accuracy(s, y, threshold),
        threshold=float(threshold),
        cross_entropy=None if original_scores is None else cross_entropy_utility(original_scores, s),
        msp_gap=msp_gap(s, g),
        geo_gap=geo,
        sp_gap=sp_gap(preds, g),
        eo_gap=eo,
        n=int(s.size),
        per_group=per_group,
        empty_cells=[[names[k], v] for k, v in empty],
    )
