"""Constraint features ``f(x)`` such that ``mu(x) = lambda @ f(x)``.

Mean score parity (MSP) uses one column per group, generalized equalized
odds (GEO) one column per (group, label) pair with all ``y=0`` columns first.
General linear constraints take caller-supplied event posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset

MSP = "msp"
GEO = "geo"
GENERAL = "general"
KINDS = (MSP, GEO, GENERAL)

DEFAULT_DELTA = 1e-3


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ConstraintSpec:
    """Fairness criterion and its tolerance.

    For ``kind == "general"`` the constraints are
    ``sum_j b[l, j] E[r' | E_lj] <= c[l]`` with per-sample event posteriors
    ``posteriors[i, l, j] = Pr(E_lj | x_i)`` and ``marginals[l, j] = Pr(E_lj)``.
    """

    kind: str = MSP
    epsilon: float = 0.05
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    posteriors: Optional[np.ndarray] = None
    marginals: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind != GENERAL and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.kind == GENERAL:
            if self.b is None or self.c is None:
                raise ValueError("general constraints need coefficients b and bounds c")
            b = np.atleast_2d(np.asarray(self.b, dtype=float))
            c = np.atleast_1d(np.asarray(self.c, dtype=float))
            if c.shape != (b.shape[0],):
                raise ValueError("b has %d rows but c has shape %s" % (b.shape[0], c.shape))
            object.__setattr__(self, "b", b)
            object.__setattr__(self, "c", c)
            if self.posteriors is not None:
                post = np.asarray(self.posteriors, dtype=float)
                marg = np.asarray(self.marginals, dtype=float)
                if post.ndim != 3 or post.shape[1:] != b.shape or marg.shape != b.shape:
                    raise ValueError("posteriors must be (n, L, J) and marginals (L, J) matching b")
                if post.min() < 0 or post.max() > 1:
                    raise ValueError("event posteriors must lie in [0, 1]")
                if np.any(marg <= 0) or np.any(marg > 1):
                    raise ValueError("event marginals must lie in (0, 1]")
                object.__setattr__(self, "posteriors", post)
                object.__setattr__(self, "marginals", marg)


@dataclass(frozen=True)
class ProbabilityEstimates:
    """Truncated empirical ``p_A``, ``p_Y`` and ``p_{A|Y}``.

    ``p_A_given_Y[a, y]`` is ``p(A=a | Y=y)``; each distribution sums to one
    and every entry is at least ``delta``.
    """

    p_A: np.ndarray
    p_Y: np.ndarray
    p_A_given_Y: np.ndarray
    delta: float

    @property
    def n_groups(self) -> int:
        return self.p_A.shape[0]


@dataclass(frozen=True)
class ConstraintFeatures:
    """Rows ``f(x_i)`` with column labels.

    ``base`` is the matrix with ``mu = base @ M lambda`` used by the
    alternative ADMM decomposition (presets only). General constraints keep
    ``lambda >= 0`` with linear cost ``costs @ lambda``.
    """

    matrix: np.ndarray
    labels: tuple
    kind: str
    nonnegative: bool = False
    costs: Optional[np.ndarray] = None
    base: Optional[np.ndarray] = None

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2 or m.shape[1] != len(self.labels):
            raise ValueError("matrix columns must match labels")
        if not np.all(np.isfinite(m)):
            raise ValueError("constraint features must be finite")
        object.__setattr__(self, "matrix", m)
        if self.costs is not None:
            object.__setattr__(self, "costs", _frozen(self.costs))
        if self.base is not None:
            object.__setattr__(self, "base", _frozen(self.base))

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def floor_renormalize(p, delta: float) -> np.ndarray:
    """Raise entries below ``delta`` to ``delta`` and rescale the rest to sum to 1.

    Entries that were floored stay exactly at ``delta``.
    """
    raw = np.asarray(p, dtype=float)
    k = raw.shape[0]
    if not 0 < delta < 1.0 / k:
        raise ValueError(f"delta must lie in (0, 1/{k})")
    total = raw.sum()
    raw = raw / total if total > 0 else np.full(k, 1.0 / k)
    fixed = np.zeros(k, dtype=bool)
    out = raw.copy()
    while True:
        low = (out < delta) & ~fixed
        if not low.any():
            return out
        fixed |= low
        free = 1.0 - delta * fixed.sum()
        rest = raw[~fixed].sum()
        out[fixed] = delta
        if rest > 0:
            out[~fixed] = raw[~fixed] * (free / rest)
        else:
            out[~fixed] = free / (~fixed).sum()


def estimate_marginals(dataset: Dataset, delta: float = DEFAULT_DELTA) -> ProbabilityEstimates:
    """Empirical group and label frequencies, floored at ``delta``."""
    if dataset.n == 0:
        raise ValueError("cannot estimate probabilities from an empty dataset")
    if dataset.protected is None:
        raise ValueError("protected attribute required to estimate p_A")
    k = dataset.n_groups
    a = dataset.protected
    p_a = floor_renormalize(np.bincount(a, minlength=k).astype(float), delta)
    if dataset.label is None:
        p_y = np.full(2, 0.5)
        p_ay = np.tile(p_a[:, None], (1, 2))
    else:
        y = dataset.label
        p_y = floor_renormalize(np.bincount(y, minlength=2).astype(float), delta)
        p_ay = np.empty((k, 2))
        for v in (0, 1):
            p_ay[:, v] = floor_renormalize(
                np.bincount(a[y == v], minlength=k).astype(float), delta)
    return ProbabilityEstimates(_frozen(p_a), _frozen(p_y), _frozen(p_ay), float(delta))


def estimate_marginals_unlabeled(groups, scores, n_groups: int,
                                 delta: float = DEFAULT_DELTA) -> ProbabilityEstimates:
    """Label-free estimates with ``p(y | x)`` taken to be the score.

    ``groups`` is codes (n,), posteriors ``p(a | x)`` (n, K) or posteriors
    ``p(a | x, y)`` (n, K, 2). The joint ``p(a, y | x)`` is the group term
    times ``(1 - r, r)`` and is averaged over rows.
    """
    r = np.asarray(scores, dtype=float).reshape(-1)
    if r.size == 0:
        raise ValueError("cannot estimate probabilities from an empty dataset")
    g = np.asarray(groups)
    if g.ndim == 1:
        post = np.repeat(_one_hot(g, n_groups)[:, :, None], 2, axis=2)
    elif g.ndim == 2:
        post = np.repeat(g.astype(float)[:, :, None], 2, axis=2)
    else:
        post = g.astype(float)
    if post.shape != (r.size, n_groups, 2):
        raise ValueError("groups and scores do not match")
    joint = post * np.stack([1.0 - r, r], axis=1)[:, None, :]       # (n, K, 2)
    mass = joint.sum(axis=0)                                          # (K, 2)
    p_a = floor_renormalize(mass.sum(axis=1), delta)
    p_y = floor_renormalize(mass.sum(axis=0), delta)
    p_ay = np.stack([floor_renormalize(mass[:, y], delta) for y in (0, 1)], axis=1)
    return ProbabilityEstimates(_frozen(p_a), _frozen(p_y), _frozen(p_ay), float(delta))


def _one_hot(groups, k: int) -> np.ndarray:
    g = np.asarray(groups)
    if g.dtype.kind not in "iu":
        if not np.all(np.mod(g, 1) == 0):
            raise ValueError("group ids must be integers")
        g = g.astype(int)
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ValueError(f"unknown group id; expected codes in [0, {k})")
    out = np.zeros((g.shape[0], k))
    out[np.arange(g.shape[0]), g] = 1.0
    return out


def _check_rows_sum_to_one(p, axis):
    if p.min(initial=0.0) < 0 or not np.allclose(p.sum(axis=axis), 1.0, atol=1e-6):
        raise ValueError("group posteriors must be non-negative and sum to one")


def build_features_msp(groups, est: ProbabilityEstimates) -> ConstraintFeatures:
    """``f_a(x) = p(a | x) / p_A(a) - 1``; ``groups`` is codes (n,) or posteriors (n, K)."""
    k = est.n_groups
    g = np.asarray(groups)
    if g.ndim == 1:
        post = _one_hot(g, k)
    elif g.ndim == 2:
        if g.shape[1] != k:
            raise ValueError(f"posteriors have {g.shape[1]} columns, expected {k}")
        post = g.astype(float)
        _check_rows_sum_to_one(post, axis=1)
    else:
        raise ValueError("groups must be a code vector or a posterior matrix")
    matrix = post / est.p_A - 1.0
    return ConstraintFeatures(matrix, tuple(range(k)), MSP, base=post)


def build_features_geo(scores, groups, est: ProbabilityEstimates) -> ConstraintFeatures:
    """GEO features with ``p(Y=1 | x)`` taken to be the score.

    ``groups`` is codes (n,) or posteriors ``p(a | x, y)`` of shape (n, K, 2).
    """
    k = est.n_groups
    r = np.asarray(scores, dtype=float).reshape(-1)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("scores must lie in [0, 1]")
    g = np.asarray(groups)
    if g.ndim == 1:
        post = np.repeat(_one_hot(g, k)[:, :, None], 2, axis=2)
    elif g.ndim == 3:
        if g.shape[1:] != (k, 2):
            raise ValueError(f"posteriors must have shape (n, {k}, 2)")
        post = g.astype(float)
        _check_rows_sum_to_one(post, axis=1)
    else:
        raise ValueError("groups must be a code vector or an (n, K, 2) posterior array")
    if post.shape[0] != r.shape[0]:
        raise ValueError("scores and groups differ in length")
    p_y_given_x = np.stack([1.0 - r, r], axis=1)                      # (n, 2)
    weight = p_y_given_x / est.p_Y                                     # (n, 2)
    blocks = [weight[:, [y]] * (post[:, :, y] / est.p_A_given_Y[:, y] - 1.0) for y in (0, 1)]
    base = [weight[:, [y]] * post[:, :, y] for y in (0, 1)]
    labels = tuple((a, y) for y in (0, 1) for a in range(k))
    return ConstraintFeatures(np.hstack(blocks), labels, GEO, base=np.hstack(base))


def build_features_general(spec: ConstraintSpec) -> ConstraintFeatures:
    """``f_l(x) = sum_j b[l, j] Pr(E_lj | x) / Pr(E_lj)`` with ``lambda >= 0``."""
    if spec.kind != GENERAL:
        raise ValueError("build_features_general needs a general constraint spec")
    if spec.posteriors is None or spec.marginals is None:
        raise ValueError("general constraints need event posteriors and marginals")
    matrix = np.einsum("lj,ilj->il", spec.b / spec.marginals, spec.posteriors)
    return ConstraintFeatures(matrix, tuple(range(spec.b.shape[0])), GENERAL,
                              nonnegative=True, costs=spec.c)
