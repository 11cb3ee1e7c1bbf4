"""Scalar calculus of the fair score transform.

Every function accepts scalars or numpy arrays and broadcasts elementwise.
Scores are clamped to ``[SCORE_EPS, 1 - SCORE_EPS]`` before any logarithm
or transform is evaluated.
"""

from __future__ import annotations

import numpy as np

SCORE_EPS = 1e-6
HESS_SWITCH = 1e-6


def clamp_score(r):
    return np.clip(r, SCORE_EPS, 1.0 - SCORE_EPS)


def _check_inputs(mu, r):
    mu = np.asarray(mu, dtype=float)
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ValueError("multiplier must be finite")
    if np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 1.0):
        raise ValueError("score must lie in [0, 1]")
    return mu, clamp_score(r)


def _as_output(x):
    return float(x) if np.ndim(x) == 0 else x


def binary_cross_entropy(p, q):
    """Cross-entropy ``-p log q - (1-p) log(1-q)`` in nats, with q clamped."""
    p = np.asarray(p, dtype=float)
    q = clamp_score(np.asarray(q, dtype=float))
    out = -p * np.log(q) - (1.0 - p) * np.log1p(-q)
    return _as_output(out)


def _discriminant(mu, r):
    # (1+mu)^2 - 4 r mu, written as a sum of non-negative terms
    return (mu + 1.0 - 2.0 * r) ** 2 + 4.0 * r * (1.0 - r)


def _rstar(mu, r):
    sqrt_d = np.sqrt(_discriminant(mu, r))
    s = 1.0 + mu
    with np.errstate(divide="ignore", invalid="ignore"):
        # conjugate form is cancellation-free for 1+mu >= 0, the direct
        # quadratic root for 1+mu < 0 (mu is then nonzero)
        conj = 2.0 * r / (s + sqrt_d)
        direct = (s - sqrt_d) / (2.0 * mu)
    out = np.where(s >= 0.0, conj, direct)
    return np.clip(out, 0.0, 1.0)


def transform_score(mu, r):
    """Optimal fairness-adjusted score for multiplier ``mu`` and score ``r``.

    Solves ``r/q - (1-r)/(1-q) = mu`` for ``q`` in ``[0, 1]``. Equals ``r`` at
    ``mu == 0``, decreases in ``mu`` and increases in ``r``.
    """
    mu, r = _check_inputs(mu, r)
    return _as_output(_rstar(mu, r))


def g_value(mu, r):
    """Dual integrand ``-H_b(r, r*) - mu * r*``; convex in ``mu``."""
    mu, r = _check_inputs(mu, r)
    q = _rstar(mu, r)
    return _as_output(-binary_cross_entropy(r, q) - mu * q)


def g_grad(mu, r):
    mu, r = _check_inputs(mu, r)
    return _as_output(-_rstar(mu, r))


def _ghess(mu, r):
    sqrt_d = np.sqrt(_discriminant(mu, r))
    x = 1.0 + (1.0 - 2.0 * r) * mu
    with np.errstate(divide="ignore", invalid="ignore"):
        # (1 - x/sqrt_d) / (2 mu^2) == 2 r (1-r) / (sqrt_d (sqrt_d + x)),
        # using sqrt_d^2 - x^2 = 4 r (1-r) mu^2; pick the form without
        # cancellation according to the sign of x
        rational = 2.0 * r * (1.0 - r) / (sqrt_d * (sqrt_d + x))
        direct = (1.0 - x / sqrt_d) / (2.0 * mu * mu)
    out = np.where(x >= 0.0, rational, direct)
    out = np.where(np.abs(mu) < HESS_SWITCH, r * (1.0 - r), out)
    return np.maximum(out, 0.0)


def g_hess(mu, r):
    """Second derivative of ``g`` in ``mu``, i.e. ``-d r*/d mu >= 0``."""
    mu, r = _check_inputs(mu, r)
    return _as_output(_ghess(mu, r))
