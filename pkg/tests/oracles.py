"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical kernels: transformed scores come
from bisection on the stationarity condition, cross-entropy from its textbook
formula, and logistic fits from plain gradient ascent.
"""

import math

import numpy as np

# frozen oracle values (bisection to machine precision, see rstar_bisect)
RSTAR_MU1_R05 = 0.29289321881345254        # (2 - sqrt 2) / 2
RSTAR_MUM1_R05 = 0.7071067811865476
G_MU1_R05 = -1.0801536026031966
GHESS_MU1_R05 = 0.14644660940672627        # (2 - sqrt 2) / 4
BCE_HALF_RSTAR = 0.7872603837897443        # H_b(0.5, (2 - sqrt 2)/2)
MU_UPDATE_R05_A0 = 0.4030317167626848      # root of mu = r*(mu; 0.5)


def stationarity(q, mu, r):
    return r / q - (1 - r) / (1 - q) - mu


def rstar_bisect(mu, r, iters=200):
    """r* from bisection on r/q - (1-r)/(1-q) = mu (decreasing in q)."""
    if mu == 0:
        return r
    lo, hi = 1e-300, 1 - 1e-16
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if stationarity(mid, mu, r) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-17:
            break
    return 0.5 * (lo + hi)


def bce(p, q):
    out = 0.0
    if p > 0:
        out -= p * math.log(q)
    if p < 1:
        out -= (1 - p) * math.log(1 - q)
    return out


def g_oracle(mu, r):
    q = rstar_bisect(mu, r)
    return -bce(r, q) - mu * q


def mu_update_bisect(r, a, rho, n):
    """Root of -(1/n) r*(mu; r) + rho (mu - a) on [a, a + 1/(n rho)]."""
    lo, hi = a, a + 1.0 / (n * rho)
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if -rstar_bisect(mid, r) / n + rho * (mid - a) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def logistic_gd(X, y, w=None, l2=0.0, tol=1e-11, max_iter=2_000_000):
    """Gradient ascent on the weighted penalized log-likelihood.

    Step 1/L with L the curvature bound of the objective; runs until the
    gradient norm is below ``tol``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    w = np.ones(n) if w is None else np.asarray(w, dtype=float)
    Z = np.hstack([np.ones((n, 1)), X])
    P = np.diag([0.0] + [l2] * p)
    L = 0.25 * np.linalg.eigvalsh((Z.T * w) @ Z).max() + l2
    theta = np.zeros(p + 1)
    for _ in range(max_iter):
        prob = 1.0 / (1.0 + np.exp(-(Z @ theta)))
        grad = Z.T @ (w * (y - prob)) - P @ theta
        if np.linalg.norm(grad) < tol:
            break
        theta = theta + grad / L
    return theta[1:], theta[0]


def auc_pairs(scores, labels):
    """O(n^2) count of concordant pairs, ties 1/2."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for a in pos:
        for b in neg:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(pos) * len(neg))
