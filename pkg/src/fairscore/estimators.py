"""Weighted logistic and multinomial regression fitted by IRLS.

The penalized objective is
``sum_i w_i log p(y_i | x_i) - (l2_reg / 2) ||weights||^2`` with the
intercept unpenalized and the penalty on the original feature scale.
Columns are standardized internally for conditioning and the solution is
mapped back, so the result does not depend on the standardization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .core_transform import SCORE_EPS

log = logging.getLogger(__name__)

MAX_ITER = 100
PARAM_TOL = 1e-8
JITTER = 1e-10


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    l2_reg: float = 0.0
    converged: bool = True
    n_iter: int = 0

    def to_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "intercept": float(self.intercept),
                "l2_reg": float(self.l2_reg), "converged": bool(self.converged),
                "n_iter": int(self.n_iter)}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        return cls(np.array(d["weights"], dtype=float), float(d["intercept"]),
                   float(d["l2_reg"]), bool(d.get("converged", True)), int(d.get("n_iter", 0)))


@dataclass(frozen=True)
class MultinomialModel:
    """Softmax regression; row 0 of ``coef`` and ``intercepts[0]`` are pinned at zero."""

    coef: np.ndarray          # (K, p)
    intercepts: np.ndarray    # (K,)
    l2_reg: float = 0.0
    converged: bool = True
    n_iter: int = 0

    @property
    def n_classes(self) -> int:
        return self.coef.shape[0]

    def to_dict(self) -> dict:
        return {"coef": [[float(c) for c in row] for row in self.coef],
                "intercepts": [float(b) for b in self.intercepts],
                "l2_reg": float(self.l2_reg), "converged": bool(self.converged),
                "n_iter": int(self.n_iter)}

    @classmethod
    def from_dict(cls, d: dict) -> "MultinomialModel":
        coef = np.array(d["coef"], dtype=float).reshape(len(d["intercepts"]), -1)
        return cls(coef, np.array(d["intercepts"], dtype=float), float(d["l2_reg"]),
                   bool(d.get("converged", True)), int(d.get("n_iter", 0)))


def _prepare(X, sample_weights):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("sample_weights must have one entry per row")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("sample weights must be non-negative and not all zero")
    mean = (w @ X) / w.sum()
    scale = np.sqrt((w @ (X - mean) ** 2) / w.sum())
    scale = np.where(scale > 0, scale, 1.0)
    Z = np.hstack([np.ones((n, 1)), (X - mean) / scale])
    return X, w, Z, mean, scale


def _newton(Z, loglik_grad_hess, penalty, n_params, n_blocks):
    """Maximize loglik(theta) - 0.5 theta' P theta with step halving.

    ``theta`` is (n_blocks, p+1); ``penalty`` the diagonal of P per block.
    """
    theta = np.zeros((n_blocks, n_params))
    P = np.tile(penalty, n_blocks)

    def objective(t):
        return loglik_grad_hess(t, need=False)[0] - 0.5 * float(P @ (t.ravel() ** 2))

    converged = False
    it = 0
    f = objective(theta)
    for it in range(1, MAX_ITER + 1):
        ll, grad, hess = loglik_grad_hess(theta, need=True)
        grad = grad - P * theta.ravel()
        H = hess + np.diag(P)           # negative Hessian of the objective
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.solve(H + JITTER * np.eye(H.shape[0]), grad)
        if not np.all(np.isfinite(step)):
            step = np.linalg.lstsq(H + JITTER * np.eye(H.shape[0]), grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = theta + t * step.reshape(theta.shape)
            fc = objective(cand)
            if fc >= f or t < 1e-12:
                break
            t *= 0.5
        change = np.max(np.abs(cand - theta))
        theta, f = cand, fc
        if change < PARAM_TOL:
            converged = True
            break
    return theta, converged, it


def _separated(eta, y, w) -> bool:
    """Every positively weighted row is on the right side with a saturated probability."""
    keep = w > 0
    p = expit(eta[keep])
    return bool(np.all(np.abs(y[keep] - p) < 1e-8))


def fit_logistic(X, y, sample_weights=None, l2_reg: float = 0.0) -> LogisticModel:
    """Weighted binary logistic regression by IRLS (Newton) with step halving."""
    X, w, Z, mean, scale = _prepare(X, sample_weights)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y differ in length")
    if l2_reg < 0:
        raise ValueError("l2_reg must be non-negative")
    penalty = np.concatenate([[0.0], l2_reg / scale ** 2])

    def llgh(theta, need):
        eta = Z @ theta[0]
        # log p(y|x) = y*eta - log(1+e^eta)
        ll = float(w @ (y * eta - np.logaddexp(0.0, eta)))
        if not need:
            return ll, None, None
        p = expit(eta)
        grad = Z.T @ (w * (y - p))
        hess = (Z.T * (w * p * (1 - p))) @ Z
        return ll, grad, hess

    theta, converged, it = _newton(Z, llgh, penalty, Z.shape[1], 1)
    if l2_reg == 0 and _separated(Z @ theta[0], y, w):
        # the likelihood has no finite maximizer; the iterate just saturated
        converged = False
    if not converged:
        log.warning("logistic IRLS did not converge in %d iterations "
                    "(perfect separation with l2_reg=0?)", it)
    coef = theta[0, 1:] / scale
    intercept = float(theta[0, 0] - coef @ mean)
    return LogisticModel(coef, intercept, float(l2_reg), converged, it)


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    """Positive-class probability, clamped to ``[1e-6, 1 - 1e-6]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != model.weights.shape[0]:
        raise ValueError(f"model expects {model.weights.shape[0]} features, got {X.shape[1]}")
    return np.clip(expit(X @ model.weights + model.intercept), SCORE_EPS, 1.0 - SCORE_EPS)


def fit_multinomial(X, a, n_classes=None, sample_weights=None, l2_reg: float = 0.0) -> MultinomialModel:
    """Softmax regression with class 0 as reference."""
    X, w, Z, mean, scale = _prepare(X, sample_weights)
    a = np.asarray(a).astype(int).reshape(-1)
    if a.shape[0] != X.shape[0]:
        raise ValueError("X and labels differ in length")
    k = int(a.max()) + 1 if n_classes is None else int(n_classes)
    if k < 2:
        raise ValueError("need at least two classes")
    if l2_reg < 0:
        raise ValueError("l2_reg must be non-negative")
    onehot = np.zeros((X.shape[0], k))
    onehot[np.arange(X.shape[0]), a] = 1.0
    q = Z.shape[1]
    penalty = np.concatenate([[0.0], l2_reg / scale ** 2])

    def llgh(theta, need):
        eta = np.hstack([np.zeros((Z.shape[0], 1)), Z @ theta.T])   # (n, k)
        logp = log_softmax(eta, axis=1)
        ll = float(w @ np.sum(onehot * logp, axis=1))
        if not need:
            return ll, None, None
        p = np.exp(logp)[:, 1:]
        resid = onehot[:, 1:] - p
        grad = (Z.T @ (w[:, None] * resid)).T.ravel()
        hess = np.empty((k - 1, q, k - 1, q))
        for s in range(k - 1):
            for t in range(k - 1):
                c = p[:, s] * ((s == t) - p[:, t])
                hess[s, :, t, :] = (Z.T * (w * c)) @ Z
        return ll, grad, hess.reshape((k - 1) * q, (k - 1) * q)

    theta, converged, it = _newton(Z, llgh, penalty, q, k - 1)
    if not converged:
        log.warning("multinomial IRLS did not converge in %d iterations", it)
    coef = np.zeros((k, X.shape[1]))
    intercepts = np.zeros(k)
    coef[1:] = theta[:, 1:] / scale
    intercepts[1:] = theta[:, 0] - coef[1:] @ mean
    return MultinomialModel(coef, intercepts, float(l2_reg), converged, it)


def predict_multinomial(model: MultinomialModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != model.coef.shape[1]:
        raise ValueError(f"model expects {model.coef.shape[1]} features, got {X.shape[1]}")
    return softmax(X @ model.coef.T + model.intercepts, axis=1)
