"""ADMM solvers for the empirical dual problem

    min_lambda  (1/n) sum_i g(lambda @ f(x_i); r_i) + eps * ||lambda||_1

(or ``costs @ lambda`` with ``lambda >= 0`` for general linear constraints),
plus an exhaustive grid search used as a testing oracle.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constraints import GEO, MSP, ConstraintFeatures, ProbabilityEstimates
from .core_transform import _ghess, _rstar, clamp_score, g_value

log = logging.getLogger(__name__)

FREEZE_DIAG = 1e-14


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    max_iter: int = 1000
    tol_abs: float = 1e-6
    tol_rel: float = 1e-4
    newton_max_iter: int = 50
    newton_tol: float = 1e-12
    cd_tol: float = 1e-10
    cd_max_iter: int = 10000

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        for name in ("tol_abs", "tol_rel", "newton_tol", "cd_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iter", "newton_max_iter", "cd_max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class AdmmState:
    mu: np.ndarray
    lam: np.ndarray
    scaled_dual: np.ndarray
    F: np.ndarray
    v: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class DualSolution:
    lam: np.ndarray
    mu: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, compare=False, repr=False)


def _penalty(lam, features: ConstraintFeatures, epsilon: float) -> float:
    if features.nonnegative:
        return float(features.costs @ lam)
    return float(epsilon * np.abs(lam).sum())


def dual_objective(lam, features: ConstraintFeatures, scores, epsilon: float) -> float:
    """``(1/n) sum_i g(lam @ f_i; r_i)`` plus the l1 (or linear-cost) penalty."""
    lam = np.asarray(lam, dtype=float).reshape(-1)
    r = np.asarray(scores, dtype=float).reshape(-1)
    if lam.shape[0] != features.d or r.shape[0] != features.n:
        raise ValueError("dimension mismatch between lambda, features and scores")
    mu = features.matrix @ lam
    return float(np.mean(g_value(mu, r))) + _penalty(lam, features, epsilon)


# -- mu-update ---------------------------------------------------------------

def _mu_update(r, a, rho, n, x0=None, max_iter=50, tol=1e-12):
    """Vectorized safeguarded Newton for argmin (1/n) g(mu; r) + rho/2 (mu - a)^2.

    The minimizer satisfies mu = a + r*(mu)/(n rho), so it lies in
    [a, a + 1/(n rho)]; steps leaving the current bracket are replaced by
    bisection.
    """
    r = clamp_score(r)
    lo = a.copy()
    hi = a + 1.0 / (n * rho)
    mu = (lo + hi) / 2 if x0 is None else np.clip(x0, lo, hi)
    active = np.ones(mu.shape, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            return mu
        m, ri, ai = mu[idx], r[idx], a[idx]
        grad = -_rstar(m, ri) / n + rho * (m - ai)
        # monotone derivative: shrink the bracket around the root
        pos = grad > 0
        hi[idx] = np.where(pos, m, hi[idx])
        lo[idx] = np.where(pos, lo[idx], m)
        hess = _ghess(m, ri) / n + rho
        step = grad / hess
        cand = m - step
        outside = (cand < lo[idx]) | (cand > hi[idx])
        cand = np.where(outside, 0.5 * (lo[idx] + hi[idx]), cand)
        cand = np.where(grad == 0, m, cand)
        change = np.abs(cand - m)
        mu[idx] = cand
        done = (change <= tol * (1.0 + np.abs(cand))) | (grad == 0) | (hi[idx] - lo[idx] <= tol)
        active[idx[done]] = False
    if active.any():
        # bisection fallback on whatever has not converged
        idx = np.flatnonzero(active)
        l, h = lo[idx], hi[idx]
        for _ in range(200):
            m = 0.5 * (l + h)
            grad = -_rstar(m, r[idx]) / n + rho * (m - a[idx])
            l = np.where(grad > 0, l, m)
            h = np.where(grad > 0, m, h)
            if np.all(h - l <= tol * (1.0 + np.abs(m))):
                break
        mu[idx] = 0.5 * (l + h)
    return mu


def mu_update(r_i: float, a_i: float, rho: float, n: int, config: AdmmConfig = AdmmConfig()) -> float:
    """Per-sample minimizer of ``(1/n) g(mu; r_i) + (rho/2) (mu - a_i)^2``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    out = _mu_update(np.array([float(r_i)]), np.array([float(a_i)]), rho, n,
                     max_iter=config.newton_max_iter, tol=config.newton_tol)
    return float(out[0])


# -- lambda-update -----------------------------------------------------------

def l1_quadratic_cd(v, F, epsilon=0.0, costs=None, nonnegative=False, x0=None,
                    tol=1e-10, max_iter=10000):
    """Cyclic coordinate descent for ``eps ||x||_1 + x @ v + x @ F @ x``.

    With ``nonnegative`` the l1 term is replaced by ``costs @ x`` and each
    coordinate is projected onto ``x >= 0``. Coordinates whose diagonal in F
    is below 1e-14 are frozen at zero.
    """
    v = np.asarray(v, dtype=float)
    F = np.asarray(F, dtype=float)
    d = v.shape[0]
    x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
    diag = np.diag(F).copy()
    frozen = diag < FREEZE_DIAG
    x[frozen] = 0.0
    if nonnegative:
        costs = np.zeros(d) if costs is None else np.asarray(costs, dtype=float)
        x = np.maximum(x, 0.0)
    for _ in range(max_iter):
        biggest = 0.0
        for j in range(d):
            if frozen[j]:
                continue
            # linear coefficient of x_j with the others held fixed
            b = v[j] + 2.0 * (F[j] @ x - F[j, j] * x[j])
            if nonnegative:
                new = max(0.0, -(b + costs[j]) / (2.0 * diag[j]))
            else:
                new = -np.sign(b) * max(abs(b) - epsilon, 0.0) / (2.0 * diag[j])
            biggest = max(biggest, abs(new - x[j]))
            x[j] = new
        if biggest < tol:
            break
    return x


def lambda_update(mu, scaled_dual, features: ConstraintFeatures, epsilon: float, rho: float,
                  F=None, x0=None, config: AdmmConfig = AdmmConfig()):
    """Solve the lambda step as ``min eps||l||_1 + l @ v + l @ F @ l``."""
    B = features.matrix
    if F is None:
        F = 0.5 * rho * (B.T @ B)
    v = -rho * (B.T @ (np.asarray(mu) + np.asarray(scaled_dual)))
    return l1_quadratic_cd(v, F, epsilon, features.costs, features.nonnegative, x0,
                           config.cd_tol, config.cd_max_iter)


# -- ADMM over (mu, lambda) ---------------------------------------------------

def _check(features: ConstraintFeatures, scores, epsilon):
    r = np.asarray(scores, dtype=float).reshape(-1)
    if features.n < 1 or features.d < 1:
        raise ValueError("need at least one sample and one dual coordinate")
    if r.shape[0] != features.n:
        raise ValueError("scores and features differ in length")
    if not features.nonnegative and not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return r


class _Best:
    """Tracks the lowest-objective lambda seen; lambda = 0 is the first candidate."""

    def __init__(self, features, r, epsilon):
        self.features, self.r, self.epsilon = features, r, epsilon
        self.lam = np.zeros(features.d)
        self.obj = dual_objective(self.lam, features, r, epsilon)

    def offer(self, lam):
        obj = dual_objective(lam, self.features, self.r, self.epsilon)
        if obj < self.obj:
            self.lam, self.obj = lam.copy(), obj
        return obj


def _finish(best, features, r, epsilon, lam, converged, pri, dua, k, trace):
    # a converged iterate is returned as is; otherwise the best one seen
    if not converged or dual_objective(lam, features, r, epsilon) > best.obj:
        lam = best.lam
    obj = dual_objective(lam, features, r, epsilon)
    return DualSolution(lam=lam, mu=features.matrix @ lam, objective=obj,
                        primal_residual=pri, dual_residual=dua, iterations=k,
                        converged=converged, trace=trace)


def solve_dual_admm(features: ConstraintFeatures, scores, epsilon: float,
                    config: AdmmConfig = AdmmConfig(), trace: bool = False) -> DualSolution:
    """Scaled ADMM splitting per-sample ``mu`` from the dual variables ``lambda``.

    ``config.rho`` is the penalty for the objective multiplied by n, i.e.
    each mu step minimizes ``g(mu; r_i) + (rho/2)(mu - a_i)^2``; in the 1/n
    form used by :func:`mu_update` this is a penalty of ``rho / n``. Stops
    on the usual primal/dual residual test with absolute and relative
    tolerances. Never raises on non-convergence: the best iterate is
    returned with ``converged=False``.
    """
    r = _check(features, scores, epsilon)
    B = features.matrix
    n, d = B.shape
    rho = config.rho / n
    state = AdmmState(mu=np.zeros(n), lam=np.zeros(d), scaled_dual=np.zeros(n),
                      F=0.5 * rho * (B.T @ B), v=np.zeros(d))
    best = _Best(features, r, epsilon)
    rows = []
    pri = dua = np.inf
    converged = False
    sqrt_n = np.sqrt(n)
    for k in range(1, config.max_iter + 1):
        state.iteration = k
        a = B @ state.lam - state.scaled_dual
        state.mu = _mu_update(r, a, rho, n, x0=state.mu,
                              max_iter=config.newton_max_iter, tol=config.newton_tol)
        state.v = -rho * (B.T @ (state.mu + state.scaled_dual))
        lam_new = l1_quadratic_cd(state.v, state.F, epsilon, features.costs,
                                  features.nonnegative, state.lam, config.cd_tol,
                                  config.cd_max_iter)
        b_lam = B @ lam_new
        resid = state.mu - b_lam
        state.scaled_dual = state.scaled_dual + resid
        pri = float(np.linalg.norm(resid))
        dua = float(config.rho * np.linalg.norm(B @ (lam_new - state.lam)))
        state.lam = lam_new
        obj = best.offer(lam_new)
        if trace:
            rows.append((k, obj, pri, dua, float(np.abs(lam_new).sum())))
        eps_pri = sqrt_n * config.tol_abs + config.tol_rel * max(
            np.linalg.norm(state.mu), np.linalg.norm(b_lam))
        eps_dua = sqrt_n * config.tol_abs + config.tol_rel * config.rho * np.linalg.norm(
            state.scaled_dual)
        if pri <= eps_pri and dua <= eps_dua:
            converged = True
            break
    if not converged:
        log.warning("ADMM stopped after %d iterations (primal %.3g, dual %.3g)", k, pri, dua)
    return _finish(best, features, r, epsilon, state.lam, converged, pri, dua, k, rows)


# -- alternative decomposition over (lambda_tilde, lambda) ---------------------

def coupling_matrix(features: ConstraintFeatures, est: ProbabilityEstimates) -> np.ndarray:
    """``M`` with ``lambda_tilde = M @ lambda`` and ``features.matrix = base @ M``.

    Block-diagonal in ``y`` for GEO, each block ``diag(1/p) - 1 1^T``.
    """
    k = est.n_groups
    if features.kind == MSP:
        probs = [est.p_A]
    elif features.kind == GEO:
        probs = [est.p_A_given_Y[:, 0], est.p_A_given_Y[:, 1]]
    else:
        raise ValueError("the alternative decomposition needs an MSP or GEO preset")
    M = np.zeros((k * len(probs),) * 2)
    for blk, p in enumerate(probs):
        s = slice(blk * k, (blk + 1) * k)
        M[s, s] = np.diag(1.0 / p) - 1.0
    return M


def _tilde_newton(Bt, r, n, rho, target, x0, max_iter, tol):
    """Damped Newton for min (1/n) sum g(Bt x; r) + rho/2 ||x - target||^2."""
    x = x0.copy()

    def obj(z):
        return float(np.mean(g_value(Bt @ z, r)) + 0.5 * rho * np.sum((z - target) ** 2))

    f = obj(x)
    eye = np.eye(x.shape[0])
    for _ in range(max_iter):
        mu = Bt @ x
        grad = -(Bt.T @ _rstar(mu, r)) / n + rho * (x - target)
        hess = (Bt.T * _ghess(mu, r)) @ Bt / n + rho * eye
        step = np.linalg.solve(hess, grad)
        decrement = float(grad @ step)
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(x))) or decrement <= 1e-15 * (1.0 + abs(f)):
            # further decrease is below what the objective can resolve
            x = x - step
            break
        t = 1.0
        while True:
            cand = x - t * step
            fc = obj(cand)
            if fc <= f - 1e-4 * t * decrement or t < 1e-10:
                break
            t *= 0.5
        x, f = cand, fc
    return x


def solve_dual_admm_alt(features: ConstraintFeatures, scores, epsilon: float,
                        est: ProbabilityEstimates, config: AdmmConfig = AdmmConfig(),
                        trace: bool = False) -> DualSolution:
    """ADMM on ``lambda_tilde = M lambda`` with ``mu = base @ lambda_tilde``.

    The lambda_tilde step is a d-dimensional Newton solve; the lambda step is
    an l1-penalized quadratic (separable over the y blocks for GEO). Returns
    the solution in the same lambda coordinates as :func:`solve_dual_admm`.
    """
    r = _check(features, scores, epsilon)
    if features.base is None:
        raise ValueError("features carry no base matrix; build them with a preset builder")
    M = coupling_matrix(features, est)
    Bt = features.base
    n, d = Bt.shape
    rho = config.rho
    rc = clamp_score(r)
    lam = np.zeros(d)
    lam_t = np.zeros(d)
    u = np.zeros(d)
    F = 0.5 * rho * (M.T @ M)
    best = _Best(features, r, epsilon)
    rows = []
    pri = dua = np.inf
    converged = False
    sqrt_d = np.sqrt(d)
    for k in range(1, config.max_iter + 1):
        lam_t = _tilde_newton(Bt, rc, n, rho, M @ lam - u, lam_t,
                              config.newton_max_iter, config.newton_tol)
        v = -rho * (M.T @ (lam_t + u))
        lam_new = l1_quadratic_cd(v, F, epsilon, x0=lam, tol=config.cd_tol,
                                  max_iter=config.cd_max_iter)
        m_lam = M @ lam_new
        resid = lam_t - m_lam
        u = u + resid
        pri = float(np.linalg.norm(resid))
        dua = float(rho * np.linalg.norm(M @ (lam_new - lam)))
        lam = lam_new
        obj = best.offer(lam)
        if trace:
            rows.append((k, obj, pri, dua, float(np.abs(lam).sum())))
        eps_pri = sqrt_d * config.tol_abs + config.tol_rel * max(
            np.linalg.norm(lam_t), np.linalg.norm(m_lam))
        eps_dua = sqrt_d * config.tol_abs + config.tol_rel * rho * np.linalg.norm(u)
        if pri <= eps_pri and dua <= eps_dua:
            converged = True
            break
    if not converged:
        log.warning("alternative ADMM stopped after %d iterations (primal %.3g, dual %.3g)",
                    k, pri, dua)
    sol = _finish(best, features, r, epsilon, lam, converged, pri, dua, k, rows)
    return sol


# -- oracle --------------------------------------------------------------------

GRID_EVAL_BUDGET = 4_000_000


def _grid_min(features, r, epsilon, center, half_width, step, lo, hi):
    """Exhaustive minimum over the lattice ``center + step * Z^d`` within a box."""
    d = features.d
    axes = []
    for j in range(d):
        a = np.ceil((max(center[j] - half_width, lo) - center[j]) / step - 1e-9)
        b = np.floor((min(center[j] + half_width, hi) - center[j]) / step + 1e-9)
        axes.append(center[j] + step * np.arange(a, b + 1))
    best_val, best_pt = np.inf, None
    chunk = max(1, GRID_EVAL_BUDGET // max(features.n, 1))
    pts_iter = itertools.product(*axes)
    while True:
        block = list(itertools.islice(pts_iter, chunk))
        if not block:
            break
        P = np.array(block)                                   # (m, d)
        mu = features.matrix @ P.T                            # (n, m)
        vals = np.mean(g_value(mu, r[:, None]), axis=0)
        if features.nonnegative:
            vals = vals + P @ features.costs
        else:
            vals = vals + epsilon * np.abs(P).sum(axis=1)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_pt = float(vals[j]), P[j]
    return best_pt, best_val


def brute_force_dual(features: ConstraintFeatures, scores, epsilon: float,
                     grid_half_width: Optional[float] = None, grid_step: float = 2e-3,
                     max_points_per_axis: int = 201) -> np.ndarray:
    """Grid minimization of :func:`dual_objective` over ``[-w, w]^d`` (d <= 3).

    ``w`` defaults to ``log 2 / eps``. When the full lattice at
    ``grid_step`` has more than ``max_points_per_axis`` points per axis it is
    searched coarse-to-fine: each level scans a lattice of at most that many
    points per axis, and the next level rescans a box of four coarse cells
    around the incumbent at a step ten times finer, ending on the target
    step. The objective is convex, so the refinement keeps the global basin.
    """
    r = _check(features, scores, epsilon)
    if features.d > 3:
        raise ValueError("brute_force_dual supports at most 3 dual coordinates")
    if grid_half_width is None:
        grid_half_width = np.log(2.0) / epsilon
    w = float(grid_half_width)
    lo = 0.0 if features.nonnegative else -w
    steps = [grid_step]
    while (2 * w) / steps[-1] + 1 > max_points_per_axis:
        steps.append(steps[-1] * 10.0)
    steps.reverse()
    center = np.zeros(features.d)
    half = w
    for s in steps:
        center, _ = _grid_min(features, r, epsilon, center, half, s, lo, w)
        half = 2.0 * s
    return center
