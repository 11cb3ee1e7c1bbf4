import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from fixtures import DUAL_EPSILONS, four_point, small_problem
from fairscore.constraints import (ConstraintFeatures, ConstraintSpec, build_features_general,
                                   build_features_msp)
from fairscore.core_transform import g_value, transform_score
from fairscore.dual_solver import (AdmmConfig, _mu_update, brute_force_dual, dual_objective,
                                   l1_quadratic_cd, lambda_update, mu_update, solve_dual_admm,
                                   solve_dual_admm_alt)


def single(f, r):
    return ConstraintFeatures(np.array([[f]], dtype=float), (0,), "msp")


# -- config ------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(rho=0), dict(max_iter=0), dict(tol_abs=0), dict(tol_rel=-1),
                                dict(newton_max_iter=0), dict(cd_tol=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        AdmmConfig(**kw)


# -- objective ---------------------------------------------------------------------

def test_objective_at_zero_is_negative_entropy():
    feats, r, _ = small_problem(0, n=50)
    want = np.mean(g_value(0.0, r))
    assert dual_objective(np.zeros(2), feats, r, 0.1) == pytest.approx(want, abs=1e-15)


def test_objective_all_half():
    feats, _, _ = small_problem(0, n=20)
    assert dual_objective(np.zeros(2), feats, np.full(20, 0.5), 0.1) == pytest.approx(-math.log(2))


def test_objective_single_sample():
    val = dual_objective([1.0], single(1.0, 0.5), [0.5], 0.1)
    assert val == pytest.approx(oracles.G_MU1_R05 + 0.1, abs=1e-12)


def test_objective_dimension_mismatch():
    feats, r, _ = small_problem(0, n=20)
    with pytest.raises(ValueError):
        dual_objective(np.zeros(3), feats, r, 0.1)


# -- mu update ---------------------------------------------------------------------

def test_mu_update_oracle():
    # corrected value, see notes
    assert mu_update(0.5, 0.0, 1.0, 1) == pytest.approx(oracles.MU_UPDATE_R05_A0, abs=1e-12)


def test_mu_update_quadratic_dominates():
    assert mu_update(0.3, 2.5, 1.0, int(1e9)) == pytest.approx(2.5, abs=1e-6)


def test_mu_update_bracket():
    mu = mu_update(0.5, 100.0, 1.0, 1)
    assert 100.0 < mu < 101.0


@given(st.floats(0.001, 0.999), st.floats(-50, 50), st.floats(0.01, 100), st.integers(1, 10_000))
def test_mu_update_matches_bisection(r, a, rho, n):
    got = mu_update(r, a, rho, n)
    want = oracles.mu_update_bisect(r, a, rho, n)
    assert got == pytest.approx(want, abs=1e-9 * (1 + abs(a)))
    assert a <= got <= a + 1.0 / (n * rho)


def test_mu_update_vectorized_matches_scalar():
    rng = np.random.default_rng(1)
    r = rng.random(300)
    a = rng.normal(0, 3, 300)
    vec = _mu_update(r, a, 0.7, 25)
    scalar = [mu_update(ri, ai, 0.7, 25) for ri, ai in zip(r, a)]
    assert np.allclose(vec, scalar, atol=1e-13, rtol=0)


def test_mu_update_rejects_bad_rho():
    with pytest.raises(ValueError):
        mu_update(0.5, 0.0, 0.0, 1)


# -- lambda update -----------------------------------------------------------------

def test_cd_soft_threshold_closed_form():
    assert l1_quadratic_cd([-3.0], [[1.0]], 1.0) == pytest.approx([1.0])
    assert l1_quadratic_cd([3.0], [[1.0]], 1.0) == pytest.approx([-1.0])


@given(st.floats(-1, 1))
def test_cd_inside_threshold_is_zero(v):
    assert l1_quadratic_cd([v], [[2.0]], 1.0)[0] == 0.0


def test_cd_zero_v_is_zero():
    F = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert np.all(l1_quadratic_cd(np.zeros(2), F, 0.3) == 0.0)


def test_cd_freezes_singular_coordinate():
    F = np.array([[1.0, 0.0], [0.0, 0.0]])
    x = l1_quadratic_cd(np.array([-3.0, -5.0]), F, 1.0, x0=[0.0, 7.0])
    assert x[1] == 0.0 and x[0] == pytest.approx(1.0)


@given(hnp.arrays(float, (3, 3), elements=st.floats(-2, 2)),
       hnp.arrays(float, 3, elements=st.floats(-5, 5)),
       st.floats(0.0, 2.0))
def test_cd_kkt(A, v, eps):
    F = A @ A.T + 0.1 * np.eye(3)
    x = l1_quadratic_cd(v, F, eps, tol=1e-13, max_iter=100_000)
    grad = v + 2 * F @ x
    for j in range(3):
        if x[j] != 0:
            assert grad[j] + eps * np.sign(x[j]) == pytest.approx(0.0, abs=1e-7)
        else:
            assert abs(grad[j]) <= eps + 1e-7


@given(hnp.arrays(float, (2, 2), elements=st.floats(-2, 2)),
       hnp.arrays(float, 2, elements=st.floats(-5, 5)),
       hnp.arrays(float, 2, elements=st.floats(0, 1)))
def test_cd_nonnegative_kkt(A, v, c):
    F = A @ A.T + 0.1 * np.eye(2)
    x = l1_quadratic_cd(v, F, costs=c, nonnegative=True, tol=1e-13, max_iter=100_000)
    assert np.all(x >= 0)
    grad = v + c + 2 * F @ x
    for j in range(2):
        if x[j] > 0:
            assert grad[j] == pytest.approx(0.0, abs=1e-7)
        else:
            assert grad[j] >= -1e-7


def test_lambda_update_matches_direct_cd():
    feats, r, _ = small_problem(2, n=60)
    rng = np.random.default_rng(0)
    mu, u = rng.normal(size=60), rng.normal(size=60)
    B = feats.matrix
    got = lambda_update(mu, u, feats, 0.05, 0.5)
    want = l1_quadratic_cd(-0.5 * B.T @ (mu + u), 0.25 * B.T @ B, 0.05)
    assert np.allclose(got, want)


# -- main ADMM ---------------------------------------------------------------------

def test_slack_gives_zero_lambda():
    rng = np.random.default_rng(0)
    a = np.repeat([0, 1], 100)
    r = np.tile(rng.random(100), 2)           # identical score distributions
    from fairscore.constraints import ProbabilityEstimates
    est = ProbabilityEstimates(np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                               np.full((2, 2), 0.5), 1e-3)
    sol = solve_dual_admm(build_features_msp(a, est), r, 0.1)
    assert np.abs(sol.lam).sum() <= 1e-4
    assert sol.objective == pytest.approx(np.mean(g_value(0.0, r)), abs=1e-10)


def test_four_point_matches_grid():
    feats, r, _ = four_point()
    sol = solve_dual_admm(feats, r, 0.05)
    grid = brute_force_dual(feats, r, 0.05)
    assert sol.converged
    assert sol.objective == pytest.approx(dual_objective(grid, feats, r, 0.05), abs=1e-3)


@pytest.mark.parametrize("eps", [0.8, 0.41])
def test_four_point_slack(eps):
    feats, r, _ = four_point()
    assert np.abs(solve_dual_admm(feats, r, eps).lam).sum() <= 1e-4


def test_four_point_binding_just_below_gap():
    feats, r, _ = four_point()
    assert np.abs(solve_dual_admm(feats, r, 0.39).lam).sum() > 1e-3


@pytest.mark.parametrize("kind", ["msp", "geo"])
@pytest.mark.parametrize("eps", DUAL_EPSILONS)
def test_admm_residuals_and_bound(kind, eps):
    feats, r, _ = small_problem(7, n=200, kind=kind)
    cfg = AdmmConfig()
    sol = solve_dual_admm(feats, r, eps, cfg)
    assert sol.converged
    n = feats.n
    assert sol.primal_residual <= np.sqrt(n) * cfg.tol_abs + cfg.tol_rel * np.linalg.norm(sol.mu) + 1e-12
    assert np.abs(sol.lam).sum() <= math.log(2) / eps + 1e-6
    assert np.allclose(sol.mu, feats.matrix @ sol.lam)


def test_admm_deterministic():
    feats, r, _ = small_problem(3, n=150, kind="geo")
    s1 = solve_dual_admm(feats, r, 0.02)
    s2 = solve_dual_admm(feats, r, 0.02)
    assert np.array_equal(s1.lam, s2.lam) and s1.iterations == s2.iterations


def test_admm_nonconvergence_returns_best():
    feats, r, _ = small_problem(3, n=150)
    sol = solve_dual_admm(feats, r, 0.02, AdmmConfig(max_iter=2))
    assert not sol.converged and sol.iterations == 2
    assert sol.objective <= dual_objective(np.zeros(2), feats, r, 0.02)


def test_trace_rows():
    feats, r, _ = small_problem(3, n=100)
    sol = solve_dual_admm(feats, r, 0.05, trace=True)
    assert len(sol.trace) == sol.iterations
    k, obj, pri, dua, l1 = sol.trace[-1]
    assert k == sol.iterations and pri == sol.primal_residual and l1 >= 0


def test_general_constraint_nonnegative():
    rng = np.random.default_rng(5)
    n = 120
    a = rng.integers(0, 2, n)
    r = np.clip(0.3 + 0.4 * a + rng.normal(0, 0.1, n), 0.01, 0.99)
    # E[r' | A=1] - E[r'] <= 0.02 as a single one-sided constraint
    post = np.stack([a, np.ones(n)], axis=1)[:, None, :].astype(float)
    marg = np.array([[a.mean(), 1.0]])
    spec = ConstraintSpec("general", 0.0, b=[[1.0, -1.0]], c=[0.02], posteriors=post, marginals=marg)
    feats = build_features_general(spec)
    sol = solve_dual_admm(feats, r, 0.0)
    assert sol.converged and np.all(sol.lam >= 0) and sol.lam[0] > 0
    rp = transform_score(sol.mu, r)
    assert rp[a == 1].mean() - rp.mean() <= 0.02 + 1e-3
    grid = brute_force_dual(feats, r, 0.0, grid_half_width=5.0)
    assert sol.objective == pytest.approx(dual_objective(grid, feats, r, 0.0), abs=1e-3)


# -- alternative ADMM ----------------------------------------------------------------

def test_alt_agrees_on_four_point():
    feats, r, est = four_point()
    a = solve_dual_admm(feats, r, 0.05)
    b = solve_dual_admm_alt(feats, r, 0.05, est)
    assert abs(a.objective - b.objective) <= 1e-4


@pytest.mark.parametrize("kind", ["msp", "geo"])
def test_alt_agrees_and_closes_coupling(kind):
    feats, r, est = small_problem(11, n=200, kind=kind)
    a = solve_dual_admm(feats, r, 0.05)
    b = solve_dual_admm_alt(feats, r, 0.05, est)
    assert b.converged
    assert abs(a.objective - b.objective) <= 1e-4
    assert b.primal_residual <= 1e-5


def test_alt_hessian_diagonal_for_observed_msp():
    feats, r, _ = small_problem(1, n=80)
    h = np.random.default_rng(0).random(80)
    H = (feats.base.T * h) @ feats.base
    assert np.all(H[~np.eye(2, dtype=bool)] == 0.0)


def test_alt_rejects_general():
    spec = ConstraintSpec("general", 0.0, b=[[1.0]], c=[0.0], posteriors=np.ones((3, 1, 1)),
                          marginals=[[1.0]])
    _, _, est = four_point()
    with pytest.raises(ValueError):
        solve_dual_admm_alt(build_features_general(spec), np.full(3, 0.5), 0.1, est)


# -- brute force -----------------------------------------------------------------------

def test_brute_force_feasible_returns_zero():
    feats, r, _ = four_point()
    assert np.all(brute_force_dual(feats, r, 0.8) == 0.0)


def test_brute_force_single_sample():
    # stationarity for lambda > 0: r*(lambda; 0.5) = eps  =>  lambda = 0.5/eps - 0.5/(1-eps)
    eps = 0.1
    lam = brute_force_dual(single(1.0, 0.5), np.array([0.5]), eps)
    assert lam[0] == pytest.approx(0.5 / eps - 0.5 / (1 - eps), abs=2e-3)


def test_brute_force_exhaustive_matches_coarse_to_fine():
    feats, r, _ = small_problem(4, n=40)
    fine = brute_force_dual(feats, r, 0.3, grid_half_width=1.0, grid_step=1e-2,
                            max_points_per_axis=1000)
    c2f = brute_force_dual(feats, r, 0.3, grid_half_width=1.0, grid_step=1e-2,
                           max_points_per_axis=21)
    assert dual_objective(c2f, feats, r, 0.3) == pytest.approx(dual_objective(fine, feats, r, 0.3),
                                                               abs=1e-9)


def test_brute_force_mirrored_fixture():
    rng = np.random.default_rng(8)
    s = rng.uniform(0.55, 0.95, 30)
    a = np.repeat([0, 1], 30)
    r = np.concatenate([s, 1 - s])
    from fairscore.constraints import ProbabilityEstimates
    est = ProbabilityEstimates(np.array([0.5, 0.5]), np.array([0.5, 0.5]), np.full((2, 2), 0.5), 1e-3)
    feats = build_features_msp(a, est)
    lam = brute_force_dual(feats, r, 0.05)
    mu = feats.matrix @ lam
    assert np.allclose(mu[:30], -mu[30:])
    rp = transform_score(mu, r)
    assert rp[:30].mean() == pytest.approx(1 - rp[30:].mean(), abs=1e-12)


def test_brute_force_rejects_high_dimension():
    feats = ConstraintFeatures(np.zeros((3, 4)), (0, 1, 2, 3), "geo")
    with pytest.raises(ValueError):
        brute_force_dual(feats, np.full(3, 0.5), 0.1)
