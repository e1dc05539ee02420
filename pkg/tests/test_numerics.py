import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from hetiv import (
    FitOptions,
    LinkFunction,
    fit_binary_mle,
    fit_ols,
    fit_weighted_binary,
    link_eval,
    logistic,
    solve_spd,
)
from hetiv.errors import (
    EmptySubsample,
    IllConditioned,
    NoConvergence,
    NotPositiveDefinite,
    RankDeficient,
    Separation,
)


def test_logistic_symmetry_point():
    assert logistic(0.0) == 0.5


def test_logistic_complement():
    assert abs(logistic(3.7) + logistic(-3.7) - 1.0) <= 1e-15


def test_logistic_matches_high_precision():
    mpmath.mp.dps = 50
    ref = mpmath.e**2 / (1 + mpmath.e**2)
    assert abs(logistic(2.0) - float(ref)) <= 1e-14


def test_logistic_extreme_arguments():
    assert logistic(800.0) == 1.0
    assert 0.0 <= logistic(-800.0) < 1e-300
    assert np.all(np.isfinite(logistic(np.array([-1e4, 0.0, 1e4]))))


def test_link_eval_logit_at_zero():
    assert link_eval(LinkFunction.LOGIT, 0.0) == (0.5, 0.25)


def test_link_eval_clamped_region():
    assert link_eval(LinkFunction.CLAMPED_LINEAR, 1.5) == (1.0, 0.0)
    assert link_eval("clamped", 0.25) == (0.25, 1.0)
    # kinks take derivative zero
    assert link_eval("clamped", 0.0)[1] == 0.0
    assert link_eval("clamped", 1.0)[1] == 0.0


def test_link_eval_probit_matches_erf():
    value, deriv = link_eval(LinkFunction.PROBIT, 1.0)
    assert abs(value - 0.5 * (1 + math.erf(1 / math.sqrt(2)))) <= 1e-12
    assert abs(deriv - math.exp(-0.5) / math.sqrt(2 * math.pi)) <= 1e-12


def test_link_parse_rejects_unknown():
    with pytest.raises(ValueError):
        LinkFunction.parse("cauchit")


def test_logit_derivative_identity_on_grid():
    t = np.linspace(-30, 30, 6001)
    lam = LinkFunction.LOGIT.value_of(t)
    assert_allclose(LinkFunction.LOGIT.derivative_of(t), lam * (1 - lam), rtol=0, atol=1e-14)


def test_fit_options_must_be_positive():
    with pytest.raises(ValueError):
        FitOptions(gradient_tolerance=0)
    with pytest.raises(ValueError):
        FitOptions(max_iterations=-1)


def test_intercept_only_fit_is_log_odds():
    y = np.array([1.0, 0, 0, 0] * 25)
    fit = fit_binary_mle(np.ones((100, 1)), y)
    assert abs(fit.coefficients[0] - math.log(1 / 3)) <= 1e-9
    assert fit.converged


def _grid_search_mle(x, y, lo=-6.0, hi=6.0, steps=41, rounds=12):
    """Nested grid refinement of the logit log-likelihood over R^2."""

    def ll(b0, b1):
        eta = b0[..., None] + b1[..., None] * x
        return np.sum(y * eta - np.logaddexp(0.0, eta), axis=-1)

    c0 = c1 = 0.0
    half = (hi - lo) / 2
    for _ in range(rounds):
        g0 = np.linspace(c0 - half, c0 + half, steps)
        g1 = np.linspace(c1 - half, c1 + half, steps)
        b0, b1 = np.meshgrid(g0, g1, indexing="ij")
        vals = ll(b0, b1)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        c0, c1 = g0[i], g1[j]
        half *= 4 / (steps - 1)
    return np.array([c0, c1])


def test_two_column_fit_matches_grid_search():
    rng = np.random.default_rng(5)
    x = rng.normal(size=50)
    y = (rng.random(50) < 1 / (1 + np.exp(-(0.4 - 0.8 * x)))).astype(float)
    fit = fit_binary_mle(np.column_stack([np.ones(50), x]), y)
    assert_allclose(fit.coefficients, _grid_search_mle(x, y), atol=1e-6)


def test_separated_fixture_raises():
    x = np.linspace(-2, 2, 20)
    y = (x > 0).astype(float)
    with pytest.raises(Separation):
        fit_binary_mle(np.column_stack([np.ones(20), x]), y)
    with pytest.raises(Separation):
        fit_binary_mle(np.column_stack([np.ones(20), x]), y, LinkFunction.PROBIT)


def test_quasi_separation_raises():
    x = np.array([-2.0, -1, 0, 0, 1, 2])
    y = np.array([0.0, 0, 0, 1, 1, 1])
    with pytest.raises(Separation):
        fit_binary_mle(np.column_stack([np.ones(6), x]), y)


def test_rank_deficient_design():
    x = np.random.default_rng(0).normal(size=(30, 1))
    y = (x[:, 0] + np.random.default_rng(1).normal(size=30) > 0).astype(float)
    with pytest.raises(RankDeficient):
        fit_binary_mle(np.column_stack([np.ones(30), x, 2 * x]), y)


def test_iteration_cap_raises_no_convergence():
    rng = np.random.default_rng(2)
    x = np.column_stack([np.ones(200), rng.normal(size=200)])
    y = (rng.random(200) < 0.4).astype(float)
    with pytest.raises(NoConvergence):
        fit_binary_mle(x, y, options=FitOptions(max_iterations=1, gradient_tolerance=1e-14))


def test_empty_mask():
    x = np.ones((5, 1))
    with pytest.raises(EmptySubsample):
        fit_binary_mle(x, np.array([0.0, 1, 0, 1, 0]), subsample_mask=np.zeros(5, bool))


def test_mask_equals_fit_on_subset():
    rng = np.random.default_rng(3)
    x = np.column_stack([np.ones(120), rng.normal(size=120)])
    y = (rng.random(120) < 0.5).astype(float)
    mask = rng.random(120) < 0.6
    a = fit_binary_mle(x, y, subsample_mask=mask)
    b = fit_binary_mle(x[mask], y[mask])
    assert_allclose(a.coefficients, b.coefficients, rtol=1e-10)


@pytest.mark.parametrize("link", list(LinkFunction))
def test_fits_converge_for_each_link(link):
    rng = np.random.default_rng(4)
    x = np.column_stack([np.ones(400), rng.uniform(0, 1, size=400)])
    y = (rng.random(400) < 0.2 + 0.5 * x[:, 1]).astype(float)
    fit = fit_binary_mle(x, y, link)
    assert fit.converged
    assert fit.final_gradient_norm <= 1e-10
    assert_allclose(fit.negative_hessian, fit.negative_hessian.T)
    assert np.min(np.linalg.eigvalsh(fit.negative_hessian)) > 0


def test_logit_score_orthogonality_and_monotone_path():
    rng = np.random.default_rng(6)
    n = 500
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = (rng.random(n) < 1 / (1 + np.exp(-x @ [0.3, 1.5, -2.0]))).astype(float)
    fit = fit_binary_mle(x, y)
    assert np.linalg.norm(x.T @ (y - fit.predict(x))) <= 1e-8 * n
    path = np.array(fit.log_likelihood_path)
    assert np.all(np.diff(path) >= -1e-12 * np.abs(path[1:]))


def test_fractional_response_population_fit():
    # weighted fractional responses equal to a logit curve are fitted exactly
    x = np.column_stack([np.ones(4), np.arange(4.0)])
    p = 1 / (1 + np.exp(-(-1.0 + 0.7 * np.arange(4.0))))
    fit = fit_weighted_binary(x, p, np.full(4, 0.25), options=FitOptions(gradient_tolerance=1e-14))
    assert_allclose(fit.coefficients, [-1.0, 0.7], atol=1e-12)


def test_fit_ols_exact_interpolation():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(40, 4))
    c = np.array([1.0, -2.0, 0.5, 3.0])
    assert_allclose(fit_ols(x, x @ c), c, atol=1e-12)


def test_fit_ols_hand_solved():
    x = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    assert_allclose(fit_ols(x, np.array([0.0, 1.0, 1.0])), [1 / 6, 1 / 2], atol=1e-14)


def test_fit_ols_duplicated_column():
    x = np.random.default_rng(8).normal(size=(20, 2))
    with pytest.raises(RankDeficient):
        fit_ols(np.column_stack([x, x[:, 0]]), np.ones(20))


def test_fit_ols_residual_orthogonality():
    rng = np.random.default_rng(9)
    x = np.column_stack([np.ones(300), 1e3 * rng.normal(size=300), rng.normal(size=300)])
    y = rng.normal(size=300) * 50
    r = y - x @ fit_ols(x, y)
    scale = np.abs(x).max(axis=0) * np.abs(y).max()
    assert np.all(np.abs(x.T @ r) <= 1e-8 * 300 * scale)


def test_solve_spd_identity():
    rhs = np.array([3.0, -1.0, 2.0])
    assert_allclose(solve_spd(np.eye(3), rhs), rhs)


def test_solve_spd_hand_inverse():
    assert_allclose(solve_spd(np.array([[4.0, 1.0], [1.0, 3.0]]), np.array([1.0, 2.0])), [1 / 11, 7 / 11], atol=1e-15)


def test_solve_spd_negative_eigenvalue():
    with pytest.raises(NotPositiveDefinite):
        solve_spd(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2))


def test_solve_spd_ill_conditioned():
    with pytest.raises(IllConditioned):
        solve_spd(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]]), np.ones(2))


def test_solve_spd_matrix_rhs():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    b = np.eye(2)
    assert_allclose(a @ solve_spd(a, b), b, atol=1e-14)
