import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import exact_logit_cells, make_data
from hetiv import (
    Dataset,
    EstimatorKind,
    FitOptions,
    HausmanVariant,
    InfluencePieces,
    augmented_logit_iv,
    hausman_full,
    hausman_split,
    influence_augmented,
    influence_logit_iv,
    influence_tsls,
    logit_iv,
    tsls,
    variance_augmented,
    variance_logit_iv,
    variance_tsls,
)
from hetiv.dgp import population_params, sample
from hetiv.errors import DegenerateVariance, InvalidDataset
from hetiv.inference import split_indices
from hetiv.library import build


def _lam(t):
    return 1.0 / (1.0 + np.exp(-t))


def _loop_phi(data, theta, beta):
    """Weighted normal equations assembled row by row."""
    p = data.p
    gram = np.zeros((p, p))
    rhs = np.zeros(p)
    for i in range(data.n):
        xi = data.x[i]
        lam = _lam(xi @ theta)
        w = lam * (1 - lam)
        gram += w * np.outer(xi, xi)
        rhs += w * xi * (data.y[i] - data.t[i] * beta)
    return np.linalg.solve(gram, rhs)


def _loop_augmented(data, est):
    """xi, A1, A2 and l2 by naive summation for the logit control-arm link."""
    n, p = data.n, data.p
    psi, theta, kappa, beta = est.psi_fit.coefficients, est.theta, est.kappa, est.beta
    e = np.zeros(p + 1)
    e[-1] = 1.0
    gram = np.zeros((p + 1, p + 1))
    rhs = np.zeros(p + 1)
    a1 = np.zeros((p + 1, p))
    extra = np.zeros(p)
    h = np.zeros((p, p))
    for i in range(n):
        xi = data.x[i]
        c = _lam(xi @ psi)
        cp = c * (1 - c)
        wi = np.append(xi, c)
        lam = _lam(xi @ theta + c * kappa)
        lp = lam * (1 - lam)
        u = data.y[i] - data.t[i] * beta
        gram += lp * np.outer(wi, wi)
        rhs += lp * wi * u
        a1 += np.outer((data.z[i] - lam) * e - kappa * lp * wi, cp * xi)
        extra += kappa * lp * cp * u * xi
        if data.z[i] == 0:
            h += cp * np.outer(xi, xi)
    xi_hat = np.linalg.solve(gram, rhs)
    a1 /= n
    a2 = xi_hat @ a1 + extra / n
    h /= n
    hinv_a2 = np.linalg.solve(h, a2)
    ell2 = np.array(
        [
            (1 - data.z[i]) * (data.t[i] - _lam(data.x[i] @ psi)) * (data.x[i] @ hinv_a2)
            for i in range(n)
        ]
    )
    return xi_hat, a1, a2, ell2


@pytest.fixture
def small():
    return make_data(20, p=2, seed=12)


def test_phi_matches_loop_oracle(small):
    est = logit_iv(small)
    pieces = influence_logit_iv(small, est)
    assert_allclose(pieces.phi_hat, _loop_phi(small, est.first_stage.coefficients, est.beta), rtol=1e-9, atol=1e-12)


def test_augmented_pieces_match_loop_oracle():
    d = make_data(20, p=2, seed=2)
    est = augmented_logit_iv(d)
    assert not est.collinearity_fallback
    pieces = influence_augmented(d, est)
    xi, a1, a2, ell2 = _loop_augmented(d, est)
    scale = np.abs(pieces.a1_hat).max() + np.abs(a1).max()
    assert_allclose(pieces.xi_hat, xi, rtol=1e-9, atol=1e-9 * np.abs(xi).max())
    assert_allclose(pieces.a1_hat, a1, rtol=1e-9, atol=1e-9 * scale)
    assert_allclose(pieces.a2_hat, a2, rtol=1e-9, atol=1e-9 * np.abs(a2).max())
    assert_allclose(pieces.ell2, ell2, rtol=1e-9, atol=1e-9 * np.abs(ell2).max())


def test_ell2_vanishes_on_treated_arm(data):
    pieces = influence_augmented(data, augmented_logit_iv(data))
    assert np.all(pieces.ell2[data.z == 1] == 0.0)


def test_ell2_vanishes_at_exact_logit_cells():
    d = exact_logit_cells()
    est = augmented_logit_iv(d, options=FitOptions(gradient_tolerance=1e-14))
    pieces = influence_augmented(d, est)
    scale = np.abs(pieces.ell1).max()
    assert np.abs(pieces.ell2).max() <= 1e-6 * scale


def test_intercept_only_projection_is_zero():
    d = make_data(200, p=1, seed=8)
    beta = logit_iv(d).beta
    # shifting y leaves beta unchanged and makes mean(y) = mean(t) * beta
    d = d.replace(y=d.y - (d.y.mean() - d.t.mean() * beta))
    est = logit_iv(d)
    pieces = influence_logit_iv(d, est)
    assert_allclose(pieces.phi_hat, [0.0], atol=1e-12)
    assert_allclose(pieces.ell, (d.y - d.t * est.beta) * (d.z - d.z.mean()), atol=1e-12)


def test_influence_values_are_centred(data):
    scale = np.abs(data.y).max()
    for fit, infl in ((logit_iv, influence_logit_iv), (tsls, influence_tsls)):
        pieces = infl(data, fit(data))
        assert abs(pieces.ell.sum()) <= 1e-8 * data.n * scale


def test_zero_influence_gives_zero_variance():
    rng = np.random.default_rng(0)
    n = 200
    x = rng.normal(size=n)
    z = (rng.random(n) < 0.5).astype(float)
    t = (rng.random(n) < 0.3 + 0.4 * z).astype(float)
    d = Dataset.from_arrays(2.0 * t + 1.0 + 0.5 * x, t, z, x)
    est = logit_iv(d)
    rep = variance_logit_iv(d, est, influence_logit_iv(d, est))
    assert rep.sigma2 <= 1e-20
    assert rep.ci_low <= rep.beta <= rep.ci_high
    assert rep.ci_high - rep.ci_low <= 1e-9


def test_equal_augmented_pieces_give_zero_variance(data):
    est = augmented_logit_iv(data)
    v = np.linspace(-1, 1, data.n)
    pieces = InfluencePieces(EstimatorKind.AUGMENTED, ell1=v, ell2=v.copy())
    assert variance_augmented(data, est, pieces).sigma2 == 0.0


def test_report_fields(data):
    est = logit_iv(data)
    rep = variance_logit_iv(data, est, influence_logit_iv(data, est), alpha=0.1)
    assert rep.alpha == 0.1 and rep.n == data.n
    assert_allclose(rep.std_error, np.sqrt(rep.sigma2 / data.n))
    assert_allclose(rep.ci_high - rep.beta, 1.6448536269514722 * rep.std_error)


def test_tsls_variance_matches_robust_formula(data):
    est = tsls(data)
    rep = variance_tsls(data, est, influence_tsls(data, est))
    # heteroskedasticity-robust 2SLS variance of the T coefficient
    a = np.column_stack([data.t, data.x])
    w = np.column_stack([data.z, data.x])
    ahat = w @ np.linalg.lstsq(w, a, rcond=None)[0]
    coef = np.linalg.solve(ahat.T @ a, ahat.T @ data.y)
    u = data.y - a @ coef
    bread = np.linalg.inv(ahat.T @ ahat)
    meat = (ahat * (u**2)[:, None]).T @ ahat
    assert_allclose(rep.std_error**2, (bread @ meat @ bread)[0, 0], rtol=1e-8)


def test_scale_equivariance(data):
    c = 3.5
    scaled = data.replace(y=c * data.y)
    for fit, infl, var in (
        (logit_iv, influence_logit_iv, variance_logit_iv),
        (augmented_logit_iv, influence_augmented, variance_augmented),
    ):
        e0, e1 = fit(data), fit(scaled)
        r0 = var(data, e0, infl(data, e0))
        r1 = var(scaled, e1, infl(scaled, e1))
        assert_allclose([r1.beta, np.sqrt(r1.sigma2), r1.ci_low, r1.ci_high], [c * r0.beta, c * np.sqrt(r0.sigma2), c * r0.ci_low, c * r0.ci_high], rtol=1e-9)
    assert_allclose(hausman_full(scaled).statistic, hausman_full(data).statistic, rtol=1e-9)
    assert_allclose(hausman_split(scaled, seed=1).statistic, hausman_split(data, seed=1).statistic, rtol=1e-9)


def test_hausman_fields(data):
    res = hausman_full(data)
    assert res.variant is HausmanVariant.FULL_SAMPLE
    assert res.statistic >= 0
    assert res.reject == (res.statistic > res.critical_value)
    assert_allclose(res.statistic, np.sqrt(data.n) * abs(res.beta_logit - res.beta_augmented) / np.sqrt(res.sigma_h2))


def test_hausman_fallback_gives_zero_statistic():
    d = make_data(300, p=1, seed=6)
    res = hausman_full(d)
    assert res.statistic == 0.0 and not res.reject


def test_hausman_degenerate_variance():
    rng = np.random.default_rng(3)
    n = 400
    x = rng.normal(size=n)
    z = (rng.random(n) < 1 / (1 + np.exp(-x))).astype(float)
    t = (rng.random(n) < 0.2 + 0.5 * z + 0.1 * (x > 0)).astype(float)
    d = Dataset.from_arrays(1.0 + 2.0 * t, t, z, x)
    with pytest.raises(DegenerateVariance):
        hausman_full(d)
    with pytest.raises(DegenerateVariance):
        hausman_split(d, seed=0)


def test_split_sizes_odd_n():
    i1, i2 = split_indices(101, seed=9)
    assert (i1.size, i2.size) == (51, 50)
    assert np.array_equal(np.sort(np.concatenate([i1, i2])), np.arange(101))
    d = make_data(101, p=2, seed=1)
    assert hausman_split(d, seed=9).subsample_sizes == (51, 50)


def test_split_is_deterministic(data):
    a = hausman_split(data, seed=17)
    b = hausman_split(data, seed=17)
    assert a == b
    assert a.split_seed == 17 and a.variant is HausmanVariant.SPLIT_SAMPLE
    c = hausman_split(data, seed=18)
    assert c.statistic != a.statistic


def test_split_needs_enough_rows():
    d = make_data(9, p=3, seed=0)
    with pytest.raises(InvalidDataset):
        hausman_split(d, seed=0)


def test_alpha_validation(data):
    with pytest.raises(ValueError):
        hausman_full(data, alpha=1.5)


@pytest.mark.slow
def test_plug_in_variance_stable_under_refinement():
    dgp = build("dgp_a")
    out = []
    for n in (100_000, 400_000):
        d = sample(dgp, n, 77)
        e = logit_iv(d)
        a = augmented_logit_iv(d)
        out.append(
            (
                variance_logit_iv(d, e, influence_logit_iv(d, e)).sigma2,
                variance_augmented(d, a, influence_augmented(d, a)).sigma2,
            )
        )
    assert_allclose(out[0], out[1], rtol=0.05)


def test_population_denominator_matches_sample():
    dgp = build("dgp_a")
    lim = population_params(dgp)
    d = sample(dgp, 200_000, 5)
    est = logit_iv(d)
    assert abs(est.denominator / d.n - lim.denominator[EstimatorKind.LOGIT_IV]) < 0.01
