import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import exact_logit_cells, make_data, tsls_closed_form, wald
from hetiv import (
    Dataset,
    EstimatorKind,
    FitOptions,
    LinkFunction,
    WeakInstrumentWarning,
    augmented_logit_iv,
    estimate,
    logit_iv,
    tsls,
)
from hetiv.dgp import mc_study, sample
from hetiv.errors import DegenerateDenominator, EmptyControlArm, InvalidDataset, RankDeficient, Separation
from hetiv.library import build


def test_dataset_rejects_bad_inputs():
    y = np.arange(6.0)
    with pytest.raises(InvalidDataset):
        Dataset.from_arrays(y, [0, 1, 0, 1, 0, 2], [0, 1, 0, 1, 0, 1])
    with pytest.raises(InvalidDataset):
        Dataset.from_arrays(y, [0, 1, 0, 1, 0, 1], np.ones(6))
    with pytest.raises(InvalidDataset):
        Dataset.from_arrays(y[:2], [0, 1], [0, 1])
    with pytest.raises(InvalidDataset):
        Dataset(y, np.zeros(6), [0, 1, 0, 1, 0, 1], np.column_stack([np.arange(6.0)]), has_intercept=True)
    with pytest.raises(InvalidDataset):
        Dataset.from_arrays([0, 1, np.nan, 3, 4, 5], [0, 1, 0, 1, 0, 1], [0, 1, 0, 1, 1, 0])


def test_dataset_is_read_only():
    d = make_data(50)
    with pytest.raises(ValueError):
        d.y[0] = 1.0


def test_intercept_only_wald_reduction():
    d = make_data(400, p=1, seed=3)
    w = wald(d)
    assert abs(logit_iv(d).beta - w) <= 1e-10 * max(1, abs(w))
    assert abs(tsls(d).beta - w) <= 1e-10 * max(1, abs(w))
    a = augmented_logit_iv(d)
    assert a.collinearity_fallback and a.kappa == 0.0
    assert abs(a.beta - w) <= 1e-10 * max(1, abs(w))


@pytest.mark.parametrize("seed", range(5))
def test_tsls_matches_closed_form(seed):
    d = make_data(300, p=4, seed=seed)
    assert_allclose(tsls(d).beta, tsls_closed_form(d), rtol=1e-8)


def test_tsls_rank_deficient():
    d = make_data(100, p=2)
    with pytest.raises(RankDeficient):
        tsls(d.replace(x=np.column_stack([d.x, d.x[:, 1]])))


def test_ratio_invariants(data):
    for kind in EstimatorKind:
        est = estimate(data, kind)
        resid = est.fitted_instrument_residuals
        assert_allclose(est.beta * est.denominator, data.y @ resid, rtol=1e-9)
        assert_allclose(est.denominator, data.t @ resid, rtol=1e-12)
        scale = np.abs(data.y).max()
        assert abs(np.sum((data.y - data.t * est.beta) * resid)) <= 1e-8 * data.n * scale


def test_logit_first_stage_score_orthogonality(data):
    est = logit_iv(data)
    assert np.linalg.norm(data.x.T @ est.fitted_instrument_residuals) <= 1e-8 * data.n


def test_augmented_score_orthogonality(data):
    est = augmented_logit_iv(data)
    assert not est.collinearity_fallback
    w = np.column_stack([data.x, est.c_hat])
    assert np.linalg.norm(w.T @ est.fitted_instrument_residuals) <= 1e-8 * data.n
    assert np.all((est.c_hat >= 0) & (est.c_hat <= 1))


@pytest.mark.parametrize("link", list(LinkFunction))
def test_augmented_links(link):
    d = make_data(600, p=2, seed=11)
    est = augmented_logit_iv(d, link)
    assert est.psi_fit.link is link
    assert np.isfinite(est.beta)


def test_instrument_relabeling_leaves_beta_unchanged(data):
    flipped = data.replace(z=1 - data.z)
    for kind in (EstimatorKind.LOGIT_IV, EstimatorKind.TSLS):
        a, b = estimate(data, kind), estimate(flipped, kind)
        assert_allclose(b.beta, a.beta, rtol=1e-9)
        assert_allclose(b.fitted_instrument_residuals, -a.fitted_instrument_residuals, atol=1e-9)


def test_relabeling_changes_the_augmented_control_arm(data):
    # the first step is fitted on the z = 0 rows, which the flip swaps;
    # invariance is only guaranteed when the augmentation drops out
    flipped = data.replace(z=1 - data.z)
    a, b = augmented_logit_iv(data), augmented_logit_iv(flipped)
    assert not np.allclose(a.psi_fit.coefficients, b.psi_fit.coefficients)
    d = make_data(300, p=1, seed=4)
    assert_allclose(augmented_logit_iv(d.replace(z=1 - d.z)).beta, augmented_logit_iv(d).beta, rtol=1e-9)


def test_no_take_up_is_degenerate():
    d = make_data(200, p=2)
    d0 = d.replace(t=np.zeros(d.n))
    for kind in (EstimatorKind.LOGIT_IV, EstimatorKind.TSLS):
        with pytest.raises(DegenerateDenominator):
            estimate(d0, kind)
    # the control-arm take-up model has no finite maximizer before the ratio is formed
    with pytest.raises(Separation):
        augmented_logit_iv(d0)


def test_weak_instrument_warns():
    rng = np.random.default_rng(1)
    n = 20000
    z = (rng.random(n) < 0.5).astype(float)
    t = np.zeros(n)
    t[:3] = 1.0
    z[:3] = 1.0
    d = Dataset.from_arrays(rng.normal(size=n), t, z)
    with pytest.warns(WeakInstrumentWarning):
        est = logit_iv(d)
    assert est.diagnostics.weak_flag


def test_diagnostics_fields(data):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        est = logit_iv(data)
    diag = est.diagnostics
    assert not diag.weak_flag
    assert diag.min_arm_counts == (int((data.z == 0).sum()), int(data.z.sum()))
    assert diag.denominator_abs == abs(est.denominator)


def test_empty_control_arm():
    d = make_data(50, p=3)
    z = np.ones(d.n)
    z[:2] = 0.0
    with pytest.raises(EmptyControlArm):
        augmented_logit_iv(d.replace(z=z))


def test_exact_logit_cells_recover_parameters():
    d = exact_logit_cells()
    est = augmented_logit_iv(d, options=FitOptions(gradient_tolerance=1e-14))
    assert_allclose(est.theta, [0.0, np.log(2.0)], atol=1e-9)
    assert abs(est.kappa) <= 1e-8
    assert_allclose(est.beta, logit_iv(d).beta, rtol=1e-9)


def test_estimator_kind_parse():
    assert EstimatorKind.parse("2sls") is EstimatorKind.TSLS
    assert EstimatorKind.parse("augmented_logit_iv") is EstimatorKind.AUGMENTED
    with pytest.raises(ValueError):
        EstimatorKind.parse("liml")


@pytest.mark.slow
def test_constant_effect_consistency():
    res = mc_study(build("dgp_constant"), ["logit_iv"], 20000, 200, master_seed=21)[EstimatorKind.LOGIT_IV]
    assert not res.failures
    assert abs(res.mean - 2.0) <= 3 * res.mc_se


@pytest.mark.slow
def test_kappa_vanishes_under_logit_propensity():
    dgp = build("dgp_b")
    kappas, gaps = [], []
    for r in range(200):
        d = sample(dgp, 20000, (33, r))
        a = augmented_logit_iv(d)
        kappas.append(a.kappa)
        gaps.append(a.beta - logit_iv(d).beta)
    for v in (np.array(kappas), np.array(gaps)):
        assert abs(v.mean()) <= 3 * v.std(ddof=1) / np.sqrt(v.size)
