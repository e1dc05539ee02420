"""Influence-function inference and Hausman tests.

Plug-in versions of the asymptotic expansions: every population expectation
is replaced by a sample mean and every limit parameter by its estimate.
With ``D = mean(T * (Z - h(X)))`` the variance of ``sqrt(n) (beta_hat - beta)``
is estimated by ``mean(l_i ** 2) / D ** 2`` for the appropriate influence
values ``l_i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateDenominator, DegenerateVariance, InvalidDataset
from .estimators import (
    DEGENERATE_THRESHOLD,
    AugmentedEstimate,
    Dataset,
    EstimatorKind,
    IvEstimate,
    augmented_logit_iv,
    logit_iv,
)
from .numerics import FitOptions, LinkFunction, _score_weights, solve_spd
from .seeding import make_rng

__all__ = [
    "InfluencePieces",
    "InferenceReport",
    "HausmanVariant",
    "HausmanResult",
    "influence_logit_iv",
    "influence_tsls",
    "influence_augmented",
    "variance_logit_iv",
    "variance_tsls",
    "variance_augmented",
    "hausman_full",
    "hausman_split",
    "split_indices",
]

DEGENERATE_VARIANCE = 1e-12


@dataclass(frozen=True, eq=False)
class InfluencePieces:
    """Per-observation influence values and the plug-in pieces behind them.

    Single-first-stage estimators fill ``phi_hat`` and ``ell``; the augmented
    estimator fills ``xi_hat``, ``a1_hat``, ``a2_hat``, ``ell1`` and ``ell2``.
    """

    kind: EstimatorKind
    phi_hat: np.ndarray | None = None
    ell: np.ndarray | None = None
    xi_hat: np.ndarray | None = None
    a1_hat: np.ndarray | None = None
    a2_hat: np.ndarray | None = None
    ell1: np.ndarray | None = None
    ell2: np.ndarray | None = None

    @property
    def combined(self) -> np.ndarray:
        """Influence values that drive the estimator's own variance."""
        if self.ell is not None:
            return self.ell
        return self.ell1 - self.ell2


@dataclass(frozen=True)
class InferenceReport:
    beta: float
    sigma2: float
    std_error: float
    ci_low: float
    ci_high: float
    alpha: float
    n: int


class HausmanVariant(enum.Enum):
    FULL_SAMPLE = "full"
    SPLIT_SAMPLE = "split"


@dataclass(frozen=True)
class HausmanResult:
    statistic: float
    sigma_h2: float
    reject: bool
    variant: HausmanVariant
    alpha: float
    critical_value: float
    beta_logit: float
    beta_augmented: float
    split_seed: int | None = None
    subsample_sizes: tuple[int, int] | None = None


def _critical_value(alpha: float) -> float:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return float(stats.norm.ppf(1.0 - alpha / 2.0))


def _weighted_projection(x: np.ndarray, weights: np.ndarray, target: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    gram = (x * weights[:, None]).T @ x / n
    return solve_spd(gram, x.T @ (weights * target) / n)


def influence_logit_iv(data: Dataset, est: IvEstimate) -> InfluencePieces:
    if est.kind is not EstimatorKind.LOGIT_IV:
        raise ValueError("influence_logit_iv needs a logit-IV estimate")
    index = est.first_stage.linear_index(data.x)
    lam_prime = LinkFunction.LOGIT.derivative_of(index)
    u = data.y - data.t * est.beta
    phi = _weighted_projection(data.x, lam_prime, u)
    ell = (u - data.x @ phi) * est.fitted_instrument_residuals
    return InfluencePieces(EstimatorKind.LOGIT_IV, phi_hat=phi, ell=ell)


def influence_tsls(data: Dataset, est: IvEstimate) -> InfluencePieces:
    """Linear-first-stage analogue: unweighted projection, OLS residuals.

    Its second moment gives the usual heteroskedasticity-robust 2SLS variance.
    """
    if est.kind is not EstimatorKind.TSLS:
        raise ValueError("influence_tsls needs a 2SLS estimate")
    u = data.y - data.t * est.beta
    phi = _weighted_projection(data.x, np.ones(data.n), u)
    ell = (u - data.x @ phi) * est.fitted_instrument_residuals
    return InfluencePieces(EstimatorKind.TSLS, phi_hat=phi, ell=ell)


def influence_augmented(data: Dataset, est: AugmentedEstimate) -> InfluencePieces:
    """Influence values for the augmented estimator.

    ``ell1`` is the projection-corrected moment, ``ell2`` propagates the
    estimation noise of the control-arm treatment model through the extra
    regressor.  The pieces are

        xi  = (mean L' W W')^-1 mean L' W (Y - T b)
        A1  = mean[((Z - L) e - kappa L' W) F'(X'psi) X']
        A2  = xi' A1 + kappa mean[L' F'(X'psi) (Y - T b) X']
        l2i = A2 H^-1 s_i

    with ``L = Lambda(X'theta + C kappa)``, ``F`` the control-arm link, ``H``
    the control-arm information matrix (averaged over all n rows) and
    ``s_i`` the control-arm score.  For the logit link ``F' = Lambda'``,
    ``s_i = 1{Z_i = 0} (T_i - F) X_i`` and ``H = mean 1{Z = 0} F' X X'``.
    """
    n, p = data.n, data.p
    x = data.x
    u = data.y - data.t * est.beta
    resid = est.fitted_instrument_residuals
    if est.collinearity_fallback:
        lam_prime = LinkFunction.LOGIT.derivative_of(x @ est.theta)
        phi = _weighted_projection(x, lam_prime, u)
        ell1 = (u - x @ phi) * resid
        return InfluencePieces(
            EstimatorKind.AUGMENTED,
            xi_hat=np.append(phi, 0.0),
            a1_hat=np.zeros((p + 1, p)),
            a2_hat=np.zeros(p),
            ell1=ell1,
            ell2=np.zeros(n),
        )
    link = est.psi_fit.link
    psi_index = x @ est.psi_fit.coefficients
    c_prime = link.derivative_of(psi_index)
    w = np.column_stack([x, est.c_hat])
    lam_prime = LinkFunction.LOGIT.derivative_of(x @ est.theta + est.c_hat * est.kappa)
    kappa = est.kappa

    xi = _weighted_projection(w, lam_prime, u)
    e = np.zeros(p + 1)
    e[-1] = 1.0
    a1 = np.outer(e, x.T @ (resid * c_prime)) / n
    a1 -= kappa * (w * (lam_prime * c_prime)[:, None]).T @ x / n
    a2 = xi @ a1 + kappa * (x.T @ (lam_prime * c_prime * u)) / n

    control = (data.z == 0).astype(float)
    mult, info = _score_weights(link, psi_index, data.t)
    h_psi = (x * (control * info)[:, None]).T @ x / n
    direction = solve_spd(h_psi, a2)
    ell2 = control * mult * (x @ direction)
    ell1 = (u - w @ xi) * resid
    return InfluencePieces(EstimatorKind.AUGMENTED, xi_hat=xi, a1_hat=a1, a2_hat=a2, ell1=ell1, ell2=ell2)


def _inference_report(beta: float, ell: np.ndarray, denominator_sum: float, n: int, alpha: float) -> InferenceReport:
    d = denominator_sum / n
    if abs(d) < DEGENERATE_THRESHOLD:
        raise DegenerateDenominator(f"|denominator|/n = {abs(d):.3g}")
    sigma2 = float(np.mean(ell**2) / d**2)
    se = float(np.sqrt(sigma2 / n))
    crit = _critical_value(alpha)
    return InferenceReport(beta, sigma2, se, beta - crit * se, beta + crit * se, alpha, n)


def variance_logit_iv(data: Dataset, est: IvEstimate, pieces: InfluencePieces, alpha: float = 0.05) -> InferenceReport:
    return _inference_report(est.beta, pieces.ell, est.denominator, data.n, alpha)


variance_tsls = variance_logit_iv


def variance_augmented(
    data: Dataset, est: AugmentedEstimate, pieces: InfluencePieces, alpha: float = 0.05
) -> InferenceReport:
    return _inference_report(est.beta, pieces.ell1 - pieces.ell2, est.denominator, data.n, alpha)


def _variance_floor(data: Dataset, residuals: np.ndarray, denominator_mean: float) -> float:
    """Scale^2 against which a Hausman variance counts as degenerate."""
    # outcome spread is translation invariant like the statistic; the eps term
    # keeps a positive floor when y is constant
    spread = max(float(np.var(data.y)), float(np.finfo(float).eps * np.mean(data.y**2)))
    return DEGENERATE_VARIANCE * spread * float(np.mean(residuals**2)) / denominator_mean**2


def hausman_full(
    data: Dataset,
    alpha: float = 0.05,
    options: FitOptions | None = None,
    link: LinkFunction | str = LinkFunction.LOGIT,
) -> HausmanResult:
    """Full-sample Hausman test of a logit-form instrument propensity.

    The common denominator is evaluated at the logit-IV first stage.
    """
    crit = _critical_value(alpha)
    est_l = logit_iv(data, options)
    est_a = augmented_logit_iv(data, link, options)
    if est_a.collinearity_fallback:
        # both estimators run the identical first stage; the contrast is exactly zero
        return HausmanResult(0.0, 0.0, False, HausmanVariant.FULL_SAMPLE, alpha, crit, est_l.beta, est_a.beta)
    pl = influence_logit_iv(data, est_l)
    pa = influence_augmented(data, est_a)
    d = est_l.denominator / data.n
    sigma_h2 = float(np.mean((pl.ell - pa.ell1 + pa.ell2) ** 2) / d**2)
    floor = _variance_floor(data, est_l.fitted_instrument_residuals, d)
    if not sigma_h2 > floor:
        raise DegenerateVariance(f"Hausman variance {sigma_h2:.3g} is numerically zero")
    stat = float(np.sqrt(data.n) * abs(est_l.beta - est_a.beta) / np.sqrt(sigma_h2))
    return HausmanResult(stat, sigma_h2, stat > crit, HausmanVariant.FULL_SAMPLE, alpha, crit, est_l.beta, est_a.beta)


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic random halves; the first gets the extra row when n is odd."""
    rng = make_rng(seed)
    perm = rng.permutation(n)
    n1 = (n + 1) // 2
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def hausman_split(
    data: Dataset,
    alpha: float = 0.05,
    seed: int = 0,
    options: FitOptions | None = None,
    link: LinkFunction | str = LinkFunction.LOGIT,
) -> HausmanResult:
    """Split-sample Hausman test: logit-IV on one half, augmented on the other.

    The variance plug-in uses each half's own denominator and size,
    ``n * (m1 / (n1 D1^2) + m2 / (n2 D2^2))``, which is
    ``2 (m1 + m2) / D^2`` for equal halves and a shared denominator.
    """
    crit = _critical_value(alpha)
    n = data.n
    if n < 2 * (data.p + 2):
        raise InvalidDataset(f"split test needs n >= {2 * (data.p + 2)}, got {n}")
    i1, i2 = split_indices(n, seed)
    d1, d2 = data.subset(i1), data.subset(i2)
    est_l = logit_iv(d1, options)
    est_a = augmented_logit_iv(d2, link, options)
    pl = influence_logit_iv(d1, est_l)
    pa = influence_augmented(d2, est_a)
    den1 = est_l.denominator / d1.n
    den2 = est_a.denominator / d2.n
    m1 = float(np.mean(pl.ell**2))
    m2 = float(np.mean((pa.ell1 - pa.ell2) ** 2))
    sigma_h2 = n * (m1 / (d1.n * den1**2) + m2 / (d2.n * den2**2))
    floor = _variance_floor(data, np.concatenate([est_l.fitted_instrument_residuals, est_a.fitted_instrument_residuals]), 0.5 * (den1 + den2))
    if not sigma_h2 > floor:
        raise DegenerateVariance(f"split Hausman variance {sigma_h2:.3g} is numerically zero")
    stat = float(np.sqrt(n) * abs(est_l.beta - est_a.beta) / np.sqrt(sigma_h2))
    return HausmanResult(
        stat,
        float(sigma_h2),
        stat > crit,
        HausmanVariant.SPLIT_SAMPLE,
        alpha,
        crit,
        est_l.beta,
        est_a.beta,
        split_seed=int(seed),
        subsample_sizes=(d1.n, d2.n),
    )
