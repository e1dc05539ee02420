"""Discrete-support data-generating processes and their exact population limits.

A :class:`DgpSpec` puts finite mass on covariate points ``x_k``.  At every
point it fixes the instrument propensity ``p(x) = E[Z | X = x]``, the shares of
never-takers, compliers and always-takers (no defiers), and the mean
potential outcome of each stratum under each treatment arm.  Every population
moment is then a finite sum over the support, so probability limits and
weights come out exact to rounding.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    HetivError,
    InvalidDgp,
    NoCompliers,
    NonIdentified,
    ZeroDenominator,
)
from .estimators import Dataset, EstimatorKind, estimate
from .numerics import FitOptions, LinkFunction, fit_ols, fit_weighted_binary, gram_condition
from .seeding import make_rng

__all__ = [
    "NT",
    "CP",
    "AT",
    "STRATA",
    "AssumptionTags",
    "DgpSpec",
    "LatentDraw",
    "PopulationLimits",
    "LimitDecomposition",
    "WeightKind",
    "WeightProfile",
    "MonteCarloResult",
    "sample",
    "population_params",
    "limit_decomposition",
    "weight_profile",
    "true_late",
    "check_assumptions",
    "mc_oracle",
    "mc_study",
]

NT, CP, AT = 0, 1, 2
STRATA = ("never_taker", "complier", "always_taker")

_POPULATION_OPTIONS = FitOptions(gradient_tolerance=1e-13, max_iterations=200)
_ZERO = 1e-14


@dataclass(frozen=True)
class AssumptionTags:
    """Which identifying conditions a DGP satisfies by construction.

    ``linear_means``        E[Y | X, Z = 0] is linear in X
    ``linear_first_stage``  E[T(0) | X] is linear in X
    ``relaxed_linear``      the s-mixture of both arms is linear for ``s``
    ``logit_propensity``    E[Z | X] is logit in X
    ``index_first_stage``   E[T(0) | X] = link(X'psi0) for ``first_stage_link``
    """

    linear_means: bool = False
    linear_first_stage: bool = False
    relaxed_linear: bool = False
    logit_propensity: bool = False
    index_first_stage: bool = False
    first_stage_link: LinkFunction = LinkFunction.LOGIT
    s: float | None = None
    eta0: tuple[float, ...] | None = None
    psi0: tuple[float, ...] | None = None


def _frozen(a, ndim) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != ndim:
        raise InvalidDgp(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DgpSpec:
    support: np.ndarray  # K x p covariate points
    probs: np.ndarray  # K support probabilities
    propensity: np.ndarray  # K values of E[Z | X]
    strata: np.ndarray  # K x 3 shares (NT, CP, AT)
    outcome_means: np.ndarray  # K x 3 x 2, E[Y(d) | G = g, X]
    outcome_noise_sd: float = 1.0
    assumptions: AssumptionTags = field(default_factory=AssumptionTags)
    name: str = ""
    covariate_names: tuple[str, ...] | None = None
    description: str = ""

    def __post_init__(self):
        for name, ndim in (("support", 2), ("probs", 1), ("propensity", 1), ("strata", 2), ("outcome_means", 3)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim))
        k, p = self.support.shape
        if self.probs.shape != (k,) or self.propensity.shape != (k,):
            raise InvalidDgp("probs and propensity need one entry per support point")
        if self.strata.shape != (k, 3):
            raise InvalidDgp("strata must be K x 3 (never-taker, complier, always-taker)")
        if self.outcome_means.shape != (k, 3, 2):
            raise InvalidDgp("outcome_means must be K x 3 x 2")
        if not np.all(np.isfinite(self.support)) or not np.all(np.isfinite(self.outcome_means)):
            raise InvalidDgp("support points and outcome means must be finite")
        if np.any(self.probs <= 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise InvalidDgp("support probabilities must be positive and sum to one")
        if np.any((self.propensity <= 0) | (self.propensity >= 1)):
            raise InvalidDgp("instrument propensity must lie strictly inside (0, 1)")
        if np.any(self.strata < 0) or np.any(np.abs(self.strata.sum(axis=1) - 1.0) > 1e-12):
            raise InvalidDgp("stratum shares must be non-negative and sum to one at every point")
        if not self.outcome_noise_sd >= 0:
            raise InvalidDgp("outcome_noise_sd must be non-negative")
        if self.covariate_names is not None and len(self.covariate_names) != p:
            raise InvalidDgp("covariate_names must name every support column")

    @property
    def n_points(self) -> int:
        return self.support.shape[0]

    @property
    def p(self) -> int:
        return self.support.shape[1]

    @property
    def has_intercept(self) -> bool:
        return bool(np.all(self.support[:, 0] == 1.0))

    @property
    def effects(self) -> np.ndarray:
        """K x 3 conditional treatment effects Delta_g(x)."""
        return self.outcome_means[:, :, 1] - self.outcome_means[:, :, 0]

    @property
    def mean_y0(self) -> np.ndarray:
        return np.sum(self.strata * self.outcome_means[:, :, 0], axis=1)

    @property
    def mean_y1(self) -> np.ndarray:
        return np.sum(self.strata * self.outcome_means[:, :, 1], axis=1)

    def mean_y_given_z(self, z: int) -> np.ndarray:
        """E[Y | X, Z = z] at every support point."""
        m = self.outcome_means
        om = self.strata
        complier_arm = 1 if z else 0
        return om[:, NT] * m[:, NT, 0] + om[:, CP] * m[:, CP, complier_arm] + om[:, AT] * m[:, AT, 1]

    def mean_t_given_z(self, z: int) -> np.ndarray:
        return self.strata[:, AT] + (self.strata[:, CP] if z else 0.0)


@dataclass(frozen=True, eq=False)
class LatentDraw:
    point: np.ndarray  # support index per unit
    stratum: np.ndarray  # 0 = NT, 1 = CP, 2 = AT
    t0: np.ndarray
    t1: np.ndarray


def sample(dgp: DgpSpec, n: int, seed=0, return_latent: bool = False):
    """Draw ``n`` units; deterministic in ``seed`` (one or two integers).

    Raises :class:`~hetiv.errors.InvalidDataset` when the draw is too small
    to form a valid dataset (for example a single instrument arm).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed)
    point = rng.choice(dgp.n_points, size=n, p=dgp.probs)
    cum = np.cumsum(dgp.strata, axis=1)[point]
    u = rng.random(n)
    stratum = (u >= cum[:, 0]).astype(int) + (u >= cum[:, 1]).astype(int)
    z = (rng.random(n) < dgp.propensity[point]).astype(float)
    noise = rng.standard_normal(n)
    t0 = (stratum == AT).astype(float)
    t1 = (stratum != NT).astype(float)
    t = np.where(z == 1.0, t1, t0)
    y = dgp.outcome_means[point, stratum, t.astype(int)] + dgp.outcome_noise_sd * noise
    data = Dataset(y=y, t=t, z=z, x=dgp.support[point], has_intercept=dgp.has_intercept)
    if return_latent:
        return data, LatentDraw(point, stratum, t0, t1)
    return data


@dataclass(frozen=True, eq=False)
class PopulationLimits:
    theta0: np.ndarray
    gamma0: np.ndarray
    psi_bar0: np.ndarray
    theta_bar0: np.ndarray
    kappa_bar0: float
    augmented_fallback: bool
    link: LinkFunction
    h: dict  # EstimatorKind -> K-vector of instrument predictions
    numerator: dict  # EstimatorKind -> E[Y (Z - h(X))]
    denominator: dict  # EstimatorKind -> E[T (Z - h(X))]

    def beta_limit(self, kind: EstimatorKind | str) -> float:
        kind = EstimatorKind.parse(kind)
        d = self.denominator[kind]
        if abs(d) < _ZERO:
            raise ZeroDenominator(f"E[T(Z - h(X))] vanishes for {kind.value}")
        return self.numerator[kind] / d


def population_params(
    dgp: DgpSpec,
    link: LinkFunction | str = LinkFunction.LOGIT,
    options: FitOptions | None = None,
) -> PopulationLimits:
    """Probability limits of every first-stage parameter and every ratio.

    Expectations are exact sums over the support.  The control-arm treatment
    model weights point k by ``pi_k (1 - p(x_k))``, the population share of
    Z = 0 units there.
    """
    options = options or _POPULATION_OPTIONS
    link = LinkFunction.parse(link)
    x, w, p = dgp.support, dgp.probs, dgp.propensity
    cond = gram_condition(x, w)
    if not cond <= options.condition_limit:
        raise NonIdentified(f"population design is rank deficient (condition {cond:.3g})")
    theta0 = fit_weighted_binary(x, p, w, LinkFunction.LOGIT, options).coefficients
    sw = np.sqrt(w)
    gamma0 = fit_ols(x * sw[:, None], p * sw, options.condition_limit)
    psi = fit_weighted_binary(x, dgp.strata[:, AT], w * (1.0 - p), link, options).coefficients
    c = link.value_of(x @ psi)
    aug_design = np.column_stack([x, c])
    if gram_condition(aug_design, w) <= options.condition_limit:
        coef = fit_weighted_binary(aug_design, p, w, LinkFunction.LOGIT, options).coefficients
        theta_bar, kappa, fallback = coef[:-1], float(coef[-1]), False
    else:
        theta_bar, kappa, fallback = theta0.copy(), 0.0, True

    h = {
        EstimatorKind.LOGIT_IV: LinkFunction.LOGIT.value_of(x @ theta0),
        EstimatorKind.TSLS: x @ gamma0,
        EstimatorKind.AUGMENTED: LinkFunction.LOGIT.value_of(x @ theta_bar + c * kappa),
    }
    ey1, ey0 = dgp.mean_y_given_z(1), dgp.mean_y_given_z(0)
    et1, et0 = dgp.mean_t_given_z(1), dgp.mean_t_given_z(0)
    numerator, denominator = {}, {}
    for kind, hk in h.items():
        # E[V (Z - h)] = E[p (1 - h) E[V|X,Z=1] - (1 - p) h E[V|X,Z=0]]
        numerator[kind] = float(np.sum(w * (p * (1 - hk) * ey1 - (1 - p) * hk * ey0)))
        denominator[kind] = float(np.sum(w * (p * (1 - hk) * et1 - (1 - p) * hk * et0)))
    return PopulationLimits(theta0, gamma0, psi, theta_bar, kappa, fallback, link, h, numerator, denominator)


@dataclass(frozen=True)
class LimitDecomposition:
    kind: EstimatorKind
    s: float
    complier: float
    always_taker: float
    never_taker: float
    non_causal: float
    beta_limit: float
    denominator: float

    @property
    def total(self) -> float:
        return self.complier + self.always_taker + self.never_taker + self.non_causal


def limit_decomposition(
    dgp: DgpSpec,
    kind: EstimatorKind | str,
    s: float = 1.0,
    limits: PopulationLimits | None = None,
) -> LimitDecomposition:
    """Split a probability limit into complier, always-taker, never-taker and
    non-causal parts.

    The split is indexed by ``s`` in [0, 1]; the total does not depend on it.
    ``s = 1`` removes the never-taker part and ``s = 0`` the always-taker
    part.  For the augmented estimator the decomposition has no never-taker
    part and ``s`` is fixed at 1.
    """
    kind = EstimatorKind.parse(kind)
    if kind is EstimatorKind.AUGMENTED:
        s = 1.0
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    limits = limits or population_params(dgp)
    d = limits.denominator[kind]
    if abs(d) < _ZERO:
        raise ZeroDenominator(f"E[T(Z - h(X))] vanishes for {kind.value}")
    w, p, h = dgp.probs, dgp.propensity, limits.h[kind]
    om, delta = dgp.strata, dgp.effects
    gap = p - h
    complier = np.sum(w * delta[:, CP] * om[:, CP] * (s * p + (1 - s) * h - h * p)) / d
    always = s * np.sum(w * delta[:, AT] * om[:, AT] * gap) / d
    never = (s - 1) * np.sum(w * delta[:, NT] * om[:, NT] * gap) / d
    level = s * dgp.mean_y0 + (1 - s) * dgp.mean_y1
    non_causal = np.sum(w * level * gap) / d
    return LimitDecomposition(
        kind,
        float(s),
        float(complier),
        float(always),
        float(never),
        float(non_causal),
        limits.beta_limit(kind),
        d,
    )


class WeightKind(enum.Enum):
    W_LAMBDA = "w_lambda"
    W_2SLS = "w_2sls"
    W_LAMBDA_UNNORMALIZED = "w_lambda_unnormalized"
    W_2SLS_UNNORMALIZED = "w_2sls_unnormalized"
    W_LAMBDA_S = "w_lambda_s"
    W_0 = "w_0"
    W_ALAMBDA = "w_alambda"

    @classmethod
    def parse(cls, value: "WeightKind | str") -> "WeightKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True, eq=False)
class WeightProfile:
    kind: WeightKind
    values: np.ndarray
    mean_weight: float
    effect: float  # E[Delta_CP(X) w(X)]
    s: float | None = None

    @property
    def negative_points(self) -> np.ndarray:
        return np.flatnonzero(self.values < 0)

    @property
    def has_negative(self) -> bool:
        return bool(np.any(self.values < 0))


def weight_profile(
    dgp: DgpSpec,
    kind: WeightKind | str,
    s: float | None = None,
    limits: PopulationLimits | None = None,
) -> WeightProfile:
    """Complier weights w(x) at each support point.

    All kinds share the numerator ``omega_CP(x) * q(x)``; ``q`` and the
    normalization depend on the kind:

    ========================  ==============================  ===========================
    kind                      q(x)                            normalization
    ========================  ==============================  ===========================
    W_LAMBDA                  p (1 - Lambda(x'theta0))        E[numerator]
    W_2SLS                    p (1 - x'gamma0)                E[numerator]
    W_LAMBDA_UNNORMALIZED     p (1 - Lambda(x'theta0))        + E[omega_AT (p - Lambda)]
    W_2SLS_UNNORMALIZED       p (1 - x'gamma0)                + E[omega_AT (p - x'gamma0)]
    W_LAMBDA_S                s p + (1 - s) L - L p           E[numerator]
    W_0                       p (1 - p)                       E[numerator]
    W_ALAMBDA                 p (1 - h_augmented)             E[numerator]
    ========================  ==============================  ===========================
    """
    kind = WeightKind.parse(kind)
    limits = limits or population_params(dgp)
    w, p, om = dgp.probs, dgp.propensity, dgp.strata
    h_l = limits.h[EstimatorKind.LOGIT_IV]
    h_2 = limits.h[EstimatorKind.TSLS]
    extra = 0.0
    if kind is WeightKind.W_LAMBDA_S:
        s = 1.0 if s is None else float(s)
        if not 0.0 <= s <= 1.0:
            raise ValueError("s must lie in [0, 1]")
        q = s * p + (1 - s) * h_l - h_l * p
    else:
        s = None
        if kind in (WeightKind.W_LAMBDA, WeightKind.W_LAMBDA_UNNORMALIZED):
            q = p * (1 - h_l)
        elif kind in (WeightKind.W_2SLS, WeightKind.W_2SLS_UNNORMALIZED):
            q = p * (1 - h_2)
        elif kind is WeightKind.W_0:
            q = p * (1 - p)
        else:
            q = p * (1 - limits.h[EstimatorKind.AUGMENTED])
        if kind is WeightKind.W_LAMBDA_UNNORMALIZED:
            extra = float(np.sum(w * om[:, AT] * (p - h_l)))
        elif kind is WeightKind.W_2SLS_UNNORMALIZED:
            extra = float(np.sum(w * om[:, AT] * (p - h_2)))
    numer = om[:, CP] * q
    norm = float(np.sum(w * numer)) + extra
    if abs(norm) < _ZERO:
        raise ZeroDenominator(f"weight normalization vanishes for {kind.value}")
    values = numer / norm
    values.setflags(write=False)
    return WeightProfile(
        kind,
        values,
        float(np.sum(w * values)),
        float(np.sum(w * dgp.effects[:, CP] * values)),
        s,
    )


def true_late(dgp: DgpSpec) -> float:
    """Average treatment effect among compliers."""
    share = float(np.sum(dgp.probs * dgp.strata[:, CP]))
    if share <= 0:
        raise NoCompliers("the DGP has no compliers")
    return float(np.sum(dgp.probs * dgp.strata[:, CP] * dgp.effects[:, CP]) / share)


def _projection_residual(dgp: DgpSpec, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sw = np.sqrt(dgp.probs)
    coef = np.linalg.lstsq(dgp.support * sw[:, None], target * sw, rcond=None)[0]
    return coef, target - dgp.support @ coef


def check_assumptions(
    dgp: DgpSpec,
    link: LinkFunction | str | None = None,
    tol: float = 1e-10,
) -> AssumptionTags:
    """Decide each identifying condition directly from the DGP primitives.

    Used to cross-check the tags a DGP declares.  The relaxed condition is
    settled exactly: both projection residuals are affine in ``s``, so the
    best common ``s`` minimizes a quadratic.
    """
    link = LinkFunction.parse(link or dgp.assumptions.first_stage_link)
    ey0 = dgp.mean_y_given_z(0)
    eta0, r_y0 = _projection_residual(dgp, ey0)
    psi0, r_t0 = _projection_residual(dgp, dgp.mean_t_given_z(0))
    _, r_y1 = _projection_residual(dgp, dgp.mean_y_given_z(1))
    _, r_t1 = _projection_residual(dgp, dgp.mean_t_given_z(1))
    scale_y = max(1.0, float(np.max(np.abs(ey0))))

    a3 = float(np.max(np.abs(r_y0))) <= tol * scale_y
    a4 = float(np.max(np.abs(r_t0))) <= tol
    # residual(s) = r1 + s (r0 - r1); stack outcome and treatment parts
    r1 = np.concatenate([r_y1 / scale_y, r_t1])
    dr = np.concatenate([r_y0 / scale_y, r_t0]) - r1
    denom = float(dr @ dr)
    s_best = float(np.clip(-(r1 @ dr) / denom, 0.0, 1.0)) if denom > 0 else 1.0
    a5 = float(np.max(np.abs(r1 + s_best * dr))) <= tol

    lim = population_params(dgp, link)
    a6 = float(np.max(np.abs(lim.h[EstimatorKind.LOGIT_IV] - dgp.propensity))) <= tol
    fitted_t0 = link.value_of(dgp.support @ lim.psi_bar0)
    a7 = float(np.max(np.abs(fitted_t0 - dgp.strata[:, AT]))) <= tol
    return AssumptionTags(
        linear_means=a3,
        linear_first_stage=a4,
        relaxed_linear=a5,
        logit_propensity=a6,
        index_first_stage=a7,
        first_stage_link=link,
        s=s_best if a5 else None,
        eta0=tuple(eta0) if a3 else None,
        psi0=tuple(lim.psi_bar0) if a7 else (tuple(psi0) if a4 else None),
    )


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    kind: EstimatorKind
    n: int
    reps: int
    master_seed: int
    values: np.ndarray  # per replication, nan where the estimator failed
    failures: tuple[tuple[int, str], ...]

    @property
    def ok(self) -> np.ndarray:
        return self.values[np.isfinite(self.values)]

    @property
    def mean(self) -> float:
        ok = self.ok
        return float(ok.mean()) if ok.size else float("nan")

    @property
    def variance(self) -> float:
        ok = self.ok
        return float(ok.var(ddof=1)) if ok.size > 1 else float("nan")

    @property
    def mc_se(self) -> float:
        ok = self.ok
        return float(np.sqrt(self.variance / ok.size)) if ok.size > 1 else float("nan")


def mc_study(
    dgp: DgpSpec,
    kinds: Sequence[EstimatorKind | str],
    n: int,
    reps: int,
    master_seed: int = 0,
    options: FitOptions | None = None,
    link: LinkFunction | str = LinkFunction.LOGIT,
) -> dict:
    """Run several estimators on the same ``reps`` samples.

    Replication ``r`` uses the sample seeded ``(master_seed, r)``.  A failing
    replication is recorded with its reason code and does not stop the run.
    """
    if n < 1 or reps < 1:
        raise ValueError("n and reps must be at least 1")
    kinds = [EstimatorKind.parse(k) for k in kinds]
    values = {k: np.full(reps, np.nan) for k in kinds}
    failures = {k: [] for k in kinds}
    for r in range(reps):
        try:
            data = sample(dgp, n, (master_seed, r))
        except HetivError as exc:
            for k in kinds:
                failures[k].append((r, exc.reason))
            continue
        for k in kinds:
            try:
                values[k][r] = estimate(data, k, options, link).beta
            except HetivError as exc:
                failures[k].append((r, exc.reason))
    return {k: MonteCarloResult(k, n, reps, master_seed, values[k], tuple(failures[k])) for k in kinds}


def mc_oracle(
    dgp: DgpSpec,
    kind: EstimatorKind | str,
    n: int,
    reps: int,
    master_seed: int = 0,
    options: FitOptions | None = None,
    link: LinkFunction | str = LinkFunction.LOGIT,
) -> MonteCarloResult:
    kind = EstimatorKind.parse(kind)
    return mc_study(dgp, [kind], n, reps, master_seed, options, link)[kind]
