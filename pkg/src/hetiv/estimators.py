"""Point estimators for a binary treatment with a binary instrument.

Three ratio estimators share one template: residualize the instrument on the
controls, then divide the outcome-residual moment by the treatment-residual
moment.  They differ only in how the instrument is residualized:

* ``logit_iv``          logit regression of Z on X
* ``tsls``              linear regression of Z on X (two-stage least squares)
* ``augmented_logit_iv`` logit regression of Z on X and a fitted control-arm
  treatment propensity
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateDenominator,
    EmptyControlArm,
    InvalidDataset,
)
from .numerics import (
    FitOptions,
    LinkFunction,
    MleFit,
    fit_binary_mle,
    fit_ols,
    gram_condition,
)

__all__ = [
    "EstimatorKind",
    "Dataset",
    "RegularityDiagnostics",
    "IvEstimate",
    "AugmentedEstimate",
    "WeakInstrumentWarning",
    "logit_iv",
    "tsls",
    "augmented_logit_iv",
    "estimate",
]

WEAK_THRESHOLD = 1e-3
DEGENERATE_THRESHOLD = 1e-12


class EstimatorKind(enum.Enum):
    LOGIT_IV = "logit_iv"
    TSLS = "tsls"
    AUGMENTED = "augmented"

    @classmethod
    def parse(cls, value: "EstimatorKind | str") -> "EstimatorKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"logit": "logit_iv", "2sls": "tsls", "augmented_logit_iv": "augmented", "alogit": "augmented"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown estimator {value!r}") from None


class WeakInstrumentWarning(RuntimeWarning):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Outcome ``y``, treatment ``t``, instrument ``z`` and controls ``x``.

    ``x`` is used exactly as given; set ``has_intercept`` when its first
    column is the constant (checked) or build with :meth:`from_arrays`,
    which prepends one.
    """

    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    x: np.ndarray
    has_intercept: bool = False

    def __post_init__(self):
        y = _frozen(self.y)
        t = _frozen(self.t)
        z = _frozen(self.z)
        x = _frozen(self.x)
        if x.ndim == 1:
            x = _frozen(x[:, None])
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x", x)
        n = y.shape[0]
        if y.ndim != 1 or t.shape != (n,) or z.shape != (n,) or x.ndim != 2 or x.shape[0] != n:
            raise InvalidDataset("y, t, z must be vectors and x an n x p matrix with matching n")
        p = x.shape[1]
        if n < p + 2:
            raise InvalidDataset(f"need at least p + 2 = {p + 2} rows, got {n}")
        for name, v in (("y", y), ("x", x)):
            if not np.all(np.isfinite(v)):
                raise InvalidDataset(f"{name} contains non-finite values")
        for name, v in (("t", t), ("z", z)):
            if not np.all((v == 0) | (v == 1)):
                raise InvalidDataset(f"{name} must be binary (0/1)")
        nz = z.sum()
        if not 0 < nz < n:
            raise InvalidDataset("both instrument arms must be present")
        if self.has_intercept and not np.all(x[:, 0] == 1.0):
            raise InvalidDataset("has_intercept is set but column 0 is not identically one")

    @classmethod
    def from_arrays(cls, y, t, z, x=None, add_intercept: bool = True) -> "Dataset":
        y = np.asarray(y, dtype=float)
        n = y.shape[0]
        if x is None:
            x = np.empty((n, 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if add_intercept:
            x = np.column_stack([np.ones(n), x])
        return cls(y=y, t=t, z=z, x=x, has_intercept=add_intercept)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.y[rows], self.t[rows], self.z[rows], self.x[rows], self.has_intercept)

    def replace(self, **changes) -> "Dataset":
        fields = dict(y=self.y, t=self.t, z=self.z, x=self.x, has_intercept=self.has_intercept)
        fields.update(changes)
        return Dataset(**fields)


@dataclass(frozen=True)
class RegularityDiagnostics:
    denominator_abs: float
    min_arm_counts: tuple[int, int]  # (rows with z = 0, rows with z = 1)
    first_stage_condition: float
    weak_flag: bool
    weak_threshold: float = WEAK_THRESHOLD


@dataclass(frozen=True, eq=False)
class IvEstimate:
    kind: EstimatorKind
    beta: float
    first_stage: MleFit | np.ndarray
    fitted_instrument_residuals: np.ndarray
    denominator: float
    numerator: float
    diagnostics: RegularityDiagnostics


@dataclass(frozen=True, eq=False)
class AugmentedEstimate:
    beta: float
    psi_fit: MleFit
    augmented_fit: MleFit
    theta: np.ndarray
    kappa: float
    c_hat: np.ndarray
    fitted_instrument_residuals: np.ndarray
    denominator: float
    numerator: float
    collinearity_fallback: bool
    diagnostics: RegularityDiagnostics
    kind: EstimatorKind = field(default=EstimatorKind.AUGMENTED)


def _ratio(data: Dataset, residuals: np.ndarray, condition: float):
    num = float(data.y @ residuals)
    den = float(data.t @ residuals)
    n = data.n
    if abs(den) / n < DEGENERATE_THRESHOLD:
        raise DegenerateDenominator(
            f"treatment is (numerically) uncorrelated with the instrument residual: |denominator|/n = {abs(den) / n:.3g}"
        )
    n1 = int(data.z.sum())
    weak = abs(den) / n < WEAK_THRESHOLD
    if weak:
        warnings.warn(
            f"weak instrument: |denominator|/n = {abs(den) / n:.3g} below {WEAK_THRESHOLD}",
            WeakInstrumentWarning,
            stacklevel=3,
        )
    diag = RegularityDiagnostics(
        denominator_abs=abs(den),
        min_arm_counts=(n - n1, n1),
        first_stage_condition=float(condition),
        weak_flag=weak,
    )
    return num / den, num, den, diag


def logit_iv(data: Dataset, options: FitOptions | None = None) -> IvEstimate:
    """Logit-based IV: instrument residualized by a logit fit of Z on X."""
    fit = fit_binary_mle(data.x, data.z, LinkFunction.LOGIT, options=options)
    resid = data.z - fit.predict(data.x)
    beta, num, den, diag = _ratio(data, resid, fit.condition_number)
    return IvEstimate(EstimatorKind.LOGIT_IV, beta, fit, _frozen(resid), den, num, diag)


def tsls(data: Dataset, options: FitOptions | None = None) -> IvEstimate:
    options = options or FitOptions()
    gamma = fit_ols(data.x, data.z, options.condition_limit)
    resid = data.z - data.x @ gamma
    beta, num, den, diag = _ratio(data, resid, gram_condition(data.x))
    return IvEstimate(EstimatorKind.TSLS, beta, _frozen(gamma), _frozen(resid), den, num, diag)


def augmented_logit_iv(
    data: Dataset,
    link: LinkFunction | str = LinkFunction.LOGIT,
    options: FitOptions | None = None,
) -> AugmentedEstimate:
    """Augmented logit-based IV.

    Fits ``link`` for T on X over the Z = 0 rows, appends the fitted
    probabilities as an extra regressor in the logit of Z, and forms the
    ratio with the resulting residuals.  When the extra column is collinear
    with X (for example with intercept-only X) the coefficient on it is fixed
    at zero and ``collinearity_fallback`` is set.
    """
    options = options or FitOptions()
    link = LinkFunction.parse(link)
    control = data.z == 0
    if control.sum() < data.p:
        raise EmptyControlArm(f"only {int(control.sum())} rows with z = 0 for {data.p} coefficients")
    psi_fit = fit_binary_mle(data.x, data.t, link, subsample_mask=control, options=options)
    c_hat = link.value_of(data.x @ psi_fit.coefficients)
    w = np.column_stack([data.x, c_hat])
    cond = gram_condition(w)
    if cond <= options.condition_limit:
        aug = fit_binary_mle(w, data.z, LinkFunction.LOGIT, options=options)
        theta = aug.coefficients[:-1]
        kappa = float(aug.coefficients[-1])
        fallback = False
    else:
        aug = fit_binary_mle(data.x, data.z, LinkFunction.LOGIT, options=options)
        theta = aug.coefficients
        kappa = 0.0
        fallback = True
    index = data.x @ theta + c_hat * kappa
    resid = data.z - LinkFunction.LOGIT.value_of(index)
    beta, num, den, diag = _ratio(data, resid, aug.condition_number)
    return AugmentedEstimate(
        beta=beta,
        psi_fit=psi_fit,
        augmented_fit=aug,
        theta=_frozen(theta),
        kappa=kappa,
        c_hat=_frozen(c_hat),
        fitted_instrument_residuals=_frozen(resid),
        denominator=den,
        numerator=num,
        collinearity_fallback=fallback,
        diagnostics=diag,
    )


def estimate(
    data: Dataset,
    kind: EstimatorKind | str,
    options: FitOptions | None = None,
    link: LinkFunction | str = LinkFunction.LOGIT,
) -> IvEstimate | AugmentedEstimate:
    kind = EstimatorKind.parse(kind)
    if kind is EstimatorKind.LOGIT_IV:
        return logit_iv(data, options)
    if kind is EstimatorKind.TSLS:
        return tsls(data, options)
    return augmented_logit_iv(data, link, options)
