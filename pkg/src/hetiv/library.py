"""Bundled data-generating processes.

Each builder returns a :class:`~hetiv.dgp.DgpSpec`; the same specs ship as
TOML documents under ``hetiv/data`` (regenerate them with
``python -m hetiv.library``).  All but the saturated design put mass on
x = 0, ..., 4 with controls (1, x).

========== ================================================================
name       construction
========== ================================================================
dgp_a      E[Y | X, Z = 0] and E[T(0) | X] linear, non-logit propensity
dgp_b      logit propensity, everything else nonlinear
dgp_c      logit control-arm take-up and linear E[Y | X, Z = 0];
           non-logit propensity and nonlinear take-up share
dgp_negweights  linear means and take-up, steep propensity that pushes the
           linear fit of E[Z | X] above one at the top support point
dgp_saturated   three exclusive cells with dummy controls, no intercept
dgp_power  hump-shaped propensity, nonlinear outcomes and take-up; the
           two logit-type estimators have very different limits
dgp_constant    constant effect 2 for every stratum, linear baseline
dgp_nocompliers no compliers anywhere
========== ================================================================
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from .dgp import AT, CP, NT, AssumptionTags, DgpSpec
from .numerics import logistic

__all__ = ["BUNDLED", "build", "load_bundled", "bundled_names"]

_X = np.arange(5.0)
_SUPPORT = np.column_stack([np.ones(5), _X])
_PROBS = np.array([0.15, 0.2, 0.3, 0.2, 0.15])


def _logistic(v: np.ndarray) -> np.ndarray:
    return np.array([logistic(float(t)) for t in v])


def _strata(always: np.ndarray, complier: np.ndarray) -> np.ndarray:
    always = np.asarray(always, dtype=float)
    complier = np.asarray(complier, dtype=float)
    return np.column_stack([1.0 - always - complier, complier, always])


def _means(nt0, nt1, cp0, cp1, at0, at1) -> np.ndarray:
    m = np.empty((len(nt0), 3, 2))
    m[:, NT, 0], m[:, NT, 1] = nt0, nt1
    m[:, CP, 0], m[:, CP, 1] = cp0, cp1
    m[:, AT, 0], m[:, AT, 1] = at0, at1
    return m


def _complier_y0_for_linear_control_arm(strata, nt0, at1, target) -> np.ndarray:
    """Complier Y(0) mean that makes E[Y | X, Z = 0] equal ``target``."""
    return (target - strata[:, NT] * nt0 - strata[:, AT] * at1) / strata[:, CP]


def dgp_a() -> DgpSpec:
    strata = _strata(0.10 + 0.04 * _X, [0.55, 0.5, 0.5, 0.45, 0.4])
    nt0 = 1.0 + 0.2 * _X
    at1 = 2.0 + 0.3 * _X
    cp0 = _complier_y0_for_linear_control_arm(strata, nt0, at1, 0.5 + 0.4 * _X)
    cp1 = cp0 + np.array([1.0, 1.5, 2.5, 2.0, 3.0])
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=np.array([0.3, 0.55, 0.6, 0.5, 0.7]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 0.5, cp0, cp1, at1 - 1.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(
            linear_means=True, linear_first_stage=True, relaxed_linear=True, s=1.0, eta0=(0.5, 0.4), psi0=(0.1, 0.04)
        ),
        name="dgp_a",
        covariate_names=("const", "x"),
        description="linear control-arm outcome mean and take-up; non-logit instrument propensity",
    )


def dgp_b() -> DgpSpec:
    theta = (-0.5, 0.4)
    strata = _strata([0.05, 0.08, 0.15, 0.30, 0.50], [0.6, 0.55, 0.5, 0.4, 0.3])
    nt0 = np.array([0.0, 1.5, 0.5, 2.5, 0.0])
    at1 = np.array([3.0, 1.0, 4.0, 0.5, 2.0])
    cp0 = np.array([1.0, -0.5, 2.0, 0.0, 3.0])
    cp1 = cp0 + np.array([0.5, 3.0, 1.0, 4.0, 1.5])
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=_logistic(theta[0] + theta[1] * _X),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 1.0, cp0, cp1, at1 - 2.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(logit_propensity=True),
        name="dgp_b",
        covariate_names=("const", "x"),
        description="logit instrument propensity; nonlinear outcome means and take-up",
    )


def dgp_c() -> DgpSpec:
    psi = (-2.5, 0.8)
    strata = _strata(_logistic(psi[0] + psi[1] * _X), [0.55, 0.5, 0.45, 0.35, 0.25])
    nt0 = np.array([1.0, 0.0, 2.0, 1.0, 3.0])
    at1 = np.array([2.0, 4.0, 1.0, 3.0, 2.5])
    cp0 = _complier_y0_for_linear_control_arm(strata, nt0, at1, 1.0 + 0.3 * _X)
    cp1 = cp0 + np.array([0.5, 1.0, 3.0, 1.5, 4.0])
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=np.array([0.3, 0.55, 0.6, 0.5, 0.7]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 0.5, cp0, cp1, at1 - 1.5, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(linear_means=True, index_first_stage=True, eta0=(1.0, 0.3), psi0=psi),
        name="dgp_c",
        covariate_names=("const", "x"),
        description="logit control-arm take-up and linear control-arm outcome mean; non-logit propensity",
    )


def dgp_negweights() -> DgpSpec:
    strata = _strata(0.05 + 0.05 * _X, [0.6, 0.6, 0.55, 0.5, 0.5])
    nt0 = 0.5 * _X
    at1 = 1.0 + 0.5 * _X
    cp0 = _complier_y0_for_linear_control_arm(strata, nt0, at1, 0.2 + 0.5 * _X)
    cp1 = cp0 + np.array([1.0, 2.0, 1.5, 2.5, 3.0])
    return DgpSpec(
        support=_SUPPORT,
        probs=np.full(5, 0.2),
        propensity=np.array([0.02, 0.05, 0.95, 0.97, 0.98]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 1.0, cp0, cp1, at1 - 1.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(
            linear_means=True, linear_first_stage=True, relaxed_linear=True, s=1.0, eta0=(0.2, 0.5), psi0=(0.05, 0.05)
        ),
        name="dgp_negweights",
        covariate_names=("const", "x"),
        description="linear means and take-up; the linear propensity fit exceeds one at x = 4",
    )


def dgp_saturated() -> DgpSpec:
    support = np.eye(3)
    strata = _strata([0.1, 0.2, 0.3], [0.5, 0.4, 0.45])
    nt0 = np.array([0.0, 1.0, 2.0])
    at1 = np.array([3.0, 1.0, 0.5])
    cp0 = np.array([1.0, 2.0, -1.0])
    cp1 = cp0 + np.array([1.0, 3.0, 2.0])
    return DgpSpec(
        support=support,
        probs=np.array([0.3, 0.3, 0.4]),
        propensity=np.array([0.2, 0.5, 0.7]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 1.0, cp0, cp1, at1 - 1.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(
            linear_means=True,
            linear_first_stage=True,
            relaxed_linear=True,
            logit_propensity=True,
            index_first_stage=True,
            s=1.0,
        ),
        name="dgp_saturated",
        covariate_names=("cell_a", "cell_b", "cell_c"),
        description="three exclusive cells with dummy controls and no intercept",
    )


def dgp_power() -> DgpSpec:
    strata = _strata([0.05, 0.1, 0.3, 0.5, 0.6], [0.6, 0.6, 0.5, 0.4, 0.3])
    low = np.array([0.0, 2.0, 0.0, 2.0, 0.0])
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=np.array([0.05, 0.3, 0.9, 0.3, 0.05]),
        strata=strata,
        outcome_means=_means(low, low, low, np.array([4.0, 2.0, 4.0, 2.0, 4.0]), low + 1.0, low + 1.0),
        outcome_noise_sd=0.5,
        assumptions=AssumptionTags(),
        name="dgp_power",
        covariate_names=("const", "x"),
        description="hump-shaped propensity far from any logit; nonlinear outcome means and take-up",
    )


def dgp_constant() -> DgpSpec:
    strata = _strata(0.1 + 0.05 * _X, [0.5, 0.5, 0.45, 0.45, 0.4])
    nt0 = 1.0 + 0.5 * _X
    at1 = 2.0 + 0.5 * _X
    cp0 = _complier_y0_for_linear_control_arm(strata, nt0, at1, 0.5 + 0.6 * _X)
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=np.array([0.35, 0.5, 0.6, 0.45, 0.65]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 2.0, cp0, cp0 + 2.0, at1 - 2.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(
            linear_means=True, linear_first_stage=True, relaxed_linear=True, s=1.0, eta0=(0.5, 0.6), psi0=(0.1, 0.05)
        ),
        name="dgp_constant",
        covariate_names=("const", "x"),
        description="treatment effect 2 for every unit; linear control-arm outcome mean",
    )


def dgp_nocompliers() -> DgpSpec:
    strata = _strata([0.2, 0.3, 0.4, 0.5, 0.6], np.zeros(5))
    nt0 = _X.copy()
    at1 = 1.0 + _X
    return DgpSpec(
        support=_SUPPORT,
        probs=_PROBS,
        propensity=np.array([0.3, 0.4, 0.5, 0.6, 0.7]),
        strata=strata,
        outcome_means=_means(nt0, nt0 + 1.0, nt0, nt0 + 1.0, at1 - 1.0, at1),
        outcome_noise_sd=1.0,
        assumptions=AssumptionTags(
            linear_means=True, linear_first_stage=True, relaxed_linear=True, s=1.0, eta0=(0.2, 1.1), psi0=(0.2, 0.1)
        ),
        name="dgp_nocompliers",
        covariate_names=("const", "x"),
        description="no compliers; treatment never responds to the instrument",
    )


BUNDLED = {
    f.__name__: f
    for f in (dgp_a, dgp_b, dgp_c, dgp_negweights, dgp_saturated, dgp_power, dgp_constant, dgp_nocompliers)
}


def bundled_names() -> list[str]:
    return list(BUNDLED)


def build(name: str) -> DgpSpec:
    try:
        return BUNDLED[name]()
    except KeyError:
        raise KeyError(f"unknown bundled DGP {name!r}; choose from {', '.join(BUNDLED)}") from None


def load_bundled(name: str) -> DgpSpec:
    """Parse the shipped TOML document for ``name``."""
    from .config import loads_dgp

    text = resources.files("hetiv.data").joinpath(f"{name}.toml").read_text(encoding="utf-8")
    return loads_dgp(text, source=f"{name}.toml")


def _write_all(directory) -> None:
    from pathlib import Path

    from .config import dumps_dgp

    directory = Path(directory)
    for name, builder in BUNDLED.items():
        (directory / f"{name}.toml").write_text(dumps_dgp(builder()), encoding="utf-8")


if __name__ == "__main__":
    _write_all(resources.files("hetiv.data"))
