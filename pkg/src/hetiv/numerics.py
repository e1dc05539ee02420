"""Link functions, dense solves and binary-response maximum likelihood.

Everything here is a pure function of its arguments.  The estimators, the
inference code and the population oracle all route their linear algebra and
their likelihood maximizations through this module.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import optimize, special

from .errors import (
    EmptySubsample,
    IllConditioned,
    NoConvergence,
    NotPositiveDefinite,
    RankDeficient,
    Separation,
)

__all__ = [
    "LinkFunction",
    "FitOptions",
    "MleFit",
    "logistic",
    "link_eval",
    "solve_spd",
    "gram_condition",
    "fit_ols",
    "fit_binary_mle",
    "fit_weighted_binary",
]

_EPS = np.finfo(float).eps
# fitted probabilities this close to 0 or 1 trigger the separation LP
_EXTREME_PROB = 1e-8
_DIVERGED_NORM = 1e8


class LinkFunction(enum.Enum):
    LOGIT = "logit"
    PROBIT = "probit"
    CLAMPED_LINEAR = "clamped"

    @classmethod
    def parse(cls, value: "LinkFunction | str") -> "LinkFunction":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"clampedlinear": "clamped", "clamped_linear": "clamped", "linear": "clamped"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown link function {value!r}") from None

    def value_of(self, t):
        """Evaluate the link at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        if self is LinkFunction.LOGIT:
            return logistic(t)
        if self is LinkFunction.PROBIT:
            return special.ndtr(t)
        return np.clip(t, 0.0, 1.0)

    def complement_of(self, t):
        """``1 - link(t)`` without cancellation in the upper tail."""
        t = np.asarray(t, dtype=float)
        if self is LinkFunction.LOGIT:
            return logistic(-t)
        if self is LinkFunction.PROBIT:
            return special.ndtr(-t)
        return 1.0 - np.clip(t, 0.0, 1.0)

    def derivative_of(self, t):
        t = np.asarray(t, dtype=float)
        if self is LinkFunction.LOGIT:
            v = logistic(t)
            return v * logistic(-t)
        if self is LinkFunction.PROBIT:
            return np.exp(-0.5 * t * t) / np.sqrt(2.0 * np.pi)
        # derivative is zero at the kinks by convention
        return ((t > 0.0) & (t < 1.0)).astype(float)


@dataclass(frozen=True)
class FitOptions:
    """Tolerances for the Newton iterations.

    ``gradient_tolerance`` bounds the sup-norm of the *average* score, i.e. the
    gradient of the summed log-likelihood divided by ``max(1, n)``.
    """

    gradient_tolerance: float = 1e-10
    max_iterations: int = 100
    step_halving_limit: int = 30
    condition_limit: float = 1e12

    def __post_init__(self):
        for name in ("gradient_tolerance", "max_iterations", "step_halving_limit", "condition_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FitOptions.{name} must be strictly positive")


@dataclass(frozen=True)
class MleFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    negative_hessian: np.ndarray
    log_likelihood: float
    condition_number: float
    link: LinkFunction = LinkFunction.LOGIT
    log_likelihood_path: tuple[float, ...] = ()  # after each accepted step, starting point first

    def linear_index(self, design: np.ndarray) -> np.ndarray:
        return np.asarray(design, dtype=float) @ self.coefficients

    def predict(self, design: np.ndarray) -> np.ndarray:
        return self.link.value_of(self.linear_index(design))


def logistic(t):
    """exp(t) / (1 + exp(t)), evaluated without overflow.

    Works elementwise on arrays; a Python float in gives a float out.
    """
    arr = np.asarray(t, dtype=float)
    out = np.empty_like(arr)
    neg = arr < 0
    e = np.exp(arr[neg])
    out[neg] = e / (1.0 + e)
    out[~neg] = 1.0 / (1.0 + np.exp(-arr[~neg]))
    if out.ndim == 0:
        return float(out)
    return out


def link_eval(link: LinkFunction | str, t: float) -> tuple[float, float]:
    link = LinkFunction.parse(link)
    return float(link.value_of(t)), float(link.derivative_of(t))


def gram_condition(design: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Condition number of the column-equilibrated (weighted) Gram matrix."""
    x = np.asarray(design, dtype=float)
    if weights is None:
        gram = x.T @ x
    else:
        gram = (x * np.asarray(weights, dtype=float)[:, None]).T @ x
    return _equilibrated_condition(gram)[0]


def _equilibrated_condition(matrix: np.ndarray) -> tuple[float, float, np.ndarray]:
    diag = np.diag(matrix)
    if np.any(diag <= 0) or not np.all(np.isfinite(matrix)):
        return np.inf, -np.inf, np.ones_like(diag)
    scale = 1.0 / np.sqrt(diag)
    scaled = matrix * scale[:, None] * scale[None, :]
    eig = np.linalg.eigvalsh(scaled)
    lo, hi = eig[0], eig[-1]
    cond = hi / lo if lo > 0 else np.inf
    return cond, lo / hi, scale


def solve_spd(matrix, rhs, condition_limit: float = 1e12) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` for symmetric positive definite ``matrix``.

    The matrix is Jacobi-equilibrated before an eigenvalue screen and a
    Cholesky solve; ``rhs`` may be a vector or a matrix of right-hand sides.
    """
    a = np.asarray(matrix, dtype=float)
    b = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if b.shape[0] != a.shape[0]:
        raise ValueError("rhs has incompatible leading dimension")
    a = 0.5 * (a + a.T)
    diag = np.diag(a)
    if np.any(diag < 0):
        raise NotPositiveDefinite("matrix has a negative diagonal entry")
    if np.any(diag == 0):
        raise IllConditioned("matrix has a zero diagonal entry")
    cond, rel_min, scale = _equilibrated_condition(a)
    if rel_min < -64 * _EPS:
        raise NotPositiveDefinite(f"matrix has a negative eigenvalue (relative {rel_min:.3g})")
    if cond > condition_limit:
        raise IllConditioned(f"condition number {cond:.3g} exceeds {condition_limit:.3g}")
    scaled = a * scale[:, None] * scale[None, :]
    factor = scipy.linalg.cho_factor(scaled, lower=True, check_finite=False)
    sb = b * (scale[:, None] if b.ndim == 2 else scale)
    y = scipy.linalg.cho_solve(factor, sb, check_finite=False)
    return y * (scale[:, None] if b.ndim == 2 else scale)


def fit_ols(design, response, condition_limit: float = 1e12) -> np.ndarray:
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("design must be n x p and response length n")
    n, p = x.shape
    if n < p:
        raise RankDeficient(f"{n} rows cannot identify {p} coefficients")
    gram = x.T @ x
    try:
        coef = solve_spd(gram, x.T @ y, condition_limit)
        # one step of iterative refinement tightens residual orthogonality
        coef = coef + solve_spd(gram, x.T @ (y - x @ coef), condition_limit)
    except (IllConditioned, NotPositiveDefinite) as exc:
        raise RankDeficient(f"design is numerically rank deficient: {exc}") from exc
    return coef


# --- binary-response likelihood -------------------------------------------------


def _log_probs(link: LinkFunction, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log(link(eta)) and log(1 - link(eta))."""
    if link is LinkFunction.LOGIT:
        return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)
    if link is LinkFunction.PROBIT:
        return special.log_ndtr(eta), special.log_ndtr(-eta)
    mu = np.clip(eta, 1e-12, 1.0 - 1e-12)
    return np.log(mu), np.log1p(-mu)


def _score_weights(link: LinkFunction, eta: np.ndarray, y: np.ndarray):
    """Per-row score multiplier and Fisher weight.

    The score of row i is ``mult_i * x_i`` and the expected information is
    ``sum_i info_i x_i x_i'``.  For the logit link these are the exact
    gradient and negative Hessian.
    """
    if link is LinkFunction.LOGIT:
        mu = logistic(eta)
        return y - mu, mu * logistic(-eta)
    if link is LinkFunction.PROBIT:
        log_pdf = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
        log_mu, log_cmu = special.log_ndtr(eta), special.log_ndtr(-eta)
        ratio = np.exp(log_pdf - log_mu - log_cmu)  # pdf / (mu (1 - mu))
        mu = np.exp(log_mu)
        pdf = np.exp(log_pdf)
        return (y - mu) * ratio, pdf * ratio
    inside = (eta > 0.0) & (eta < 1.0)
    mu = np.clip(eta, 0.0, 1.0)
    var = np.where(inside, mu * (1.0 - mu), 1.0)
    return np.where(inside, (y - mu) / var, 0.0), np.where(inside, 1.0 / var, 0.0)


def _check_separation(x: np.ndarray, y: np.ndarray) -> bool:
    """Linear-programming test for (quasi-)complete separation.

    Looks for a direction b with (2y-1) x'b >= 0 on every row and strictly
    positive on at least one; rows with fractional response must have x'b = 0.
    """
    pos = y >= 1.0
    neg = y <= 0.0
    mid = ~(pos | neg)
    sign = np.where(pos, 1.0, -1.0)
    signed = x[~mid] * sign[~mid, None]
    scale = max(1.0, float(np.max(np.abs(x))))
    p = x.shape[1]
    res = optimize.linprog(
        c=-signed.sum(axis=0),
        A_ub=-signed if signed.size else None,
        b_ub=np.zeros(signed.shape[0]) if signed.size else None,
        A_eq=x[mid] if mid.any() else None,
        b_eq=np.zeros(int(mid.sum())) if mid.any() else None,
        bounds=[(-1.0, 1.0)] * p,
        method="highs",
    )
    if res.status != 0:
        return False
    return -res.fun > 1e-7 * scale * max(1, signed.shape[0]) ** 0.5


def _start_values(x: np.ndarray, y: np.ndarray, w: np.ndarray, link: LinkFunction) -> np.ndarray:
    p = x.shape[1]
    if link is not LinkFunction.CLAMPED_LINEAR:
        return np.zeros(p)
    # clamped link: blend an OLS fit with a constant-0.5 fit until all rows are interior
    sw = np.sqrt(w)
    ybar = float(np.sum(w * y) / np.sum(w))
    target_const = np.full(x.shape[0], 0.5 if not 0 < ybar < 1 else ybar)
    const_coef = np.linalg.lstsq(x * sw[:, None], target_const * sw, rcond=None)[0]
    ols_coef = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)[0]
    active = w > 0
    for lam in (1.0, 0.5, 0.25, 0.1, 0.0):
        coef = lam * ols_coef + (1 - lam) * const_coef
        eta = x[active] @ coef
        if np.all((eta > 1e-3) & (eta < 1 - 1e-3)):
            return coef
    return const_coef


_POLISH_STEPS = 2


def _polish(link, x, y, w, beta, ll, grad, info, loglik, path):
    """Full Newton steps past the stopping rule, kept while the score shrinks.

    Quadratic convergence makes these nearly free, and they push ratio
    statistics built on the fitted values to machine precision.
    """
    for _ in range(_POLISH_STEPS):
        try:
            candidate = beta + solve_spd(info, grad, condition_limit=1e16)
        except (IllConditioned, NotPositiveDefinite):
            break
        ll_new = loglik(candidate)
        if not np.isfinite(ll_new) or ll_new < ll:
            break
        mult, fisher = _score_weights(link, x @ candidate, y)
        grad_new = x.T @ (w * mult)
        if not np.max(np.abs(grad_new)) < np.max(np.abs(grad)):
            break
        beta, ll, grad = candidate, ll_new, grad_new
        info = (x * (w * fisher)[:, None]).T @ x
        path.append(ll)
    return beta, ll, grad, info


def fit_weighted_binary(
    design,
    response,
    weights,
    link: LinkFunction | str = LinkFunction.LOGIT,
    options: FitOptions | None = None,
) -> MleFit:
    """Maximize sum_i w_i [y_i log F(x_i'b) + (1 - y_i) log(1 - F(x_i'b))].

    Responses may be fractional in [0, 1]; this is the route used for exact
    population objectives, where w_i are support probabilities and y_i the
    conditional means.  Uses Newton-Raphson (Fisher scoring for non-logit
    links) with step halving.
    """
    options = options or FitOptions()
    link = LinkFunction.parse(link)
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],) or w.shape != y.shape:
        raise ValueError("design must be n x p with response and weights of length n")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("responses must lie in [0, 1]")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    active = w > 0
    x_act, y_act, w_act = x[active], y[active], w[active]
    n_act, p = x_act.shape
    if n_act == 0:
        raise EmptySubsample("no rows with positive weight")
    if n_act < p:
        raise RankDeficient(f"{n_act} active rows cannot identify {p} coefficients")
    cond = gram_condition(x_act, w_act)
    if not cond <= options.condition_limit:
        raise RankDeficient(f"design condition number {cond:.3g} exceeds {options.condition_limit:.3g}")

    total_w = float(w_act.sum())
    grad_scale = max(1.0, total_w)

    def loglik(beta):
        eta = x_act @ beta
        lp, lq = _log_probs(link, eta)
        return float(np.sum(w_act * (y_act * lp + (1.0 - y_act) * lq)))

    beta = _start_values(x_act, y_act, w_act, link)
    ll = loglik(beta)
    path = [ll]
    converged = False
    stalled = False
    iterations = 0
    grad = np.zeros(p)
    info = np.eye(p)
    for iterations in range(options.max_iterations + 1):
        mult, fisher = _score_weights(link, x_act @ beta, y_act)
        grad = x_act.T @ (w_act * mult)
        info = (x_act * (w_act * fisher)[:, None]).T @ x_act
        if np.max(np.abs(grad)) / grad_scale <= options.gradient_tolerance:
            converged = True
            beta, ll, grad, info = _polish(link, x_act, y_act, w_act, beta, ll, grad, info, loglik, path)
            break
        if iterations == options.max_iterations or np.linalg.norm(beta) > _DIVERGED_NORM:
            break
        try:
            step = solve_spd(info, grad, condition_limit=1e16)
        except (IllConditioned, NotPositiveDefinite):
            stalled = True
            break
        t = 1.0
        accepted = False
        for _ in range(options.step_halving_limit + 1):
            candidate = beta + t * step
            ll_new = loglik(candidate)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stalled = True
            break
        if ll_new - ll <= _EPS * max(1.0, abs(ll)) and t < 1.0:
            # no measurable progress along a damped step: the gradient has stalled
            beta = candidate
            ll = ll_new
            path.append(ll)
            stalled = True
            break
        beta, ll = candidate, ll_new
        path.append(ll)

    eta = x_act @ beta
    mu = link.value_of(eta)
    extreme = np.any(np.minimum(mu, link.complement_of(eta)) < _EXTREME_PROB)
    if not converged or extreme or np.linalg.norm(beta) > _DIVERGED_NORM:
        if _check_separation(x_act, y_act):
            raise Separation("responses are (quasi-)completely separated by the design; no finite maximizer")
    if not converged:
        if stalled:
            # recheck: a stalled iteration can still satisfy the tolerance after the last step
            mult, fisher = _score_weights(link, eta, y_act)
            grad = x_act.T @ (w_act * mult)
            info = (x_act * (w_act * fisher)[:, None]).T @ x_act
            converged = bool(np.max(np.abs(grad)) / grad_scale <= options.gradient_tolerance)
        if not converged:
            raise NoConvergence(
                f"Newton iterations stopped after {iterations} steps with gradient "
                f"{np.max(np.abs(grad)) / grad_scale:.3g}"
            )
    return MleFit(
        coefficients=beta,
        converged=True,
        iterations=iterations,
        final_gradient_norm=float(np.max(np.abs(grad)) / grad_scale),
        negative_hessian=0.5 * (info + info.T),
        log_likelihood=ll,
        condition_number=float(cond),
        link=link,
        log_likelihood_path=tuple(path),
    )


def fit_binary_mle(
    design,
    response,
    link: LinkFunction | str = LinkFunction.LOGIT,
    subsample_mask=None,
    options: FitOptions | None = None,
) -> MleFit:
    """Bernoulli maximum likelihood of a 0/1 response on ``design``.

    ``subsample_mask`` restricts the likelihood to rows where it is true,
    which is how the control-arm treatment model is fitted.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("design must be n x p and response length n")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("response must be binary (0/1)")
    if subsample_mask is None:
        weights = np.ones_like(y)
    else:
        mask = np.asarray(subsample_mask)
        if mask.shape != y.shape:
            raise ValueError("subsample_mask must have length n")
        weights = mask.astype(bool).astype(float)
        if not weights.any():
            raise EmptySubsample("subsample mask selects no rows")
    return fit_weighted_binary(x, y, weights, link, options)
