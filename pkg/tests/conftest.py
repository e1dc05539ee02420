import numpy as np
import pytest

from hetiv import Dataset


def make_data(n=300, p=3, seed=0, effect=2.0, intercept=True):
    """Random dataset with a covariate-dependent instrument and take-up."""
    rng = np.random.default_rng(seed)
    k = p - 1 if intercept else p
    cov = rng.normal(size=(n, k))
    x = np.column_stack([np.ones(n), cov]) if intercept else cov
    lin = 0.3 * cov[:, 0] if k else 0.0
    z = (rng.random(n) < 1 / (1 + np.exp(-(0.2 + lin)))).astype(float)
    t = (rng.random(n) < 0.2 + 0.5 * z + 0.1 * (cov[:, 0] > 0 if k else 0)).astype(float)
    y = 1.0 + effect * t + (cov @ rng.normal(size=k) if k else 0.0) + rng.normal(size=n)
    return Dataset(y=y, t=t, z=z, x=x, has_intercept=intercept)


def wald(data):
    z = data.z == 1
    return (data.y[z].mean() - data.y[~z].mean()) / (data.t[z].mean() - data.t[~z].mean())


def tsls_closed_form(data):
    """Coefficient on T from (A' P_W A)^-1 A' P_W y with A = (T, X), W = (Z, X)."""
    a = np.column_stack([data.t, data.x])
    w = np.column_stack([data.z, data.x])
    proj = w @ np.linalg.pinv(w.T @ w) @ w.T
    coef = np.linalg.solve(a.T @ proj @ a, a.T @ proj @ data.y)
    return coef[0]


def exact_logit_cells(reps=30, seed=0):
    """Cells at x = -1, 0, 1, 2 whose instrument shares are exactly
    Lambda(x log 2) = 1/3, 1/2, 2/3, 4/5, so the sample logit fit is
    theta = (0, log 2) and the augmented coefficient is zero."""
    rng = np.random.default_rng(seed)
    xs, zs = [], []
    for x, share in ((-1.0, 1 / 3), (0.0, 1 / 2), (1.0, 2 / 3), (2.0, 4 / 5)):
        ones = int(round(share * reps))
        xs += [x] * reps
        zs += [1.0] * ones + [0.0] * (reps - ones)
    x = np.array(xs)
    z = np.array(zs)
    n = x.size
    t = (rng.random(n) < 0.25 + 0.1 * (x + 1) + 0.4 * z).astype(float)
    y = 0.5 + x + 2.0 * t + rng.normal(size=n)
    return Dataset.from_arrays(y, t, z, x)


@pytest.fixture
def data():
    return make_data()


ACCEPTANCE = {}


def record_criterion(number, title, ok, detail, seconds):
    """Store a criterion verdict for the end-of-run summary."""
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail} | {seconds:.2f} s"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
