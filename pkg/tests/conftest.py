import warnings

import numpy as np
import pytest

from ermlab.harness import standard_scenarios

warnings.filterwarnings("ignore", message="n_grid spans")


@pytest.fixture(scope="session")
def catalogue():
    return standard_scenarios()


def cd_lasso_constrained(X, y, B, tol=1e-10, max_sweeps=20000):
    """Independent l1-constrained least-squares oracle: coordinate descent on
    the penalized lasso (soft thresholding) plus bisection on the penalty so
    that ||theta||_1 = B when the constraint binds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    col_sq = (X**2).sum(axis=0) / n

    def cd_penalized(mu):
        theta = np.zeros(p)
        resid = y.copy()
        for _ in range(max_sweeps):
            delta = 0.0
            for j in range(p):
                if col_sq[j] == 0:
                    continue
                rho = X[:, j] @ resid / n + col_sq[j] * theta[j]
                new = np.sign(rho) * max(abs(rho) - mu / 2.0, 0.0) / col_sq[j]
                if new != theta[j]:
                    resid -= X[:, j] * (new - theta[j])
                    delta = max(delta, abs(new - theta[j]))
                    theta[j] = new
            if delta < tol:
                break
        return theta

    theta = cd_penalized(0.0)
    if np.sum(np.abs(theta)) <= B:
        return theta
    lo, hi = 0.0, 2.0 * np.max(np.abs(X.T @ y / n))
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        theta = cd_penalized(mid)
        if np.sum(np.abs(theta)) > B:
            lo = mid
        else:
            hi = mid
    theta = cd_penalized(hi)
    return theta * min(1.0, B / max(np.sum(np.abs(theta)), 1e-300))
