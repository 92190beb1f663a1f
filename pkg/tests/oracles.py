"""Independent brute-force implementations used as test oracles.

Everything here recomputes quantities from first principles (dense N x N
matrices, direct summation, plain formulas) without touching the library's
reduced/cached code paths, so agreement is evidence rather than tautology.
"""

import numpy as np

SQRT5 = np.sqrt(5.0)


def corr_se(x, w, theta):
    x, w, theta = map(np.asarray, (x, w, theta))
    return float(np.exp(-np.sum((x - w) ** 2 / theta)))


def corr_m52(x, w, rho):
    x, w, rho = map(np.asarray, (x, w, rho))
    val = 1.0
    for j in range(x.size):
        t = SQRT5 * abs(x[j] - w[j]) / rho[j]
        val *= (1.0 + t + t * t / 3.0) * np.exp(-t)
    return float(val)


def corr_fn(kind):
    return corr_se if kind == "squared-exponential" else corr_m52


def dense_cov(X, kind, ls, sigma2, noise2):
    """Full N x N covariance sigma2*C + noise2*I from per-run rows."""
    N = X.shape[0]
    f = corr_fn(kind)
    K = np.empty((N, N))
    for a in range(N):
        for b in range(N):
            K[a, b] = sigma2 * f(X[a], X[b], ls)
    return K + noise2 * np.eye(N)


def dense_nll(X, y, mu, sigma2, noise2, kind, ls):
    """Direct multivariate-normal negative log density (dense route)."""
    K = dense_cov(X, kind, ls, sigma2, noise2)
    N = X.shape[0]
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    r = y - mu
    quad = r @ np.linalg.solve(K, r)
    return 0.5 * (N * np.log(2 * np.pi) + logdet + quad)


def dense_predict(X, y, xnew, mu, sigma2, noise2, kind, ls, include_intrinsic=True):
    """Kriging mean / variance through the dense N x N equations."""
    K = dense_cov(X, kind, ls, sigma2, noise2)
    f = corr_fn(kind)
    xnew = np.atleast_2d(xnew)
    means, variances = [], []
    for xq in xnew:
        k = sigma2 * np.array([f(xq, xa, ls) for xa in X])
        sol = np.linalg.solve(K, k)
        means.append(mu + k @ np.linalg.solve(K, y - mu))
        var = sigma2 - k @ sol
        if include_intrinsic:
            var += noise2
        variances.append(var)
    return np.array(means), np.array(variances)
