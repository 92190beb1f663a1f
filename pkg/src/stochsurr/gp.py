"""Replicate-aware Gaussian-process surrogate with constant intrinsic variance.

The observation model is ``y(x) = mu + Z(x) + v`` with ``Z`` a zero-mean GP
(variance ``sigma2``, correlation from ``kernels``) and ``v`` zero-mean
noise of variance ``noise2``.  All likelihood and prediction computations
run on the n unique sites rather than the N raw runs: the N-dimensional
Gaussian factors exactly into (a) within-site residuals, which only touch
the pooled sums of squares, and (b) the site means, whose covariance is
``sigma2 * C_n + diag(v_i / r_i)``.  This is the standard Woodbury-style
reduction and is bit-for-bit the same density as the dense N x N form.

Inputs are rescaled to the unit box internally; fitted lengthscales are
stored in scaled units alongside the bounds needed to map back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve

from .data import ReplicateDataset, SufficientStats, reduce_replicates
from .errors import ConditioningError, FitError
from .kernels import DistanceCache, KernelSpec, cross_corr, theta_bounds_auto

LOG2PI = np.log(2.0 * np.pi)
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
THETA_BOUNDS = (1e-3, 1e3)  # scaled-input lengthscale search box

SERIAL_VERSION = 1


def chol_with_jitter(K, scale, X=None, ladder=JITTER_LADDER):
    """Cholesky of K, escalating diagonal jitter (times ``scale``) on failure."""
    n = K.shape[0]
    for j in ladder:
        try:
            c = cho_factor(K + (j * scale) * np.eye(n) if j else K, lower=True)
            return c, j
        except np.linalg.LinAlgError:
            continue
    pair, dist = (0, 0), 0.0
    if X is not None and len(X) > 1:
        d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        i, j2 = np.unravel_index(np.argmin(d2), d2.shape)
        pair, dist = (int(i), int(j2)), float(np.sqrt(d2.min()))
    raise ConditioningError(pair, dist, ladder[-1] * scale)


def _mean_part_cov(sigma2, C, noise_per_site, reps):
    return sigma2 * C + np.diag(noise_per_site / reps)


def reduced_nll(mu, sigma2, noise_per_site, C, stats: SufficientStats,
                X=None, ladder=JITTER_LADDER, profile_mu=False):
    """Negative log density of the full N-run Gaussian, computed at O(n^3).

    ``noise_per_site`` is the intrinsic variance at each unique site (a
    constant vector for the homoscedastic model).  With ``profile_mu`` the
    GLS-optimal constant mean is substituted and returned alongside.
    """
    reps = stats.reps
    v = np.asarray(noise_per_site, dtype=float)
    resid = 0.0
    multi = reps > 1
    if np.any(multi):
        if np.any(v[multi] <= 0):
            raise ValueError("intrinsic variance must be > 0 at replicated sites")
        resid = 0.5 * np.sum((reps[multi] - 1) * (LOG2PI + np.log(v[multi])))
        resid += 0.5 * np.sum(stats.ss_within[multi] / v[multi])
    K = _mean_part_cov(sigma2, C, v, reps)
    c, _ = chol_with_jitter(K, sigma2, X=X, ladder=ladder)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    n = stats.n
    if profile_mu:
        ones = np.ones(n)
        Ki1 = cho_solve(c, ones)
        mu = float(Ki1 @ stats.means / Ki1.sum())
    r = stats.means - mu
    quad = float(r @ cho_solve(c, r))
    nll = resid + 0.5 * (n * LOG2PI + logdet + quad) + 0.5 * np.sum(np.log(reps))
    return (nll, mu) if profile_mu else nll


def neg_log_likelihood(data: ReplicateDataset, mu, sigma2, noise2, kernel: KernelSpec):
    """Exact N-dimensional Gaussian negative log likelihood, reduced form.

    Equals the dense evaluation with mean ``mu`` and covariance
    ``sigma2 * C_N + noise2 * I_N`` (jitter is only added if the
    factorization fails outright).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if noise2 < 0:
        raise ValueError("noise2 must be >= 0")
    stats = reduce_replicates(data)
    C = cross_corr(kernel, data.sites)
    return reduced_nll(mu, sigma2, np.full(data.n, float(noise2)), C, stats,
                       X=data.sites)


@dataclass
class PredictiveDist:
    """Per-point predictive mean and variance.

    ``includes_intrinsic`` distinguishes prediction of a fresh simulator
    output (True) from prediction of the latent mean surface (False).
    ``clamped`` counts variances clipped at zero; ``outside`` flags query
    points that fell outside the training bounds.
    """

    mean: np.ndarray
    var: np.ndarray
    includes_intrinsic: bool
    clamped: int = 0
    outside: np.ndarray = None

    @property
    def sd(self):
        return np.sqrt(self.var)


class GPModel:
    """Fitted (or directly constructed) homoscedastic GP.

    Construct via :func:`fit_homgp` in normal use; the constructor accepts
    explicit hyperparameters so oracle tests and hypothetical-design studies
    can bypass fitting.  ``site_noise2`` (a per-site intrinsic-variance
    vector) replaces the scalar ``noise2`` for the fixed-noise variant used
    by stochastic kriging.
    """

    kind = "homgp"

    def __init__(self, kernel: KernelSpec, mu, sigma2, noise2, stats: SufficientStats,
                 X_scaled, bounds, site_noise2=None, fit_info=None):
        self.kernel = kernel
        self.mu = float(mu)
        self.sigma2 = float(sigma2)
        self.noise2 = None if noise2 is None else float(noise2)
        self.site_noise2 = None if site_noise2 is None else np.asarray(site_noise2, float)
        self.stats = stats
        self.X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        self.fit_info = fit_info or {}
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.noise2 is not None and self.noise2 < 0:
            raise ValueError("noise2 must be >= 0")
        self._refresh_cache()

    def _noise_vector(self):
        if self.site_noise2 is not None:
            return self.site_noise2
        return np.full(self.stats.n, self.noise2)

    def _refresh_cache(self):
        C = cross_corr(self.kernel, self.X)
        K = _mean_part_cov(self.sigma2, C, self._noise_vector(), self.stats.reps)
        self._chol, self.jitter = chol_with_jitter(K, self.sigma2, X=self.X)
        self._alpha = cho_solve(self._chol, self.stats.means - self.mu)

    # -- coordinate helpers -------------------------------------------------
    def scale(self, X_native):
        X = np.atleast_2d(np.asarray(X_native, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return (X - lo) / (hi - lo)

    def unscale(self, X_scaled):
        X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return X * (hi - lo) + lo

    @property
    def sites(self):
        """Unique training sites in native units."""
        return self.unscale(self.X)

    def relative_noise_at(self, X_scaled):
        """Intrinsic variance over sigma2 at scaled query points."""
        if self.site_noise2 is not None:
            raise ValueError("fixed per-site noise has no off-site extension; "
                             "use the stochastic-kriging wrapper")
        m = np.atleast_2d(X_scaled).shape[0]
        return np.full(m, self.noise2 / self.sigma2)

    def loglik(self):
        return -reduced_nll(self.mu, self.sigma2, self._noise_vector(),
                            cross_corr(self.kernel, self.X), self.stats, X=self.X)

    def predict(self, xnew, include_intrinsic=True):
        return predict(self, xnew, include_intrinsic)

    # -- persistence --------------------------------------------------------
    def to_dict(self):
        d = {
            "format": "stochsurr-model", "version": SERIAL_VERSION, "kind": self.kind,
            "kernel": self.kernel.to_dict(), "mu": self.mu, "sigma2": self.sigma2,
            "noise2": self.noise2, "bounds": self.bounds.tolist(),
            "X_scaled": self.X.tolist(), "means": self.stats.means.tolist(),
            "reps": self.stats.reps.tolist(), "ss_within": self.stats.ss_within.tolist(),
        }
        if self.site_noise2 is not None:
            d["site_noise2"] = self.site_noise2.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        stats = _stats_from_dict(d)
        return cls(KernelSpec.from_dict(d["kernel"]), d["mu"], d["sigma2"], d["noise2"],
                   stats, np.asarray(d["X_scaled"]), np.asarray(d["bounds"]),
                   site_noise2=np.asarray(d["site_noise2"]) if "site_noise2" in d else None)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _stats_from_dict(d):
    means = np.asarray(d["means"], dtype=float)
    reps = np.asarray(d["reps"], dtype=np.int64)
    ss = np.asarray(d["ss_within"], dtype=float)
    has = reps >= 2
    svars = np.full(means.size, np.nan)
    svars[has] = ss[has] / (reps[has] - 1)
    return SufficientStats(means, svars, has, reps, ss, float(ss.sum()))


def predict(model, xnew, include_intrinsic=True):
    """Predictive mean and variance at new points (classic kriging equations).

    With ``include_intrinsic`` the variance targets a fresh simulator run;
    without it, the latent mean surface.  Negative variances from roundoff
    are clamped at zero and counted.
    """
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    Xs = model.scale(xnew)
    outside = np.any((Xs < -1e-12) | (Xs > 1 + 1e-12), axis=1)
    c = cross_corr(model.kernel, Xs, model.X)          # (m, n)
    mean = model.mu + model.sigma2 * (c @ model._alpha)
    sol = cho_solve(model._chol, (model.sigma2 * c).T)  # (n, m)
    quad = np.einsum("mn,nm->m", c, sol) * model.sigma2
    var_mean = model.sigma2 - quad
    if include_intrinsic:
        if model.site_noise2 is not None:
            raise ValueError("per-site fixed noise cannot be extended to new points here")
        var = var_mean + model.noise2
    else:
        var = var_mean
    clamped = int(np.sum(var < 0))
    var = np.maximum(var, 0.0)
    return PredictiveDist(mean=mean, var=var, includes_intrinsic=include_intrinsic,
                          clamped=clamped, outside=outside)


@dataclass
class SearchConfig:
    """Multi-start settings for MLE fitting."""

    n_starts: int = 10
    seed: int = 0
    maxiter: int = 4000
    het_maxiter: int = 500
    theta_bounds: tuple = None   # default: data-driven (correlation-pinned)


def _start_grid(rng, n_starts, dim, lo, hi):
    """Space-filled (Latin-hypercube) starts inside the log box [lo, hi]."""
    u = np.empty((n_starts, dim))
    for j in range(dim):
        u[:, j] = (rng.permutation(n_starts) + rng.random(n_starts)) / n_starts
    return lo + u * (hi - lo)


def fit_homgp(data: ReplicateDataset, kind="squared-exponential",
              search: SearchConfig = None, fix_noise2=None, site_noise2=None):
    """Maximum-likelihood fit of the homoscedastic GP.

    The constant mean is profiled analytically; ``(log sigma2, log noise2,
    log lengthscales)`` are optimized by bounded derivative-free search from
    ``search.n_starts`` space-filled starts.  ``fix_noise2`` pins the
    intrinsic variance (used by quantile kriging); ``site_noise2`` supplies
    a fixed per-site variance vector (stochastic kriging's mean stage), in
    which case only ``(sigma2, lengthscales)`` are free.
    """
    search = search or SearchConfig()
    stats = reduce_replicates(data)
    d = data.dim
    if data.N < d + 2:
        raise FitError(f"need at least d + 2 = {d + 2} runs, got {data.N}")
    lo_b, hi_b = data.bounds[:, 0], data.bounds[:, 1]
    Xs = (data.sites - lo_b) / (hi_b - lo_b)
    dists = DistanceCache(Xs)
    _, yflat = data.flat_runs()
    vscale = max(float(np.var(yflat)), 1e-12)

    t_lo, t_hi = (search.theta_bounds if search.theta_bounds is not None
                  else theta_bounds_auto(kind, Xs))
    free_noise = fix_noise2 is None and site_noise2 is None
    # parameter layout: [log theta_1..d, log sigma2, (log noise2)]
    lob = np.concatenate([np.full(d, np.log(t_lo)), [np.log(1e-3 * vscale)]])
    hib = np.concatenate([np.full(d, np.log(t_hi)), [np.log(1e3 * vscale)]])
    if free_noise:
        lob = np.append(lob, np.log(1e-10 * vscale))
        hib = np.append(hib, np.log(1e2 * vscale))

    fit_ladder = JITTER_LADDER[1:]  # always-on jitter stabilizes the search

    def unpack(p):
        theta = np.exp(p[:d])
        sigma2 = float(np.exp(p[d]))
        if free_noise:
            noise2 = float(np.exp(p[d + 1]))
        else:
            noise2 = fix_noise2
        return theta, sigma2, noise2

    def objective(p):
        theta, sigma2, noise2 = unpack(p)
        C = dists.corr(kind, theta)
        if site_noise2 is not None:
            v = np.asarray(site_noise2, dtype=float)
        else:
            v = np.full(data.n, noise2)
        try:
            nll, _ = reduced_nll(0.0, sigma2, v, C, stats, ladder=fit_ladder,
                                 profile_mu=True)
        except (ConditioningError, np.linalg.LinAlgError, ValueError):
            return 1e10
        return nll if np.isfinite(nll) else 1e10

    rng = np.random.default_rng(search.seed)
    # starts live inside a moderate sub-box of the full search bounds
    s_lo = np.concatenate([np.full(d, np.log(t_lo) + 0.05), [np.log(0.1 * vscale)]])
    s_hi = np.concatenate([np.full(d, np.log(t_hi) - 0.05), [np.log(10.0 * vscale)]])
    if free_noise:
        s_lo = np.append(s_lo, np.log(1e-6 * vscale))
        s_hi = np.append(s_hi, np.log(1.0 * vscale))
    starts = _start_grid(rng, search.n_starts, lob.size, s_lo, s_hi)

    best, diagnostics = None, []
    for p0 in starts:
        try:
            res = optimize.minimize(objective, p0, method="Powell",
                                    bounds=list(zip(lob, hib)),
                                    options={"maxiter": search.maxiter, "xtol": 1e-6,
                                             "ftol": 1e-9})
            diagnostics.append({"x0": p0.tolist(), "fun": float(res.fun),
                                "success": bool(res.success), "message": str(res.message)})
            if res.fun < 1e10 and (best is None or res.fun < best.fun):
                best = res
        except Exception as exc:  # keep the remaining starts alive
            diagnostics.append({"x0": p0.tolist(), "error": repr(exc)})
    if best is None:
        raise FitError("all optimizer starts failed", diagnostics)

    theta, sigma2, noise2 = unpack(best.x)
    C = dists.corr(kind, theta)
    v = np.asarray(site_noise2, float) if site_noise2 is not None else np.full(data.n, noise2)
    _, mu = reduced_nll(0.0, sigma2, v, C, stats, ladder=fit_ladder, profile_mu=True)
    kernel = KernelSpec(kind, theta)
    model = GPModel(kernel, mu, sigma2, None if site_noise2 is not None else noise2,
                    stats, Xs, data.bounds, site_noise2=site_noise2,
                    fit_info={"nll": float(best.fun), "starts": diagnostics,
                              "seed": search.seed})
    model.dataset = data
    return model
