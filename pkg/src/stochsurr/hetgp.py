"""Heteroscedastic GP: a latent log-variance process smoothed by a second GP.

The intrinsic variance at site i is ``sigma2 * lambda_i``.  The log ratios
``log Lambda_n`` are not free parameters; they are the smoother output
``c_g + C_g (C_g + g R^-1)^-1 (Delta - c_g)`` driven by latent values
``Delta`` with nugget ``g`` and replicate-count matrix ``R``.  Fitting
maximizes the replicate-reduced likelihood of all runs jointly over
(lengthscales, Delta, g, latent lengthscales) plus the latent-GP log
density of Delta; the constant means, the process variance, and the latent
variance are profiled in closed form.

Prediction extends the smoother to new points for a per-point intrinsic
variance; the uncertainty of that variance estimate itself is not
propagated into predictive intervals.
"""

from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
from scipy import optimize
from scipy.linalg import cho_solve

from .data import ReplicateDataset, reduce_replicates
from .errors import ConditioningError, FitError
from .gp import (LOG2PI, PredictiveDist, SearchConfig, _stats_from_dict,
                 chol_with_jitter, fit_homgp)
from .kernels import DistanceCache, KernelSpec, cross_corr, theta_bounds_auto

DELTA_BOUND = 20.0
FIT_JITTER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def smooth_log_variances(delta, g, latent_kernel: KernelSpec, reps, sites):
    """Linear smoother ``C_g (C_g + g R^-1)^-1 delta`` (zero prior mean form)."""
    delta = np.asarray(delta, dtype=float)
    reps = np.asarray(reps, dtype=float)
    if g <= 0:
        raise ValueError("nugget g must be > 0")
    if np.any(reps < 1):
        raise ValueError("replicate counts must be >= 1")
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    Cg = cross_corr(latent_kernel, sites)
    A = Cg + np.diag(g / reps)
    c, _ = chol_with_jitter(A, 1.0, X=sites)
    return Cg @ cho_solve(c, delta)


class HetGPModel:
    """Fitted heteroscedastic GP (see module docstring for the structure)."""

    kind = "hetgp"

    def __init__(self, kernel, mu, sigma2, delta, g, kernel_g, cg_mean, sigma2_g,
                 stats, X_scaled, bounds, fit_info=None):
        self.kernel = kernel
        self.mu = float(mu)
        self.sigma2 = float(sigma2)
        self.delta = np.asarray(delta, dtype=float)
        self.g = float(g)
        self.kernel_g = kernel_g
        self.cg_mean = float(cg_mean)
        self.sigma2_g = float(sigma2_g)
        self.stats = stats
        self.X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        self.fit_info = fit_info or {}
        if self.sigma2 <= 0 or self.g <= 0:
            raise ValueError("sigma2 and g must be > 0")
        self._refresh_cache()
        if np.any(self.lambdas <= 0):
            raise ValueError("smoothed variance ratios must be > 0")

    def _refresh_cache(self):
        Cg = cross_corr(self.kernel_g, self.X)
        A = Cg + np.diag(self.g / self.stats.reps)
        self._chol_g, _ = chol_with_jitter(A, 1.0, X=self.X)
        self._sol_g = cho_solve(self._chol_g, self.delta - self.cg_mean)
        self.log_lambdas = self.cg_mean + Cg @ self._sol_g
        self.lambdas = np.exp(self.log_lambdas)
        C = cross_corr(self.kernel, self.X)
        K = C + np.diag(self.lambdas / self.stats.reps)
        self._chol, self.jitter = chol_with_jitter(K, 1.0, X=self.X)
        self._alpha = cho_solve(self._chol, self.stats.means - self.mu)

    # -- coordinate helpers (same conventions as GPModel) --------------------
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
        return self.unscale(self.X)

    def relative_noise_at(self, X_scaled):
        """Smoothed lambda(x) extended to scaled query points."""
        cg = cross_corr(self.kernel_g, np.atleast_2d(X_scaled), self.X)
        return np.exp(self.cg_mean + cg @ self._sol_g)

    def noise_at(self, X_native):
        """Intrinsic variance sigma_v^2(x) at native query points."""
        return self.sigma2 * self.relative_noise_at(self.scale(X_native))

    def loglik(self):
        return -hetgp_nll(self.stats, cross_corr(self.kernel, self.X),
                          self.mu, self.sigma2, self.lambdas)

    def predict(self, xnew, include_intrinsic=True):
        return predict_hetgp(self, xnew, include_intrinsic)

    def to_dict(self):
        return {
            "format": "stochsurr-model", "version": 1, "kind": self.kind,
            "kernel": self.kernel.to_dict(), "kernel_g": self.kernel_g.to_dict(),
            "mu": self.mu, "sigma2": self.sigma2, "delta": self.delta.tolist(),
            "g": self.g, "cg_mean": self.cg_mean, "sigma2_g": self.sigma2_g,
            "bounds": self.bounds.tolist(), "X_scaled": self.X.tolist(),
            "means": self.stats.means.tolist(), "reps": self.stats.reps.tolist(),
            "ss_within": self.stats.ss_within.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(KernelSpec.from_dict(d["kernel"]), d["mu"], d["sigma2"],
                   np.asarray(d["delta"]), d["g"], KernelSpec.from_dict(d["kernel_g"]),
                   d["cg_mean"], d["sigma2_g"], _stats_from_dict(d),
                   np.asarray(d["X_scaled"]), np.asarray(d["bounds"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def hetgp_nll(stats, C, mu, sigma2, lambdas, ladder=(0.0,) + FIT_JITTER):
    """Replicate-reduced negative log likelihood at explicit parameters.

    Equals the dense N x N Gaussian with covariance
    ``sigma2 * C_N + diag(sigma2 * lambda_site)``.
    """
    lam = np.asarray(lambdas, dtype=float)
    reps = stats.reps
    if np.any(lam <= 0):
        raise ValueError("lambdas must be > 0")
    multi = reps > 1
    resid = 0.5 * np.sum((reps[multi] - 1) * (LOG2PI + np.log(sigma2 * lam[multi])))
    resid += 0.5 * np.sum(stats.ss_within[multi] / (sigma2 * lam[multi]))
    K = C + np.diag(lam / reps)
    c, _ = chol_with_jitter(K, 1.0, ladder=ladder)
    logdet = stats.n * np.log(sigma2) + 2.0 * np.sum(np.log(np.diag(c[0])))
    r = stats.means - mu
    quad = (r @ cho_solve(c, r)) / sigma2
    return resid + 0.5 * (stats.n * LOG2PI + logdet + quad) + 0.5 * np.sum(np.log(reps))


def fit_hetgp(data: ReplicateDataset, kind="squared-exponential",
              search: SearchConfig = None, n_starts=1):
    """Joint MLE of the heteroscedastic model (see module docstring).

    A homoscedastic fit seeds the search; within-site sample variances seed
    the latents.  ``n_starts - 1`` additional perturbed starts guard against
    bad local optima.
    """
    if data.n < 3:
        raise FitError(f"heteroscedastic fit needs >= 3 unique sites, got {data.n}")
    search = search or SearchConfig()
    stats = reduce_replicates(data)
    n, d = data.n, data.dim
    lo_b, hi_b = data.bounds[:, 0], data.bounds[:, 1]
    Xs = (data.sites - lo_b) / (hi_b - lo_b)
    dists = DistanceCache(Xs)
    reps = stats.reps.astype(float)
    N = stats.N
    log_reps_sum = float(np.sum(np.log(reps)))

    hom = fit_homgp(data, kind=kind,
                    search=replace(search, n_starts=min(search.n_starts, 4)))
    vscale = max(hom.sigma2, 1e-12)
    lam_emp = np.where(stats.has_svar, np.nan_to_num(stats.svars, nan=0.0), hom.noise2)
    lam_emp = np.clip(lam_emp, 1e-6 * vscale, None) / hom.sigma2
    delta0 = np.clip(np.log(lam_emp), -DELTA_BOUND + 1, DELTA_BOUND - 1)

    # layout: [log theta (d), Delta (n), log g, log theta_g (d)]
    tb = (search.theta_bounds if search.theta_bounds is not None
          else theta_bounds_auto(kind, Xs))
    t_lo, t_hi = np.log(tb[0]), np.log(tb[1])
    lob = np.concatenate([np.full(d, t_lo), np.full(n, -DELTA_BOUND),
                          [np.log(1e-6)], np.full(d, t_lo)])
    hib = np.concatenate([np.full(d, t_hi), np.full(n, DELTA_BOUND),
                          [np.log(1e3)], np.full(d, t_hi)])

    ones = np.ones(n)
    eye_scaled = 1e-8 * np.eye(n)
    diag_idx = np.diag_indices(n)
    from scipy.linalg import cho_factor as _cf, cho_solve as _cs

    def _chol(M):
        for j in (0.0,) + FIT_JITTER[1:]:
            try:
                if j:
                    M[diag_idx] += j
                return _cf(M, lower=True, check_finite=False, overwrite_a=True)
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError("factorization failed at max jitter")

    eye_n = np.eye(n)

    def components(p, want_grad=False):
        theta = np.exp(p[:d])
        delta = p[d:d + n]
        g = float(np.exp(p[d + n]))
        theta_g = np.exp(p[d + n + 1:])
        Cg, Eg = dists.corr_with_logderivs(kind, theta_g)
        A = Cg + eye_scaled
        A[diag_idx] += g / reps
        cA = _chol(A)
        ldet_A = 2.0 * np.sum(np.log(np.diag(cA[0])))
        sols = _cs(cA, np.column_stack([ones, delta]), check_finite=False)
        sA1 = sols[:, 0]
        sA1_sum = sA1.sum()
        cg_mean = float(sA1 @ delta / sA1_sum)
        dev = delta - cg_mean
        sol = sols[:, 1] - cg_mean * sA1
        raw_ll = cg_mean + Cg @ sol
        log_lam = np.clip(raw_ll, -40.0, 40.0)
        lam = np.exp(log_lam)
        C, E = dists.corr_with_logderivs(kind, theta)
        K = C + eye_scaled
        K[diag_idx] += lam / reps
        cK = _chol(K)
        ldet_K = 2.0 * np.sum(np.log(np.diag(cK[0])))
        solsK = _cs(cK, np.column_stack([ones, stats.means]), check_finite=False)
        sK1 = solsK[:, 0]
        mu = float(sK1 @ stats.means / sK1.sum())
        r = stats.means - mu
        alpha = solsK[:, 1] - mu * sK1
        quad = float(r @ alpha)
        Q = float(np.sum(stats.ss_within / lam)) + quad
        sigma2 = max(Q / N, 1e-300)
        nll = 0.5 * (N * LOG2PI + N * np.log(sigma2) + N + ldet_K
                     + float(np.sum((reps - 1) * log_lam)) + log_reps_sum)
        S = float(dev @ sol)
        sg2 = S / n
        penalized = sg2 > 1e-8
        if penalized:
            nll += 0.5 * (n * LOG2PI + n * np.log(sg2) + n + ldet_A)
        extras = (theta, delta, g, theta_g, cg_mean, max(sg2, 0.0), mu, sigma2)
        if not want_grad:
            return nll, extras

        # ---- analytic gradient (mu, sigma2, cg_mean, sg2 profiled out) ----
        Kinv = _cs(cK, eye_n, check_finite=False)
        Ainv = _cs(cA, eye_n, check_finite=False)
        # dF/d(log lambda): residual term, logdet K, and the profiled Q
        g_ll = 0.5 * ((reps - 1.0) + np.diag(Kinv) * lam / reps) \
            - 0.5 / sigma2 * (stats.ss_within / lam + alpha ** 2 * lam / reps)
        g_ll *= np.abs(raw_ll) < 40.0          # clip is flat outside
        grad = np.empty_like(p)
        # mean-kernel lengthscales
        for j in range(d):
            M = C * E[j]
            grad[j] = 0.5 * float(np.sum(Kinv * M)) \
                - 0.5 / sigma2 * float(alpha @ M @ alpha)
        # latents: log lambda = cg * v + Cg A^-1 Delta with v = 1 - Cg sA1,
        # and cg's own Delta-dependence enters through the GLS weights w
        v = ones - Cg @ sA1
        w = sA1 / sA1_sum
        Cg_gll = Cg @ g_ll
        g_delta = w * float(v @ g_ll) + Ainv @ Cg_gll
        if penalized:
            g_delta = g_delta + sol / sg2
        grad[d:d + n] = g_delta
        sol_sum = sol.sum()

        def latent_direction(dA_sol, dlogdet, dC_sol=None):
            """dF for a perturbation of A (and optionally Cg) along one
            parameter: dA_sol = dA @ sol, dC_sol = dCg @ sol."""
            dcg = -float(sA1 @ dA_sol) / sA1_sum
            d_ll = dcg * v - Cg @ (Ainv @ dA_sol)
            if dC_sol is not None:
                d_ll = d_ll + dC_sol
            out = float(g_ll @ d_ll)
            if penalized:
                dS = -float(sol @ dA_sol) - 2.0 * dcg * sol_sum
                out += 0.5 * n * dS / S + 0.5 * dlogdet
            return out

        # latent nugget g (log scale): dA = diag(g / reps)
        diag_dA = g / reps
        grad[d + n] = latent_direction(diag_dA * sol,
                                       float(np.diag(Ainv) @ diag_dA))
        # latent lengthscales: dA = dCg = Cg * Eg_j
        for j in range(d):
            M = Cg * Eg[j]
            Msol = M @ sol
            grad[d + n + 1 + j] = latent_direction(
                Msol, float(np.sum(Ainv * M)), dC_sol=Msol)
        return nll, extras, grad

    def objective(p):
        try:
            nll, _, grad = components(p, want_grad=True)
        except (ConditioningError, np.linalg.LinAlgError, ValueError,
                FloatingPointError):
            return 1e10, np.zeros_like(p)
        if not np.all(np.isfinite(grad)) or not np.isfinite(nll):
            return 1e10, np.zeros_like(p)
        return nll, grad

    p0 = np.concatenate([np.log(hom.kernel.lengthscales), delta0,
                         [0.0], np.log(hom.kernel.lengthscales)])
    p0 = np.clip(p0, lob + 1e-9, hib - 1e-9)
    rng = np.random.default_rng(search.seed)
    starts = [p0]
    for _ in range(max(0, n_starts - 1)):
        jit = p0 + rng.normal(scale=0.5, size=p0.size)
        starts.append(np.clip(jit, lob + 1e-9, hib - 1e-9))

    best, diagnostics = None, []
    for x0 in starts:
        res = optimize.minimize(objective, x0, method="L-BFGS-B", jac=True,
                                bounds=list(zip(lob, hib)),
                                options={"maxiter": search.het_maxiter, "maxfun": 40000})
        diagnostics.append({"fun": float(res.fun), "success": bool(res.success),
                            "message": str(res.message)})
        if res.fun < 1e10 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("heteroscedastic optimizer failed from every start", diagnostics)

    nll, (theta, delta, g, theta_g, cg_mean, sg2, mu, sigma2) = components(best.x)
    model = HetGPModel(KernelSpec(kind, theta), mu, sigma2, delta, g,
                       KernelSpec(kind, theta_g), cg_mean, sg2, stats, Xs, data.bounds,
                       fit_info={"nll": float(nll), "starts": diagnostics,
                                 "hom_nll": hom.fit_info.get("nll"), "seed": search.seed})
    model.dataset = data
    return model


def predict_hetgp(model: HetGPModel, xnew, include_intrinsic=True):
    """Kriging equations with the per-point intrinsic variance sigma2*lambda(x)."""
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    Xs = model.scale(xnew)
    outside = np.any((Xs < -1e-12) | (Xs > 1 + 1e-12), axis=1)
    c = cross_corr(model.kernel, Xs, model.X)
    mean = model.mu + c @ model._alpha
    sol = cho_solve(model._chol, c.T)
    var = model.sigma2 * (1.0 - np.einsum("mn,nm->m", c, sol))
    if include_intrinsic:
        var = var + model.sigma2 * model.relative_noise_at(Xs)
    clamped = int(np.sum(var < 0))
    return PredictiveDist(mean=mean, var=np.maximum(var, 0.0),
                          includes_intrinsic=include_intrinsic,
                          clamped=clamped, outside=outside)
