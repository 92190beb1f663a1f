"""Downstream tasks on fitted surrogates: optimization acquisitions, level-set
search, variance-based sensitivity, and the RMSE / Score metrics.

Acquisition functions evaluate the surrogate's uncertainty about the MEAN
surface: the intrinsic run-to-run variance is excluded from sigma_N, since
improvement targets the expected output, not a lucky draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import SimulatorError


# --------------------------------------------------------------- metrics

def rmse(pred_means, truth):
    """Root mean squared error; smaller is better."""
    pred_means = np.asarray(pred_means, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred_means.shape != truth.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((pred_means - truth) ** 2)))


def score(pred_means, pred_vars, ys):
    """Proper scoring rule: mean of -((y - mu)/sigma)^2 - log sigma^2.

    Larger is better.  Zero predictive variance is rejected rather than
    silently floored.
    """
    mu = np.asarray(pred_means, dtype=float)
    var = np.asarray(pred_vars, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if not (mu.shape == var.shape == ys.shape):
        raise ValueError("length mismatch")
    if np.any(var <= 0):
        raise ValueError("score needs strictly positive predictive variances")
    return float(np.mean(-((ys - mu) ** 2) / var - np.log(var)))


@dataclass
class MetricReport:
    """RMSE and Score over a test set, with the comparator conventions baked in."""

    rmse: float
    score: float
    n_test: int

    def better_than(self, other, metric="score"):
        if metric == "score":
            return self.score > other.score
        if metric == "rmse":
            return self.rmse < other.rmse
        raise ValueError(f"unknown metric {metric!r}")


def evaluate_predictions(pred, truth_mean, truth_draws=None):
    """MetricReport for a PredictiveDist: RMSE against the true mean, Score
    against held-out draws (defaults to the true mean)."""
    ys = truth_mean if truth_draws is None else truth_draws
    return MetricReport(rmse=rmse(pred.mean, truth_mean),
                        score=score(pred.mean, pred.var, ys),
                        n_test=len(np.asarray(truth_mean)))


# ------------------------------------------------------- expected improvement

def ei_value(mu, sd, y_max):
    """Closed-form expected improvement E[max(y - y_max, 0)] for y ~ N(mu, sd^2).

    Degenerates to max(mu - y_max, 0) at sd = 0.
    """
    scalar = np.ndim(mu) == 0 and np.ndim(sd) == 0
    mu, sd = np.broadcast_arrays(np.atleast_1d(np.asarray(mu, dtype=float)),
                                 np.atleast_1d(np.asarray(sd, dtype=float)))
    if np.any(sd < 0):
        raise ValueError("sd must be >= 0")
    out = np.maximum(mu - y_max, 0.0).astype(float)
    pos = sd > 0
    if np.any(pos):
        diff = mu[pos] - y_max
        s = sd[pos]
        out[pos] = diff * norm.cdf(diff / s) + s * norm.pdf(diff / s)
    return float(out[0]) if scalar else out


def expected_improvement(model, x, y_max):
    """EI at points ``x`` using the surrogate's mean-surface uncertainty."""
    pred = model.predict(np.atleast_2d(x), include_intrinsic=False)
    return ei_value(pred.mean, pred.sd, y_max)


def ei_plugin(model, x):
    """EI with the plugin target: the best predictive mean over run inputs."""
    mu_max = float(model.predict(model.sites, include_intrinsic=False).mean.max())
    return expected_improvement(model, x, mu_max)


def mcu(model, x, threshold, weight=1.96):
    """Maximum contour uncertainty score -|mu - T| + w * sigma; larger is better."""
    if weight < 0:
        raise ValueError("weight must be >= 0")
    pred = model.predict(np.atleast_2d(x), include_intrinsic=False)
    return -np.abs(pred.mean - threshold) + weight * pred.sd


# ----------------------------------------------------------------- BO loop

@dataclass
class BOTrace:
    """Per-iteration record of a Bayesian-optimization run."""

    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    mu_max: list = field(default_factory=list)
    best_x: list = field(default_factory=list)

    def __len__(self):
        return len(self.x)


def bo_loop(simulator, model, budget, acquisition="ei_plugin", seed=0,
            n_candidates=512, refit_every=5, threshold=None, weight=1.96):
    """Iterate acquire -> simulate -> refit, maximizing the simulator mean.

    The acquisition is maximized over a rolling Sobol candidate grid plus
    the existing unique sites (so replication is always on the menu).
    Hyperparameters are re-estimated every ``refit_every`` accepted runs;
    in between, the posterior is rebuilt with frozen hyperparameters.
    Simulator failure raises SimulatorError carrying the partial trace.
    """
    from .design import sobol_points
    from .gp import GPModel, SearchConfig, fit_homgp
    from .hetgp import HetGPModel, fit_hetgp
    from .data import reduce_replicates
    from .testbeds.base import child_seed

    if budget < 1:
        raise ValueError("budget must be >= 1")
    refit_every = refit_every or budget  # 0 / None: hyperparameters fixed until the end
    data = getattr(model, "dataset", None)
    if data is None:
        raise ValueError("model must carry its training dataset (fit with keep_data)")
    bounds = data.bounds
    lo, hi = bounds[:, 0], bounds[:, 1]
    d = data.dim
    trace = BOTrace()
    sobol_cursor = 0
    for t in range(budget):
        grid = sobol_points(n_candidates + sobol_cursor, d)[sobol_cursor:]
        sobol_cursor += n_candidates
        cand = np.vstack([grid * (hi - lo) + lo, model.sites])
        if acquisition == "ei_plugin":
            vals = ei_plugin(model, cand)
        elif acquisition == "mcu":
            vals = mcu(model, cand, threshold, weight)
        else:
            raise ValueError(f"unknown acquisition {acquisition!r}")
        x_star = cand[int(np.argmax(vals))]
        try:
            y_new = float(simulator.run(x_star, child_seed(seed, t)))
        except Exception as exc:
            raise SimulatorError(f"simulator failed at iteration {t}: {exc}",
                                 trace=trace) from exc
        data = data.add_run(x_star, y_new)
        if (t + 1) % refit_every == 0 or t == budget - 1:
            if isinstance(model, HetGPModel):
                model = fit_hetgp(data, kind=model.kernel.kind,
                                  search=SearchConfig(seed=seed))
            else:
                model = fit_homgp(data, kind=model.kernel.kind,
                                  search=SearchConfig(seed=seed))
        else:
            stats = reduce_replicates(data)
            Xs = model.scale(data.sites)
            if isinstance(model, HetGPModel):
                model = HetGPModel(model.kernel, model.mu, model.sigma2,
                                   np.append(model.delta, np.zeros(stats.n - model.delta.size)),
                                   model.g, model.kernel_g, model.cg_mean, model.sigma2_g,
                                   stats, Xs, bounds)
            else:
                model = GPModel(model.kernel, model.mu, model.sigma2, model.noise2,
                                stats, Xs, bounds, site_noise2=None)
            model.dataset = data
        model.dataset = data
        mu_sites = model.predict(data.sites, include_intrinsic=False).mean
        best = int(np.argmax(mu_sites))
        trace.x.append(x_star.copy())
        trace.y.append(y_new)
        trace.mu_max.append(float(mu_sites[best]))
        trace.best_x.append(data.sites[best].copy())
    return trace, model


# ------------------------------------------------------------ Sobol indices

@dataclass
class SobolIndices:
    """Pick-freeze main/total effects with plug-in Monte Carlo standard errors."""

    main: np.ndarray
    total: np.ndarray
    se_main: np.ndarray
    se_total: np.ndarray
    n_mc: int
    variance: float
    degenerate: bool = False


def sobol_indices(predictor, input_dists, n_mc, rng):
    """Variance-based sensitivity of a deterministic predictor.

    ``input_dists`` is a (d, 2) array of independent uniform [lo, hi]
    marginals.  Uses the Saltelli sample layout with the Sobol'/Saltelli
    main-effect estimator and the Jansen total-effect estimator.
    """
    if n_mc < 8:
        raise ValueError("n_mc must be >= 8")
    rng = np.random.default_rng(rng)
    dists = np.asarray(input_dists, dtype=float).reshape(-1, 2)
    d = dists.shape[0]
    lo, hi = dists[:, 0], dists[:, 1]
    A = lo + rng.random((n_mc, d)) * (hi - lo)
    B = lo + rng.random((n_mc, d)) * (hi - lo)
    fA = np.asarray(predictor(A), dtype=float).ravel()
    fB = np.asarray(predictor(B), dtype=float).ravel()
    V = float(np.var(np.concatenate([fA, fB])))
    scale = max(V, 1e-300)
    main = np.empty(d)
    total = np.empty(d)
    se_main = np.empty(d)
    se_total = np.empty(d)
    for j in range(d):
        ABj = A.copy()
        ABj[:, j] = B[:, j]
        fABj = np.asarray(predictor(ABj), dtype=float).ravel()
        elem_main = fB * (fABj - fA)
        elem_total = 0.5 * (fA - fABj) ** 2
        main[j] = float(np.mean(elem_main)) / scale
        total[j] = float(np.mean(elem_total)) / scale
        se_main[j] = float(np.std(elem_main) / np.sqrt(n_mc)) / scale
        se_total[j] = float(np.std(elem_total) / np.sqrt(n_mc)) / scale
    mean_level = float(np.mean(np.abs(np.concatenate([fA, fB])))) + 1e-300
    degenerate = V < 1e-12 * mean_level ** 2 or V == 0.0
    return SobolIndices(main=main, total=total, se_main=se_main, se_total=se_total,
                        n_mc=n_mc, variance=V, degenerate=degenerate)


def variance_sobol(model, input_dists, n_mc, rng=0):
    """Sensitivity of the predicted intrinsic-variance surface sigma_v^2(x)."""
    if not hasattr(model, "noise_at"):
        raise ValueError("model has no intrinsic-variance surface "
                         "(homoscedastic models are excluded)")
    return sobol_indices(lambda X: model.noise_at(X), input_dists, n_mc, rng)
