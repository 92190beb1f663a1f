"""Calibration of simulator inputs against field observations.

Four routes share one observation model: field value = simulator mean at
the true calibration input, plus a model-discrepancy surface, plus
observation noise.

* ``koh_fit``/``koh_predict``: modular Bayesian calibration.  The surrogate
  is fit to simulator runs beforehand and held fixed; MCMC samples the
  calibration inputs, the discrepancy GP's variance and lengthscales, and
  the observation-noise variance.  The field likelihood is a multivariate
  normal whose covariance is the discrepancy GP plus noise plus the
  (diagonal) surrogate mean-prediction variance.
* ``implausibility``/``hm_wave``: history matching.  Inputs whose
  standardized distance to the observation reaches 3 are ruled out; waves
  shrink the not-ruled-out-yet region and flag the terminal case.
* ``abc_reject``: rejection ABC against a simulator or surrogate sampler.
* ``ols_calibrate`` plus the NOCAL / SINGLE comparators: non-Bayesian
  baselines that assume zero discrepancy.

Surrogate input convention: the first columns are the controllable inputs
x, the trailing columns the calibration inputs u.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import gammaln

from .design import sobol_points
from .errors import CalibrationError
from .gp import PredictiveDist, chol_with_jitter

HM_THRESHOLD = 3.0  # Pukelsheim's three-sigma bound; equality is ruled out


# ------------------------------------------------------------------ containers

@dataclass
class FieldData:
    """Per-observation controllable inputs and observed values."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.shape[0] != self.y.size:
            raise ValueError("x and y disagree on observation count")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("field data must be finite")

    @property
    def m(self):
        return self.y.size

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            d = self.x.shape[1]
            writer.writerow([f"x{j + 1}" for j in range(d)] + ["y"])
            for row, val in zip(self.x, self.y):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(val))])

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        d = len(rows[0]) - 1
        X = np.array([[float(v) for v in r[:d]] for r in rows[1:]])
        y = np.array([float(r[-1]) for r in rows[1:]])
        return cls(X, y)


@dataclass(frozen=True)
class InvGammaPrior:
    """Inverse-gamma: density vanishes at zero with a heavy right tail."""

    shape: float
    scale: float

    def logpdf(self, v):
        if v <= 0:
            return -np.inf
        return (self.shape * math.log(self.scale) - gammaln(self.shape)
                - (self.shape + 1.0) * math.log(v) - self.scale / v)

    def typical(self):
        return self.scale / (self.shape + 1.0)  # the mode


@dataclass
class CalibrationPrior:
    """Box prior on u plus variance priors for the nuisance parameters."""

    u_bounds: np.ndarray
    sigma_md2: InvGammaPrior
    theta_md: tuple            # one InvGammaPrior per controllable dimension
    sigma_eps2: InvGammaPrior

    def __post_init__(self):
        self.u_bounds = np.asarray(self.u_bounds, dtype=float).reshape(-1, 2)
        if np.any(~np.isfinite(self.u_bounds)) or np.any(
                self.u_bounds[:, 1] <= self.u_bounds[:, 0]):
            raise ValueError("u bounds must be finite with lo < hi")

    @classmethod
    def default(cls, u_bounds, field: FieldData, x_bounds=None):
        """Weakly informative scales from the data's half-ranges."""
        y_half = max(0.5 * (field.y.max() - field.y.min()), 1e-6) \
            if field.m else 1.0
        if x_bounds is None:
            if field.m == 0:
                raise ValueError("x_bounds required when field data is empty")
            x_bounds = np.column_stack([field.x.min(axis=0), field.x.max(axis=0)])
        x_bounds = np.asarray(x_bounds, dtype=float).reshape(-1, 2)
        x_half = np.maximum(0.5 * (x_bounds[:, 1] - x_bounds[:, 0]), 1e-6)
        # scale at (0.2 * half-range)^2: the heavy right tail still reaches
        # large variances, while near-zero values stay attainable
        return cls(u_bounds=u_bounds,
                   sigma_md2=InvGammaPrior(2.0, (0.2 * y_half) ** 2),
                   theta_md=tuple(InvGammaPrior(2.0, h ** 2) for h in x_half),
                   sigma_eps2=InvGammaPrior(2.0, (0.2 * y_half) ** 2))

    @property
    def du(self):
        return self.u_bounds.shape[0]

    @property
    def dx(self):
        return len(self.theta_md)

    def log_density(self, u, sigma_md2, theta_md, sigma_eps2):
        lo, hi = self.u_bounds[:, 0], self.u_bounds[:, 1]
        if np.any(u < lo) or np.any(u > hi):
            return -np.inf
        out = self.sigma_md2.logpdf(sigma_md2) + self.sigma_eps2.logpdf(sigma_eps2)
        for prior, th in zip(self.theta_md, theta_md):
            out += prior.logpdf(th)
        return out

    def sample(self, rng):
        lo, hi = self.u_bounds[:, 0], self.u_bounds[:, 1]
        u = lo + rng.random(self.du) * (hi - lo)
        jitter = lambda p: p.typical() * np.exp(0.5 * rng.standard_normal())
        return (u, jitter(self.sigma_md2),
                np.array([jitter(p) for p in self.theta_md]),
                jitter(self.sigma_eps2))


@dataclass
class MCMCConfig:
    chains: int = 4
    draws: int = 2000
    burn: int = 1000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 100


@dataclass
class PosteriorSamples:
    """Stacked post-burn-in draws with per-block acceptance and split R-hat."""

    u: np.ndarray
    sigma_md2: np.ndarray
    theta_md: np.ndarray
    sigma_eps2: np.ndarray
    chain: np.ndarray
    acceptance: dict
    rhat: dict

    @property
    def size(self):
        return self.u.shape[0]

    def interval(self, which="u", level=0.95, dim=0):
        arr = {"u": self.u[:, dim], "sigma_md2": self.sigma_md2,
               "sigma_eps2": self.sigma_eps2,
               "theta_md": self.theta_md[:, dim]}[which]
        a = 0.5 * (1 - level)
        return float(np.quantile(arr, a)), float(np.quantile(arr, 1 - a))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            du, dx = self.u.shape[1], self.theta_md.shape[1]
            writer.writerow(["chain"] + [f"u{j + 1}" for j in range(du)]
                            + ["sigma_md2"] + [f"theta_md{j + 1}" for j in range(dx)]
                            + ["sigma_eps2"])
            for i in range(self.size):
                writer.writerow([int(self.chain[i])]
                                + [repr(float(v)) for v in self.u[i]]
                                + [repr(float(self.sigma_md2[i]))]
                                + [repr(float(v)) for v in self.theta_md[i]]
                                + [repr(float(self.sigma_eps2[i]))])

    def diagnostics_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"acceptance": self.acceptance, "rhat": self.rhat,
                       "draws": int(self.size)}, fh)


def _split_rhat(chains_values):
    """Split-chain potential-scale-reduction for one scalar parameter."""
    halves = []
    for v in chains_values:
        h = len(v) // 2
        if h >= 2:
            halves.extend([v[:h], v[h:2 * h]])
    if len(halves) < 2:
        return float("nan")
    halves = np.asarray(halves, dtype=float)
    m, n = halves.shape
    means = halves.mean(axis=1)
    B = n * means.var(ddof=1)
    W = halves.var(axis=1, ddof=1).mean()
    if W <= 0:
        return 1.0
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


# ------------------------------------------------------------------ KOH MCMC

class _FieldLikelihood:
    """Field log-likelihood with caching of the two expensive pieces:
    surrogate predictions (per u) and the discrepancy correlation (per
    theta_md)."""

    def __init__(self, surrogate, field: FieldData, include_surrogate_var=True):
        self.surrogate = surrogate
        self.X = field.x
        self.y = field.y
        self.m = field.m
        d = self.X.shape[1]
        diff = self.X[:, None, :] - self.X[None, :, :]
        self.D2 = diff ** 2                      # (m, m, dx)
        self.include_surrogate_var = include_surrogate_var
        self._u_key, self._mean, self._svar = None, None, None
        self._t_key, self._corr = None, None

    def surrogate_at(self, u):
        key = tuple(u)
        if key != self._u_key:
            aug = np.column_stack([self.X, np.tile(u, (self.m, 1))])
            pred = self.surrogate.predict(aug, include_intrinsic=False)
            self._mean, self._svar = pred.mean, pred.var
            self._u_key = key
        return self._mean, self._svar

    def md_corr(self, theta_md):
        key = tuple(theta_md)
        if key != self._t_key:
            self._corr = np.exp(-np.sum(self.D2 / theta_md, axis=-1))
            self._t_key = key
        return self._corr

    def __call__(self, u, sigma_md2, theta_md, sigma_eps2):
        mean, svar = self.surrogate_at(u)
        C = self.md_corr(theta_md)
        cov = sigma_md2 * C + sigma_eps2 * np.eye(self.m)
        if self.include_surrogate_var:
            cov[np.diag_indices(self.m)] += svar
        try:
            c = cho_factor(cov, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf
        r = self.y - mean
        quad = float(r @ cho_solve(c, r))
        logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
        return -0.5 * (self.m * np.log(2 * np.pi) + logdet + quad)


def koh_fit(surrogate, field: FieldData, prior: CalibrationPrior,
            mcmc: MCMCConfig = None) -> PosteriorSamples:
    """Metropolis-within-Gibbs over (u, sigma_md2, theta_md, sigma_eps2).

    Per-block random-walk scales adapt toward 20-40% acceptance during
    burn-in, then freeze.  Chains run with independent seeded streams.
    """
    mcmc = mcmc or MCMCConfig()
    if field.m:
        loglik = _FieldLikelihood(surrogate, field)
    else:
        loglik = lambda *state: 0.0  # prior-only run
    du, dx = prior.du, prior.dx
    u_range = prior.u_bounds[:, 1] - prior.u_bounds[:, 0]

    chains_out = []
    accept_stats = {b: [] for b in ("u", "sigma_md2", "theta_md", "sigma_eps2")}
    for c in range(mcmc.chains):
        rng = np.random.default_rng(np.random.SeedSequence((mcmc.seed, c)))
        state = None
        for _ in range(50):
            cand = prior.sample(rng)
            lp = prior.log_density(*cand)
            ll = loglik(*cand) if np.isfinite(lp) else -np.inf
            if np.isfinite(lp + ll):
                state = list(cand)
                log_post = lp + ll
                break
        if state is None:
            raise CalibrationError("non-finite likelihood at every initialization")
        scales = {"u": 0.1, "sigma_md2": 0.5, "theta_md": 0.5, "sigma_eps2": 0.5}
        counters = {b: [0, 0] for b in scales}
        total = mcmc.burn + mcmc.draws
        kept = {"u": [], "sigma_md2": [], "theta_md": [], "sigma_eps2": []}

        def try_update(block):
            nonlocal state, log_post
            u, smd2, thmd, seps2 = state
            if block == "u":
                prop = [u + scales["u"] * u_range * rng.standard_normal(du),
                        smd2, thmd, seps2]
                log_jac = 0.0
            elif block == "sigma_md2":
                new = smd2 * np.exp(scales["sigma_md2"] * rng.standard_normal())
                prop = [u, new, thmd, seps2]
                log_jac = np.log(new) - np.log(smd2)
            elif block == "theta_md":
                new = thmd * np.exp(scales["theta_md"] * rng.standard_normal(dx))
                prop = [u, smd2, new, seps2]
                log_jac = float(np.sum(np.log(new) - np.log(thmd)))
            else:
                new = seps2 * np.exp(scales["sigma_eps2"] * rng.standard_normal())
                prop = [u, smd2, thmd, new]
                log_jac = np.log(new) - np.log(seps2)
            lp = prior.log_density(*prop)
            if np.isfinite(lp):
                cand_post = lp + loglik(*prop)
            else:
                cand_post = -np.inf
            counters[block][1] += 1
            if np.log(rng.random()) < cand_post - log_post + log_jac:
                state = prop
                log_post = cand_post
                counters[block][0] += 1

        for it in range(total):
            for block in ("u", "sigma_md2", "theta_md", "sigma_eps2"):
                try_update(block)
            if it < mcmc.burn and (it + 1) % mcmc.adapt_window == 0:
                for block, (acc, tot) in counters.items():
                    rate = acc / max(tot, 1)
                    if rate < 0.2:
                        scales[block] *= 0.7
                    elif rate > 0.4:
                        scales[block] *= 1.4
                    counters[block] = [0, 0]
            if it == mcmc.burn - 1:
                for block in counters:
                    counters[block] = [0, 0]
            if it >= mcmc.burn and (it - mcmc.burn) % mcmc.thin == 0:
                kept["u"].append(state[0].copy())
                kept["sigma_md2"].append(state[1])
                kept["theta_md"].append(np.asarray(state[2], dtype=float).copy())
                kept["sigma_eps2"].append(state[3])
        for block, (acc, tot) in counters.items():
            rate = acc / max(tot, 1)
            accept_stats[block].append(rate)
            if acc == 0:
                raise CalibrationError(
                    f"zero acceptance for block {block!r} after adaptation")
        chains_out.append(kept)

    n_per = len(chains_out[0]["u"])
    u_all = np.vstack([np.asarray(c["u"]) for c in chains_out])
    smd2_all = np.concatenate([np.asarray(c["sigma_md2"]) for c in chains_out])
    thmd_all = np.vstack([np.asarray(c["theta_md"]) for c in chains_out])
    seps2_all = np.concatenate([np.asarray(c["sigma_eps2"]) for c in chains_out])
    chain_id = np.repeat(np.arange(mcmc.chains), n_per)
    rhat = {}
    for j in range(du):
        rhat[f"u{j + 1}"] = _split_rhat([np.asarray(c["u"])[:, j] for c in chains_out])
    rhat["sigma_md2"] = _split_rhat([np.log(np.asarray(c["sigma_md2"]))
                                     for c in chains_out])
    rhat["sigma_eps2"] = _split_rhat([np.log(np.asarray(c["sigma_eps2"]))
                                      for c in chains_out])
    return PosteriorSamples(
        u=u_all, sigma_md2=smd2_all, theta_md=thmd_all, sigma_eps2=seps2_all,
        chain=chain_id,
        acceptance={b: float(np.mean(v)) for b, v in accept_stats.items()},
        rhat=rhat)


def koh_predict(posterior: PosteriorSamples, surrogate, field: FieldData, xnew,
                target="reality", max_draws=500, seed=0):
    """Posterior predictive at new controllable inputs.

    Per retained draw: surrogate mean at (xnew, u), plus the discrepancy
    GP's conditional mean given the field residuals; the returned variance
    combines across-draw spread with within-draw variance (surrogate +
    discrepancy conditional, + observation noise when target is
    "observation").
    """
    if posterior.size == 0:
        raise ValueError("posterior is empty")
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xC0DE)))
    take = min(max_draws, posterior.size)
    idx = np.linspace(0, posterior.size - 1, take).astype(int)
    loglik = _FieldLikelihood(surrogate, field)
    m, p = field.m, xnew.shape[0]
    dxnew = xnew[:, None, :] - field.x[None, :, :]
    D2_new = dxnew ** 2
    means = np.empty((take, p))
    within = np.empty((take, p))
    for s, i in enumerate(idx):
        u = posterior.u[i]
        smd2 = posterior.sigma_md2[i]
        thmd = posterior.theta_md[i]
        seps2 = posterior.sigma_eps2[i]
        mean_f, svar_f = loglik.surrogate_at(u)
        C = loglik.md_corr(thmd)
        cov = smd2 * C + seps2 * np.eye(m)
        cov[np.diag_indices(m)] += svar_f
        c = cho_factor(cov, lower=True)
        r = field.y - mean_f
        k_new = smd2 * np.exp(-np.sum(D2_new / thmd, axis=-1))   # (p, m)
        sol = cho_solve(c, r)
        delta_mean = k_new @ sol
        delta_var = np.maximum(
            smd2 - np.einsum("pm,mp->p", k_new, cho_solve(c, k_new.T)), 0.0)
        aug = np.column_stack([xnew, np.tile(u, (p, 1))])
        pred = surrogate.predict(aug, include_intrinsic=False)
        means[s] = pred.mean + delta_mean
        within[s] = pred.var + delta_var
        if target == "observation":
            within[s] += seps2
    mean = means.mean(axis=0)
    var = means.var(axis=0) + within.mean(axis=0)
    return PredictiveDist(mean=mean, var=var, includes_intrinsic=False,
                          outside=np.zeros(p, dtype=bool))


# --------------------------------------------------------------- comparators

def nocal_predict(surrogate, u_bounds, xnew, n_draws=500, seed=0, sigma_eps2=0.0):
    """Prior-plugin predictions: u is sampled from its box prior, zero
    discrepancy assumed, observation noise fixed (the NOCAL comparator)."""
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    u_bounds = np.asarray(u_bounds, dtype=float).reshape(-1, 2)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x0CA1)))
    p = xnew.shape[0]
    draws = np.empty((n_draws, p))
    within = np.empty((n_draws, p))
    for s in range(n_draws):
        u = u_bounds[:, 0] + rng.random(u_bounds.shape[0]) * (
            u_bounds[:, 1] - u_bounds[:, 0])
        aug = np.column_stack([xnew, np.tile(u, (p, 1))])
        pred = surrogate.predict(aug, include_intrinsic=False)
        draws[s] = pred.mean
        within[s] = pred.var
    var = draws.var(axis=0) + within.mean(axis=0) + sigma_eps2
    return PredictiveDist(mean=draws.mean(axis=0), var=var,
                          includes_intrinsic=False,
                          outside=np.zeros(p, dtype=bool))


def single_predict(surrogate, u_fixed, xnew, sigma_eps2=0.0):
    """Fixed-guess plugin predictions (the SINGLE comparator)."""
    xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
    u = np.asarray(u_fixed, dtype=float).ravel()
    aug = np.column_stack([xnew, np.tile(u, (xnew.shape[0], 1))])
    pred = surrogate.predict(aug, include_intrinsic=False)
    return PredictiveDist(mean=pred.mean, var=pred.var + sigma_eps2,
                          includes_intrinsic=False, outside=pred.outside)


@dataclass
class OLSResult:
    u_hat: np.ndarray
    sse: float
    identifiable: bool
    diagnostics: list


def ols_calibrate(surrogate, field: FieldData, u_bounds, starts=8, seed=0):
    """Least-squares calibration: minimize the summed squared residual
    between field values and the surrogate mean over u, by multi-start
    bounded search.  Flat objectives are flagged non-identifiable."""
    from scipy import optimize
    if field.m == 0:
        raise ValueError("field data is empty")
    u_bounds = np.asarray(u_bounds, dtype=float).reshape(-1, 2)
    du = u_bounds.shape[0]
    m = field.m

    def sse(u):
        aug = np.column_stack([field.x, np.tile(u, (m, 1))])
        pred = surrogate.predict(aug, include_intrinsic=False)
        return float(np.sum((field.y - pred.mean) ** 2))

    lo, hi = u_bounds[:, 0], u_bounds[:, 1]
    probe = lo + sobol_points(64, du) * (hi - lo)
    probe_vals = np.array([sse(u) for u in probe])
    identifiable = (probe_vals.max() - probe_vals.min()) > 1e-8 * max(
        1.0, probe_vals.max())
    rng = np.random.default_rng(seed)
    best, diagnostics = None, []
    start_pts = probe[np.argsort(probe_vals)[:starts]]
    for x0 in start_pts:
        res = optimize.minimize(sse, x0, method="Powell",
                                bounds=list(zip(lo, hi)),
                                options={"xtol": 1e-8, "maxiter": 2000})
        diagnostics.append({"x0": x0.tolist(), "fun": float(res.fun),
                            "success": bool(res.success)})
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise CalibrationError("least-squares optimizer failed from every start")
    return OLSResult(u_hat=np.asarray(best.x, dtype=float), sse=float(best.fun),
                     identifiable=bool(identifiable), diagnostics=diagnostics)


# ----------------------------------------------------------- history matching

@dataclass
class ImplausibilityResult:
    values: np.ndarray
    nroy: np.ndarray

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        self.nroy = np.atleast_1d(np.asarray(self.nroy, dtype=bool))


def implausibility(surrogate, y_f, U, sigma_md2, sigma_eps2):
    """|y_F - mu_N(u)| / sqrt(sigma_N^2(u) + sigma_MD^2 + sigma_eps^2).

    NROY iff the statistic is strictly below 3 (equality is ruled out).
    ``y_f`` may be a scalar with one surrogate, or a vector with a list of
    per-output surrogates, reduced by the maximum across outputs.
    """
    if sigma_md2 < 0 or sigma_eps2 < 0:
        raise ValueError("variances must be >= 0")
    U = np.atleast_2d(np.asarray(U, dtype=float))
    surrs = surrogate if isinstance(surrogate, (list, tuple)) else [surrogate]
    ys = np.atleast_1d(np.asarray(y_f, dtype=float))
    if len(surrs) != ys.size:
        raise ValueError("need one surrogate per output")
    vals = np.zeros(U.shape[0])
    for s, y in zip(surrs, ys):
        pred = s.predict(U, include_intrinsic=False)
        denom2 = pred.var + sigma_md2 + sigma_eps2
        if np.any(denom2 <= 0):
            raise ValueError("implausibility denominator is zero")
        vals = np.maximum(vals, np.abs(y - pred.mean) / np.sqrt(denom2))
    return ImplausibilityResult(values=vals, nroy=vals < HM_THRESHOLD)


def surrogate_evaluator(model):
    """Adapter: surrogate -> (mean, variance) evaluator over candidate u."""

    def ev(U):
        pred = model.predict(np.atleast_2d(U), include_intrinsic=False)
        return pred.mean, pred.var

    return ev


def simulator_evaluator(handle, reps, seed):
    """Adapter: simulator handle -> mean over replicates with its MC variance."""

    def ev(U):
        U = np.atleast_2d(U)
        means = np.empty(U.shape[0])
        variances = np.empty(U.shape[0])
        for i, u in enumerate(U):
            from .testbeds.base import child_seed
            draws = handle.replicate(u, reps, child_seed(seed, i))
            means[i] = draws.mean()
            variances[i] = draws.var(ddof=1) / reps
        return means, variances

    return ev


@dataclass
class HMConfig:
    sigma_md2: float
    sigma_eps2: float
    n_candidates: int = 2000
    threshold: float = HM_THRESHOLD
    seed: int = 0


@dataclass
class HMWaveResult:
    candidates: np.ndarray
    values: np.ndarray
    retained: np.ndarray
    terminal: bool
    box: np.ndarray


def hm_wave(evaluator, y_f, cfg: HMConfig, bounds=None, sample=None) -> HMWaveResult:
    """One history-matching wave.

    The wave's search box is ``bounds`` (du, 2) directly, or the bounding
    box of ``sample`` (the points retained by the previous wave).
    Candidates are drawn uniformly from that box, scored, and retained when
    the implausibility stays below the threshold; the terminal flag is set
    when nothing survives.
    """
    if (bounds is None) == (sample is None):
        raise ValueError("give exactly one of bounds or sample")
    if bounds is not None:
        box = np.asarray(bounds, dtype=float).reshape(-1, 2)
    else:
        pts = np.atleast_2d(np.asarray(sample, dtype=float))
        if pts.size == 0:
            raise ValueError("NROY sample is empty")
        box = np.column_stack([pts.min(axis=0), pts.max(axis=0)])
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0x404)))
    width = np.maximum(box[:, 1] - box[:, 0], 1e-12)
    U = box[:, 0] + rng.random((cfg.n_candidates, box.shape[0])) * width
    mean, var = evaluator(U)
    denom = np.sqrt(np.asarray(var) + cfg.sigma_md2 + cfg.sigma_eps2)
    if np.any(denom <= 0):
        raise ValueError("implausibility denominator is zero")
    vals = np.abs(float(y_f) - np.asarray(mean)) / denom
    keep = vals < cfg.threshold
    return HMWaveResult(candidates=U, values=vals, retained=U[keep],
                        terminal=not bool(keep.any()), box=box)


# -------------------------------------------------------------------- ABC

@dataclass
class ABCResult:
    accepted: np.ndarray
    n_draws: int
    acceptance_rate: float
    distances: np.ndarray


def abc_reject(evaluator, y_f, prior_sampler, n_draws, tolerance=0.0,
               distance=None, seed=0, batch=4096):
    """Rejection ABC: draw parameters from the prior, simulate, accept when
    the distance to the observation is within tolerance.

    ``evaluator(thetas, rng)`` maps a batch of parameter draws to outputs;
    ``prior_sampler(rng, size)`` draws parameters.  Zero acceptances return
    an empty result (with a warning), not an error.
    """
    import warnings as _warnings
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    distance = distance or (lambda z, y: np.abs(np.asarray(z, dtype=float) - y))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xABC)))
    accepted, dists = [], []
    done = 0
    while done < n_draws:
        b = min(batch, n_draws - done)
        thetas = np.atleast_1d(prior_sampler(rng, b))
        z = np.asarray(evaluator(thetas, rng), dtype=float)
        dvals = np.asarray(distance(z, y_f), dtype=float)
        keep = dvals <= tolerance
        if np.any(keep):
            accepted.append(np.atleast_2d(np.asarray(thetas))[keep]
                            if np.ndim(thetas) > 1 else np.asarray(thetas)[keep])
            dists.append(dvals[keep])
        done += b
    if accepted:
        acc = np.concatenate(accepted)
        dist_arr = np.concatenate(dists)
    else:
        _warnings.warn("rejection ABC accepted no draws; returning empty result")
        acc = np.empty(0)
        dist_arr = np.empty(0)
    return ABCResult(accepted=acc, n_draws=n_draws,
                     acceptance_rate=len(acc) / n_draws, distances=dist_arr)
