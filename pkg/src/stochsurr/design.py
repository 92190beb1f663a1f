"""Experimental designs for stochastic simulators.

Space-filling generators (Latin hypercubes, maximin-improved Latin
hypercubes, Sobol sequences) plus the IMSPE criterion that drives replicate
allocation and one-at-a-time sequential design.  IMSPE integrates the
predictive variance of the MEAN surface over the input box (the intrinsic
variance still enters the information matrix through the per-site noise);
quadrature uses a fixed Sobol grid, so the criterion is deterministic given
the grid.

Candidate evaluation uses exact block-inverse updates: appending a
replicate is a rank-one diagonal change, appending a fresh site is a
bordered extension, so a 200-candidate sweep costs O(n^2 m + G n) rather
than O(n^3 m).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.stats import qmc

from .gp import SearchConfig, chol_with_jitter
from .kernels import KernelSpec, cross_corr

MAX_SOBOL_DIM = 21201  # scipy's direction-number table


# ----------------------------------------------------------- space filling

def lhd(n, d, rng):
    """Random Latin hypercube: one point in each of n equal bins per axis."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(rng)
    pts = np.empty((n, d))
    for j in range(d):
        pts[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return pts


def _min_sq_dist(X):
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    return d2


def maximin_lhd(n, d, iters=2000, rng=None):
    """Latin hypercube improved by swap search on the minimum pairwise distance.

    Swapping one column's values between two rows preserves the bin
    property, so every iterate remains a Latin hypercube.
    """
    rng = np.random.default_rng(rng)
    X = lhd(n, d, rng)
    if n < 2:
        return X
    d2 = _min_sq_dist(X)
    current = d2.min()
    cols = rng.integers(0, d, size=iters)
    pairs = rng.integers(0, n, size=(iters, 2))
    for t in range(iters):
        a, b = pairs[t]
        if a == b:
            continue
        j = cols[t]
        Xa, Xb = X[a].copy(), X[b].copy()
        Xa[j], Xb[j] = X[b, j], X[a, j]
        da = np.sum((X - Xa) ** 2, axis=1)
        db = np.sum((X - Xb) ** 2, axis=1)
        da[a] = da[b] = np.inf
        db[a] = db[b] = np.inf
        dab = np.sum((Xa - Xb) ** 2)
        mask = np.ones(n, dtype=bool)
        mask[[a, b]] = False
        rest = d2[mask][:, mask].min() if n > 2 else np.inf
        candidate = min(rest, da.min(), db.min(), dab)
        if candidate > current:
            X[a], X[b] = Xa, Xb
            d2[a, :] = d2[:, a] = da
            d2[b, :] = d2[:, b] = db
            d2[a, b] = d2[b, a] = dab
            d2[a, a] = d2[b, b] = np.inf
            current = candidate
    return X


def sobol_points(n, d):
    """First n points of the (unscrambled) Sobol sequence in [0,1)^d.

    Prefix property: sobol_points(n + m, d)[:n] == sobol_points(n, d).
    """
    if d < 1 or d > MAX_SOBOL_DIM:
        raise ValueError(f"dimension must be in [1, {MAX_SOBOL_DIM}]")
    if n < 1:
        raise ValueError("n must be >= 1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # balance warning for non-power-of-two n
        return qmc.Sobol(d, scramble=False).random(n)


def scale_to(points, bounds):
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
    return bounds[:, 0] + np.asarray(points) * (bounds[:, 1] - bounds[:, 0])


# ------------------------------------------------------------------- plans

@dataclass
class DesignPlan:
    """Unique sites with a replicate allocation and per-site stage labels."""

    sites: np.ndarray
    reps: np.ndarray
    bounds: np.ndarray
    stage: np.ndarray = None

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.reps = np.asarray(self.reps, dtype=np.int64)
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if self.stage is None:
            self.stage = np.zeros(self.sites.shape[0], dtype=np.int64)
        else:
            self.stage = np.asarray(self.stage, dtype=np.int64)
        if np.any(self.reps < 1):
            raise ValueError("replicate counts must be >= 1")
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        if np.any(self.sites < lo - 1e-12) or np.any(self.sites > hi + 1e-12):
            raise ValueError("plan sites must lie inside bounds")

    @property
    def n(self):
        return self.sites.shape[0]

    @property
    def total_runs(self):
        return int(self.reps.sum())

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            d = self.sites.shape[1]
            writer.writerow([f"x{j + 1}" for j in range(d)] + ["reps", "stage"])
            for i in range(self.n):
                writer.writerow([repr(float(c)) for c in self.sites[i]]
                                + [int(self.reps[i]), int(self.stage[i])])


@dataclass
class CandidateSet:
    """Fresh candidate points plus (optionally) the existing unique sites."""

    fresh: np.ndarray
    include_existing: bool = True

    def __post_init__(self):
        self.fresh = np.atleast_2d(np.asarray(self.fresh, dtype=float))
        if self.fresh.size == 0 and not self.include_existing:
            raise ValueError("candidate set is empty")


class HypotheticalGP:
    """Hyperparameters without data: lets design studies run before fitting."""

    def __init__(self, kernel: KernelSpec, sigma2, noise2, bounds):
        self.kernel = kernel
        self.sigma2 = float(sigma2)
        self.noise2 = float(noise2)
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)

    def scale(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (X - self.bounds[:, 0]) / (self.bounds[:, 1] - self.bounds[:, 0])

    def unscale(self, X_scaled):
        X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
        return X * (self.bounds[:, 1] - self.bounds[:, 0]) + self.bounds[:, 0]

    def relative_noise_at(self, X_scaled):
        return np.full(np.atleast_2d(X_scaled).shape[0], self.noise2 / self.sigma2)


# ------------------------------------------------------------------- IMSPE

class ImspeState:
    """Information-matrix bookkeeping for one plan under fixed hyperparameters."""

    def __init__(self, model, sites_native, reps, grid_unit=None, n_grid=1000,
                 include_intrinsic=False):
        self.model = model
        self.kernel = model.kernel
        self.sigma2 = model.sigma2
        self.X = model.scale(sites_native)
        self.reps = np.asarray(reps, dtype=float).copy()
        if grid_unit is None:
            grid_unit = sobol_points(n_grid, self.X.shape[1])
        self.grid = np.atleast_2d(grid_unit)
        if self.grid.size == 0:
            raise ValueError("quadrature grid is empty")
        self.include_intrinsic = include_intrinsic
        self.lam = np.asarray(model.relative_noise_at(self.X), dtype=float)
        self._intrinsic_term = (
            float(np.mean(model.relative_noise_at(self.grid))) * self.sigma2
            if include_intrinsic else 0.0)
        self._rebuild()

    def _rebuild(self):
        n = self.X.shape[0]
        C = cross_corr(self.kernel, self.X)
        K = C + np.diag(self.lam / self.reps)
        chol, _ = chol_with_jitter(K, 1.0, X=self.X)
        self.Kinv = cho_solve(chol, np.eye(n))
        self.CG = cross_corr(self.kernel, self.grid, self.X)   # (G, n)
        self.W = self.CG.T @ self.CG / self.grid.shape[0]
        self.trKW = float(np.sum(self.Kinv * self.W))

    @property
    def value(self):
        return self.sigma2 * (1.0 - self.trKW) + self._intrinsic_term

    # -- candidate sweeps ----------------------------------------------------
    def replicate_values(self):
        """IMSPE after one extra replicate at each existing site (vectorized)."""
        delta = self.lam / (self.reps + 1) - self.lam / self.reps
        G = self.Kinv @ self.W @ self.Kinv
        gain = -delta * np.diag(G) / (1.0 + delta * np.diag(self.Kinv))
        return self.sigma2 * (1.0 - (self.trKW + gain)) + self._intrinsic_term

    def fresh_values(self, cand_unit, lam_cand):
        """IMSPE after appending each candidate as a new one-replicate site."""
        cand = np.atleast_2d(cand_unit)
        Cxc = cross_corr(self.kernel, self.X, cand)          # (n, m)
        U = self.Kinv @ Cxc                                   # (n, m)
        s = (1.0 + np.asarray(lam_cand)) - np.einsum("nm,nm->m", Cxc, U)
        s = np.maximum(s, 1e-12)
        WU = self.W @ U
        uWu = np.einsum("nm,nm->m", U, WU)
        CGc = cross_corr(self.kernel, self.grid, cand)        # (G, m)
        Wz = self.CG.T @ CGc / self.grid.shape[0]             # (n, m)
        uWz = np.einsum("nm,nm->m", U, Wz)
        wzz = np.mean(CGc ** 2, axis=0)
        gain = (uWu - 2.0 * uWz + wzz) / s
        return self.sigma2 * (1.0 - (self.trKW + gain)) + self._intrinsic_term, s

    def var_at(self, cand_unit):
        """Mean-surface predictive variance at candidates (for tie-breaking)."""
        cand = np.atleast_2d(cand_unit)
        Cxc = cross_corr(self.kernel, self.X, cand)
        U = self.Kinv @ Cxc
        return self.sigma2 * (1.0 - np.einsum("nm,nm->m", Cxc, U))

    # -- mutations -----------------------------------------------------------
    def add_replicate(self, i):
        self.reps[i] += 1
        self._rebuild()

    def add_site(self, x_unit, lam_x):
        self.X = np.vstack([self.X, np.atleast_2d(x_unit)])
        self.reps = np.append(self.reps, 1.0)
        self.lam = np.append(self.lam, lam_x)
        self._rebuild()


def imspe(model, plan: DesignPlan, grid=None, n_grid=1000, include_intrinsic=False):
    """Sobol-grid quadrature of the mean-surface predictive variance.

    ``grid`` is in native units when given; otherwise a fixed Sobol grid of
    ``n_grid`` points fills the box.  Deterministic given the grid.
    """
    grid_unit = None if grid is None else model.scale(grid)
    state = ImspeState(model, plan.sites, plan.reps, grid_unit=grid_unit,
                       n_grid=n_grid, include_intrinsic=include_intrinsic)
    return state.value


def allocate_replicates(model, sites, budget, grid=None, n_grid=1000):
    """Greedy integer allocation of ``budget`` runs over fixed sites.

    Starts from one replicate everywhere and repeatedly adds the replicate
    with the largest IMSPE decrease.  Returns the allocation and the IMSPE
    trace (length budget - n + 1, starting at the all-ones value).
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    n = sites.shape[0]
    if budget < n:
        raise ValueError(f"budget {budget} is below one run per site ({n})")
    grid_unit = None if grid is None else model.scale(grid)
    state = ImspeState(model, sites, np.ones(n), grid_unit=grid_unit, n_grid=n_grid)
    trace = [state.value]
    for _ in range(budget - n):
        vals = state.replicate_values()
        best = int(np.argmin(vals))
        state.add_replicate(best)
        trace.append(state.value)
    return state.reps.astype(np.int64), np.asarray(trace)


@dataclass
class SeqStep:
    """Outcome of one sequential-design pick."""

    x: np.ndarray
    is_replicate: bool
    site_index: int
    imspe: float
    plan: DesignPlan


def seq_design_step(model, candidates: CandidateSet, plan: DesignPlan = None,
                    grid=None, n_grid=1000, state: ImspeState = None,
                    rel_tol=1e-9):
    """Pick the candidate (fresh point or replicate) minimizing IMSPE(D + z).

    Near-ties (within ``rel_tol`` relative) break toward the largest
    mean-surface predictive variance, then the lowest candidate index;
    replicate candidates are indexed before fresh ones.
    """
    if state is None:
        if plan is None:
            plan = DesignPlan(model.sites, model.stats.reps, model.bounds)
        state = ImspeState(model, plan.sites, plan.reps,
                           grid_unit=None if grid is None else model.scale(grid),
                           n_grid=n_grid)
    else:
        plan = plan or DesignPlan(state.model.unscale(state.X),
                                  state.reps.astype(np.int64), state.model.bounds)
    values, variances, entries = [], [], []
    if candidates.include_existing:
        rep_vals = state.replicate_values()
        var_sites = state.var_at(state.X)
        for i in range(state.X.shape[0]):
            values.append(rep_vals[i])
            variances.append(var_sites[i])
            entries.append(("rep", i))
    fresh = np.atleast_2d(candidates.fresh)
    if fresh.size:
        fresh_unit = state.model.scale(fresh)
        lam_f = state.model.relative_noise_at(fresh_unit)
        f_vals, _ = state.fresh_values(fresh_unit, lam_f)
        f_var = state.var_at(fresh_unit)
        for k in range(fresh_unit.shape[0]):
            values.append(f_vals[k])
            variances.append(f_var[k])
            entries.append(("new", k))
    values = np.asarray(values)
    variances = np.asarray(variances)
    best_val = values.min()
    tied = np.flatnonzero(values <= best_val + rel_tol * max(abs(best_val), 1e-30))
    choice = tied[int(np.argmax(variances[tied]))] if tied.size > 1 else int(tied[0])
    kind, idx = entries[choice]
    if kind == "rep":
        x = plan.sites[idx].copy()
        state.add_replicate(idx)
        new_plan = DesignPlan(plan.sites, state.reps.astype(np.int64), plan.bounds,
                              stage=plan.stage)
        return SeqStep(x=x, is_replicate=True, site_index=idx,
                       imspe=float(values[choice]), plan=new_plan)
    x = fresh[idx]
    lam_x = float(state.model.relative_noise_at(state.model.scale(fresh[idx:idx + 1]))[0])
    state.add_site(state.model.scale(fresh[idx:idx + 1])[0], lam_x)
    new_plan = DesignPlan(np.vstack([plan.sites, fresh[idx:idx + 1]]),
                          state.reps.astype(np.int64), plan.bounds,
                          stage=np.append(plan.stage, plan.stage.max() + 1))
    return SeqStep(x=x, is_replicate=False, site_index=plan.n,
                   imspe=float(values[choice]), plan=new_plan)


@dataclass
class SequentialResult:
    data: object
    model: object
    plan: DesignPlan
    imspe_trace: np.ndarray
    picks: list = field(default_factory=list)


def run_sequential_design(simulator, data, budget, seed=0, surrogate="het",
                          kind="squared-exponential", candidates_per_step=200,
                          refit_every=25, n_grid=1000, search=None):
    """One-at-a-time IMSPE design: stage-1 data in, final model and plan out.

    ``refit_every`` controls how often hyperparameters are re-estimated
    (None freezes them for the whole run; the information state still
    absorbs every accepted point either way).
    """
    from .hetgp import fit_hetgp
    from .gp import fit_homgp
    from .testbeds.base import child_seed

    search = search or SearchConfig(seed=seed)

    def fit(dataset):
        if surrogate == "het":
            return fit_hetgp(dataset, kind=kind, search=search)
        return fit_homgp(dataset, kind=kind, search=search)

    model = fit(data)
    d = data.dim
    state = ImspeState(model, data.sites, data.reps, n_grid=n_grid)
    plan = DesignPlan(data.sites, data.reps, data.bounds)
    trace, picks = [], []
    cursor = 0
    since_refit = 0
    for step in range(budget):
        fresh_unit = sobol_points(cursor + candidates_per_step, d)[cursor:]
        cursor += candidates_per_step
        fresh = scale_to(fresh_unit, data.bounds)
        result = seq_design_step(model, CandidateSet(fresh), plan=plan, state=state)
        plan = result.plan
        y = float(simulator.run(result.x, child_seed(seed, step)))
        data = data.add_run(result.x, y)
        trace.append(result.imspe)
        picks.append((result.x, result.is_replicate))
        since_refit += 1
        if refit_every is not None and since_refit >= refit_every and step < budget - 1:
            model = fit(data)
            state = ImspeState(model, data.sites, data.reps, n_grid=n_grid)
            plan = DesignPlan(data.sites, data.reps, data.bounds)
            since_refit = 0
    model = fit(data)
    return SequentialResult(data=data, model=model, plan=plan,
                            imspe_trace=np.asarray(trace), picks=picks)
