"""Reproducible experiment pipelines tying the library together.

``run_pipeline`` executes one named recipe from a ``RunConfig`` and fills a
ResultStore; ``compare_surrogates`` repeats a design+fit+score experiment
with derived seeds.  Seeds are mandatory everywhere (no wall-clock
defaults), and repetition k derives its stream as SeedSequence((seed, k))
so any repetition reproduces in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import __version__
from .analysis import bo_loop, rmse, score, sobol_indices, variance_sobol
from .calibration import (CalibrationPrior, FieldData, HMConfig, MCMCConfig,
                          abc_reject, hm_wave, koh_fit, koh_predict,
                          nocal_predict, ols_calibrate, single_predict,
                          surrogate_evaluator)
from .data import ReplicateDataset
from .design import (DesignPlan, allocate_replicates, lhd, maximin_lhd,
                     run_sequential_design, scale_to, sobol_points)
from .errors import StochsurrError
from .gp import GPModel, SearchConfig, fit_homgp
from .hetgp import HetGPModel, fit_hetgp
from .qk import empirical_quantiles, fit_qk, predict_qk
from .sk import SKModel, fit_sk
from .store import ResultStore
from .testbeds import (FieldConfig, FishConfig, OceanConfig, child_seed,
                       fish_handle, make_synthetic_field, ocean_handle)

PIPELINES = {}


def pipeline(name):
    def deco(fn):
        PIPELINES[name] = fn
        return fn
    return deco


REQUIRED = ("pipeline", "seed", "out")

DEFAULTS = {
    "surrogate": "het",
    "testbed": "ocean2d",
    "design.kind": "maximin",
    "design.sites": 50,
    "design.reps": 20,
    "design.iters": 2000,
    "budget": 0,
    "refit_every": 25,
    "candidates": 200,
    "mcmc.chains": 4,
    "mcmc.draws": 2000,
    "mcmc.burn": 1000,
    "abc.method": "direct",
    "abc.observed": 25,
    "abc.draws": 10000,
    "abc.tolerance": 0.0,
    "hm.waves": 3,
    "hm.candidates": 2000,
    "hm.sigma_md2": 4.0,
    "hm.sigma_eps2": 4.0,
    "field.sites": 150,
    "field.sims": 200,
    "truth.sites": 500,
    "truth.reps": 200,
    "repetitions": 100,
    "methods": "hom,het",
    "sensitivity.n_mc": 100000,
    "optimize.budget": 30,
    "threads": 1,
}


@dataclass
class RunConfig:
    """Validated flat config for one pipeline run."""

    values: dict
    text: str = ""

    @classmethod
    def from_file(cls, path, overrides=None):
        values = cfgmod.load(path)
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.finalize(values)

    @classmethod
    def from_dict(cls, values):
        return cls.finalize(dict(values))

    @classmethod
    def finalize(cls, values):
        missing = [k for k in REQUIRED if k not in values or values[k] in ("", None)]
        if missing:
            raise ValueError("config is missing required fields: "
                             + ", ".join(missing))
        merged = dict(DEFAULTS)
        merged.update(values)
        return cls(values=merged, text=cfgmod.dumps(merged))

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self):
        return int(self.values["seed"])

    @property
    def out(self):
        return Path(str(self.values["out"]))


def get_handle(cfg, seed=None):
    name = str(cfg["testbed"])
    if name == "fish":
        return fish_handle(FishConfig())
    if name == "ocean":
        return ocean_handle(OceanConfig())
    if name == "ocean2d":
        return ocean_handle(OceanConfig(), fixed_k=(700.0, 200.0))
    raise ValueError(f"unknown testbed {name!r}")


def make_design_sites(cfg, handle, seed):
    kind = str(cfg["design.kind"])
    n = int(cfg["design.sites"])
    d = handle.dim
    if kind == "maximin":
        unit = maximin_lhd(n, d, iters=int(cfg["design.iters"]), rng=seed)
    elif kind == "lhd":
        unit = lhd(n, d, np.random.default_rng(seed))
    elif kind == "sobol":
        unit = sobol_points(n, d)
    else:
        raise ValueError(f"unknown design kind {kind!r}")
    sites = scale_to(unit, handle.bounds)
    if handle.name == "fish":
        sites = np.floor(sites)
    return sites


def run_design_dataset(cfg, handle, seed, reps=None, transform=None):
    sites = make_design_sites(cfg, handle, seed)
    reps = int(cfg["design.reps"]) if reps is None else int(reps)
    groups = handle.run_design(sites, np.full(len(sites), reps), seed)
    if transform is not None:
        groups = [transform(np.asarray(g)) for g in groups]
    return ReplicateDataset(sites, groups, handle.bounds)


def fit_surrogate(kind, data, seed):
    search = SearchConfig(seed=seed)
    if kind == "hom":
        return fit_homgp(data, search=search)
    if kind == "het":
        return fit_hetgp(data, search=search)
    if kind == "sk":
        return fit_sk(data, min_reps=10, search=search)
    raise ValueError(f"unknown surrogate kind {kind!r}")


def save_dataset(store, data, name="runs"):
    data.to_csv(store.path("datasets", f"{name}.csv"),
                store.path("datasets", f"{name}_bounds.cfg"))


def save_model(store, model, name="model"):
    model.save(store.path("models", f"{name}.json"))


def prediction_rows(model, grid):
    pred_m = model.predict(grid, include_intrinsic=False)
    pred_y = model.predict(grid, include_intrinsic=True)
    for i in range(len(grid)):
        yield list(grid[i]) + [pred_m.mean[i], pred_m.var[i], pred_y.var[i]]


def grid_for(handle, per_dim=None):
    d = handle.dim
    per_dim = per_dim or (201 if d == 1 else 33)
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in handle.bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


# ------------------------------------------------------------------ pipelines

@pipeline("fit")
def run_fit(cfg, store):
    seed = cfg.seed
    if cfg.get("dataset"):
        data = ReplicateDataset.from_csv(cfg["dataset"], cfg.get("bounds"))
        handle = None
    else:
        handle = get_handle(cfg)
        data = run_design_dataset(cfg, handle, seed)
        save_dataset(store, data)
    model = fit_surrogate(str(cfg["surrogate"]), data, seed)
    save_model(store, model)
    header = [f"x{j+1}" for j in range(data.dim)] + ["mean", "var_mean", "var_y"]
    grid = grid_for(handle) if handle is not None else data.sites
    store.write_csv("metrics", "predictions.csv", header, prediction_rows(model, grid))
    store.write_csv("metrics", "fit.csv", ["n", "N", "loglik"],
                    [[data.n, data.N, model.loglik()]])
    return model


@pipeline("predict")
def run_predict(cfg, store):
    if not cfg.get("model"):
        raise ValueError("config is missing required fields: model")
    path = Path(str(cfg["model"]))
    import json as _json
    kind = _json.loads(path.read_text())["kind"]
    cls = {"homgp": GPModel, "hetgp": HetGPModel, "sk": SKModel}[kind]
    model = cls.load(path)
    if cfg.get("points"):
        import csv as _csv
        with open(cfg["points"], newline="") as fh:
            rows = list(_csv.reader(fh))
        grid = np.array([[float(v) for v in r] for r in rows[1:]])
    else:
        grid = model.sites
    d = grid.shape[1]
    header = [f"x{j+1}" for j in range(d)] + ["mean", "var_mean", "var_y"]
    store.write_csv("metrics", "predictions.csv", header, prediction_rows(model, grid))


@pipeline("design")
def run_design(cfg, store):
    seed = cfg.seed
    handle = get_handle(cfg)
    kind = str(cfg["design.kind"])
    if kind in ("maximin", "lhd", "sobol"):
        sites = make_design_sites(cfg, handle, seed)
        plan = DesignPlan(sites, np.full(len(sites), int(cfg["design.reps"])),
                          handle.bounds)
        plan.to_csv(store.path("designs", "plan.csv"))
        return plan
    if kind == "two-stage":
        stage1_cfg = RunConfig.from_dict({**cfg.values, "design.kind": "maximin"})
        stage1 = run_design_dataset(stage1_cfg, handle, seed, reps=5)
        model = fit_surrogate(str(cfg["surrogate"]), stage1, seed)
        budget = int(cfg["budget"]) or 2 * stage1.N
        reps, trace = allocate_replicates(model, stage1.sites, budget)
        plan = DesignPlan(stage1.sites, reps, handle.bounds,
                          stage=np.ones(stage1.n, dtype=int))
        plan.to_csv(store.path("designs", "plan.csv"))
        store.write_csv("designs", "imspe_trace.csv", ["step", "imspe"],
                        list(enumerate(trace)))
        return plan
    if kind == "sequential":
        stage1_cfg = RunConfig.from_dict({**cfg.values, "design.kind": "maximin"})
        stage1 = run_design_dataset(stage1_cfg, handle, seed, reps=5)
        result = run_sequential_design(
            handle, stage1, budget=int(cfg["budget"]),
            seed=seed, surrogate=str(cfg["surrogate"]),
            candidates_per_step=int(cfg["candidates"]),
            refit_every=int(cfg["refit_every"]) or None)
        result.plan.to_csv(store.path("designs", "plan.csv"))
        store.write_csv("designs", "imspe_trace.csv", ["step", "imspe"],
                        list(enumerate(result.imspe_trace)))
        save_dataset(store, result.data)
        save_model(store, result.model)
        return result
    raise ValueError(f"unknown design kind {kind!r}")


@pipeline("testbed")
def run_testbed(cfg, store):
    seed = cfg.seed
    handle = get_handle(cfg)
    raw = cfg.get("inputs")
    if raw is None:
        raise ValueError("config is missing required fields: inputs")
    inputs = np.atleast_1d(np.asarray(raw, dtype=float))
    reps = int(cfg.get("reps", 1))
    draws = handle.replicate(inputs, reps, seed)
    header = [f"x{j+1}" for j in range(handle.dim)] + ["rep", "y"]
    rows = [list(inputs) + [r + 1, y] for r, y in enumerate(draws)]
    store.write_csv("datasets", "runs.csv", header, rows)
    return draws


def _ocean_calibration_setup(cfg, store, seed):
    """Shared scaffolding: synthetic field + 4-d surrogate on simulator runs."""
    ocean_cfg = OceanConfig()
    fc = FieldConfig(n_sites=int(cfg["field.sites"]),
                     sims_per_site=int(cfg["field.sims"]),
                     maximin_iters=int(cfg["design.iters"]))
    X_f, Y_f, truth = make_synthetic_field(fc, ocean_cfg, seed=seed)
    field = FieldData(X_f, Y_f)
    handle = ocean_handle(ocean_cfg)
    n_design = int(cfg["design.sites"])
    design_reps = int(cfg["design.reps"])
    sites = scale_to(maximin_lhd(n_design, 4, iters=int(cfg["design.iters"]),
                                 rng=seed + 1), handle.bounds)
    groups = handle.run_design(sites, np.full(n_design, design_reps),
                               child_seed(seed, 1))
    data = ReplicateDataset(sites, groups, handle.bounds)
    surrogate = fit_surrogate(str(cfg["surrogate"]), data, seed)
    prior = CalibrationPrior.default(np.asarray(ocean_cfg.k_bounds), field,
                                     x_bounds=np.asarray(ocean_cfg.domain))
    return field, truth, surrogate, prior, ocean_cfg


@pipeline("calibrate")
def run_calibrate(cfg, store):
    seed = cfg.seed
    method = str(cfg.get("method", "koh"))
    field, truth, surrogate, prior, ocean_cfg = _ocean_calibration_setup(
        cfg, store, seed)
    field.to_csv(store.path("datasets", "field.csv"))
    truth.to_json(store.path("datasets", "truth.json"))
    save_model(store, surrogate)
    xq = truth.sites
    if method == "koh":
        mcmc = MCMCConfig(chains=int(cfg["mcmc.chains"]),
                          draws=int(cfg["mcmc.draws"]),
                          burn=int(cfg["mcmc.burn"]), seed=seed)
        post = koh_fit(surrogate, field, prior, mcmc)
        post.to_csv(store.path("posteriors", "draws.csv"))
        post.diagnostics_json(store.path("posteriors", "diagnostics.json"))
        pred = koh_predict(post, surrogate, field, xq, seed=seed)
    elif method == "ols":
        res = ols_calibrate(surrogate, field, prior.u_bounds, seed=seed)
        store.write_csv("posteriors", "estimate.csv",
                        ["u1", "u2", "sse", "identifiable"],
                        [list(res.u_hat) + [res.sse, int(res.identifiable)]])
        pred = single_predict(surrogate, res.u_hat, xq,
                              sigma_eps2=truth.noise_var)
    elif method == "single":
        guess = cfg.get("guess", [600.0, 400.0])
        pred = single_predict(surrogate, np.asarray(guess, dtype=float), xq,
                              sigma_eps2=truth.noise_var)
    elif method == "nocal":
        pred = nocal_predict(surrogate, prior.u_bounds, xq, seed=seed,
                             sigma_eps2=truth.noise_var)
    else:
        raise ValueError(f"unknown calibration method {method!r}")
    report_rows = [[rmse(pred.mean, truth.reality),
                    score(pred.mean, pred.var, truth.reality), len(xq)]]
    store.write_csv("metrics", "scores.csv", ["rmse", "score", "n_test"],
                    report_rows)
    return pred


def fish_prior_sampler(lo=200, hi=4000):
    def sampler(rng, size):
        return rng.integers(lo, hi + 1, size=size)
    return sampler


@pipeline("abc")
def run_abc(cfg, store):
    seed = cfg.seed
    fish_cfg = FishConfig()
    observed = int(cfg["abc.observed"])
    method = str(cfg["abc.method"])
    n_draws = int(cfg["abc.draws"])
    tol = float(cfg["abc.tolerance"])
    if method == "direct":
        from .testbeds.fish import fish_simulate
        counter = iter(range(10 ** 12))

        def ev(thetas, rng):
            return np.array([fish_simulate(int(t), fish_cfg,
                                           child_seed(seed, next(counter)))
                             for t in np.atleast_1d(thetas)])
    elif method == "surrogate":
        handle = fish_handle(fish_cfg)
        data = run_design_dataset(cfg, handle, child_seed(seed, 7),
                                  transform=np.sqrt)
        model = fit_surrogate(str(cfg["surrogate"]), data, seed)
        save_model(store, model)

        def ev(thetas, rng):
            pred = model.predict(np.atleast_1d(thetas)[:, None],
                                 include_intrinsic=True)
            z = pred.mean + np.sqrt(pred.var) * rng.standard_normal(len(pred.mean))
            return np.rint(np.maximum(z, 0.0) ** 2)
    else:
        raise ValueError(f"unknown abc method {method!r}")
    res = abc_reject(ev, float(observed), fish_prior_sampler(), n_draws,
                     tolerance=tol, seed=seed)
    store.write_csv("posteriors", "accepted.csv", ["population"],
                    [[v] for v in np.asarray(res.accepted).ravel()])
    store.write_csv("metrics", "abc.csv", ["n_draws", "accepted", "rate"],
                    [[res.n_draws, len(res.accepted), res.acceptance_rate]])
    return res


@pipeline("hm")
def run_hm(cfg, store):
    seed = cfg.seed
    fish_cfg = FishConfig()
    handle = fish_handle(fish_cfg)
    data = run_design_dataset(cfg, handle, child_seed(seed, 7), transform=np.sqrt)
    model = fit_surrogate(str(cfg["surrogate"]), data, seed)
    save_model(store, model)
    observed = float(cfg["abc.observed"])

    class SqrtScale:
        """Implausibility on the square-root scale the surrogate was fit on."""

        def __init__(self, m):
            self.m = m

        def __call__(self, U):
            pred = self.m.predict(np.atleast_2d(U), include_intrinsic=False)
            return pred.mean, pred.var

    ev = SqrtScale(model)
    y_sqrt = np.sqrt(observed)
    hmcfg = HMConfig(sigma_md2=float(cfg["hm.sigma_md2"]),
                     sigma_eps2=float(cfg["hm.sigma_eps2"]),
                     n_candidates=int(cfg["hm.candidates"]), seed=seed)
    result = hm_wave(ev, y_sqrt, hmcfg, bounds=handle.bounds)
    rows = []
    for wave in range(int(cfg["hm.waves"])):
        rows.append([wave + 1, result.retained.shape[0],
                     int(result.terminal),
                     result.box[0, 0], result.box[0, 1]])
        store.write_csv("posteriors", f"retained_wave{wave + 1}.csv",
                        ["population"], [[v] for v in result.retained.ravel()])
        if result.terminal:
            break
        hmcfg = HMConfig(sigma_md2=hmcfg.sigma_md2, sigma_eps2=hmcfg.sigma_eps2,
                         n_candidates=hmcfg.n_candidates, seed=seed + wave + 1)
        result = hm_wave(ev, y_sqrt, hmcfg, sample=result.retained)
    store.write_csv("metrics", "hm.csv",
                    ["wave", "retained", "terminal", "box_lo", "box_hi"], rows)
    return result


@pipeline("optimize")
def run_optimize(cfg, store):
    seed = cfg.seed
    handle = get_handle(cfg)
    data = run_design_dataset(cfg, handle, child_seed(seed, 3))
    model = fit_surrogate(str(cfg["surrogate"]), data, seed)
    trace, final = bo_loop(handle, model, budget=int(cfg["optimize.budget"]),
                           seed=seed, refit_every=int(cfg["refit_every"]))
    d = handle.dim
    header = ([f"x{j+1}" for j in range(d)] + ["y", "mu_max"]
              + [f"best_x{j+1}" for j in range(d)])
    rows = [list(trace.x[i]) + [trace.y[i], trace.mu_max[i]] + list(trace.best_x[i])
            for i in range(len(trace))]
    store.write_csv("metrics", "trace.csv", header, rows)
    save_model(store, final)
    return trace


@pipeline("sensitivity")
def run_sensitivity(cfg, store):
    seed = cfg.seed
    handle = get_handle(cfg)
    data = run_design_dataset(cfg, handle, child_seed(seed, 5))
    model = fit_surrogate(str(cfg["surrogate"]), data, seed)
    save_model(store, model)
    n_mc = int(cfg["sensitivity.n_mc"])
    mean_fn = lambda X: model.predict(X, include_intrinsic=False).mean
    res = sobol_indices(mean_fn, handle.bounds, n_mc, rng=seed)
    rows = [[f"x{j+1}", res.main[j], res.se_main[j], res.total[j],
             res.se_total[j]] for j in range(handle.dim)]
    store.write_csv("metrics", "indices.csv",
                    ["input", "main", "se_main", "total", "se_total"], rows)
    if hasattr(model, "noise_at"):
        vres = variance_sobol(model, handle.bounds, n_mc, rng=seed + 1)
        rows = [[f"x{j+1}", vres.main[j], vres.se_main[j], vres.total[j],
                 vres.se_total[j]] for j in range(handle.dim)]
        store.write_csv("metrics", "variance_indices.csv",
                        ["input", "main", "se_main", "total", "se_total"], rows)
        # share of total output variation carried by the seed variable
        grid = scale_to(sobol_points(2048, handle.dim), handle.bounds)
        mu = model.predict(grid, include_intrinsic=False).mean
        intrinsic = model.noise_at(grid)
        total = float(np.var(mu) + np.mean(intrinsic))
        seed_share = float(np.mean(intrinsic) / total) if total > 0 else 0.0
        store.write_csv("metrics", "seed_share.csv",
                        ["seed_share", "mean_surface_var", "mean_intrinsic_var"],
                        [[seed_share, float(np.var(mu)), float(np.mean(intrinsic))]])
    return res


@pipeline("figure-recipe")
def run_figure(cfg, store):
    name = str(cfg.get("recipe", ""))
    seed = cfg.seed
    if name == "fish-fig1":
        return _fig_fish_surrogates(cfg, store, seed)
    if name == "ocean-fig2":
        return _fig_ocean_surfaces(cfg, store, seed)
    if name == "fish-qk":
        return _fig_fish_qk(cfg, store, seed)
    if name == "fish-abc":
        return _fig_fish_abc(cfg, store, seed)
    if name == "ocean-seq":
        return _fig_ocean_seq(cfg, store, seed)
    raise ValueError(f"unknown figure recipe {name!r}; expected one of "
                     "fish-fig1, ocean-fig2, fish-qk, fish-abc, ocean-seq")


def _fish_dataset(cfg, seed, n_sites=20, reps=20):
    handle = fish_handle(FishConfig())
    local = RunConfig.from_dict({**cfg.values, "design.sites": n_sites,
                                 "design.reps": reps, "testbed": "fish",
                                 "design.kind": "maximin"})
    return handle, run_design_dataset(local, handle, seed, transform=np.sqrt)


def _fig_fish_surrogates(cfg, store, seed):
    handle, data = _fish_dataset(cfg, seed, int(cfg.get("design.sites", 20)),
                                 int(cfg.get("design.reps", 20)))
    save_dataset(store, data)
    hom = fit_homgp(data, search=SearchConfig(seed=seed))
    het = fit_hetgp(data, search=SearchConfig(seed=seed))
    save_model(store, hom, "homgp")
    save_model(store, het, "hetgp")
    grid = np.linspace(handle.bounds[0, 0], handle.bounds[0, 1], 200)[:, None]
    for label, model in (("homgp", hom), ("hetgp", het)):
        pred = model.predict(grid, include_intrinsic=True)
        median = pred.mean ** 2  # back to counts from the sqrt scale
        lo = np.maximum(pred.mean - 1.96 * pred.sd, 0.0) ** 2
        hi = (pred.mean + 1.96 * pred.sd) ** 2
        store.write_csv("metrics", f"fig1_{label}.csv",
                        ["population", "median", "lo95", "hi95"],
                        np.column_stack([grid[:, 0], median, lo, hi]))
    return het


def _fig_ocean_surfaces(cfg, store, seed):
    handle = get_handle(RunConfig.from_dict({**cfg.values, "testbed": "ocean2d"}))
    data = run_design_dataset(cfg, handle, seed)
    save_dataset(store, data)
    hom = fit_homgp(data, search=SearchConfig(seed=seed))
    het = fit_hetgp(data, search=SearchConfig(seed=seed))
    grid = grid_for(handle, per_dim=41)
    rows_m, rows_s = [], []
    for pt, mh, mv, hh, hv in zip(
            grid,
            hom.predict(grid).mean, hom.predict(grid).var,
            het.predict(grid).mean, het.predict(grid).var):
        rows_m.append([pt[0], pt[1], mh, hh])
        rows_s.append([pt[0], pt[1], np.sqrt(mv), np.sqrt(hv)])
    store.write_csv("metrics", "fig2_mean.csv",
                    ["lon", "lat", "homgp", "hetgp"], rows_m)
    store.write_csv("metrics", "fig2_sd.csv",
                    ["lon", "lat", "homgp", "hetgp"], rows_s)
    save_model(store, hom, "homgp")
    save_model(store, het, "hetgp")
    return hom, het


def _fig_fish_qk(cfg, store, seed):
    handle, data = _fish_dataset(cfg, seed)
    save_dataset(store, data)
    qs = [0.05, 0.275, 0.5, 0.725, 0.95]
    model = fit_qk(data, qs, search=SearchConfig(seed=seed))
    model.save(store.path("models", "qk.json"))
    table = empirical_quantiles(data, qs)
    store.write_csv("metrics", "qk_table.csv",
                    ["population"] + [f"q{q}" for q in qs],
                    np.column_stack([data.sites[:, 0], table]))
    grid = np.linspace(handle.bounds[0, 0], handle.bounds[0, 1], 150)[:, None]
    rows = []
    for q in qs:
        pred = predict_qk(model, grid, q)
        for x, m in zip(grid[:, 0], pred.mean):
            rows.append([x, q, m ** 2])
    store.write_csv("metrics", "qk_curves.csv", ["population", "q", "value"], rows)
    return model


def _fig_fish_abc(cfg, store, seed):
    direct_cfg = RunConfig.from_dict({**cfg.values, "abc.method": "direct"})
    run_abc(direct_cfg, store)
    (store.path("posteriors", "accepted.csv")
     .rename(store.path("posteriors", "accepted_direct.csv")))
    (store.path("metrics", "abc.csv")
     .rename(store.path("metrics", "abc_direct.csv")))
    surr_cfg = RunConfig.from_dict({**cfg.values, "abc.method": "surrogate",
                                    "abc.draws": int(cfg.get("abc.surrogate_draws",
                                                             1_000_000))})
    run_abc(surr_cfg, store)
    (store.path("posteriors", "accepted.csv")
     .rename(store.path("posteriors", "accepted_surrogate.csv")))
    (store.path("metrics", "abc.csv")
     .rename(store.path("metrics", "abc_surrogate.csv")))


def _fig_ocean_seq(cfg, store, seed):
    handle = get_handle(RunConfig.from_dict({**cfg.values, "testbed": "ocean2d"}))
    stage1 = run_design_dataset(cfg, handle, seed, reps=5)
    result = run_sequential_design(
        handle, stage1, budget=int(cfg["budget"]) or 750, seed=seed,
        surrogate="het", candidates_per_step=int(cfg["candidates"]),
        refit_every=int(cfg["refit_every"]))
    result.plan.to_csv(store.path("designs", "plan.csv"))
    store.write_csv("designs", "imspe_trace.csv", ["step", "imspe"],
                    list(enumerate(result.imspe_trace)))
    grid = grid_for(handle, per_dim=41)
    pred = result.model.predict(grid, include_intrinsic=True)
    store.write_csv("metrics", "seq_surface.csv",
                    ["lon", "lat", "mean", "sd"],
                    np.column_stack([grid, pred.mean, pred.sd]))
    save_model(store, result.model, "seqhetgp")
    return result


@pipeline("compare")
def compare_surrogates(cfg, store):
    """Repeat design+fit+score with derived seeds; emit per-repetition
    metrics and box-plot summary statistics."""
    reps = int(cfg["repetitions"])
    if reps < 2:
        raise ValueError("repetitions must be >= 2")
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    handle = get_handle(cfg)
    truth_sites = scale_to(lhd(int(cfg["truth.sites"]), handle.dim,
                               np.random.default_rng(cfg.seed + 99)),
                           handle.bounds)
    from .testbeds.ocean import OceanConfig, ocean_truth
    t_mean, t_var = ocean_truth(OceanConfig(), truth_sites,
                                int(cfg["truth.reps"]), seed=cfg.seed + 98)
    rows = []
    for k in range(reps):
        rep_seed = child_seed(cfg.seed, k) % (2 ** 31)
        data = run_design_dataset(cfg, handle, rep_seed)
        for method in methods:
            if method == "seqhet":
                n1 = max(int(cfg["design.sites"]) // 2, 5)
                local = RunConfig.from_dict({**cfg.values, "design.sites": n1})
                stage1 = run_design_dataset(local, handle, rep_seed, reps=5)
                budget = data.N - stage1.N
                model = run_sequential_design(
                    handle, stage1, budget=budget, seed=rep_seed,
                    surrogate="het",
                    candidates_per_step=int(cfg["candidates"]),
                    refit_every=int(cfg["refit_every"])).model
            else:
                model = fit_surrogate(method, data, rep_seed)
            pred = model.predict(truth_sites, include_intrinsic=False)
            rows.append([k, method, rmse(pred.mean, t_mean),
                         score(pred.mean, np.maximum(pred.var, 1e-12), t_mean)])
    store.write_csv("metrics", "comparison.csv",
                    ["repetition", "method", "rmse", "score"], rows)
    summary = []
    for method in methods:
        vals_r = [r[2] for r in rows if r[1] == method]
        vals_s = [r[3] for r in rows if r[1] == method]
        for metric, vals in (("rmse", vals_r), ("score", vals_s)):
            q1, q2, q3 = np.percentile(vals, [25, 50, 75])
            summary.append([method, metric, min(vals), q1, q2, q3, max(vals)])
    store.write_csv("metrics", "summary.csv",
                    ["method", "metric", "min", "q1", "median", "q3", "max"],
                    summary)
    return rows


def run_pipeline(config: RunConfig) -> ResultStore:
    """Execute the named pipeline into a fresh ResultStore.

    Failures leave partial outputs plus a FAILED marker naming the stage;
    success writes the manifest."""
    store = ResultStore(config.out)
    name = str(config["pipeline"])
    if name not in PIPELINES:
        raise ValueError(f"unknown pipeline {name!r}; expected one of "
                         + ", ".join(sorted(PIPELINES)))
    try:
        PIPELINES[name](config, store)
    except Exception as exc:
        store.mark_failed(name, repr(exc))
        raise StochsurrError(f"pipeline {name!r} failed: {exc}") from exc
    store.write_manifest(config.text, __version__)
    return store
