import numpy as np
import pytest

from stochsurr.data import ReplicateDataset, reduce_replicates
from stochsurr.errors import FitError
from stochsurr.gp import SearchConfig, fit_homgp
from stochsurr.hetgp import (HetGPModel, fit_hetgp, hetgp_nll, predict_hetgp,
                             smooth_log_variances)
from stochsurr.kernels import KernelSpec, cross_corr

import oracles


def make_het_dataset(rng, n=20, r=6, sd_lo=0.2, sd_hi=0.2):
    sites = np.sort(rng.uniform(size=n))[:, None]
    sd = sd_lo + (sd_hi - sd_lo) * sites[:, 0]
    outputs = [np.sin(5 * s[0]) + sd[i] * rng.normal(size=r)
               for i, s in enumerate(sites)]
    return ReplicateDataset(sites, outputs, [[0.0, 1.0]])


# ----------------------------------------------------------------- smoother

def test_smoother_large_nugget_collapses_to_prior():
    k = KernelSpec("squared-exponential", [0.5])
    sites = np.linspace(0, 1, 4)[:, None]
    delta = np.array([1.0, -2.0, 0.5, 3.0])
    out = smooth_log_variances(delta, 1e9, k, np.ones(4), sites)
    np.testing.assert_allclose(out, 0.0, atol=1e-6)


def test_smoother_single_site_scalar_algebra():
    k = KernelSpec("squared-exponential", [1.0])
    for g, r in [(0.5, 1), (2.0, 3)]:
        out = smooth_log_variances([1.7], g, k, [r], [[0.3]])
        assert out[0] == pytest.approx(1.7 / (1 + g / r), rel=1e-12)


def test_smoother_matches_dense_evaluation():
    rng = np.random.default_rng(12)
    sites = rng.uniform(size=(4, 2))
    delta = rng.normal(size=4)
    reps = np.array([1, 3, 2, 5])
    g = 0.7
    k = KernelSpec("matern52", [0.6, 1.2])
    got = smooth_log_variances(delta, g, k, reps, sites)
    Cg = np.array([[oracles.corr_m52(a, b, [0.6, 1.2]) for b in sites] for a in sites])
    want = Cg @ np.linalg.solve(Cg + np.diag(g / reps), delta)
    np.testing.assert_allclose(got, want, atol=1e-10)


def test_smoother_rejects_bad_nugget():
    k = KernelSpec("squared-exponential", [1.0])
    with pytest.raises(ValueError):
        smooth_log_variances([0.0], 0.0, k, [1], [[0.5]])


# ----------------------------------------------------------- reduced likelihood

def test_hetgp_nll_matches_dense():
    rng = np.random.default_rng(5)
    for _ in range(10):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(1, 3))
        sites = rng.uniform(size=(n, d))
        reps = rng.integers(1, 5, size=n)
        outputs = [rng.normal(size=r) for r in reps]
        ds = ReplicateDataset(sites, outputs, [[0, 1]] * d)
        stats = reduce_replicates(ds)
        lam = rng.uniform(0.1, 2.0, size=n)
        ls = rng.uniform(0.3, 1.5, size=d)
        mu, sigma2 = float(rng.normal()), float(rng.uniform(0.5, 2.0))
        k = KernelSpec("squared-exponential", ls)
        got = hetgp_nll(stats, cross_corr(k, sites), mu, sigma2, lam)
        # dense oracle: per-run noise from the run's site
        X, y = ds.flat_runs()
        K = oracles.dense_cov(X, "squared-exponential", ls, sigma2, 0.0)
        noise = np.repeat(sigma2 * lam, reps)
        K += np.diag(noise)
        sign, logdet = np.linalg.slogdet(K)
        want = 0.5 * (len(y) * np.log(2 * np.pi) + logdet
                      + (y - mu) @ np.linalg.solve(K, y - mu))
        assert got == pytest.approx(want, rel=1e-8)


# ----------------------------------------------------------------- fitting

def test_fit_needs_three_sites():
    ds = ReplicateDataset([[0.5]], [np.random.default_rng(0).normal(size=50)],
                          [[0.0, 1.0]])
    with pytest.raises(FitError):
        fit_hetgp(ds)


def test_fit_ramp_detects_heteroscedasticity():
    rng = np.random.default_rng(3)
    ds = make_het_dataset(rng, n=25, r=8, sd_lo=0.1, sd_hi=1.5)
    m = fit_hetgp(ds, search=SearchConfig(seed=0))
    noise = m.noise_at(np.array([[0.05], [0.95]]))
    assert noise[1] > 2 * noise[0]
    assert np.all(m.lambdas > 0)


def test_predict_lambda_reproduces_knots():
    rng = np.random.default_rng(4)
    ds = make_het_dataset(rng, n=12, r=5, sd_lo=0.2, sd_hi=1.0)
    m = fit_hetgp(ds, search=SearchConfig(seed=1))
    lam = m.relative_noise_at(m.X)
    np.testing.assert_allclose(lam, m.lambdas, atol=1e-10)


def test_predict_prior_limit_variance():
    rng = np.random.default_rng(6)
    ds = make_het_dataset(rng, n=10, r=4)
    m = fit_hetgp(ds, search=SearchConfig(seed=2))
    # far query point (outside the box, flagged): correlations vanish
    far = [[60.0]]
    out = predict_hetgp(m, far, include_intrinsic=True)
    lam_prior = np.exp(m.cg_mean)
    assert out.var[0] == pytest.approx(m.sigma2 * (1 + lam_prior), rel=1e-9)
    out_m = predict_hetgp(m, far, include_intrinsic=False)
    assert out_m.var[0] == pytest.approx(m.sigma2, rel=1e-9)
    assert out.mean[0] == pytest.approx(m.mu, abs=1e-9)
    assert bool(out.outside[0])


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    ds = make_het_dataset(rng, n=10, r=4, sd_lo=0.3, sd_hi=0.9)
    m = fit_hetgp(ds, search=SearchConfig(seed=3))
    path = tmp_path / "het.json"
    m.save(path)
    back = HetGPModel.load(path)
    xq = rng.uniform(size=(14, 1))
    a, b = predict_hetgp(m, xq), predict_hetgp(back, xq)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.var, b.var)


@pytest.mark.slow
def test_fit_constant_noise_stays_flat():
    hits = 0
    for s in range(100):
        rng = np.random.default_rng(20_000 + s)
        ds = make_het_dataset(rng, n=15, r=8, sd_lo=0.5, sd_hi=0.5)
        m = fit_hetgp(ds, search=SearchConfig(seed=s))
        if m.lambdas.max() / m.lambdas.min() < 5:
            hits += 1
    assert hits >= 90, f"flat lambdas in only {hits}/100 trials"


@pytest.mark.slow
def test_fit_ramp_orders_lambda_in_most_seeds():
    # variance ramping 0.1 -> 10 across [0, 1]
    hits = 0
    for s in range(100):
        rng = np.random.default_rng(30_000 + s)
        sites = np.sort(rng.uniform(size=40))[:, None]
        var = 0.1 + 9.9 * sites[:, 0]
        outputs = [np.cos(4 * x) + np.sqrt(v) * rng.normal(size=10)
                   for x, v in zip(sites[:, 0], var)]
        ds = ReplicateDataset(sites, outputs, [[0.0, 1.0]])
        m = fit_hetgp(ds, search=SearchConfig(seed=s))
        noise = m.noise_at(np.array([[0.9], [0.1]]))
        if noise[0] > noise[1]:
            hits += 1
    assert hits >= 95, f"ramp ordering recovered in only {hits}/100 trials"


@pytest.mark.slow
def test_no_harm_on_homoscedastic_data():
    # Score(hetGP) within 0.1 of Score(homGP) on average when noise is flat
    from stochsurr.analysis import score
    gaps = []
    for s in range(50):
        rng = np.random.default_rng(40_000 + s)
        ds = make_het_dataset(rng, n=15, r=5, sd_lo=0.4, sd_hi=0.4)
        het = fit_hetgp(ds, search=SearchConfig(seed=s))
        hom = fit_homgp(ds, search=SearchConfig(seed=s))
        xq = rng.uniform(size=(60, 1))
        yq = np.sin(5 * xq[:, 0]) + 0.4 * rng.normal(size=60)
        ph, pm = het.predict(xq), hom.predict(xq)
        gaps.append(score(ph.mean, ph.var, yq) - score(pm.mean, pm.var, yq))
    assert np.mean(gaps) > -0.1, f"mean Score gap {np.mean(gaps):.3f}"


@pytest.mark.parametrize("kind", ["squared-exponential", "matern52"])
def test_fit_objective_gradient_matches_numeric(kind, monkeypatch):
    # capture the (value, gradient) objective that fit_hetgp hands the optimizer
    from scipy import optimize as sp_optimize
    from scipy.optimize import approx_fprime
    from stochsurr.gp import SearchConfig

    captured = {}
    orig = sp_optimize.minimize

    def capture(fun, x0, **kw):
        captured["fun"], captured["x0"] = fun, x0
        return orig(fun, x0, **kw)

    monkeypatch.setattr(sp_optimize, "minimize", capture)
    monkeypatch.setattr("stochsurr.hetgp.optimize.minimize", capture)
    rng = np.random.default_rng(17)
    sites = rng.uniform(size=(7, 2))
    reps = rng.integers(1, 5, size=7)
    outputs = [np.sin(3 * s[0]) + (0.2 + 0.5 * s[1]) * rng.normal(size=r)
               for s, r in zip(sites, reps)]
    ds = ReplicateDataset(sites, outputs, [[0, 1], [0, 1]])
    fit_hetgp(ds, kind=kind, search=SearchConfig(seed=7))
    fun, x0 = captured["fun"], captured["x0"]
    rng2 = np.random.default_rng(23)
    for _ in range(3):
        p = x0 + rng2.normal(scale=0.3, size=x0.size)
        _, grad = fun(p)
        numeric = approx_fprime(p, lambda q: fun(q)[0], 1e-6)
        np.testing.assert_allclose(grad, numeric, rtol=2e-3, atol=2e-4)
