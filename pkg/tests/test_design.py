import numpy as np
import pytest
from scipy.stats import qmc

from stochsurr.design import (CandidateSet, DesignPlan, HypotheticalGP,
                              ImspeState, allocate_replicates, imspe, lhd,
                              maximin_lhd, seq_design_step, sobol_points)
from stochsurr.kernels import KernelSpec

UNIT = [[0.0, 1.0]]


def hyp_model(d=1, theta=0.1, sigma2=1.0, noise2=0.5):
    return HypotheticalGP(KernelSpec("squared-exponential", [theta] * d),
                          sigma2, noise2, UNIT * d)


def assert_lhd_property(X):
    n, d = X.shape
    for j in range(d):
        bins = np.floor(X[:, j] * n).astype(int)
        assert sorted(bins) == list(range(n)), f"bin property violated in dim {j}"


# ---------------------------------------------------------------- LHD / Sobol

def test_lhd_single_point():
    X = lhd(1, 3, np.random.default_rng(0))
    assert X.shape == (1, 3)
    assert np.all((0 <= X) & (X < 1))


def test_lhd_bin_property():
    rng = np.random.default_rng(1)
    for n, d in [(20, 1), (7, 2), (50, 3)]:
        assert_lhd_property(lhd(n, d, rng))


def test_maximin_preserves_bins_and_improves():
    rng = np.random.default_rng(2)
    base = lhd(30, 2, np.random.default_rng(2))

    def min_dist(X):
        d2 = np.sum((X[:, None] - X[None]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        return np.sqrt(d2.min())

    X = maximin_lhd(30, 2, iters=3000, rng=2)
    assert_lhd_property(X)
    assert min_dist(X) > min_dist(base)


@pytest.mark.slow
def test_maximin_beats_random_lhd_median():
    def min_dist(X):
        d2 = np.sum((X[:, None] - X[None]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        return np.sqrt(d2.min())

    wins = 0
    for s in range(100):
        opt = maximin_lhd(50, 2, iters=10_000, rng=s)
        rng = np.random.default_rng(900 + s)
        baseline = np.median([min_dist(lhd(50, 2, rng)) for _ in range(100)])
        wins += min_dist(opt) >= baseline
    assert wins >= 95, f"maximin beat the random-LHD median in only {wins}/100"


def test_sobol_origin_and_prefix():
    for d in (1, 2, 5, 16):
        np.testing.assert_array_equal(sobol_points(1, d), np.zeros((1, d)))
    np.testing.assert_array_equal(sobol_points(16, 2)[:8], sobol_points(8, 2))
    with pytest.raises(ValueError):
        sobol_points(4, 0)
    with pytest.raises(ValueError):
        sobol_points(4, 10 ** 6)


def test_sobol_discrepancy_beats_random():
    pts = sobol_points(256, 2)
    got = qmc.discrepancy(pts, method="L2-star")
    rng = np.random.default_rng(3)
    rand = np.median([qmc.discrepancy(rng.random((256, 2)), method="L2-star")
                      for _ in range(100)])
    assert got < rand


# -------------------------------------------------------------------- IMSPE

def test_imspe_zero_correlation_equals_prior_variance():
    m = hyp_model(theta=1e-10, sigma2=2.5, noise2=0.3)
    plan = DesignPlan(np.linspace(0.11, 0.91, 5)[:, None], np.full(5, 3), UNIT)
    assert imspe(m, plan) == pytest.approx(2.5, rel=1e-3)


def test_imspe_replicates_never_increase_it():
    rng = np.random.default_rng(4)
    m = hyp_model(theta=0.2, noise2=0.8)
    sites = rng.uniform(size=(6, 1))
    reps = rng.integers(1, 4, size=6)
    base = imspe(m, DesignPlan(sites, reps, UNIT))
    for i in range(6):
        bumped = reps.copy()
        bumped[i] += 1
        assert imspe(m, DesignPlan(sites, bumped, UNIT)) <= base + 1e-12


def test_imspe_default_grid_matches_fine_grid():
    rng = np.random.default_rng(5)
    m = hyp_model(theta=0.15, sigma2=1.7, noise2=0.4)
    sites = rng.uniform(size=(8, 1))
    plan = DesignPlan(sites, rng.integers(1, 5, size=8), UNIT)
    coarse = imspe(m, plan, n_grid=1000)
    fine = imspe(m, plan, grid=np.linspace(0.0005, 0.9995, 100_000)[:, None])
    assert coarse == pytest.approx(fine, rel=0.01)


def test_imspe_rejects_empty_grid():
    m = hyp_model()
    plan = DesignPlan([[0.5]], [1], UNIT)
    with pytest.raises(ValueError):
        imspe(m, plan, grid=np.empty((0, 1)))


# -------------------------------------------------------- replicate allocation

def test_allocate_balanced_when_symmetric():
    m = hyp_model(theta=0.3, noise2=1.0)
    sites = np.linspace(0.1, 0.9, 4)[:, None]
    reps, trace = allocate_replicates(m, sites, budget=8)
    assert reps.sum() == 8
    assert reps.max() - reps.min() <= 1
    assert np.all(np.diff(trace) <= 1e-12)


def test_allocate_budget_equals_sites():
    m = hyp_model()
    reps, trace = allocate_replicates(m, np.array([[0.2], [0.8]]), budget=2)
    np.testing.assert_array_equal(reps, [1, 1])
    assert len(trace) == 1


def test_allocate_budget_too_small():
    with pytest.raises(ValueError):
        allocate_replicates(hyp_model(), np.array([[0.2], [0.8]]), budget=1)


class TwoSiteNoise:
    """Hypothetical model with site-dependent intrinsic variance (100:1)."""

    def __init__(self):
        self.kernel = KernelSpec("squared-exponential", [0.2])
        self.sigma2 = 1.0
        self.bounds = np.array([[0.0, 1.0]])

    def scale(self, X):
        return np.atleast_2d(X)

    def relative_noise_at(self, Xs):
        Xs = np.atleast_2d(Xs)
        return np.where(Xs[:, 0] < 0.5, 10.0, 0.1)


def test_allocate_noisy_site_gets_more():
    m = TwoSiteNoise()
    sites = np.array([[0.25], [0.75]])
    budget = 8
    reps, _ = allocate_replicates(m, sites, budget=budget)
    assert reps[0] > reps[1]
    # exhaustive oracle: best allocation over all splits also favors site 0
    best, best_val = None, np.inf
    for r0 in range(1, budget):
        plan = DesignPlan(sites, [r0, budget - r0], UNIT)
        val = imspe(m, plan)
        if val < best_val:
            best, best_val = r0, val
    assert best > budget - best


# ---------------------------------------------------------- sequential steps

def test_seq_step_matches_exhaustive_sweep():
    rng = np.random.default_rng(6)
    m = hyp_model(theta=0.2, noise2=0.6)
    sites = rng.uniform(size=(5, 1))
    reps = rng.integers(1, 4, size=5)
    plan = DesignPlan(sites, reps, UNIT)
    fresh = rng.uniform(size=(12, 1))
    result = seq_design_step(m, CandidateSet(fresh), plan=plan)
    # oracle: recompute IMSPE from scratch for every candidate
    options = []
    for i in range(5):
        bumped = reps.copy()
        bumped[i] += 1
        options.append(imspe(m, DesignPlan(sites, bumped, UNIT)))
    for x in fresh:
        options.append(imspe(m, DesignPlan(np.vstack([sites, [x]]),
                                           np.append(reps, 1), UNIT)))
    assert result.imspe == pytest.approx(min(options), rel=1e-9, abs=1e-12)


def test_seq_trace_non_increasing_frozen_hyperparameters():
    rng = np.random.default_rng(7)
    m = hyp_model(theta=0.25, noise2=0.5)
    plan = DesignPlan(rng.uniform(size=(4, 1)), np.ones(4, dtype=int), UNIT)
    state = ImspeState(m, plan.sites, plan.reps)
    values = [state.value]
    cursor = 0
    for step in range(25):
        fresh = sobol_points(cursor + 10, 1)[cursor:]
        cursor += 10
        out = seq_design_step(m, CandidateSet(fresh), plan=plan, state=state)
        plan = out.plan
        values.append(out.imspe)
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_seq_step_prefers_high_noise_region():
    m = TwoSiteNoise()
    start = np.linspace(0.08, 0.92, 6)[:, None]
    plan = DesignPlan(start, np.full(6, 2), UNIT)
    picks_low_x = 0
    state = ImspeState(m, plan.sites, plan.reps)
    for step in range(50):
        fresh = sobol_points(10 * (step + 1), 1)[10 * step:]
        out = seq_design_step(m, CandidateSet(fresh), plan=plan, state=state)
        plan = out.plan
        picks_low_x += out.x[0] < 0.5
    assert picks_low_x >= 35  # >= 70% of 50 picks land in the noisy half


def test_plan_csv(tmp_path):
    plan = DesignPlan([[0.1, 0.2], [0.6, 0.9]], [3, 1], [[0, 1], [0, 1]],
                      stage=[0, 1])
    path = tmp_path / "plan.csv"
    plan.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x1,x2,reps,stage"
    assert len(lines) == 3
