import numpy as np
import pytest

from stochsurr.data import MultiOutputDataset, ReplicateDataset
from stochsurr.gp import SearchConfig, fit_homgp
from stochsurr.multioutput import (BasisSurrogate, fit_multioutput, pca_basis,
                                   predict_multioutput)
from stochsurr.qk import QKModel, empirical_quantiles, fit_qk, predict_qk
from stochsurr.sk import SKModel, fit_sk

SEARCH = SearchConfig(n_starts=4, seed=0)


def replicated_dataset(rng, n=12, r=12, sd_fn=lambda x: 0.5):
    sites = np.sort(rng.uniform(size=n))[:, None]
    outputs = [np.sin(4 * s[0]) + sd_fn(s[0]) * rng.normal(size=r) for s in sites]
    return ReplicateDataset(sites, outputs, [[0.0, 1.0]])


# -------------------------------------------------------------------- SK

def test_sk_requires_min_reps():
    ds = ReplicateDataset([[0.2], [0.8]], [[1.0], [2.0, 3.0]], [[0, 1]])
    with pytest.raises(ValueError):
        fit_sk(ds, min_reps=2)


def test_sk_variance_positive_everywhere():
    rng = np.random.default_rng(1)
    ds = replicated_dataset(rng, n=10, r=12)
    m = fit_sk(ds, min_reps=10, search=SEARCH)
    grid = np.linspace(0, 1, 200)[:, None]
    assert np.all(m.noise_at(grid) > 0)


def test_sk_predict_and_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    ds = replicated_dataset(rng, n=10, r=12, sd_fn=lambda x: 0.3 + x)
    m = fit_sk(ds, min_reps=10, search=SEARCH)
    xq = rng.uniform(size=(9, 1))
    with_v = m.predict(xq, include_intrinsic=True)
    without = m.predict(xq, include_intrinsic=False)
    assert np.all(with_v.var >= without.var)
    path = tmp_path / "sk.json"
    m.save(path)
    back = SKModel.load(path)
    np.testing.assert_array_equal(back.predict(xq).mean, with_v.mean)
    np.testing.assert_array_equal(back.predict(xq).var, with_v.var)


@pytest.mark.slow
def test_sk_constant_variance_recovery():
    hits = 0
    grid = np.linspace(0.05, 0.95, 25)[:, None]
    for s in range(100):
        rng = np.random.default_rng(50_000 + s)
        ds = replicated_dataset(rng, n=12, r=15, sd_fn=lambda x: 0.6)
        m = fit_sk(ds, min_reps=10, search=SearchConfig(n_starts=3, seed=s))
        pred = m.noise_at(grid)
        if np.all(pred > 0.36 / 2) and np.all(pred < 0.36 * 2):
            hits += 1
    assert hits >= 90, f"variance-GP within factor 2 in only {hits}/100"


# -------------------------------------------------------------------- QK

def test_quantile_table_median():
    ds = ReplicateDataset([[0.5]], [[1.0, 2.0, 3.0, 4.0, 5.0]], [[0, 1]])
    table = empirical_quantiles(ds, [0.5])
    assert table[0, 0] == 3.0


def test_quantile_levels_validated():
    ds = ReplicateDataset([[0.5]], [[1.0, 2.0]], [[0, 1]])
    for bad in ([0.0, 0.5], [0.5, 1.0], [0.5, 0.25]):
        with pytest.raises(ValueError):
            empirical_quantiles(ds, bad)
    single = ReplicateDataset([[0.5]], [[1.0]], [[0, 1]])
    with pytest.raises(ValueError):
        empirical_quantiles(single, [0.5])


def test_quantile_table_monotone_in_q():
    rng = np.random.default_rng(3)
    ds = replicated_dataset(rng, n=8, r=20)
    table = empirical_quantiles(ds, [0.05, 0.275, 0.5, 0.725, 0.95])
    assert np.all(np.diff(table, axis=1) >= 0)


def test_qk_interpolates_table_with_zero_noise():
    rng = np.random.default_rng(4)
    ds = replicated_dataset(rng, n=8, r=25)
    qs = [0.25, 0.5, 0.75]
    m = fit_qk(ds, qs, search=SEARCH, noise_fixed=0.0)
    table = empirical_quantiles(ds, qs)
    for j, q in enumerate(qs):
        pred = predict_qk(m, ds.sites, q)
        np.testing.assert_allclose(pred.mean, table[:, j], atol=1e-6)


def test_qk_interpolates_between_levels_and_validates_q():
    rng = np.random.default_rng(5)
    ds = replicated_dataset(rng, n=8, r=25)
    m = fit_qk(ds, [0.25, 0.5, 0.75], search=SEARCH)
    pred = predict_qk(m, np.array([[0.4]]), 0.6)  # unfitted level
    assert np.isfinite(pred.mean[0])
    with pytest.raises(ValueError):
        predict_qk(m, np.array([[0.4]]), 1.0)


def test_qk_median_tracks_mean_for_gaussian_noise(tmp_path):
    rng = np.random.default_rng(6)
    ds = replicated_dataset(rng, n=12, r=30, sd_fn=lambda x: 0.4)
    qk = fit_qk(ds, [0.25, 0.5, 0.75], search=SEARCH)
    hom = fit_homgp(ds, search=SEARCH)
    grid = np.linspace(0.05, 0.95, 15)[:, None]
    med = predict_qk(qk, grid, 0.5)
    base = hom.predict(grid, include_intrinsic=False)
    se = np.sqrt(med.var + base.var)
    assert np.all(np.abs(med.mean - base.mean) <= 2 * se + 0.05)
    path = tmp_path / "qk.json"
    qk.save(path)
    back = QKModel.load(path)
    np.testing.assert_array_equal(back.predict(grid, 0.5).mean, med.mean)


# ------------------------------------------------------------- multi-output

def test_pca_full_basis_reconstructs_exactly():
    rng = np.random.default_rng(7)
    Y = rng.normal(size=(10, 6))
    basis = pca_basis(Y, 6)
    W = basis.coefficients(Y)
    np.testing.assert_allclose(basis.reconstruct(W), Y, atol=1e-8)


def test_pca_rank_one_energy():
    rng = np.random.default_rng(8)
    a = rng.normal(size=12)
    psi = rng.normal(size=7)
    Y = np.outer(a, psi)
    basis = pca_basis(Y, 1)
    assert basis.retained_energy >= 0.999


def test_pca_energy_matches_eigen_oracle():
    rng = np.random.default_rng(9)
    Y = rng.normal(size=(10, 8))
    Yc = Y - Y.mean(axis=0)
    eigs = np.sort(np.linalg.eigvalsh(Yc.T @ Yc))[::-1]
    for K0 in (1, 3, 8):
        basis = pca_basis(Y, K0)
        want = eigs[:K0].sum() / eigs.sum()
        assert basis.retained_energy == pytest.approx(want, rel=1e-8)


def test_pca_orthonormal_and_residual_identity():
    rng = np.random.default_rng(10)
    Y = rng.normal(size=(9, 7))
    basis = pca_basis(Y, 3)
    G = basis.components @ basis.components.T
    np.testing.assert_allclose(G, np.eye(3), atol=1e-10)
    Yc = Y - basis.center
    resid = Yc - basis.coefficients(Y) @ basis.components
    discarded = basis.eigenvalues[3:].sum()
    assert np.sum(resid ** 2) == pytest.approx(discarded, rel=1e-8)


def test_pca_k0_out_of_range():
    with pytest.raises(ValueError):
        pca_basis(np.zeros((4, 3)), 4)
    with pytest.raises(ValueError):
        pca_basis(np.zeros((4, 3)), 0)


def test_multioutput_fit_predict_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    sites = np.linspace(0.05, 0.95, 9)[:, None]
    t_axis = np.linspace(0, 1, 6)
    outputs = []
    for s in sites:
        runs = np.vstack([np.sin(3 * s[0]) * t_axis + 0.1 * rng.normal(size=6)
                          for _ in range(3)])
        outputs.append(runs)
    mo = MultiOutputDataset(sites, outputs, [[0, 1]])
    m = fit_multioutput(mo, K0=2, search=SEARCH)
    mean, var = predict_multioutput(m, np.array([[0.5]]))
    assert mean.shape == (1, 6) and var.shape == (1, 6)
    assert np.all(var >= 0)
    path = tmp_path / "mo.json"
    m.save(path)
    back = BasisSurrogate.load(path)
    m2, v2 = predict_multioutput(back, np.array([[0.5]]))
    np.testing.assert_array_equal(m2, mean)
    np.testing.assert_array_equal(v2, var)
