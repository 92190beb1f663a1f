import numpy as np
import pytest
from dataclasses import replace

from stochsurr.errors import SimulatorError
from stochsurr.testbeds import (FieldConfig, FishConfig, OceanConfig, child_seed,
                                fish_handle, fish_simulate, make_synthetic_field,
                                ocean_handle, ocean_simulate, synthetic_handle,
                                TruthRecord)

FAST_FISH = replace(FishConfig(), mix_ticks_1=5, mix_ticks_2=5)


# -------------------------------------------------------------------- fish

def test_fish_everyone_marked_and_caught():
    cfg = replace(FAST_FISH, population_bounds=(100, 4000))
    assert fish_simulate(100, cfg, seed=3) == 100


def test_fish_output_range_and_determinism():
    cfg = FAST_FISH
    vals = [fish_simulate(400, cfg, seed=s) for s in range(5)]
    assert all(0 <= v <= 100 for v in vals)
    assert fish_simulate(400, cfg, seed=2) == fish_simulate(400, cfg, seed=2)


def test_fish_population_validation():
    with pytest.raises(ValueError):
        fish_simulate(120, FishConfig(), seed=0)   # below bounds
    cfg = replace(FishConfig(), population_bounds=(50, 4000))
    with pytest.raises(ValueError):
        fish_simulate(80, cfg, seed=0)             # below the quotas


def test_fish_tick_cap_names_phase():
    # a net band nobody can reach: lake is tall, net y-range is tiny
    cfg = replace(FAST_FISH, tick_cap=3)
    with pytest.raises(SimulatorError) as err:
        fish_simulate(150, cfg, seed=0)
    assert err.value.phase in ("marking", "catching")


def test_fish_handle_floors_to_integer():
    h = fish_handle(FAST_FISH)
    a = h.run(np.array([500.7]), seed=11)
    b = float(fish_simulate(500, FAST_FISH, seed=11))
    assert a == b


@pytest.mark.slow
def test_fish_variance_profile_is_heteroscedastic():
    cfg = FishConfig()
    pops = (300, 800, 2000, 4000)
    variances = {}
    for pop in pops:
        draws = [fish_simulate(pop, cfg, seed=s) for s in range(120)]
        variances[pop] = np.var(draws)
    peak = max(variances.values())
    assert peak > 2 * variances[4000]


# -------------------------------------------------------------------- ocean

def test_ocean_boundary_start_is_exact():
    cfg = OceanConfig()
    for seed in range(3):
        assert ocean_simulate(0.0, 2.5, 700, 200, cfg, seed) == \
            cfg.boundary_value(0.0, 2.5)
    assert ocean_simulate(5.0, 0.0, 300, 300, cfg, 0) == cfg.boundary_value(5.0, 0.0)


def test_ocean_constant_boundary_degenerates():
    cfg = replace(OceanConfig(), sw=210.0, se=210.0, ne=210.0, nw=210.0)
    for seed in (0, 7):
        assert ocean_simulate(5.0, 2.5, 700, 200, cfg, seed) == pytest.approx(210.0)


def test_ocean_output_inside_boundary_range():
    cfg = OceanConfig()
    vals = np.array([ocean_simulate(5.0, 2.5, 700, 200, cfg, s) for s in range(50)])
    lo = min(cfg.sw, cfg.se, cfg.ne, cfg.nw)
    hi = max(cfg.sw, cfg.se, cfg.ne, cfg.nw)
    assert np.all((vals >= lo) & (vals <= hi))
    assert ocean_simulate(5.0, 2.5, 700, 200, cfg, 9) == \
        ocean_simulate(5.0, 2.5, 700, 200, cfg, 9)


def test_ocean_validates_inputs():
    with pytest.raises(ValueError):
        ocean_simulate(11.0, 2.5, 700, 200, OceanConfig(), 0)
    with pytest.raises(ValueError):
        ocean_simulate(5.0, 2.5, 50, 200, OceanConfig(), 0)


def test_ocean_truncation_counter():
    cfg = replace(OceanConfig(), max_steps=2)
    val, info = ocean_simulate(5.0, 2.5, 700, 200, cfg, 0, return_info=True)
    assert info["truncated"] > 0
    assert np.isfinite(val)


def test_ocean_variance_scales_with_paths():
    cfg = OceanConfig()
    d6 = np.array([ocean_simulate(5, 2.5, 700, 200, cfg, s) for s in range(150)])
    d600 = np.array([ocean_simulate(5, 2.5, 700, 200, cfg.with_paths(600), s)
                     for s in range(150)])
    ratio = d6.var() / d600.var()
    assert 50 < ratio < 200  # 1/P scaling within a factor of two


def test_ocean_mean_converges_in_paths():
    cfg = OceanConfig()
    means = {}
    for P in (6, 60, 600):
        draws = [ocean_simulate(5, 2.5, 700, 200, cfg.with_paths(P), s)
                 for s in range(60)]
        means[P] = (np.mean(draws), np.std(draws) / np.sqrt(60))
    gap_small = abs(means[6][0] - means[60][0])
    gap_big = abs(means[60][0] - means[600][0])
    assert gap_small <= 3 * np.hypot(means[6][1], means[60][1])
    assert gap_big <= 3 * np.hypot(means[60][1], means[600][1])


# ---------------------------------------------------------------- synthetic

def test_synthetic_field_degenerate_noise():
    cfg = FieldConfig(n_sites=6, sims_per_site=4, noise_var=0.0,
                      discrepancy_var=0.0, maximin_iters=50)
    X, Y, truth = make_synthetic_field(cfg, seed=0)
    assert X.shape == (12, 2)
    pairs = Y.reshape(-1, 2)
    np.testing.assert_array_equal(pairs[:, 0], pairs[:, 1])
    np.testing.assert_allclose(truth.reality, truth.sim_mean)


def test_synthetic_field_noise_scale():
    cfg = FieldConfig(n_sites=40, sims_per_site=3, noise_var=4.0,
                      discrepancy_var=1.64, maximin_iters=100)
    X, Y, truth = make_synthetic_field(cfg, seed=1)
    pairs = Y.reshape(-1, 2)
    svar = np.var(pairs, axis=1, ddof=1).mean()
    assert svar == pytest.approx(4.0, rel=0.5)


def test_truth_record_round_trip(tmp_path):
    cfg = FieldConfig(n_sites=5, sims_per_site=3, maximin_iters=50)
    _, _, truth = make_synthetic_field(cfg, seed=2)
    path = tmp_path / "truth.json"
    truth.to_json(path)
    back = TruthRecord.from_json(path)
    np.testing.assert_array_equal(back.sites, truth.sites)
    np.testing.assert_array_equal(back.reality, truth.reality)
    np.testing.assert_array_equal(back.discrepancy, truth.discrepancy)
    assert back.true_k == truth.true_k


# ------------------------------------------------------------------- handles

def test_child_seed_reproducible_and_distinct():
    assert child_seed(5, 3) == child_seed(5, 3)
    seeds = {child_seed(5, k) for k in range(100)}
    assert len(seeds) == 100


def test_synthetic_handle_contract():
    h = synthetic_handle("toy", lambda x: float(x[0] ** 2), 0.3, [[0, 1]])
    x = np.array([0.4])
    assert h.run(x, 7) == h.run(x, 7)
    assert h.run(x, 7) != h.run(x, 8)
    reps = h.replicate(x, 50, seed=1)
    assert reps.std() > 0.1


def test_run_design_grouping():
    h = synthetic_handle("toy", lambda x: float(x[0]), 0.1, [[0, 1]])
    groups = h.run_design(np.array([[0.2], [0.8]]), [3, 2], seed=0)
    assert [len(g) for g in groups] == [3, 2]
