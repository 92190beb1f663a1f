import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical checks")
    config.addinivalue_line("markers", "acceptance: acceptance-criteria suite")


@pytest.fixture(scope="session")
def ocean_truth_grid():
    """500-site LHD truth grid grounded in 100,000 total replicate runs."""
    from stochsurr.design import lhd, scale_to
    from stochsurr.testbeds import OceanConfig
    from stochsurr.testbeds.ocean import ocean_truth

    cfg = OceanConfig()
    sites = scale_to(lhd(500, 2, np.random.default_rng(424242)),
                     np.asarray(cfg.domain))
    means, variances = ocean_truth(cfg, sites, reps=200, seed=515151)
    return sites, means, variances


@pytest.fixture(scope="session")
def fish_dataset():
    """20-site maximin design on [150, 4000], 20 replicates, sqrt scale."""
    from stochsurr.data import ReplicateDataset
    from stochsurr.design import maximin_lhd, scale_to
    from stochsurr.testbeds import FishConfig, fish_handle

    handle = fish_handle(FishConfig())
    sites = np.floor(scale_to(maximin_lhd(20, 1, iters=2000, rng=20),
                              handle.bounds))
    groups = handle.run_design(sites, np.full(20, 20), seed=21)
    return ReplicateDataset(sites, [np.sqrt(g) for g in groups], handle.bounds)
