"""Uniform simulator interface and seed-splitting rules.

A SimulatorHandle promises: identical (inputs, seed) -> identical output on
the same build, and different seeds give independent draws.  Replicate runs
derive per-run seeds with ``child_seed(seed, k)``: the k-th run's stream is
``numpy.random.SeedSequence((seed, k))``, so any run is reproducible in
isolation and runs can execute in any order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def child_seed(seed, index):
    """Derive the integer seed of run ``index`` from a base seed."""
    return int(np.random.SeedSequence((int(seed), int(index))).generate_state(1)[0])


@dataclass
class SimulatorHandle:
    """Callable wrapper around one stochastic simulator.

    ``run(x, seed)`` maps a d-vector and an integer seed to a scalar;
    ``run_batch`` (optional, vectorized) maps (m, d) inputs and m seeds to
    m outputs.
    """

    name: str
    dim: int
    bounds: np.ndarray
    run: callable
    run_batch: callable = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        if self.bounds.shape[0] != self.dim:
            raise ValueError("bounds/dim mismatch")

    def replicate(self, x, n_reps, seed):
        """n_reps independent runs at one input, streams split by run index."""
        if self.run_batch is not None:
            X = np.repeat(np.asarray(x, dtype=float)[None, :], n_reps, axis=0)
            seeds = np.array([child_seed(seed, k) for k in range(n_reps)])
            return np.asarray(self.run_batch(X, seeds), dtype=float)
        return np.array([self.run(x, child_seed(seed, k)) for k in range(n_reps)])

    def run_design(self, plan_sites, plan_reps, seed):
        """Execute a design plan; run k at site i uses stream (seed, i, k)."""
        groups = []
        for i, (x, r) in enumerate(zip(plan_sites, plan_reps)):
            groups.append(self.replicate(x, int(r), child_seed(seed, i)))
        return groups


def synthetic_handle(name, fn, noise_sd, bounds):
    """Deterministic-mean + Gaussian-noise handle for tests and demos.

    ``noise_sd`` may be a constant or a callable of x.  The run stream is
    derived from the seed and the bit pattern of the inputs so the handle
    honors the (inputs, seed) reproducibility contract.
    """
    bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)

    def run(x, seed):
        x = np.asarray(x, dtype=float)
        entropy = (int(seed),) + tuple(int(v) for v in x.view(np.uint64))
        rng = np.random.default_rng(np.random.SeedSequence(entropy))
        sd = noise_sd(x) if callable(noise_sd) else noise_sd
        return float(fn(x) + sd * rng.standard_normal())

    return SimulatorHandle(name=name, dim=bounds.shape[0], bounds=bounds, run=run)
