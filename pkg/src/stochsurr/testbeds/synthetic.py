"""Synthetic field-data generator for calibration studies.

Builds "observations" of a pretend reality: the expected simulator output
at a true calibration setting, plus one fixed GP discrepancy draw, plus
observation noise.  The truth record keeps every latent piece so scoring
and coverage checks can compare against what actually generated the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..design import maximin_lhd, scale_to
from ..kernels import KernelSpec, cross_corr
from .base import child_seed
from .ocean import OceanConfig, ocean_handle


@dataclass(frozen=True)
class FieldConfig:
    """Knobs of the synthetic-field recipe (defaults mirror the ocean study)."""

    n_sites: int = 150
    sims_per_site: int = 200
    true_k: tuple = (700.0, 200.0)
    discrepancy_var: float = 1.64
    discrepancy_theta: tuple = (1.0, 2.0)   # squared-exponential divisors, native units
    noise_var: float = 4.0
    obs_per_site: int = 2
    maximin_iters: int = 2000


@dataclass
class TruthRecord:
    """Everything latent behind a synthetic field: sites, simulator mean,
    discrepancy draw, noiseless reality, and the generating config."""

    sites: np.ndarray
    sim_mean: np.ndarray
    discrepancy: np.ndarray
    reality: np.ndarray
    true_k: tuple
    noise_var: float

    def to_json(self, path):
        payload = {
            "sites": [[float(v) for v in row] for row in self.sites],
            "sim_mean": [float(v) for v in self.sim_mean],
            "discrepancy": [float(v) for v in self.discrepancy],
            "reality": [float(v) for v in self.reality],
            "true_k": [float(v) for v in self.true_k],
            "noise_var": float(self.noise_var),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(sites=np.asarray(d["sites"]), sim_mean=np.asarray(d["sim_mean"]),
                   discrepancy=np.asarray(d["discrepancy"]),
                   reality=np.asarray(d["reality"]), true_k=tuple(d["true_k"]),
                   noise_var=d["noise_var"])


def gp_draw(sites, variance, theta, rng):
    """One draw from a zero-mean GP with squared-exponential correlation."""
    k = KernelSpec("squared-exponential", np.asarray(theta, dtype=float))
    C = cross_corr(k, sites)
    L = np.linalg.cholesky(variance * C + 1e-10 * variance * np.eye(len(sites)))
    return L @ rng.standard_normal(len(sites))


def make_synthetic_field(cfg: FieldConfig = None, ocean_cfg: OceanConfig = None,
                         seed=0):
    """Field observations (x, y) plus the truth record that generated them.

    Returns ``(X, Y, truth)`` where X repeats each site ``obs_per_site``
    times and Y holds the matching noisy observations.
    """
    cfg = cfg or FieldConfig()
    ocean_cfg = ocean_cfg or OceanConfig()
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xF1E1D)))
    dom = np.asarray(ocean_cfg.domain, dtype=float)
    sites = scale_to(maximin_lhd(cfg.n_sites, 2, iters=cfg.maximin_iters,
                                 rng=np.random.default_rng(seed)), dom)
    handle = ocean_handle(ocean_cfg, fixed_k=cfg.true_k)
    sim_mean = np.empty(cfg.n_sites)
    for i, s in enumerate(sites):
        sim_mean[i] = handle.replicate(s, cfg.sims_per_site,
                                       child_seed(seed, i)).mean()
    disc = (gp_draw(sites, cfg.discrepancy_var, cfg.discrepancy_theta, rng)
            if cfg.discrepancy_var > 0 else np.zeros(cfg.n_sites))
    reality = sim_mean + disc
    X = np.repeat(sites, cfg.obs_per_site, axis=0)
    noise = np.sqrt(cfg.noise_var) * rng.standard_normal(len(X)) \
        if cfg.noise_var > 0 else np.zeros(len(X))
    Y = np.repeat(reality, cfg.obs_per_site) + noise
    truth = TruthRecord(sites=sites, sim_mean=sim_mean, discrepancy=disc,
                        reality=reality, true_k=cfg.true_k, noise_var=cfg.noise_var)
    return X, Y, truth
