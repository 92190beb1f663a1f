"""Stochastic kriging: two independent GP stages.

Stage one fits a GP to the log within-site sample variances (predictions
are exponentiated, which keeps the variance surface positive everywhere);
stage two fits the mean GP with the per-site noise pinned at the predicted
variance divided by the replicate count.  Needs generous replication at
every site, hence ``min_reps``.
"""

from __future__ import annotations

import json

import numpy as np

from .data import ReplicateDataset, reduce_replicates
from .gp import GPModel, PredictiveDist, SearchConfig, fit_homgp, predict


class SKModel:
    """Mean GP + variance GP pair (see module docstring)."""

    kind = "sk"

    def __init__(self, mean_gp: GPModel, var_gp: GPModel):
        self.mean_gp = mean_gp
        self.var_gp = var_gp
        self.bounds = mean_gp.bounds
        self.kernel = mean_gp.kernel
        self.sigma2 = mean_gp.sigma2
        self.stats = mean_gp.stats
        self.X = mean_gp.X

    def scale(self, X):
        return self.mean_gp.scale(X)

    def unscale(self, X):
        return self.mean_gp.unscale(X)

    @property
    def sites(self):
        return self.mean_gp.sites

    def noise_at(self, X_native):
        """Predicted intrinsic variance; positive by the log/exp construction."""
        return np.exp(predict(self.var_gp, X_native, include_intrinsic=False).mean)

    def relative_noise_at(self, X_scaled):
        return self.noise_at(self.unscale(X_scaled)) / self.sigma2

    def predict(self, xnew, include_intrinsic=True):
        base = predict(self.mean_gp, xnew, include_intrinsic=False)
        if not include_intrinsic:
            return base
        var = base.var + self.noise_at(xnew)
        return PredictiveDist(mean=base.mean, var=var, includes_intrinsic=True,
                              clamped=base.clamped, outside=base.outside)

    def to_dict(self):
        return {"format": "stochsurr-model", "version": 1, "kind": self.kind,
                "mean_gp": self.mean_gp.to_dict(), "var_gp": self.var_gp.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(GPModel.from_dict(d["mean_gp"]), GPModel.from_dict(d["var_gp"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_sk(data: ReplicateDataset, min_reps=10, kind="squared-exponential",
           search: SearchConfig = None) -> SKModel:
    """Fit the two stages; every site must carry at least ``min_reps`` runs."""
    search = search or SearchConfig()
    stats = reduce_replicates(data)
    if np.any(stats.reps < min_reps):
        bad = int(np.argmin(stats.reps))
        raise ValueError(
            f"site {bad} has {int(stats.reps[bad])} replicates; "
            f"stochastic kriging needs at least {min_reps} everywhere")
    log_s2 = np.log(np.maximum(stats.svars, 1e-300))
    var_data = ReplicateDataset(data.sites, [[v] for v in log_s2], data.bounds)
    var_gp = fit_homgp(var_data, kind=kind, search=search)
    noise_sites = np.exp(predict(var_gp, data.sites, include_intrinsic=False).mean)
    mean_gp = fit_homgp(data, kind=kind, search=search, site_noise2=noise_sites)
    model = SKModel(mean_gp, var_gp)
    model.dataset = data
    return model
