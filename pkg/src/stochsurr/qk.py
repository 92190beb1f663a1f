"""Quantile kriging: GP modeling of empirical output quantiles.

The quantile level is treated as one extra input, so a single GP over
(x, q) interpolates between fitted levels and predicts any q in (0, 1).
No distributional assumption on the simulator output is needed beyond
having enough replicates to estimate the per-site sample quantiles.
"""

from __future__ import annotations

import json

import numpy as np

from .data import ReplicateDataset
from .gp import GPModel, SearchConfig, fit_homgp, predict


def empirical_quantiles(data: ReplicateDataset, qs):
    """Per-site order-statistic quantiles (linear interpolation, type 7).

    ``qs`` must be strictly increasing and strictly inside (0, 1); every
    site needs at least two replicates.  Rows are non-decreasing in q.
    """
    qs = np.asarray(qs, dtype=float).ravel()
    if qs.size == 0 or np.any(qs <= 0) or np.any(qs >= 1):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    if np.any(np.diff(qs) <= 0):
        raise ValueError("quantile levels must be strictly increasing")
    if np.any(data.reps < 2):
        raise ValueError("every site needs >= 2 replicates to estimate quantiles")
    table = np.vstack([np.quantile(g, qs, method="linear") for g in data.outputs])
    return table


class QKModel:
    """GP over (x, q) fitted to a per-site quantile table."""

    kind = "qk"

    def __init__(self, gp: GPModel, qs, x_bounds):
        self.gp = gp
        self.qs = np.asarray(qs, dtype=float)
        self.x_bounds = np.asarray(x_bounds, dtype=float).reshape(-1, 2)
        self.noise2 = gp.noise2          # sigma_q^2, one scalar across levels
        self.bounds = self.x_bounds

    def predict(self, xnew, q):
        """Predictive distribution of the quantile surface Q(x, q).

        ``q`` may be scalar (broadcast over xnew) or one level per row;
        fitted levels are not required -- the q axis interpolates.
        """
        xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
        q = np.broadcast_to(np.asarray(q, dtype=float), (xnew.shape[0],))
        if np.any(q <= 0) or np.any(q >= 1):
            raise ValueError("prediction levels must lie strictly inside (0, 1)")
        aug = np.column_stack([xnew, q])
        return predict(self.gp, aug, include_intrinsic=False)

    def to_dict(self):
        return {"format": "stochsurr-model", "version": 1, "kind": self.kind,
                "gp": self.gp.to_dict(), "qs": self.qs.tolist(),
                "x_bounds": self.x_bounds.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(GPModel.from_dict(d["gp"]), np.asarray(d["qs"]),
                   np.asarray(d["x_bounds"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_qk(data: ReplicateDataset, qs, kind="squared-exponential",
           search: SearchConfig = None, noise_fixed=None) -> QKModel:
    """Fit a (d+1)-input GP to the empirical quantile table.

    The q axis gets its own lengthscale; the quantile-estimation noise
    sigma_q^2 is a single fitted scalar (or pinned via ``noise_fixed``).
    """
    table = empirical_quantiles(data, qs)
    qs = np.asarray(qs, dtype=float).ravel()
    n, L = table.shape
    X_aug = np.column_stack([np.repeat(data.sites, L, axis=0),
                             np.tile(qs, n)])
    y_aug = table.ravel()
    bounds_aug = np.vstack([data.bounds, [0.0, 1.0]])
    aug = ReplicateDataset(X_aug, [[v] for v in y_aug], bounds_aug)
    gp = fit_homgp(aug, kind=kind, search=search, fix_noise2=noise_fixed)
    return QKModel(gp, qs, data.bounds)


def predict_qk(model: QKModel, xnew, q):
    return model.predict(xnew, q)
