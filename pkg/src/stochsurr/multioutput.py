"""Basis-expansion surrogates for length-T vector outputs.

The output curve is centered and projected onto the top principal
components (eigenvectors of the centered Gram matrix Y^T Y); each retained
coefficient gets its own independent scalar surrogate.  Reconstruction
drops the residual term, and per-index predictive variance aggregates the
coefficient variances through the (orthonormal) basis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import MultiOutputDataset
from .gp import GPModel, SearchConfig, fit_homgp


@dataclass
class BasisDecomposition:
    """Centered PCA of an (n, T) output matrix."""

    center: np.ndarray
    components: np.ndarray       # (K0, T), orthonormal rows
    eigenvalues: np.ndarray      # all of them, descending
    retained_energy: float

    @property
    def K0(self):
        return self.components.shape[0]

    def coefficients(self, Y):
        return (np.atleast_2d(Y) - self.center) @ self.components.T

    def reconstruct(self, W):
        return self.center + np.atleast_2d(W) @ self.components


def pca_basis(Y, K0) -> BasisDecomposition:
    """Top-K0 eigenvectors of the centered Y^T Y, via SVD."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n, T = Y.shape
    if not (1 <= K0 <= min(n, T)):
        raise ValueError(f"K0 must be in [1, min(n, T)] = [1, {min(n, T)}]")
    center = Y.mean(axis=0)
    Yc = Y - center
    _, svals, Vt = np.linalg.svd(Yc, full_matrices=False)
    eig = svals ** 2
    total = float(eig.sum())
    retained = float(eig[:K0].sum() / total) if total > 0 else 1.0
    return BasisDecomposition(center=center, components=Vt[:K0],
                              eigenvalues=eig, retained_energy=retained)


class BasisSurrogate:
    """Per-coefficient surrogates on top of a fixed basis decomposition."""

    kind = "multioutput"

    def __init__(self, basis: BasisDecomposition, coef_models, bounds):
        self.basis = basis
        self.coef_models = list(coef_models)
        self.bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)

    @property
    def T(self):
        return self.basis.center.size

    def predict(self, xnew):
        """Length-T mean and variance per query point: (m, T) arrays."""
        xnew = np.atleast_2d(np.asarray(xnew, dtype=float))
        means = np.column_stack([m.predict(xnew, include_intrinsic=False).mean
                                 for m in self.coef_models])
        variances = np.column_stack([m.predict(xnew, include_intrinsic=True).var
                                     for m in self.coef_models])
        mean_t = self.basis.reconstruct(means)
        var_t = variances @ (self.basis.components ** 2)
        return mean_t, var_t

    def to_dict(self):
        return {"format": "stochsurr-model", "version": 1, "kind": self.kind,
                "center": self.basis.center.tolist(),
                "components": self.basis.components.tolist(),
                "eigenvalues": self.basis.eigenvalues.tolist(),
                "retained_energy": self.basis.retained_energy,
                "bounds": self.bounds.tolist(),
                "coef_models": [m.to_dict() for m in self.coef_models]}

    @classmethod
    def from_dict(cls, d):
        basis = BasisDecomposition(center=np.asarray(d["center"]),
                                   components=np.asarray(d["components"]),
                                   eigenvalues=np.asarray(d["eigenvalues"]),
                                   retained_energy=d["retained_energy"])
        return cls(basis, [GPModel.from_dict(m) for m in d["coef_models"]],
                   np.asarray(d["bounds"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_multioutput(data: MultiOutputDataset, K0, kind="squared-exponential",
                    search: SearchConfig = None) -> BasisSurrogate:
    """PCA the stacked runs, then fit one homGP per retained coefficient."""
    search = search or SearchConfig()
    Y = data.stacked()
    basis = pca_basis(Y, K0)
    W = basis.coefficients(Y)        # (N, K0), site-major run order
    models = []
    for k in range(basis.K0):
        coef_data = data.coefficient_dataset(W[:, k])
        models.append(fit_homgp(coef_data, kind=kind, search=search))
    return BasisSurrogate(basis, models, data.bounds)


def predict_multioutput(model: BasisSurrogate, xnew):
    return model.predict(xnew)
