"""Correlation kernels for GP surrogates.

Two stationary product-form families are provided, plus the exchangeable
correlation for categorical inputs.  Conventions (they differ, deliberately):

* ``squared-exponential``: ``C(x, w) = exp(-sum_j (x_j - w_j)^2 / ls_j)``.
  The lengthscale ``ls_j`` divides the *squared* distance, so it carries
  squared-distance units.
* ``matern52``: per dimension ``(1 + t + t^2/3) * exp(-t)`` with
  ``t = sqrt(5) |x_j - w_j| / ls_j``.  Here ``ls_j`` divides the plain
  distance (ordinary lengthscale units).

Categorical dimensions use ``corr_qual``: a product over categorical inputs
of ``exp(-(phi_i + phi_j) * 1[level_i != level_j])`` with per-level
nonnegative parameters ``phi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT5 = np.sqrt(5.0)

KERNEL_KINDS = ("squared-exponential", "matern52")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its per-dimension parameters.

    Parameters
    ----------
    kind : str
        One of ``"squared-exponential"`` or ``"matern52"``.
    lengthscales : array_like
        One positive value per continuous input dimension (see module
        docstring for the unit conventions of each family).
    qual_params : tuple of array_like, optional
        For each categorical dimension, one nonnegative value per level.
    """

    kind: str
    lengthscales: np.ndarray
    qual_params: tuple = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1 or ls.size == 0:
            raise ValueError("lengthscales must be a nonempty 1-d array")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ValueError("lengthscales must be finite and > 0")
        object.__setattr__(self, "lengthscales", ls)
        if self.qual_params is not None:
            cleaned = []
            for phis in self.qual_params:
                phis = np.asarray(phis, dtype=float)
                if np.any(phis < 0) or not np.all(np.isfinite(phis)):
                    raise ValueError("qual_params must be finite and >= 0")
                cleaned.append(phis)
            object.__setattr__(self, "qual_params", tuple(cleaned))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lengthscales": self.lengthscales.tolist()}
        if self.qual_params is not None:
            out["qual_params"] = [p.tolist() for p in self.qual_params]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        qual = d.get("qual_params")
        return cls(d["kind"], np.asarray(d["lengthscales"], dtype=float),
                   tuple(np.asarray(p) for p in qual) if qual is not None else None)


def _check_points(kernel: KernelSpec, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != kernel.dim:
        raise ValueError(f"points have dimension {X.shape[1]}, kernel expects {kernel.dim}")
    return X


def cross_corr(kernel: KernelSpec, X: np.ndarray, W: np.ndarray = None) -> np.ndarray:
    """Correlation matrix between rows of ``X`` and rows of ``W`` (or ``X``)."""
    X = _check_points(kernel, X)
    W = X if W is None else _check_points(kernel, W)
    ls = kernel.lengthscales
    if kernel.kind == "squared-exponential":
        d2 = (X[:, None, :] - W[None, :, :]) ** 2
        return np.exp(-np.sum(d2 / ls, axis=-1))
    t = SQRT5 * np.abs(X[:, None, :] - W[None, :, :]) / ls
    return np.prod((1.0 + t + t * t / 3.0) * np.exp(-t), axis=-1)


def corr(kernel: KernelSpec, x, w) -> float:
    """Correlation between two points; symmetric, in (0, 1], and 1 iff x == w."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    w = np.asarray(w, dtype=float).reshape(1, -1)
    if x.shape[1] != w.shape[1]:
        raise ValueError("x and w have different dimensions")
    return float(cross_corr(kernel, x, w)[0, 0])


def corr_qual(z_i, z_j, phis) -> float:
    """Categorical correlation: prod_k exp(-(phi_ik + phi_jk) 1[z_ik != z_jk]).

    ``phis`` holds one array of nonnegative per-level parameters per
    categorical dimension; ``z_i``/``z_j`` are integer level tuples.
    """
    z_i = np.atleast_1d(np.asarray(z_i))
    z_j = np.atleast_1d(np.asarray(z_j))
    if z_i.shape != z_j.shape:
        raise ValueError("categorical tuples have different lengths")
    if len(phis) != z_i.size:
        raise ValueError("need one phi array per categorical dimension")
    total = 0.0
    for k in range(z_i.size):
        phi_k = np.asarray(phis[k], dtype=float)
        if np.any(phi_k < 0):
            raise ValueError("phi must be >= 0")
        if z_i[k] != z_j[k]:
            total += phi_k[int(z_i[k])] + phi_k[int(z_j[k])]
    return float(np.exp(-total))


def theta_bounds_auto(kind, X_scaled, min_cor=0.01, max_cor=0.30):
    """Data-driven lengthscale search box, hetGP-style.

    The lower bound makes the correlation at the 5th-percentile pairwise
    distance equal ``min_cor``; the upper bound makes the correlation at
    the 95th-percentile distance equal ``max_cor``.  Unbounded search
    admits a degenerate ridge (near-flat correlation with enormous process
    variance) that fits the likelihood but predicts poorly.
    """
    X = np.atleast_2d(np.asarray(X_scaled, dtype=float))
    if X.shape[0] < 2:
        return 1e-3, 1e3
    d2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(X.shape[0], k=1)
    q05, q95 = np.quantile(d2[iu], [0.05, 0.95])
    q05 = max(q05, 1e-8)
    q95 = max(q95, q05 * 2)
    if kind == "squared-exponential":
        lo = q05 / np.log(1.0 / min_cor)
        hi = q95 / np.log(1.0 / max_cor)
    else:
        # matern52: f(t) = (1 + t + t^2/3) exp(-t) hits 0.01 near t = 8.0
        # and 0.30 near t = 3.25; ls = sqrt(5) * dist / t
        lo = SQRT5 * np.sqrt(q05) / 8.0
        hi = SQRT5 * np.sqrt(q95) / 3.25
    return float(lo), float(max(hi, lo * 10))


class DistanceCache:
    """Per-dimension pairwise distances, precomputed once per site set.

    Model fitting evaluates the correlation matrix at many lengthscale
    values over the same sites; this caches the lengthscale-independent
    part so each evaluation is a couple of vectorized ops.
    """

    def __init__(self, X: np.ndarray, W: np.ndarray = None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W = X if W is None else np.atleast_2d(np.asarray(W, dtype=float))
        diff = X[:, None, :] - W[None, :, :]
        self.sq = diff ** 2              # (n, m, d)
        self.abs = np.abs(diff)          # (n, m, d)

    def corr(self, kind: str, lengthscales: np.ndarray) -> np.ndarray:
        ls = np.asarray(lengthscales, dtype=float)
        if kind == "squared-exponential":
            return np.exp(-np.sum(self.sq / ls, axis=-1))
        t = SQRT5 * self.abs / ls
        return np.prod((1.0 + t + t * t / 3.0) * np.exp(-t), axis=-1)

    def corr_with_logderivs(self, kind: str, lengthscales: np.ndarray):
        """C plus, per dimension j, the elementwise d log C / d log ls_j."""
        ls = np.asarray(lengthscales, dtype=float)
        if kind == "squared-exponential":
            scaled = self.sq / ls                       # (n, m, d)
            C = np.exp(-np.sum(scaled, axis=-1))
            E = np.moveaxis(scaled, -1, 0)              # dlogC/dlog ls_j = sq_j/ls_j
            return C, E
        t = SQRT5 * self.abs / ls
        poly = 1.0 + t + t * t / 3.0
        C = np.prod(poly * np.exp(-t), axis=-1)
        # dlogC/dlog ls_j = t^2 (1 + t) / (3 poly)
        E = np.moveaxis(t * t * (1.0 + t) / (3.0 * poly), -1, 0)
        return C, E
