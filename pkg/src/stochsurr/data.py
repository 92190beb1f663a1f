"""Training-data containers for replicated simulator runs.

``ReplicateDataset`` is the universal container: unique input sites with a
replicate count and the grouped scalar outputs per site.  All surrogate
fitting consumes the reduced sufficient statistics (per-site means, sample
variances, counts), never the raw N-vector, which is what makes the
replicate-aware likelihood O(n^3) instead of O(N^3).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import config as cfgmod

MERGE_TOL = 1e-9  # scaled distance below which two sites count as one


@dataclass
class SufficientStats:
    """Replicate-reduced statistics of a dataset.

    ``svars`` holds the unbiased (divisor r_i - 1) within-site sample
    variances and is NaN at sites with a single replicate; ``has_svar``
    flags where it is defined.  ``pooled_ss`` is sum_i sum_j
    (y_ij - ybar_i)^2.
    """

    means: np.ndarray
    svars: np.ndarray
    has_svar: np.ndarray
    reps: np.ndarray
    ss_within: np.ndarray
    pooled_ss: float

    @property
    def n(self):
        return self.means.size

    @property
    def N(self):
        return int(self.reps.sum())


class ReplicateDataset:
    """Unique sites, replicate counts, and grouped outputs.

    Parameters
    ----------
    sites : (n, d) array
        Pairwise-distinct input locations, inside ``bounds``.
    outputs : sequence of 1-d arrays
        ``outputs[i]`` holds the r_i replicate outputs at site i.
    bounds : (d, 2) array
        Per-dimension [lo, hi] of the input box.
    """

    def __init__(self, sites, outputs, bounds):
        sites = np.atleast_2d(np.asarray(sites, dtype=float))
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if sites.shape[1] != bounds.shape[0]:
            raise ValueError("sites and bounds disagree on dimension")
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("bounds must satisfy lo < hi per dimension")
        if len(outputs) != sites.shape[0]:
            raise ValueError("need one output group per site")
        groups = [np.atleast_1d(np.asarray(g, dtype=float)) for g in outputs]
        if any(g.size == 0 for g in groups):
            raise ValueError("every site needs at least one replicate")
        if any(not np.all(np.isfinite(g)) for g in groups):
            raise ValueError("outputs must be finite")
        if not np.all(np.isfinite(sites)):
            raise ValueError("sites must be finite")
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(sites < lo - 1e-12 * (hi - lo)) or np.any(sites > hi + 1e-12 * (hi - lo)):
            raise ValueError("sites must lie inside bounds")
        scaled = (sites - lo) / (hi - lo)
        if sites.shape[0] > 1:
            d2 = np.sum((scaled[:, None, :] - scaled[None, :, :]) ** 2, axis=-1)
            np.fill_diagonal(d2, np.inf)
            if d2.min() < MERGE_TOL ** 2:
                i, j = np.unravel_index(np.argmin(d2), d2.shape)
                raise ValueError(
                    f"sites {i} and {j} coincide (scaled distance {np.sqrt(d2.min()):.2e}); "
                    "merge them into replicates (see from_runs)")
        self.sites = sites
        self.outputs = groups
        self.bounds = bounds
        self.reps = np.array([g.size for g in groups], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    @property
    def N(self) -> int:
        return int(self.reps.sum())

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @classmethod
    def from_runs(cls, X, y, bounds, merge_tol: float = MERGE_TOL):
        """Group per-run rows into unique sites, merging near-duplicates.

        Rows whose scaled coordinates agree within ``merge_tol`` become
        replicates of one site (the first occurrence's coordinates win).
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        bounds = np.asarray(bounds, dtype=float).reshape(-1, 2)
        if X.shape[0] != y.size:
            raise ValueError("X and y disagree on run count")
        lo, hi = bounds[:, 0], bounds[:, 1]
        scaled = (X - lo) / (hi - lo)
        sites, groups = [], []
        for k in range(X.shape[0]):
            hit = -1
            for i, s in enumerate(sites):
                if np.sum((scaled[k] - s) ** 2) < merge_tol ** 2:
                    hit = i
                    break
            if hit >= 0:
                groups[hit].append(y[k])
            else:
                sites.append(scaled[k])
                groups.append([y[k]])
        native = np.array(sites) * (hi - lo) + lo
        return cls(native, [np.asarray(g) for g in groups], bounds)

    def flat_runs(self):
        """Return per-run (X, y) rows, replicates expanded."""
        X = np.repeat(self.sites, self.reps, axis=0)
        y = np.concatenate(self.outputs)
        return X, y

    def add_run(self, x, value, merge_tol: float = MERGE_TOL):
        """Return a new dataset with one extra run appended."""
        X, y = self.flat_runs()
        X = np.vstack([X, np.asarray(x, dtype=float).reshape(1, -1)])
        y = np.append(y, float(value))
        return ReplicateDataset.from_runs(X, y, self.bounds, merge_tol)

    def to_csv(self, path, bounds_path=None):
        """Write runs as ``x1..xd, rep, y``; bounds go to a sidecar config."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(self.dim)] + ["rep", "y"])
            for i in range(self.n):
                for r, val in enumerate(self.outputs[i], start=1):
                    writer.writerow([repr(float(c)) for c in self.sites[i]] + [r, repr(float(val))])
        if bounds_path is not None:
            sidecar = {"d": self.dim}
            for j in range(self.dim):
                sidecar[f"x{j + 1}"] = [self.bounds[j, 0], self.bounds[j, 1]]
            cfgmod.dump(sidecar, bounds_path)

    @classmethod
    def from_csv(cls, path, bounds_path=None, bounds=None):
        rows = _read_csv_rows(path)
        header = rows[0]
        d = len(header) - 2
        X = np.array([[float(v) for v in row[:d]] for row in rows[1:]])
        y = np.array([float(row[-1]) for row in rows[1:]])
        if bounds is None:
            if bounds_path is None:
                raise ValueError("need bounds or a bounds sidecar path")
            side = cfgmod.load(bounds_path)
            bounds = np.array([side[f"x{j + 1}"] for j in range(d)], dtype=float)
        return cls.from_runs(X, y, bounds)


def _read_csv_rows(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def reduce_replicates(data: ReplicateDataset) -> SufficientStats:
    """Exact per-site means, unbiased sample variances, and pooled SS."""
    means = np.array([g.mean() for g in data.outputs])
    ss = np.array([np.sum((g - g.mean()) ** 2) for g in data.outputs])
    has = data.reps >= 2
    svars = np.full(data.n, np.nan)
    svars[has] = ss[has] / (data.reps[has] - 1)
    return SufficientStats(means=means, svars=svars, has_svar=has,
                           reps=data.reps.copy(), ss_within=ss,
                           pooled_ss=float(ss.sum()))


class MultiOutputDataset:
    """Replicated runs with a length-T vector output per run.

    ``outputs[i]`` is an (r_i, T) array.  Long-format CSV columns are
    ``x1..xd, rep, t, y`` with t in 1..T.
    """

    def __init__(self, sites, outputs, bounds):
        first = np.atleast_2d(np.asarray(outputs[0], dtype=float))
        self.T = first.shape[1]
        groups = []
        for g in outputs:
            g = np.atleast_2d(np.asarray(g, dtype=float))
            if g.shape[1] != self.T:
                raise ValueError("all runs must share the output length T")
            groups.append(g)
        # reuse scalar-dataset validation on the first output column
        proxy = ReplicateDataset(sites, [g[:, 0] for g in groups], bounds)
        self.sites, self.bounds, self.reps = proxy.sites, proxy.bounds, proxy.reps
        self.outputs = groups

    @property
    def n(self):
        return self.sites.shape[0]

    @property
    def dim(self):
        return self.sites.shape[1]

    def stacked(self):
        """All runs as a (N, T) matrix, site-major order."""
        return np.vstack(self.outputs)

    def coefficient_dataset(self, values) -> ReplicateDataset:
        """Rewrap per-run scalars (len N, site-major) as a ReplicateDataset."""
        values = np.asarray(values, dtype=float).ravel()
        offs = np.concatenate([[0], np.cumsum(self.reps)])
        groups = [values[offs[i]:offs[i + 1]] for i in range(self.n)]
        return ReplicateDataset(self.sites, groups, self.bounds)

    def to_csv(self, path, bounds_path=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{j + 1}" for j in range(self.dim)] + ["rep", "t", "y"])
            for i in range(self.n):
                for r in range(self.reps[i]):
                    for t in range(self.T):
                        writer.writerow([repr(float(c)) for c in self.sites[i]]
                                        + [r + 1, t + 1, repr(float(self.outputs[i][r, t]))])
        if bounds_path is not None:
            sidecar = {"d": self.dim}
            for j in range(self.dim):
                sidecar[f"x{j + 1}"] = [self.bounds[j, 0], self.bounds[j, 1]]
            cfgmod.dump(sidecar, bounds_path)

    @classmethod
    def from_csv(cls, path, bounds_path=None, bounds=None):
        rows = _read_csv_rows(path)
        d = len(rows[0]) - 3
        if bounds is None:
            side = cfgmod.load(bounds_path)
            bounds = np.array([side[f"x{j + 1}"] for j in range(d)], dtype=float)
        by_site = {}
        order = []
        for row in rows[1:]:
            key = tuple(float(v) for v in row[:d])
            rep, t, y = int(row[d]), int(row[d + 1]), float(row[d + 2])
            if key not in by_site:
                by_site[key] = {}
                order.append(key)
            by_site[key].setdefault(rep, {})[t] = y
        sites, groups = [], []
        for key in order:
            reps = by_site[key]
            T = max(max(ts) for ts in reps.values())
            mat = np.array([[reps[r][t + 1] for t in range(T)] for r in sorted(reps)])
            sites.append(key)
            groups.append(mat)
        return cls(np.array(sites), groups, bounds)
