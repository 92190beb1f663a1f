"""Ocean-oxygen testbed: a Feynman-Kac random-walk solver on a rectangle.

Independent walkers start at the query location, drift and diffuse until
they exit the domain, and the output is the average boundary-oxygen value
at the exit points.  Per-component step standard deviations are
``sqrt(2 K_x dt s)`` and ``sqrt(2 K_y dt s)``, so the two diffusion
coefficients are the calibration inputs.  Single runs are noisy;
variance shrinks with the path count and near the boundary, making the
simulator heteroscedastic by construction.

This is a documented stand-in with constant drift and piecewise-linear
boundary oxygen, not a reproduction of any particular physical setup;
the diffusion scaling constant is calibrated so a 6-path run at the
domain center has standard deviation of order 5-10.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .base import SimulatorHandle

_CHUNK = 256  # steps drawn per RNG call


@dataclass(frozen=True)
class OceanConfig:
    """Domain, boundary oxygen, drift, and walk discretization."""

    domain: tuple = ((0.0, 10.0), (0.0, 5.0))
    # corner oxygen values; edges interpolate linearly between their corners
    sw: float = 195.0
    se: float = 185.0
    ne: float = 230.0
    nw: float = 260.0
    drift: tuple = (0.02, 0.01)
    dt: float = 1.0
    diffusion_scale: float = 1e-4
    paths: int = 6
    max_steps: int = 20000
    k_bounds: tuple = ((100.0, 1000.0), (100.0, 1000.0))

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def with_paths(self, paths):
        return replace(self, paths=paths)

    def boundary_value(self, x, y):
        """Oxygen at boundary points (piecewise linear along each edge)."""
        (xlo, xhi), (ylo, yhi) = self.domain
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tx = (x - xlo) / (xhi - xlo)
        ty = (y - ylo) / (yhi - ylo)
        south = self.sw + tx * (self.se - self.sw)
        north = self.nw + tx * (self.ne - self.nw)
        west = self.sw + ty * (self.nw - self.sw)
        east = self.se + ty * (self.ne - self.se)
        out = np.where(y <= ylo, south,
              np.where(y >= yhi, north,
              np.where(x <= xlo, west, east)))
        return out if out.ndim else float(out)

    def on_boundary(self, lon, lat):
        (xlo, xhi), (ylo, yhi) = self.domain
        return lon <= xlo or lon >= xhi or lat <= ylo or lat >= yhi


def _exit_values(cfg, p_prev, steps, exited_mask):
    """Boundary values at the exact crossing points of exiting walkers."""
    (xlo, xhi), (ylo, yhi) = cfg.domain
    p0 = p_prev[exited_mask]
    dp = steps[exited_mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        alphas = np.stack([
            np.where(dp[:, 0] < 0, (xlo - p0[:, 0]) / dp[:, 0], np.inf),
            np.where(dp[:, 0] > 0, (xhi - p0[:, 0]) / dp[:, 0], np.inf),
            np.where(dp[:, 1] < 0, (ylo - p0[:, 1]) / dp[:, 1], np.inf),
            np.where(dp[:, 1] > 0, (yhi - p0[:, 1]) / dp[:, 1], np.inf),
        ], axis=1)
    alphas = np.where(np.isfinite(alphas) & (alphas >= 0), alphas, np.inf)
    a = alphas.min(axis=1)
    cross = p0 + np.minimum(a, 1.0)[:, None] * dp
    cross[:, 0] = np.clip(cross[:, 0], xlo, xhi)
    cross[:, 1] = np.clip(cross[:, 1], ylo, yhi)
    return np.asarray(cfg.boundary_value(cross[:, 0], cross[:, 1]))


def _nearest_edge_value(cfg, pos):
    (xlo, xhi), (ylo, yhi) = cfg.domain
    cands = np.stack([pos[:, 0] - xlo, xhi - pos[:, 0],
                      pos[:, 1] - ylo, yhi - pos[:, 1]], axis=1)
    edge = cands.argmin(axis=1)
    proj = pos.copy()
    proj[edge == 0, 0] = xlo
    proj[edge == 1, 0] = xhi
    proj[edge == 2, 1] = ylo
    proj[edge == 3, 1] = yhi
    return np.asarray(cfg.boundary_value(proj[:, 0], proj[:, 1]))


def ocean_simulate(lon, lat, kx, ky, cfg: OceanConfig = None, seed=0,
                   return_info=False):
    """Mean boundary oxygen over ``cfg.paths`` walkers from (lon, lat)."""
    cfg = cfg or OceanConfig()
    (xlo, xhi), (ylo, yhi) = cfg.domain
    if not (xlo <= lon <= xhi and ylo <= lat <= yhi):
        raise ValueError("start point outside the domain")
    (kxlo, kxhi), (kylo, kyhi) = cfg.k_bounds
    if not (kxlo <= kx <= kxhi and kylo <= ky <= kyhi):
        raise ValueError("diffusion coefficients outside bounds")
    if cfg.on_boundary(lon, lat):
        val = float(cfg.boundary_value(lon, lat))
        return (val, {"truncated": 0}) if return_info else val
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    sd = np.array([np.sqrt(2.0 * kx * cfg.dt * cfg.diffusion_scale),
                   np.sqrt(2.0 * ky * cfg.dt * cfg.diffusion_scale)])
    mu = np.asarray(cfg.drift, dtype=float) * cfg.dt
    P = cfg.paths
    pos = np.tile([lon, lat], (P, 1))
    values = np.empty(P)
    alive = np.arange(P)
    steps_done = 0
    truncated = 0
    while alive.size and steps_done < cfg.max_steps:
        chunk = min(_CHUNK, cfg.max_steps - steps_done)
        incr = rng.standard_normal((alive.size, chunk, 2)) * sd + mu
        paths = pos[alive, None, :] + np.cumsum(incr, axis=1)
        outside = ((paths[:, :, 0] < xlo) | (paths[:, :, 0] > xhi)
                   | (paths[:, :, 1] < ylo) | (paths[:, :, 1] > yhi))
        any_exit = outside.any(axis=1)
        if np.any(any_exit):
            first = outside[any_exit].argmax(axis=1)
            rows = np.flatnonzero(any_exit)
            prev = np.where(first[:, None] == 0, pos[alive[rows]],
                            paths[rows, np.maximum(first - 1, 0)])
            vals = _exit_values(cfg, prev, incr[rows, first],
                                np.ones(rows.size, dtype=bool))
            values[alive[rows]] = vals
        pos[alive] = paths[:, -1]
        alive = alive[~any_exit]
        steps_done += chunk
    if alive.size:
        truncated = alive.size
        values[alive] = _nearest_edge_value(cfg, pos[alive])
    out = float(values.mean())
    return (out, {"truncated": truncated}) if return_info else out


def ocean_handle(cfg: OceanConfig = None, fixed_k=None) -> SimulatorHandle:
    """4-d handle (lon, lat, K_x, K_y), or 2-d (lon, lat) with K fixed."""
    cfg = cfg or OceanConfig()
    dom = np.asarray(cfg.domain, dtype=float)
    if fixed_k is not None:
        kx, ky = fixed_k

        def run2(x, seed):
            return ocean_simulate(x[0], x[1], kx, ky, cfg, seed)

        return SimulatorHandle(name="ocean2d", dim=2, bounds=dom, run=run2,
                               metadata={"fixed_k": list(fixed_k),
                                         "output": "oxygen concentration"})

    bounds = np.vstack([dom, np.asarray(cfg.k_bounds, dtype=float)])

    def run4(x, seed):
        return ocean_simulate(x[0], x[1], x[2], x[3], cfg, seed)

    return SimulatorHandle(name="ocean", dim=4, bounds=bounds, run=run4,
                           metadata={"output": "oxygen concentration"})


def ocean_truth(cfg: OceanConfig, sites, reps, seed):
    """Per-site empirical mean and variance from heavy replication."""
    from .base import child_seed
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    handle = ocean_handle(cfg, fixed_k=(700.0, 200.0))
    means = np.empty(sites.shape[0])
    variances = np.empty(sites.shape[0])
    for i, s in enumerate(sites):
        draws = handle.replicate(s, reps, child_seed(seed, i))
        means[i] = draws.mean()
        variances[i] = draws.var(ddof=1)
    return means, variances
