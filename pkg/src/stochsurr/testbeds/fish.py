"""Fish mark-recapture testbed: a schooling ABM in a rectangular lake.

Agents follow flocking rules (separate overrides align + cohere, NetLogo
style) with reflective lake walls.  After a mixing period the first
``marks`` distinct agents passing through a vertical net band are marked;
after a second mixing period the first ``catch`` distinct agents passing
the same net are caught, and the output is how many of the caught are
marked.  The only calibration input is the population size; movement-rule
parameters stay at their defaults.

All randomness is in the seeded initial positions and headings; the tick
dynamics are deterministic, and the inner loop is numba-compiled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from ..errors import SimulatorError
from .base import SimulatorHandle


@dataclass(frozen=True)
class FishConfig:
    """Lake geometry, movement rules, and mark-recapture protocol."""

    width: float = 100.0
    height: float = 100.0
    speed: float = 1.0
    vision: float = 1.5
    min_separation: float = 0.5
    max_align_turn: float = 5.0      # degrees per tick
    max_cohere_turn: float = 3.0
    max_separate_turn: float = 1.5
    wiggle_turn: float = 6.0         # random heading wiggle cap, degrees per tick
    mix_ticks_1: int = 30            # before marking opens
    mix_ticks_2: int = 60            # between marking and recapture
    marks: int = 100
    catch: int = 100
    population_bounds: tuple = (150, 4000)
    tick_cap: int = 20000            # per netting phase

    def __post_init__(self):
        if self.mix_ticks_1 < 1 or self.mix_ticks_2 < 1:
            raise ValueError("mixing tick counts must be >= 1")
        for name in ("max_align_turn", "max_cohere_turn", "max_separate_turn"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.speed <= 0 or self.vision <= 0:
            raise ValueError("speed and vision must be positive")

    def strong_mixing(self):
        """Variant in the Lincoln-Petersen regime: a long second mixing
        period plus weak schooling (schools decorrelate too slowly for
        uniform recapture sampling at the default vision radius)."""
        return replace(self, mix_ticks_2=350, vision=0.8, wiggle_turn=10.0)


@njit(cache=True, fastmath=True)
def _simulate(pos, head, rng_state, wiggle, width, height, speed, vision, min_sep,
              max_align, max_cohere, max_separate,
              t1, t2, marks_n, catch_n, tick_cap,
              net_x, band_half, net_y_lo, net_y_hi):
    P = pos.shape[0]
    ncx = max(int(width / vision), 1)
    ncy = max(int(height / vision), 1)
    csx = width / ncx
    csy = height / ncy
    ncells = ncx * ncy
    counts = np.zeros(ncells + 1, dtype=np.int64)
    order = np.empty(P, dtype=np.int64)
    cell_of = np.empty(P, dtype=np.int64)
    new_head = np.empty(P, dtype=np.float64)
    ch = np.empty(P, dtype=np.float64)
    sh = np.empty(P, dtype=np.float64)
    marked = np.zeros(P, dtype=np.uint8)
    caught = np.zeros(P, dtype=np.uint8)
    vis2 = vision * vision
    sep2 = min_sep * min_sep

    # phase: 0 mix-1, 1 marking, 2 mix-2, 3 catching
    phase = 0
    phase_tick = 0
    n_marked = 0
    n_caught = 0
    recaptured = 0

    while True:
        # --- cell-list neighbor index (counting sort)
        for i in range(P):
            cx = int(pos[i, 0] / csx)
            cy = int(pos[i, 1] / csy)
            if cx < 0:
                cx = 0
            elif cx >= ncx:
                cx = ncx - 1
            if cy < 0:
                cy = 0
            elif cy >= ncy:
                cy = ncy - 1
            cell_of[i] = cy * ncx + cx
        counts[:] = 0
        for i in range(P):
            counts[cell_of[i] + 1] += 1
        for c in range(ncells):
            counts[c + 1] += counts[c]
        fill = counts.copy()
        for i in range(P):
            order[fill[cell_of[i]]] = i
            fill[cell_of[i]] += 1

        # --- steering
        for i in range(P):
            ch[i] = math.cos(head[i])
            sh[i] = math.sin(head[i])
        for i in range(P):
            xi = pos[i, 0]
            yi = pos[i, 1]
            cx = cell_of[i] % ncx
            cy = cell_of[i] // ncx
            nmates = 0
            sum_cos = 0.0
            sum_sin = 0.0
            bear_x = 0.0
            bear_y = 0.0
            nearest2 = 1e30
            nearest_j = -1
            for oy in range(-1, 2):
                yy = cy + oy
                if yy < 0 or yy >= ncy:
                    continue
                for ox in range(-1, 2):
                    xx = cx + ox
                    if xx < 0 or xx >= ncx:
                        continue
                    c = yy * ncx + xx
                    for k in range(counts[c], counts[c + 1]):
                        j = order[k]
                        if j == i:
                            continue
                        dx = pos[j, 0] - xi
                        dy = pos[j, 1] - yi
                        d2 = dx * dx + dy * dy
                        if d2 < vis2:
                            nmates += 1
                            sum_cos += ch[j]
                            sum_sin += sh[j]
                            d = math.sqrt(d2) + 1e-12
                            bear_x += dx / d
                            bear_y += dy / d
                            if d2 < nearest2:
                                nearest2 = d2
                                nearest_j = j
            h = head[i]
            if nmates > 0:
                if nearest2 < sep2:
                    # separate: turn away from the nearest flockmate
                    away = math.atan2(yi - pos[nearest_j, 1], xi - pos[nearest_j, 0])
                    h = _turn_toward(h, away, max_separate)
                else:
                    align_to = math.atan2(sum_sin, sum_cos)
                    h = _turn_toward(h, align_to, max_align)
                    cohere_to = math.atan2(bear_y, bear_x)
                    h = _turn_toward(h, cohere_to, max_cohere)
            new_head[i] = h

        # --- move and reflect
        for i in range(P):
            # xorshift64*: cheap per-agent stream for the heading wiggle
            st = rng_state[i]
            st ^= st >> np.uint64(12)
            st ^= st << np.uint64(25)
            st ^= st >> np.uint64(27)
            rng_state[i] = st
            u = np.float64(st * np.uint64(2685821657736338717) >> np.uint64(11)) / 9007199254740992.0
            h = new_head[i] + wiggle * (2.0 * u - 1.0)
            x = pos[i, 0] + speed * math.cos(h)
            y = pos[i, 1] + speed * math.sin(h)
            if x < 0.0:
                x = -x
                h = math.pi - h
            elif x > width:
                x = 2.0 * width - x
                h = math.pi - h
            if y < 0.0:
                y = -y
                h = -h
            elif y > height:
                y = 2.0 * height - y
                h = -h
            pos[i, 0] = x
            pos[i, 1] = y
            head[i] = h

        phase_tick += 1

        if phase == 0:
            if phase_tick >= t1:
                phase = 1
                phase_tick = 0
        elif phase == 1:
            for i in range(P):
                if n_marked >= marks_n:
                    break
                if marked[i] == 0 and abs(pos[i, 0] - net_x) <= band_half \
                        and net_y_lo <= pos[i, 1] <= net_y_hi:
                    marked[i] = 1
                    n_marked += 1
            if n_marked >= marks_n:
                phase = 2
                phase_tick = 0
            elif phase_tick >= tick_cap:
                return -1, 1
        elif phase == 2:
            if phase_tick >= t2:
                phase = 3
                phase_tick = 0
        else:
            for i in range(P):
                if n_caught >= catch_n:
                    break
                if caught[i] == 0 and abs(pos[i, 0] - net_x) <= band_half \
                        and net_y_lo <= pos[i, 1] <= net_y_hi:
                    caught[i] = 1
                    n_caught += 1
                    if marked[i] == 1:
                        recaptured += 1
            if n_caught >= catch_n:
                return recaptured, 0
            if phase_tick >= tick_cap:
                return -1, 2


@njit(cache=True, fastmath=True, inline="always")
def _turn_toward(h, target, max_turn):
    diff = target - h
    while diff > math.pi:
        diff -= 2.0 * math.pi
    while diff < -math.pi:
        diff += 2.0 * math.pi
    if diff > max_turn:
        diff = max_turn
    elif diff < -max_turn:
        diff = -max_turn
    return h + diff


def fish_simulate(population, cfg: FishConfig = None, seed=0):
    """Run one mark-recapture experiment; returns the recaptured count."""
    cfg = cfg or FishConfig()
    population = int(population)
    lo, hi = cfg.population_bounds
    if not (lo <= population <= hi):
        raise ValueError(f"population {population} outside bounds [{lo}, {hi}]")
    if population < max(cfg.marks, cfg.catch):
        raise ValueError("population smaller than the marking/catch quota")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    pos = np.column_stack([rng.uniform(0, cfg.width, population),
                           rng.uniform(0, cfg.height, population)])
    head = rng.uniform(-np.pi, np.pi, population)
    deg = np.pi / 180.0
    rng_state = rng.integers(1, 2 ** 63, size=population, dtype=np.uint64)
    rec, status = _simulate(
        pos, head, rng_state, cfg.wiggle_turn * deg, cfg.width, cfg.height,
        cfg.speed, cfg.vision,
        cfg.min_separation, cfg.max_align_turn * deg, cfg.max_cohere_turn * deg,
        cfg.max_separate_turn * deg, cfg.mix_ticks_1, cfg.mix_ticks_2,
        cfg.marks, cfg.catch, cfg.tick_cap,
        cfg.width / 2.0, cfg.speed / 2.0, cfg.height / 3.0, 2.0 * cfg.height / 3.0)
    if status == 1:
        raise SimulatorError(
            f"fewer than {cfg.marks} net crossings within the tick cap", phase="marking")
    if status == 2:
        raise SimulatorError(
            f"fewer than {cfg.catch} net crossings within the tick cap", phase="catching")
    return int(rec)


def fish_handle(cfg: FishConfig = None) -> SimulatorHandle:
    cfg = cfg or FishConfig()

    def run(x, seed):
        pop = int(np.floor(np.atleast_1d(x)[0]))
        return float(fish_simulate(pop, cfg, seed))

    return SimulatorHandle(
        name="fish", dim=1, bounds=[list(cfg.population_bounds)], run=run,
        metadata={"output": "recaptured count in {0..%d}" % cfg.catch})
