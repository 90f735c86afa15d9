"""Seeded Brownian driving paths, Skorokhod reflection and hitting times.

Path values live on the dyadic lattice ``LATTICE * Z`` so that sums and
differences of a few path values (and of lattice-valued starting points) are
exact in floating point. This is what makes the flow-of-maps composition
checks bitwise rather than approximate; the perturbation is ~1e-10, far
below any grid scale used here.

Randomness comes from :func:`rng_for`: a seed (an int or a tuple of ints,
e.g. ``(base_seed, path_index)``) plus a role tag selects an independent
counter-based stream, so path ``i`` of an ensemble is reproducible
regardless of ensemble size or evaluation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

Seed = Union[int, Sequence[int]]

LATTICE = 2.0 ** -32

# stream roles
INCREMENTS = 0
BRIDGE_MIN = 1
REFINE = 2
DRIVER = 3
KERNEL = 4
WALK = 5
OCCUPATION = 6
CROSSING = 7
EXPONENTIAL = 8


def rng_for(seed: Seed, role: int = INCREMENTS) -> np.random.Generator:
    """Independent generator for ``(seed, role)``."""
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy, spawn_key=(role,))))


def quantize(x):
    """Round onto the path lattice."""
    return np.round(np.asarray(x, dtype=float) / LATTICE) * LATTICE


@lru_cache(maxsize=16)
def _times(t_start, dt, n_steps):
    t = t_start + dt * np.arange(n_steps + 1)
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class TimeGrid:
    t_start: float = 0.0
    dt: float = 1.0
    n_steps: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be nonnegative, got {self.n_steps}")
        if self.t_start < 0:
            raise ValueError(f"t_start must be nonnegative, got {self.t_start}")

    @classmethod
    def uniform(cls, t_end: float, n_steps: int, t_start: float = 0.0) -> "TimeGrid":
        return cls(t_start, (t_end - t_start) / n_steps, n_steps)

    @property
    def times(self) -> np.ndarray:
        return _times(self.t_start, self.dt, self.n_steps)

    @property
    def t_end(self) -> float:
        return self.t_start + self.dt * self.n_steps

    def index_of(self, t: float) -> int:
        """Grid index of time ``t`` (must lie on the grid up to rounding)."""
        k = (t - self.t_start) / self.dt
        i = int(round(k))
        if abs(k - i) > 1e-9 * max(1.0, abs(k)) or not 0 <= i <= self.n_steps:
            raise ValueError(f"time {t} is not a point of the grid")
        return i


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    values: np.ndarray
    seed: Seed | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_steps + 1,):
            raise ValueError("values must have one entry per grid point")
        if v[0] != 0.0:
            raise ValueError("a Brownian path starts at 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def to_csv(self, fname) -> None:
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "W"])
            for t, x in zip(self.grid.times, self.values):
                w.writerow([repr(float(t)), repr(float(x))])


@dataclass(frozen=True, eq=False)
class ReflectedPath:
    """Reflected path ``R = x0 + W + L`` with nondecreasing ``L``.

    ``source`` is the driving Brownian path, ``x0`` the starting point.
    """

    grid: TimeGrid
    R: np.ndarray
    L: np.ndarray
    source: BrownianPath | None = None
    x0: float = 0.0
    exact_min: bool = field(default=False)

    @property
    def W(self) -> np.ndarray:
        return self.R - self.L - self.x0


def sample_brownian(grid: TimeGrid, seed: Seed) -> BrownianPath:
    """Brownian path on ``grid`` with i.i.d. N(0, dt) increments."""
    z = rng_for(seed, INCREMENTS).standard_normal(grid.n_steps)
    values = np.empty(grid.n_steps + 1)
    values[0] = 0.0
    np.cumsum(z * np.sqrt(grid.dt), out=values[1:])
    return BrownianPath(grid, quantize(values), seed)


def brownian_from_increments(grid: TimeGrid, increments, seed: Seed | None = None) -> BrownianPath:
    values = np.concatenate([[0.0], np.cumsum(np.asarray(increments, dtype=float))])
    return BrownianPath(grid, quantize(values), seed)


def bridge_minima(path: BrownianPath, seed: Seed) -> np.ndarray:
    """Exact samples of the minimum of the path inside each grid step.

    Given endpoints ``a, b`` of a Brownian bridge over ``dt``, the minimum is
    ``(a + b - sqrt((b - a)**2 - 2 dt log U)) / 2``.
    """
    a = path.values[:-1]
    b = path.values[1:]
    u = rng_for(seed, BRIDGE_MIN).random(len(a))
    return 0.5 * (a + b - np.sqrt((b - a) ** 2 - 2.0 * path.grid.dt * np.log1p(-u)))


def _bridge_minima_below(path: BrownianPath, shifted, running, seed: Seed) -> np.ndarray:
    """Same values as ``x0 + bridge_minima`` wherever they can lower the running minimum.

    A bridge from ``a`` to ``b`` dips below ``r <= min(a, b)`` iff
    ``1 - u < exp(-2 (a - r)(b - r) / dt)``. Since ``1 - u >= 2**-53`` this is
    impossible once the exponent exceeds ``53 log 2``; those steps get ``+inf``
    and the remaining few are sampled exactly.
    """
    a, b = shifted[:-1], shifted[1:]
    r = running[:-1]
    u = rng_for(seed, BRIDGE_MIN).random(len(a))
    dt = path.grid.dt
    cand = np.flatnonzero(2.0 * (a - r) * (b - r) < 40.0 * dt)
    out = np.full(len(a), np.inf)
    ac, bc = path.values[cand], path.values[cand + 1]
    x0 = shifted[0] - path.values[0]
    out[cand] = x0 + 0.5 * (ac + bc - np.sqrt((bc - ac) ** 2 - 2.0 * dt * np.log1p(-u[cand])))
    return out


def reflect(path: BrownianPath, x0: float = 0.0, bridge_seed: Seed | None = None) -> ReflectedPath:
    """Skorokhod reflection of ``x0 + W`` at 0.

    ``L[i] = max(0, -min_{j<=i} (x0 + W[j]))`` and ``R = x0 + W + L``. With
    ``bridge_seed`` the running minimum also includes exactly sampled
    minima inside each step, so ``L`` is the continuous-time local time at
    the grid points (in law, jointly with ``W``).
    """
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    shifted = x0 + path.values
    running = np.minimum.accumulate(shifted)
    if bridge_seed is not None:
        inner = _bridge_minima_below(path, shifted, running, bridge_seed)
        running = np.minimum.accumulate(np.concatenate([[shifted[0]], np.minimum(shifted[1:], inner)]))
    L = -np.minimum(running, 0.0)
    R = shifted + L
    for a in (R, L):
        a.setflags(write=False)
    return ReflectedPath(path.grid, R, L, path, x0, bridge_seed is not None)


def shifted_increment(path: BrownianPath, s_index: int, t_index: int) -> float:
    if s_index > t_index:
        raise ValueError(f"s_index {s_index} > t_index {t_index}")
    return float(path.values[t_index] - path.values[s_index])


def hitting_index(path: BrownianPath, s_index: int, x: float, crossing_seed: Seed | None = None):
    """First index ``u >= s_index`` with ``x + W[u] - W[s_index] <= 0``.

    Returns ``None`` when the level is not reached on the grid. With
    ``crossing_seed`` a crossing inside a step whose endpoints ``a, b`` are
    both positive is accepted with probability ``exp(-2ab/dt)`` and reported
    at the step's right end.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    level = x + (path.values[s_index:] - path.values[s_index])
    hit = level <= 0.0
    if crossing_seed is not None and len(level) > 1:
        a, b = level[:-1], level[1:]
        p = np.where((a > 0) & (b > 0), np.exp(-2.0 * a * b / path.grid.dt), 0.0)
        u = rng_for(crossing_seed, CROSSING).random(len(path.values) - 1)[s_index:]
        hit[1:] |= u < p
    idx = np.flatnonzero(hit)
    return int(s_index + idx[0]) if idx.size else None


def refine(path: BrownianPath, factor: int, seed: Seed) -> BrownianPath:
    """Brownian-bridge refinement onto a grid with ``dt / factor``.

    Coarse points are kept exactly; each coarse step is filled with an
    independent bridge, built as free increments minus their linear drift.
    """
    if factor < 2:
        raise ValueError("factor must be >= 2")
    g = path.grid
    fine = TimeGrid(g.t_start, g.dt / factor, g.n_steps * factor)
    z = rng_for(seed, REFINE).standard_normal((g.n_steps, factor)) * np.sqrt(fine.dt)
    a = path.values[:-1]
    b = path.values[1:]
    total = z[:, 0].copy()
    for k in range(1, factor):
        total += z[:, k]
    values = np.empty(fine.n_steps + 1)
    values[0] = 0.0
    inner = values[1:].reshape(g.n_steps, factor)
    free = np.zeros(g.n_steps)
    # columns are few, rows many: loop over columns
    for k in range(factor):
        free += z[:, k]
        frac = (k + 1) / factor
        inner[:, k] = a + frac * (b - a) + (free - frac * total)
    values[1:] = quantize(values[1:])
    values[factor::factor] = path.values[1:]
    return BrownianPath(fine, values, seed)
