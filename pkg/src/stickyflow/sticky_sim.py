"""Sticky Brownian motion paths.

The primary simulator slows a reflected path down at 0: with
``A(u) = u + L(u) / theta``, ``X(t) = R(A^{-1}(t))``. On a grid, the local
time gained in a source step is spent as a *hold* at 0: the step is drawn as
a descent from ``R[j-1]`` to 0, a hold of clock length ``dL / theta``, and a
rise to ``R[j]`` (the descent takes the fraction ``R[j-1] / (R[j-1] + R[j])``
of the step). So ``A`` is piecewise linear in clock time and
``A^{-1}`` is flat during holds, which is where the sticky time lives.

A sticky-random-walk simulator is provided as an independent oracle.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import paths as P
from .paths import BrownianPath, ReflectedPath, Seed, TimeGrid

DEFAULT_ZERO_DETECT_C = 1e-2


@dataclass(frozen=True)
class StickyParams:
    theta: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")

    @property
    def lam(self) -> float:
        return 2.0 * self.theta


@dataclass(frozen=True, eq=False)
class StickyPath:
    """A sticky trajectory on its output grid.

    ``clock`` (optional) is the cumulative time spent at 0 up to each grid
    time, known exactly by the time-change simulator.
    """

    grid: TimeGrid
    X: np.ndarray
    at_zero: np.ndarray
    driver: BrownianPath | None = None
    source_seed: Seed | None = None
    clock: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.X < 0):
            raise ValueError("sticky path must be nonnegative")
        if np.any(self.X[self.at_zero] != 0.0):
            raise ValueError("at_zero flags must sit on X == 0")

    def with_driver(self, driver: BrownianPath) -> "StickyPath":
        return StickyPath(self.grid, self.X, self.at_zero, driver, self.source_seed, self.clock)

    def to_csv(self, fname) -> None:
        W = self.driver.values if self.driver is not None else np.full(len(self.X), np.nan)
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "X", "at_zero", "W"])
            for row in zip(self.grid.times, self.X, self.at_zero, W):
                w.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2]), repr(float(row[3]))])


@dataclass(frozen=True)
class OccupationSample:
    t_horizon: float
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= self.t_horizon:
            raise ValueError(f"occupation {self.value} outside [0, {self.t_horizon}]")


def _held_position(reflected: ReflectedPath, theta: float, t: np.ndarray):
    """``R`` and source time ``u`` at clock times ``t`` along the held path."""
    g = reflected.grid
    R, L = reflected.R, reflected.L
    A = g.times + L / theta
    k = np.clip(np.searchsorted(A, t, side="right"), 1, g.n_steps)
    p, q = R[k - 1], R[k]
    dL = L[k] - L[k - 1]
    grows = dL > 0
    pq = p + q
    frac = np.divide(p, pq, out=np.ones_like(p), where=pq > 0)
    a = np.where(grows, frac * g.dt, 0.0)          # descent to 0
    h = dL / theta                                  # hold at 0
    b = g.dt - a                                    # rise (or the whole step)
    tau = np.clip(t - A[k - 1], 0.0, a + h + b)
    w = np.minimum(tau, b) / g.dt
    # reaching the next knot returns its value exactly
    start = np.where(grows, p, np.where((w >= 1.0) | (t >= A[k]), q, p + (q - p) * w))
    descent = np.divide(p * (a - tau), a, out=np.zeros_like(p), where=a > 0)
    rise = np.divide(q * (tau - a - h), b, out=q.copy(), where=b > 0)
    Rt = np.where(~grows, start, np.where(tau < a, descent, np.where(tau <= a + h, 0.0, rise)))
    u = g.times[k - 1] + np.minimum(tau, a) + np.clip(tau - a - h, 0.0, None)
    return Rt, u


def simulate_time_change(reflected: ReflectedPath, params: StickyParams, out_grid: TimeGrid,
                         zero_detect_c: float = DEFAULT_ZERO_DETECT_C, seed: Seed | None = None) -> StickyPath:
    """``X(t) = R(A^{-1}(t))`` on ``out_grid``.

    ``at_zero[i]`` is ``R(A^{-1}(t_i)) <= zero_detect_c * sqrt(dt_source)``;
    flagged points are set to exactly 0 (hold points already are). The
    returned ``clock`` is ``t - A^{-1}(t)``, the time spent at 0.
    """
    theta = params.theta
    g = reflected.grid
    a_end = g.t_end + reflected.L[-1] / theta
    if a_end < out_grid.t_end:
        raise ValueError(
            f"source path reaches clock time {a_end:.6g} < {out_grid.t_end:.6g}; "
            f"a source path covering u_max = {out_grid.t_end:.6g} always suffices")
    t = out_grid.times
    Rt, u = _held_position(reflected, theta, t)
    at_zero = Rt <= zero_detect_c * np.sqrt(g.dt)
    X = np.where(at_zero, 0.0, Rt)
    clock = np.maximum(t - u, 0.0)
    return StickyPath(out_grid, X, at_zero, None, seed, clock)


def reconstruct_driver(path: StickyPath, params: StickyParams, seed: Seed, method: str = "auto") -> BrownianPath:
    """A Brownian motion ``W`` that makes ``(X, W)`` solve the sticky SDE.

    ``method='flags'``: ``dW_i = dX_i`` when ``at_zero[i]`` is false and
    ``sqrt(dt) xi_i`` otherwise. ``method='clock'`` (needs ``path.clock``):
    ``dW_i = dX_i - theta dO_i + sqrt(dO_i) xi_i`` with ``O`` the time spent
    at 0, i.e. the martingale part of ``X`` plus independent noise run on the
    sticky clock. ``'auto'`` uses the clock when present.
    """
    if method == "auto":
        method = "clock" if path.clock is not None else "flags"
    xi = P.rng_for(seed, P.DRIVER).standard_normal(path.grid.n_steps)
    dX = np.diff(path.X)
    if method == "flags":
        dW = np.where(path.at_zero[:-1], np.sqrt(path.grid.dt) * xi, dX)
    elif method == "clock":
        if path.clock is None:
            raise ValueError("path has no occupation clock")
        dO = np.maximum(np.diff(path.clock), 0.0)
        dW = dX - params.theta * dO + np.sqrt(dO) * xi
    else:
        raise ValueError(f"unknown method {method!r}")
    values = np.concatenate([[0.0], np.cumsum(dW)])
    return BrownianPath(path.grid, values, seed)


def occupation_time(path: StickyPath, t_horizon: float) -> OccupationSample:
    """``dt * #{i : at_zero[i], t_i < t_horizon}``."""
    if t_horizon > path.grid.t_end + 1e-12:
        raise ValueError(f"horizon {t_horizon} beyond grid end {path.grid.t_end}")
    times = path.grid.times
    count = np.count_nonzero(path.at_zero & (times < t_horizon - 1e-12 * path.grid.dt))
    return OccupationSample(t_horizon, min(t_horizon, count * path.grid.dt))


def occupation_law_value(theta, t, N):
    """Time spent at 0 by sticky BM from 0 up to ``t``, as a function of a
    standard normal ``N``: the root ``O`` of ``theta O = |N| sqrt(t - O)``,

        O = |N| / theta * sqrt(t + N^2 / (4 theta^2)) - N^2 / (2 theta^2).

    Written as ``2 t N^2 / (|N| sqrt(N^2 + 4 theta^2 t) + N^2)`` to avoid
    cancellation; nonnegative since ``t N^2 >= 0``.
    """
    N = np.asarray(N, dtype=float)
    a = np.abs(N)
    num = 2.0 * t * N * N
    den = a * np.sqrt(N * N + 4.0 * theta**2 * t) + N * N
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def sample_occupation_law(params: StickyParams, t: float, seed: Seed) -> OccupationSample:
    if not t > 0:
        raise ValueError("t must be positive")
    N = P.rng_for(seed, P.OCCUPATION).standard_normal()
    return OccupationSample(t, occupation_law_value(params.theta, t, N))


def occupation_law_samples(params: StickyParams, t: float, n: int, seed: Seed) -> np.ndarray:
    N = P.rng_for(seed, P.OCCUPATION).standard_normal(n)
    return occupation_law_value(params.theta, t, N)


def _walk_steps(theta, h, t_horizon):
    if not h > 0:
        raise ValueError("h must be positive")
    if theta * h >= 1:
        raise ValueError(f"theta * h = {theta * h} must be < 1")
    return int(round(t_horizon / (h * h)))


def simulate_sticky_walk(params: StickyParams, h: float, t_horizon: float, seed: Seed, x0: float = 0.0) -> StickyPath:
    """Lattice walk on ``{0, h, 2h, ...}`` with time step ``h^2``.

    Interior states move ``+-h`` with probability 1/2; from 0 the walk moves
    to ``h`` with probability ``theta h`` and otherwise stays.
    """
    n = _walk_steps(params.theta, h, t_horizon)
    u = P.rng_for(seed, P.WALK).random(n)
    k = np.empty(n + 1, dtype=np.int64)
    k[0] = int(round(x0 / h))
    q = params.theta * h
    cur = k[0]
    for i in range(n):
        if cur > 0:
            cur += 1 if u[i] < 0.5 else -1
        elif u[i] < q:
            cur = 1
        k[i + 1] = cur
    grid = TimeGrid(0.0, h * h, n)
    X = k * h
    return StickyPath(grid, X.astype(float), k == 0, None, seed)


def sticky_walk_ensemble(params: StickyParams, h: float, t_horizon: float, n_walks: int, seed: int,
                         chunk: int = 2000):
    """Terminal positions and occupation times of walks ``(seed, i)``.

    Walk ``i`` is the same as ``simulate_sticky_walk(..., seed=(seed, i))``.
    """
    n = _walk_steps(params.theta, h, t_horizon)
    q = params.theta * h
    dt = h * h
    X = np.empty(n_walks)
    occ = np.empty(n_walks)
    for lo in range(0, n_walks, chunk):
        ids = range(lo, min(n_walks, lo + chunk))
        u = np.stack([P.rng_for((seed, i), P.WALK).random(n) for i in ids])
        k = np.zeros(len(ids), dtype=np.int64)
        zeros = np.zeros(len(ids), dtype=np.int64)
        for i in range(n):
            at0 = k == 0
            zeros += at0
            step = np.where(u[:, i] < 0.5, 1, -1)
            k = np.where(at0, (u[:, i] < q).astype(np.int64), k + step)
        X[lo:lo + len(ids)] = k * h
        occ[lo:lo + len(ids)] = zeros * dt
    return X, occ


def simulate_sticky(params: StickyParams, source_grid: TimeGrid, out_grid: TimeGrid, seed: Seed,
                    exact_min: bool = True, zero_detect_c: float = DEFAULT_ZERO_DETECT_C,
                    with_driver: bool = True) -> StickyPath:
    """Brownian path -> reflection -> time change (-> driver), all from ``seed``."""
    W = P.sample_brownian(source_grid, seed)
    refl = P.reflect(W, bridge_seed=seed if exact_min else None)
    sp = simulate_time_change(refl, params, out_grid, zero_detect_c, seed)
    if with_driver:
        sp = sp.with_driver(reconstruct_driver(sp, params, seed))
    return sp
