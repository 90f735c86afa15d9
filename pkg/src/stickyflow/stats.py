"""Monte Carlo estimators, Kolmogorov-Smirnov tests and the joint-law check.

All intervals default to ``z = 4`` and all tests to ``alpha = 0.01``.
Reductions go through ``numpy.sum`` (pairwise summation) over arrays laid out
in path order, so results depend only on the samples, never on threading.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import paths as P
from . import sticky_sim as S
from .kernel_flow import GTransform

Z_DEFAULT = 4.0
ALPHA_DEFAULT = 0.01


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int
    z: float = Z_DEFAULT

    @property
    def ci_low(self) -> float:
        return self.mean - self.z * self.std_error

    @property
    def ci_high(self) -> float:
        return self.mean + self.z * self.std_error

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def mc_mean(samples, z: float = Z_DEFAULT) -> McEstimate:
    """Sample mean with ``std_error = std(ddof=1) / sqrt(n)``."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    m = float(np.sum(x) / x.size)
    sd = float(np.sqrt(np.sum((x - m) ** 2) / (x.size - 1)))
    return McEstimate(m, sd / np.sqrt(x.size), int(x.size), z)


def difference(a: McEstimate, b: McEstimate) -> McEstimate:
    """``a - b`` for independent estimates, with pooled standard error."""
    return McEstimate(a.mean - b.mean, float(np.hypot(a.std_error, b.std_error)), min(a.n, b.n), a.z)


def kolmogorov_sf(lam) -> np.ndarray | float:
    """``P(K > lam)`` for the Kolmogorov distribution.

    ``2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lam^2)`` (100 terms) for ``lam >= 1``;
    for smaller ``lam`` the alternating series converges slowly and the
    dual form ``1 - sqrt(2 pi)/lam sum_k exp(-(2k-1)^2 pi^2 / (8 lam^2))``
    is used instead.
    """
    lam = np.asarray(lam, dtype=float)
    out = np.empty_like(lam)
    k = np.arange(1, 101)
    big = lam >= 1.0
    lb = lam[big][..., None]
    out[big] = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k * k * lb * lb), axis=-1)
    small = ~big & (lam > 0)
    ls = lam[small][..., None]
    out[small] = 1.0 - np.sqrt(2.0 * np.pi) / ls[..., 0] * np.sum(
        np.exp(-((2 * k - 1) ** 2) * np.pi ** 2 / (8.0 * ls * ls)), axis=-1)
    out[lam <= 0] = 1.0
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KsReport:
    statistic: float
    n1: int
    n2: int | None
    p_value: float
    alpha: float = ALPHA_DEFAULT

    def __post_init__(self):
        if not 0.0 <= self.statistic <= 1.0:
            raise ValueError(f"KS statistic {self.statistic} outside [0, 1]")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha


def ks_two_sample(a, b, alpha: float = ALPHA_DEFAULT) -> KsReport:
    """Two-sample KS with the asymptotic p-value at ``sqrt(n1 n2 / (n1 + n2)) D``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    pts = np.concatenate([a, b])
    Fa = np.searchsorted(a, pts, side="right") / a.size
    Fb = np.searchsorted(b, pts, side="right") / b.size
    D = float(np.max(np.abs(Fa - Fb)))
    ne = a.size * b.size / (a.size + b.size)
    return KsReport(D, int(a.size), int(b.size), kolmogorov_sf(np.sqrt(ne) * D), alpha)


def ks_one_sample(samples, cdf: Callable, alpha: float = ALPHA_DEFAULT) -> KsReport:
    """KS against a continuous CDF (asymptotic p-value at ``sqrt(n) D``)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n), 0.0))
    return KsReport(min(D, 1.0), int(n), None, kolmogorov_sf(np.sqrt(n) * D), alpha)


def ensemble_map(fn: Callable[[int], object], n: int, threads: int = 1) -> list:
    """``[fn(0), ..., fn(n-1)]`` in index order, on up to ``threads`` threads."""
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(n)))


# -- joint law of (X_t, W) against the conditional-expectation formula --------

@dataclass(frozen=True)
class DriverFunctional:
    """``g(W_{t_1}, ..., W_{t_k})``; ``fn`` takes an array of shape ``(..., k)``."""

    times: tuple
    fn: Callable
    name: str = "g"

    def __call__(self, values):
        return np.asarray(self.fn(np.asarray(values, dtype=float)), dtype=float)


def functional_one() -> DriverFunctional:
    return DriverFunctional((), lambda w: np.ones(w.shape[:-1]), "1")


@dataclass(frozen=True)
class SimConfig:
    """Discretization of the joint-law test.

    The sticky side runs on ``n_steps`` output steps driven by a source grid
    ``source_factor`` times finer; the reference side uses plain paths on the
    output grid with exactly sampled in-step minima. ``theta_reference``
    (defaults to ``theta``) sets the rate of the G-transform on the reference
    side and exists for negative controls.
    """

    n_steps: int = 2000
    source_factor: int = 4
    seed: int = 0
    exact_min: bool = True
    zero_detect_c: float = S.DEFAULT_ZERO_DETECT_C
    theta_reference: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.n_steps < 1 or self.source_factor < 1:
            raise ValueError("n_steps and source_factor must be positive")


@dataclass(frozen=True)
class JointLawSamples:
    sticky: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)

    def estimate(self, z: float = Z_DEFAULT) -> McEstimate:
        return difference(mc_mean(self.sticky, z), mc_mean(self.reference, z))


def _coord_indices(grid: P.TimeGrid, times: Sequence[float], t: float):
    for s in times:
        if s > t + 1e-12 or s < 0:
            raise ValueError(f"functional coordinate {s} outside [0, {t}]")
    return [grid.index_of(s) for s in times]


def sticky_side_samples(functionals, theta, t, n_paths, cfg: SimConfig):
    """``X_t`` per path and, per functional, ``W`` at its coordinates."""
    params = S.StickyParams(theta)
    out = P.TimeGrid.uniform(t, cfg.n_steps)
    src = P.TimeGrid.uniform(t, cfg.n_steps * cfg.source_factor)
    idx = [_coord_indices(out, g.times, t) for g in functionals]

    def one(i):
        sp = S.simulate_sticky(params, src, out, (cfg.seed, 0, i), exact_min=cfg.exact_min,
                               zero_detect_c=cfg.zero_detect_c)
        return sp.X[-1], [sp.driver.values[ix] for ix in idx]

    rows = ensemble_map(one, n_paths, cfg.threads)
    X = np.array([r[0] for r in rows])
    W = [np.array([r[1][k] for r in rows]).reshape(n_paths, len(g.times)) for k, g in enumerate(functionals)]
    return X, W


def reference_side_samples(functionals, t, n_paths, cfg: SimConfig):
    """``W+_t`` per independent plain path and ``W`` at the coordinates."""
    grid = P.TimeGrid.uniform(t, cfg.n_steps)
    idx = [_coord_indices(grid, g.times, t) for g in functionals]

    def one(i):
        seed = (cfg.seed, 1, i)
        W = P.sample_brownian(grid, seed)
        low = float(np.min(W.values))
        if cfg.exact_min:
            low = min(low, float(np.min(P.bridge_minima(W, seed))))
        return W.values[-1] - low, [W.values[ix] for ix in idx]

    rows = ensemble_map(one, n_paths, cfg.threads)
    wplus = np.array([r[0] for r in rows])
    W = [np.array([r[1][k] for r in rows]).reshape(n_paths, len(g.times)) for k, g in enumerate(functionals)]
    return wplus, W


def joint_law_battery(fs, functionals, theta, t, n_paths, cfg: SimConfig) -> dict:
    """``{(i, j): JointLawSamples}`` for ``fs[i]`` and ``functionals[j]``, all
    sharing one simulation per side."""
    X, Ws = sticky_side_samples(functionals, theta, t, n_paths, cfg)
    wplus, Wr = reference_side_samples(functionals, t, n_paths, cfg)
    th = cfg.theta_reference if cfg.theta_reference is not None else theta
    y_max = float(np.max(wplus, initial=0.0))
    out = {}
    for i, f in enumerate(fs):
        fx = np.asarray(f(X), dtype=float)
        gx = GTransform(f, th, y_max)(wplus)
        for j, g in enumerate(functionals):
            out[i, j] = JointLawSamples(fx * g(Ws[j]), gx * g(Wr[j]))
    return out


def joint_law_test(f, g_functional: DriverFunctional, theta, t, n_paths, sim_config: SimConfig | None = None,
                   z: float = Z_DEFAULT) -> McEstimate:
    """Estimate of ``E[f(X_t) g(W)] - E[G_f(W+_t) g(W)]`` with pooled standard error."""
    cfg = sim_config or SimConfig()
    return joint_law_battery([f], [g_functional], theta, t, n_paths, cfg)[0, 0].estimate(z)


def epsilon_local_time(reflected: P.ReflectedPath, eps: float, t: float | None = None) -> float:
    """``(1 / 2 eps) dt #{i : 0 <= R[i] <= eps, t_i < t}`` (left-point occupation)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = reflected.grid
    n = g.n_steps if t is None else g.index_of(t)
    R = reflected.R[:n]
    return float(np.count_nonzero((R >= 0) & (R <= eps)) * g.dt / (2.0 * eps))


# -- reporting -----------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    """One named pass/fail line of a suite."""

    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


def summary_block(title: str, checks: Sequence[Check]) -> str:
    lines = [f"== {title} =="]
    for c in checks:
        lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: value={c.value:.6g} "
                     f"threshold={c.threshold:.6g}{'  ' + c.detail if c.detail else ''}")
    n_ok = sum(c.passed for c in checks)
    lines.append(f"{n_ok}/{len(checks)} checks passed")
    return "\n".join(lines)


def write_checks_csv(fname, checks: Sequence[Check]) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "value", "threshold", "passed", "detail"])
        for c in checks:
            w.writerow([c.name, repr(float(c.value)), repr(float(c.threshold)), int(c.passed), c.detail])


def write_estimate_csv(fname, rows: Sequence[tuple[str, McEstimate]]) -> None:
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "mean", "std_error", "n", "ci_low", "ci_high"])
        for name, e in rows:
            w.writerow([name, repr(e.mean), repr(e.std_error), e.n, repr(e.ci_low), repr(e.ci_high)])


def histogram_csv(fname, sim, law, bins: int = 40) -> None:
    """``bin_low, bin_high, count_sim, count_law`` on common bins."""
    sim = np.asarray(sim, dtype=float)
    law = np.asarray(law, dtype=float)
    hi = float(max(np.max(sim, initial=0.0), np.max(law, initial=0.0)))
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    cs, _ = np.histogram(sim, edges)
    cl, _ = np.histogram(law, edges)
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_low", "bin_high", "count_sim", "count_law"])
        for lo, up, a, b in zip(edges[:-1], edges[1:], cs, cl):
            w.writerow([repr(float(lo)), repr(float(up)), int(a), int(b)])
