"""Truncated Wiener chaos expansion of ``E[f(X_t) | W]``.

With ``D g = 1_{(0,inf)} g'`` the order-``n`` coefficient is

    c(s_1, ..., s_n) = P_{s_1} D P_{s_2 - s_1} D ... D P_{t - s_n} f (0)

and ``J^n`` is its iterated Ito integral over ``0 < s_1 < ... < s_n < t``.

Functions are carried as vectors of length ``m + 1``: slot 0 is the value at
the point 0 itself and slots ``1..m`` the values at Chebyshev-Lobatto nodes on
``[0, x_max]`` (node 0 holding the limit at ``0+``). The two differ after
``D``, which zeroes slot 0. Between nodes a vector is read as its polynomial
interpolant, beyond ``x_max`` as the constant last value. Propagator matrices
are built by Gauss-Legendre quadrature of the kernel against that basis, plus
the closed-form tail and atom columns.

The same machinery with the reflected kernel and the plain derivative expands
``G_f(W+_t)``; there slot 0 simply repeats node 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from . import semigroup as SG
from ._quad import panel_nodes
from .kernel_flow import GTransform, g_transform
from .paths import BrownianPath, TimeGrid

MAX_TIME_STEPS = 512
MAX_ORDER = 3
WIDTH_CAP = 0.25  # quadrature panel cap for propagator rows


@dataclass(frozen=True, eq=False)
class SpaceGrid:
    x_max: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if len(x) < 16:
            raise ValueError("need at least 16 nodes")
        if x[0] != 0.0 or np.any(np.diff(x) <= 0):
            raise ValueError("nodes must increase strictly from 0")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        wts = _barycentric_weights(x)
        wts.setflags(write=False)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def chebyshev(cls, x_max: float = 12.0, m: int = 200) -> "SpaceGrid":
        j = np.arange(m)
        x = 0.5 * x_max * (1.0 - np.cos(np.pi * j / (m - 1)))
        x[0] = 0.0
        return cls(x_max, x)

    @property
    def m(self) -> int:
        return len(self.nodes)

    def sample(self, f) -> np.ndarray:
        """Grid vector of a function continuous at 0."""
        v = np.asarray(f(self.nodes), dtype=float)
        return np.concatenate([[v[0]], v])

    def evaluate(self, v, y) -> np.ndarray:
        """Interpolant of grid vector ``v`` at ``y > 0`` (constant past ``x_max``)."""
        y = np.asarray(y, dtype=float)
        return self.interpolator(v[1:])(np.minimum(y, self.x_max))

    def interpolator(self, values) -> BarycentricInterpolator:
        # explicit weights: scipy would otherwise draw a random node order
        return BarycentricInterpolator(self.nodes, values, wi=self.weights)


def _barycentric_weights(x) -> np.ndarray:
    """``1 / prod_{k != j} (x_j - x_k)``, scaled to max 1 (summed in logs to avoid overflow)."""
    d = x[:, None] - x[None, :]
    np.fill_diagonal(d, 1.0)
    logw = -np.sum(np.log(np.abs(d)), axis=1)
    sign = np.where(np.sum(d < 0, axis=1) % 2, -1.0, 1.0)
    return sign * np.exp(logw - np.max(logw))


@lru_cache(maxsize=32)
def _basis(grid: SpaceGrid, n_panels: int):
    y, w = panel_nodes(0.0, grid.x_max, n_panels)
    B = grid.interpolator(np.eye(grid.m))(y)
    return y, w, B


class PropagatorSet:
    """``P_{k dt}`` and ``D P_{k dt}`` on a :class:`SpaceGrid`, ``k = 0..K``.

    ``kind='sticky'`` uses the sticky kernel and ``D = 1_{(0,inf)} d/dx``;
    ``kind='reflected'`` the reflected kernel and the full derivative.
    Matrices are built on first use and then reused.
    """

    def __init__(self, theta: float, t: float, n_time_steps: int, grid: SpaceGrid, kind: str = "sticky"):
        if kind not in ("sticky", "reflected"):
            raise ValueError(f"unknown kind {kind!r}")
        if n_time_steps > MAX_TIME_STEPS:
            raise ValueError(f"n_time_steps = {n_time_steps} exceeds the cost guard {MAX_TIME_STEPS}")
        if n_time_steps < 1 or not t > 0 or not theta > 0:
            raise ValueError("need n_time_steps >= 1, t > 0 and theta > 0")
        self.theta = float(theta)
        self.t = float(t)
        self.K = int(n_time_steps)
        self.dt = self.t / self.K
        self.grid = grid
        self.kind = kind
        self._P: dict = {}
        self._DP: dict = {}
        self._coefficients: dict = {}
        self._gtransforms: list = []

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(0.0, self.dt, self.K)

    def _kernels(self, deriv: bool):
        th = self.theta
        if self.kind == "sticky":
            if deriv:
                return (lambda s, x, y: SG.density_dx(th, s, x, y), lambda s, x: SG.atom_mass_dx(th, s, x),
                        lambda s, x, a: SG.tail_mass_dx(th, s, x, a))
            return (lambda s, x, y: SG.density(th, s, x, y), lambda s, x: SG.atom_mass(th, s, x),
                    lambda s, x, a: SG.tail_mass(th, s, x, a))
        zero = lambda s, x: np.zeros_like(x)  # noqa: E731
        if deriv:
            return SG.reflected_density_dx, zero, SG.reflected_tail_mass_dx
        return SG.reflected_density, zero, SG.reflected_tail_mass

    def _rows(self, s: float, xs, deriv: bool) -> np.ndarray:
        kern, atom, tail = self._kernels(deriv)
        g = self.grid
        width = min(WIDTH_CAP, 0.5 * np.sqrt(s), 0.5 / self.theta)
        y, w, B = _basis(g, int(np.ceil(g.x_max / width)))
        xs = np.asarray(xs, dtype=float)
        M = np.empty((len(xs), g.m + 1))
        reach = SG.TRUNCATION_WIDTHS * np.sqrt(s)
        if 2.0 * reach >= g.x_max:
            M[:, 1:] = (kern(s, xs[:, None], y[None, :]) * w) @ B
        else:
            # the row for x only sees [x - reach, x + reach]
            lo = np.searchsorted(y, xs - reach)
            hi = np.searchsorted(y, xs + reach)
            for r, (a, b) in enumerate(zip(lo, hi)):
                M[r, 1:] = (kern(s, xs[r], y[a:b]) * w[a:b]) @ B[a:b]
        M[:, -1] += tail(s, xs, g.x_max)
        M[:, 0] = atom(s, xs)
        return M

    def _check_k(self, k):
        if not 0 <= k <= self.K:
            raise ValueError(f"step count {k} outside 0..{self.K}")

    def P(self, k: int) -> np.ndarray:
        self._check_k(k)
        if k not in self._P:
            if k == 0:
                M = np.eye(self.grid.m + 1)
            else:
                nodes = self._rows(k * self.dt, self.grid.nodes, False)
                M = np.vstack([nodes[:1], nodes])
                err = float(np.max(np.abs(M.sum(axis=1) - 1.0)))
                if err > 1e-6:
                    raise RuntimeError(f"grid propagator P_{k} loses mass {err:.3g}; refine the space grid")
            M.setflags(write=False)
            self._P[k] = M
        return self._P[k]

    def DP(self, k: int) -> np.ndarray:
        """``D P_{k dt}``; needs ``k >= 1``."""
        self._check_k(k)
        if k == 0:
            raise ValueError("D P_0 is not represented (derivative of an interpolant)")
        if k not in self._DP:
            nodes = self._rows(k * self.dt, self.grid.nodes, True)
            first = np.zeros((1, self.grid.m + 1)) if self.kind == "sticky" else nodes[:1]
            M = np.vstack([first, nodes])
            M.setflags(write=False)
            self._DP[k] = M
        return self._DP[k]

    def mu0(self, k: int) -> np.ndarray:
        """Row vector ``v -> (P_{k dt} v)(0)``."""
        self._check_k(k)
        if k == 0:
            e = np.zeros(self.grid.m + 1)
            e[0] = 1.0
            return e
        if k in self._P:
            return self._P[k][0]
        return self._rows(k * self.dt, np.zeros(1), False)[0]

    # exact (grid-free) pieces
    def apply_at_zero(self, h) -> float:
        if self.kind == "sticky":
            return float(SG.apply(self.theta, self.t, h, 0.0))
        return float(SG.reflected_apply(None, self.t, h, 0.0))

    def innermost(self, h, s: float) -> np.ndarray:
        """Grid vector of ``D P_s h`` from the analytic kernel derivative."""
        x = self.grid.nodes
        if self.kind == "sticky":
            d = SG.apply_prime(self.theta, s, h, x)
            return np.concatenate([[0.0], d])
        d = SG.reflected_apply_prime(s, h, x)
        return np.concatenate([[d[0]], d])


def build_propagators(theta: float, t: float, n_time_steps: int, space_grid: SpaceGrid | None = None,
                      kind: str = "sticky") -> PropagatorSet:
    grid = space_grid or SpaceGrid.chebyshev(max(20.0, 12.0 * np.sqrt(t)))
    return PropagatorSet(theta, t, n_time_steps, grid, kind)


def chaos_coefficient(props: PropagatorSet, f, times, t: float | None = None) -> float:
    """``P_{s_1} D P_{s_2 - s_1} ... D P_{t - s_n} f (0)``.

    ``s_1`` and the gaps must be multiples of ``props.dt``; ``t - s_n`` may be
    any positive value (or 0 when ``f`` carries ``df``).
    """
    t = props.t if t is None else float(t)
    times = [float(s) for s in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"times must be strictly increasing, got {times}")
    if not times:
        return props.apply_at_zero(f) if t == props.t else float(
            SG.apply(props.theta, t, f, 0.0) if props.kind == "sticky" else SG.reflected_apply(None, t, f, 0.0))
    if times[0] < 0 or times[-1] > t:
        raise ValueError("times must lie in [0, t]")
    tg = props.time_grid
    steps = [tg.index_of(times[0])] + [tg.index_of(b - a) for a, b in zip(times, times[1:])]
    last = t - times[-1]
    if last > 0:
        v = props.innermost(f, last)
    else:
        d = np.asarray(f.df(props.grid.nodes), dtype=float)
        v = np.concatenate([[0.0 if props.kind == "sticky" else d[0]], d])
    for k in reversed(steps[1:]):
        v = props.DP(k) @ v
    return float(props.mu0(steps[0]) @ v)


class ChaosCoefficients:
    """Coefficients on the left-point simplex grid ``s_i = i dt``.

    ``c[1][i]``, ``c[2][i, j]`` (zero unless ``i < j``) and ``c[3][i, j, k]``
    (zero unless ``i < j < k``). With ``U[j] = D P_{t - s_j} h``,
    ``Q[i, l] = mu0(i) D P_l`` and ``R[j, k] = D P_{k - j} U[k]``:

        c1[i] = mu0(i) U[i],  c2[i, j] = Q[i, j-i] U[j],  c3[i, j, k] = Q[i, j-i] R[j, k].
    """

    def __init__(self, props: PropagatorSet, h, n_max: int):
        if not 0 <= n_max <= MAX_ORDER:
            raise ValueError(f"n_max must be in 0..{MAX_ORDER} (cost guard)")
        self.props = props
        self.h = h
        self.n_max = n_max
        K, m1 = props.K, props.grid.m + 1
        self.J0 = props.apply_at_zero(h)
        self.c: dict = {}
        if n_max == 0:
            return
        U = np.stack([props.innermost(h, (K - j) * props.dt) for j in range(K)])
        M0 = np.stack([props.mu0(i) for i in range(K)])
        self.c[1] = np.einsum("ia,ia->i", M0, U)
        if n_max == 1:
            return
        Q = np.zeros((K, K, m1))  # Q[i, l]
        for lag in range(1, K):
            Q[:, lag] = M0 @ props.DP(lag)
        c2 = np.zeros((K, K))
        i = np.arange(K)
        for lag in range(1, K):
            ii = i[:K - lag]
            c2[ii, ii + lag] = np.einsum("ia,ia->i", Q[ii, lag], U[ii + lag])
        self.c[2] = c2
        if n_max == 2:
            return
        R = np.zeros((K, K, m1))  # R[j, k]
        for lag in range(1, K):
            jj = i[:K - lag]
            R[jj, jj + lag] = U[jj + lag] @ props.DP(lag).T
        c3 = np.zeros((K, K, K))
        for j in range(1, K - 1):
            ii = np.arange(j)
            c3[:j, j, j + 1:] = Q[ii, j - ii] @ R[j, j + 1:].T
        self.c[3] = c3

    def terms(self, dW) -> list[np.ndarray]:
        """``[J^1, ..., J^n_max]`` for increments ``dW`` of shape ``(n_paths, K)``."""
        dW = np.atleast_2d(np.asarray(dW, dtype=float))
        if dW.shape[1] != self.props.K:
            raise ValueError(f"increments have {dW.shape[1]} steps, propagators {self.props.K}")
        out = []
        if self.n_max >= 1:
            out.append(dW @ self.c[1])
        if self.n_max >= 2:
            out.append(np.sum((dW @ self.c[2]) * dW, axis=1))
        if self.n_max >= 3:
            K = self.props.K
            flat = self.c[3].reshape(K, K * K)
            J3 = np.empty(len(dW))
            for lo in range(0, len(dW), 64):
                blk = dW[lo:lo + 64]
                T = (blk @ flat).reshape(len(blk), K, K)
                J3[lo:lo + 64] = np.einsum("pjk,pj,pk->p", T, blk, blk)
            out.append(J3)
        return out


def coefficients(props: PropagatorSet, h, n_max: int) -> ChaosCoefficients:
    """Memoized on ``(props, h)``: lower orders reuse a higher-order build."""
    for key, (hh, co) in props._coefficients.items():
        if hh is h and co.n_max >= n_max:
            return co
    co = ChaosCoefficients(props, h, n_max)
    props._coefficients[id(h)] = (h, co)
    return co


@dataclass(frozen=True, eq=False)
class ChaosResult:
    """Per-path expansion terms; ``truncation == J0 + J[0] + ... + J[n_max - 1]``."""

    J0: float
    J: tuple
    truncation: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        if not np.array_equal(self.truncation, _truncate(self.J0, self.J, len(self.truncation))):
            raise ValueError("truncation must equal J0 + sum of the terms")

    @property
    def n_max(self) -> int:
        return len(self.J)

    def partial(self, n: int) -> np.ndarray:
        return _truncate(self.J0, self.J[:n], len(self.truncation))


def _truncate(J0, J, n_paths):
    out = np.full(n_paths, J0)
    for term in J:
        out = out + term
    return out


def _as_paths(paths):
    return [paths] if isinstance(paths, BrownianPath) else list(paths)


def _increments(paths, props: PropagatorSet, t: float):
    if abs(t - props.t) > 1e-12 * max(1.0, t):
        raise ValueError(f"t = {t} differs from the propagator horizon {props.t}")
    dW = []
    for p in paths:
        g = p.grid
        if g.n_steps != props.K or abs(g.dt - props.dt) > 1e-12 * props.dt:
            raise ValueError("path grid does not match the propagator time step")
        dW.append(p.increments)
    return np.array(dW)


def reference_value(path: BrownianPath, f, theta: float, t: float) -> float:
    """``G_f(W+_t)`` with ``W+_t = W_t - min_{s<=t} W_s`` on the path grid."""
    n = path.grid.index_of(t)
    W = path.values[:n + 1]
    return float(g_transform(f, theta, np.array([W[-1] - np.min(W)]))[0])


def _references(paths, f, theta, t):
    n = paths[0].grid.index_of(t)
    wp = np.array([p.values[n] - np.min(p.values[:n + 1]) for p in paths])
    return GTransform(f, theta, float(np.max(wp, initial=0.0)))(wp)


def _expanded(props: PropagatorSet, f):
    """``f`` itself for the sticky set, ``G_f`` (built once per ``f``) for the reflected one."""
    if props.kind == "sticky":
        return f
    for ff, gt in props._gtransforms:
        if ff is f:
            return gt
    gt = GTransform(f, props.theta, props.grid.x_max + 20.0 * np.sqrt(props.t))
    props._gtransforms.append((f, gt))
    return gt


def iterated_ito_sum(paths, props: PropagatorSet, f, t: float, n_max: int) -> ChaosResult:
    """Left-point simplex sums ``sum_{i_1 < ... < i_n} c(s_i) dW_{i_1} ... dW_{i_n}``.

    ``paths`` is one :class:`BrownianPath` or a sequence of them on the
    propagator time grid; per-path values are returned in that order.
    """
    if not 0 <= n_max <= MAX_ORDER:
        raise ValueError(f"n_max must be in 0..{MAX_ORDER} (cost guard)")
    paths = _as_paths(paths)
    dW = _increments(paths, props, t)
    co = coefficients(props, _expanded(props, f), n_max)
    J = tuple(co.terms(dW)[:n_max])
    ref = _references(paths, f, props.theta, t)
    return ChaosResult(co.J0, J, _truncate(co.J0, J, len(paths)), ref)


@dataclass(frozen=True)
class PplusComparison:
    order0: float
    orders: tuple  # max over paths of |J^n - J^{n+}|, n = 1..n_max


def pplus_expansion_check(paths, f, theta: float, t: float, n_max: int,
                          props: PropagatorSet | None = None,
                          props_plus: PropagatorSet | None = None) -> PplusComparison:
    """Compare the sticky expansion of ``f`` with the reflected expansion of ``G_f``."""
    paths = _as_paths(paths)
    K = paths[0].grid.n_steps
    props = props or build_propagators(theta, t, K)
    props_plus = props_plus or build_propagators(theta, t, K, props.grid, kind="reflected")
    a = iterated_ito_sum(paths, props, f, t, n_max)
    b = iterated_ito_sum(paths, props_plus, f, t, n_max)
    return PplusComparison(abs(a.J0 - b.J0),
                           tuple(float(np.max(np.abs(x - y))) for x, y in zip(a.J, b.J)))


def write_csv(fname, result: ChaosResult) -> None:
    """Columns ``path_id, order, value, reference``; order 0 is ``J0``."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "order", "value", "reference"])
        for p in range(len(result.truncation)):
            ref = repr(float(result.reference[p]))
            w.writerow([p, 0, repr(float(result.J0)), ref])
            for n, term in enumerate(result.J, start=1):
                w.writerow([p, n, repr(float(term[p])), ref])
