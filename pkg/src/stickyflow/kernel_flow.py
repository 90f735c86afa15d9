"""The Wiener flow of kernels solving the sticky flow equation.

Pathwise objects on a :class:`~stickyflow.paths.BrownianPath`:

* ``tau(s, x)``: first grid index ``u >= s`` with ``x + W[u] - W[s] <= 0``;
* ``phi(s, t, x)``: ``x + W[t] - W[s]`` strictly before ``tau``, and
  ``W[t] - min_{s<=v<=t} W[v]`` from ``tau`` on (both are 0 at a crossing in
  continuous time; on the grid this choice keeps ``phi >= 0``);
* ``K_{s,t}(x)``: ``delta_{phi}`` before ``tau``, otherwise the law of
  ``(phi - T)^+`` with ``T ~ Exp(2 theta)``.

Applying the latter to ``f`` gives the G-transform

    G_f(y) = f(0) e^{-lam y} + lam int_0^y f(u) e^{-lam (y-u)} du,   lam = 2 theta,

which is evaluated without ever forming ``e^{lam u}``: see :class:`GTransform`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import paths as _paths
from ._quad import gauss_legendre, panel_nodes

GL_ORDER = 32


def _vec(fn):
    def wrapped(y):
        return np.asarray(fn(np.asarray(y, dtype=float)), dtype=float) * np.ones_like(y, dtype=float)
    return wrapped


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A function on [0, inf) with analytic first and second derivatives.

    Class flags are verified numerically on construction: ``in_DA`` requires
    ``|f''(0+) - 2 theta f'(0+)| <= 1e-8 (1 + |f''(0+)|)`` and ``in_C0``
    requires ``|f(50)| <= 1e-6``.
    """

    __test__ = False  # not a pytest class

    f: Callable
    df: Callable
    d2f: Callable
    name: str = "f"
    theta: float | None = None
    in_C0: bool = False
    in_DA: bool = False
    in_S: bool = False

    def __post_init__(self):
        for attr in ("f", "df", "d2f"):
            object.__setattr__(self, attr, _vec(getattr(self, attr)))
        if self.in_DA:
            if self.theta is None:
                raise ValueError("in_DA needs theta")
            d1, d2 = self.df(0.0), self.d2f(0.0)
            if abs(d2 - 2.0 * self.theta * d1) > 1e-8 * (1.0 + abs(d2)):
                raise ValueError(f"{self.name}: f''(0+) = {d2} != 2 theta f'(0+) = {2 * self.theta * d1}")
        if self.in_C0 or self.in_DA or self.in_S:
            if abs(self.f(50.0)) > 1e-6:
                raise ValueError(f"{self.name} does not vanish at infinity")

    def __call__(self, y):
        return self.f(y)

    def derivative_on_open(self) -> "TestFunction":
        """``f' 1_{(0, inf)}`` (zero at the origin itself)."""
        df, d2f = self.df, self.d2f
        return TestFunction(lambda y: np.where(y > 0, df(y), 0.0),
                            lambda y: np.where(y > 0, d2f(y), 0.0),
                            lambda y: np.full_like(y, np.nan),
                            name=f"{self.name}'1")

    def second_derivative(self) -> "TestFunction":
        d2f = self.d2f
        return TestFunction(d2f, lambda y: np.full_like(y, np.nan), lambda y: np.full_like(y, np.nan),
                            name=f"{self.name}''")


def constant(c: float = 1.0) -> TestFunction:
    return TestFunction(lambda y: np.full_like(y, c), lambda y: np.zeros_like(y),
                        lambda y: np.zeros_like(y), name=f"const{c:g}")


def make_da_function(a: float, b: float, c: float, theta: float) -> TestFunction:
    """``f(y) = (a + b y + c y^2) e^{-y}``, which lies in the generator domain iff
    ``2c - 2b + a = 2 theta (b - a)`` (from ``f(0)=a, f'(0)=b-a, f''(0)=2c-2b+a``)."""
    if abs((2 * c - 2 * b + a) - 2 * theta * (b - a)) > 1e-12:
        raise ValueError(f"(a, b, c) = ({a}, {b}, {c}) violates 2c - 2b + a = 2 theta (b - a)")

    def f(y):
        return (a + b * y + c * y * y) * np.exp(-y)

    def df(y):
        return ((b - a) + (2 * c - b) * y - c * y * y) * np.exp(-y)

    def d2f(y):
        return ((2 * c - 2 * b + a) + (b - 4 * c) * y + c * y * y) * np.exp(-y)

    return TestFunction(f, df, d2f, name=f"da({a:g},{b:g},{c:g})", theta=theta,
                        in_C0=True, in_DA=True, in_S=True)


def da_function(a: float, b: float, theta: float) -> TestFunction:
    """:func:`make_da_function` with ``c`` solved from the boundary condition."""
    return make_da_function(a, b, (2 * theta * (b - a) + 2 * b - a) / 2.0, theta)


def s_function(f, df, d2f, name="s") -> TestFunction:
    return TestFunction(f, df, d2f, name=name, in_C0=True, in_S=True)


class GTransform:
    """``G_f`` and its derivatives for one ``(f, theta)``.

    The half-line is cut into panels of width ``w <= min(1/lam, 1/2)``. The
    panel integrals ``F_k = int_{kw}^{(k+1)w} f(u) e^{-lam((k+1)w - u)} du`` are
    tabulated once (32-point Gauss-Legendre) and accumulated with the stable
    recursion ``S_{m+1} = e^{-lam w} S_m + F_m``. Then

        I(y) = int_0^y f(u) e^{-lam (y-u)} du = e^{-lam (y - mw)} S_m + int_{mw}^y ...,

    with ``m = floor(y / w)``; the remainder is one more 32-point panel.
    ``(G_f)' = lam (f - G_f)`` and ``(G_f)'' = lam f' - lam (G_f)'``.
    """

    def __init__(self, f, theta: float, y_max: float = 1.0, width: float | None = None):
        if not theta > 0:
            raise ValueError("theta must be positive")
        self.f = f
        self.theta = float(theta)
        self.lam = 2.0 * self.theta
        self.width = width if width is not None else min(1.0 / self.lam, 0.5)
        self.f0 = float(np.asarray(f(np.zeros(1))).reshape(-1)[0])
        self._table = np.zeros(1)
        self._extend(y_max)

    def _extend(self, y_max):
        n = int(np.floor(y_max / self.width)) + 1
        if n < len(self._table):
            return
        w, lam = self.width, self.lam
        nodes, weights = panel_nodes(0.0, n * w, n, GL_ORDER)
        nodes = nodes.reshape(n, GL_ORDER)
        weights = weights.reshape(n, GL_ORDER)
        right = (np.arange(n) + 1.0)[:, None] * w
        F = np.sum(np.asarray(self.f(nodes), dtype=float) * np.exp(-lam * (right - nodes)) * weights, axis=1)
        decay = np.exp(-lam * w)
        S = np.empty(n + 1)
        S[0] = 0.0
        for k in range(n):
            S[k + 1] = decay * S[k] + F[k]
        self._table = S

    def integral(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise ValueError("G_f is defined for y >= 0")
        if y.size == 0:
            return y.copy()
        self._extend(float(np.max(y)))
        w, lam = self.width, self.lam
        m = np.floor(y / w)
        left = m * w
        x, wt = gauss_legendre(GL_ORDER)
        h = (y - left)[..., None]
        u = left[..., None] + h * x
        rem = np.sum(np.asarray(self.f(u), dtype=float) * np.exp(-lam * (y[..., None] - u)) * wt, axis=-1) * h[..., 0]
        return np.exp(-lam * (y - left)) * self._table[m.astype(int)] + rem

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.f0 * np.exp(-self.lam * y) + self.lam * self.integral(y)

    def prime(self, y):
        y = np.asarray(y, dtype=float)
        return self.lam * (np.asarray(self.f(y), dtype=float) - self(y))

    def second(self, df, y):
        y = np.asarray(y, dtype=float)
        return self.lam * np.asarray(df(y), dtype=float) - self.lam * self.prime(y)


def g_transform(f, theta, y):
    y = np.asarray(y, dtype=float)
    out = GTransform(f, theta, float(np.max(y, initial=0.0)))(y)
    return out if out.ndim else float(out)


def g_transform_prime(f, theta, y):
    y = np.asarray(y, dtype=float)
    out = GTransform(f, theta, float(np.max(y, initial=0.0))).prime(y)
    return out if out.ndim else float(out)


def g_transform_second(f: TestFunction, theta, y):
    y = np.asarray(y, dtype=float)
    out = GTransform(f, theta, float(np.max(y, initial=0.0))).second(f.df, y)
    return out if out.ndim else float(out)


def g_intertwine_check(f: TestFunction, theta, y_grid):
    """``(max |G_{f'1} - (G_f)'|, max |G_{f''} - (G_f)''|)`` over ``y_grid``.

    The second identity holds only when ``f''(0) = 2 theta f'(0)``.
    """
    y = np.asarray(y_grid, dtype=float)
    gf = GTransform(f, theta, float(np.max(y)))
    g1 = GTransform(f.derivative_on_open(), theta, float(np.max(y)))
    g2 = GTransform(f.second_derivative(), theta, float(np.max(y)))
    err1 = float(np.max(np.abs(g1(y) - gf.prime(y))))
    err2 = float(np.max(np.abs(g2(y) - gf.second(f.df, y))))
    return err1, err2


# -- the flow of maps ----------------------------------------------------------

def tau(path, s_index, x):
    return _paths.hitting_index(path, s_index, x)


def reflected_increment(path, s_index, t_index) -> float:
    """``W[t] - min_{s<=v<=t} W[v]``."""
    seg = path.values[s_index:t_index + 1]
    return float(seg[-1] - np.min(seg))


def _check_order(*idx):
    if any(a > b for a, b in zip(idx, idx[1:])):
        raise ValueError(f"indices must be nondecreasing, got {idx}")


def _before_hit(path, s_index, t_index, x) -> bool:
    """True when ``t`` is strictly before the first hit of 0 (or ``t == s``)."""
    if t_index == s_index:
        return True
    seg = x + (path.values[s_index:t_index + 1] - path.values[s_index])
    return bool(np.all(seg > 0.0))


def phi(path, s_index, t_index, x) -> float:
    _check_order(s_index, t_index)
    if x < 0:
        raise ValueError("x must be nonnegative")
    if _before_hit(path, s_index, t_index, x):
        return float(x + (path.values[t_index] - path.values[s_index]))
    return reflected_increment(path, s_index, t_index)


@dataclass(frozen=True)
class KernelMeasure:
    """Either ``delta_z`` (``kind='dirac'``) or the law of ``(z - T)^+`` with
    ``T ~ Exp(2 theta)`` (``kind='sticky'``): atom ``e^{-2 theta z}`` at 0 plus
    density ``2 theta e^{-2 theta (z - y)}`` on ``(0, z)``."""

    kind: str
    z: float
    theta: float = field(default=1.0)

    def __post_init__(self):
        if self.kind not in ("dirac", "sticky"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.z < 0:
            raise ValueError("z must be nonnegative")

    @property
    def atom(self) -> float:
        if self.kind == "dirac":
            return 1.0 if self.z == 0 else 0.0
        return float(np.exp(-2.0 * self.theta * self.z))

    def density(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "dirac":
            return np.zeros_like(y)
        lam = 2.0 * self.theta
        return np.where((y > 0) & (y < self.z), lam * np.exp(-lam * (self.z - y)), 0.0)


def kernel_measure(path, s_index, t_index, x, theta) -> KernelMeasure:
    _check_order(s_index, t_index)
    if _before_hit(path, s_index, t_index, x):
        return KernelMeasure("dirac", float(x + (path.values[t_index] - path.values[s_index])), theta)
    return KernelMeasure("sticky", reflected_increment(path, s_index, t_index), theta)


def kernel_apply(K: KernelMeasure, f) -> float:
    if K.kind == "dirac" or K.z == 0.0:
        return float(np.asarray(f(np.array([K.z]))).reshape(-1)[0])
    return float(GTransform(f, K.theta, K.z)(np.array([K.z]))[0])


def kernel_sample(K: KernelMeasure, seed, size=None):
    """Draws from ``K`` (``dirac`` returns ``z``; ``sticky`` returns ``(z - T)^+``)."""
    if K.kind == "dirac":
        return K.z if size is None else np.full(size, K.z)
    T = _paths.rng_for(seed, _paths.EXPONENTIAL).exponential(1.0 / (2.0 * K.theta), size=size)
    return np.maximum(K.z - T, 0.0)


def kernel_compose(path, s_index, t_index, u_index, x, theta, f):
    """``(K_{s,u} f(x), int K_{t,u} f(y) K_{s,t}(x, dy))``.

    The outer integral uses the atom of ``K_{s,t}(x)`` and composite
    Gauss-Legendre on its density, split where ``y -> K_{t,u} f(y)`` jumps
    (at ``y = W[t] - min_{t<=v<=u} W[v]``, the largest start that reaches 0).
    """
    _check_order(s_index, t_index, u_index)
    lhs = kernel_apply(kernel_measure(path, s_index, u_index, x, theta), f)
    outer = kernel_measure(path, s_index, t_index, x, theta)

    cache = {}

    def inner(y):
        out = np.empty(len(y))
        for i, yi in enumerate(y):
            K = kernel_measure(path, t_index, u_index, float(yi), theta)
            key = (K.kind, K.z)
            if key not in cache:
                cache[key] = kernel_apply(K, f)
            out[i] = cache[key]
        return out

    if outer.kind == "dirac" or outer.z == 0.0:
        return lhs, float(inner(np.array([outer.z]))[0])
    z, lam = outer.z, 2.0 * theta
    seg = path.values[t_index:u_index + 1]
    jump = float(seg[0] - np.min(seg))
    rhs = outer.atom * float(inner(np.zeros(1))[0])
    for a, b in ((0.0, min(jump, z)), (min(jump, z), z)):
        if b > a:
            n = max(1, int(np.ceil((b - a) * max(lam, 1.0) * 2)))
            y, w = panel_nodes(a, b, n, GL_ORDER)
            rhs += float(np.dot(inner(y) * outer.density(y), w))
    return lhs, rhs


def kernel_values(path, t_index, x, theta, gt: GTransform, g) -> np.ndarray:
    """``K_{0,u} g(x)`` for ``u = 0..t_index`` (``gt`` is the G-transform of ``g``)."""
    W = path.values[:t_index + 1]
    running_min = np.minimum.accumulate(W)
    moved = x + W
    if x > 0:
        hit = np.minimum.accumulate(moved) <= 0.0
    else:
        hit = np.ones(len(W), dtype=bool)
        hit[0] = False
    out = np.empty(len(W))
    out[~hit] = g(moved[~hit])
    if np.any(hit):
        out[hit] = gt(W[hit] - running_min[hit])
    return out


def sde_residual(path, x, theta, f: TestFunction, t_index) -> float:
    """Left-point residual of the flow equation for one path:

        K_{0,t} f(x) - f(x) - sum_i K_{0,t_i}(f' 1_{(0,inf)})(x) dW_i - 1/2 sum_i K_{0,t_i} f''(x) dt.
    """
    if not f.in_DA:
        raise ValueError("the flow equation is stated for f in the generator domain")
    if t_index == 0:
        return 0.0
    W = path.values[:t_index + 1]
    y_max = float(np.max(W - np.min(W))) + 1.0
    fp = f.derivative_on_open()
    fpp = f.second_derivative()
    k_f = kernel_values(path, t_index, x, theta, GTransform(f, theta, y_max), f)
    k_fp = kernel_values(path, t_index, x, theta, GTransform(fp, theta, y_max), fp)
    k_fpp = kernel_values(path, t_index, x, theta, GTransform(fpp, theta, y_max), fpp)
    dW = np.diff(W)
    ito = np.dot(k_fp[:-1], dW)
    drift = 0.5 * path.grid.dt * np.sum(k_fpp[:-1])
    return float(k_f[-1] - k_f[0] - ito - drift)
