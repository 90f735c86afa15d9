"""Transition semigroup of sticky Brownian motion on [0, inf).

For ``t > 0`` the kernel is

    P_t(x, dy) = [p_t(y - x) - p_t(x + y) + 2 g_t(x + y)] dy + g_t(x) / theta * delta_0(dy)

with ``p_t`` the centred Gaussian density of variance ``t`` and

    g_t(x) = theta * exp(2 theta x + 2 theta^2 t) * erfc(x / sqrt(2t) + theta sqrt(2t)).

The exponential factor overflows long before ``erfc`` underflows, so every
evaluation goes through the scaled form ``theta * erfcx(z) * exp(-x^2 / 2t)``
with ``z = x / sqrt(2t) + theta sqrt(2t)``, using
``z^2 - x^2 / 2t = 2 theta x + 2 theta^2 t``.

Derivatives are analytic. Writing ``p = p_t(x)``,

    g'  = 2 theta (g - p)
    g'' = 4 theta^2 (g - p) + 2 theta (x / t) p

which satisfies ``g'' = 2 theta g' + 2 theta x / sqrt(2 pi t^3) exp(-x^2 / 2t)``.

Integrals against a test function for the row ``x`` run over
``[max(0, x - 12 sqrt(t)), x + 12 sqrt(t)]``: outside it every kernel term is
below ``exp(-72) / sqrt(t)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx, ndtr

from ._quad import panel_nodes

_SQRT2PI = np.sqrt(2.0 * np.pi)
TRUNCATION_WIDTHS = 12.0


def _check_t(t):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")


def gaussian(t, u):
    """Centred normal density with variance ``t``."""
    u = np.asarray(u, dtype=float)
    return np.exp(-u * u / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def gaussian_prime(t, u):
    u = np.asarray(u, dtype=float)
    return -u / t * gaussian(t, u)


def gaussian_second(t, u):
    u = np.asarray(u, dtype=float)
    return (u * u / (t * t) - 1.0 / t) * gaussian(t, u)


def g_fn(theta, t, x):
    """``g_t(x)`` in overflow-safe scaled form."""
    _check_t(t)
    x = np.asarray(x, dtype=float)
    s = np.sqrt(2.0 * t)
    z = x / s + theta * s
    return theta * erfcx(z) * np.exp(-x * x / (2.0 * t))


def g_prime(theta, t, x):
    return 2.0 * theta * (g_fn(theta, t, x) - gaussian(t, x))


def g_second(theta, t, x):
    x = np.asarray(x, dtype=float)
    p = gaussian(t, x)
    return 4.0 * theta**2 * (g_fn(theta, t, x) - p) + 2.0 * theta * (x / t) * p


def g_ode_residual(theta, t, x):
    """``g'' - 2 theta g' - 2 theta x / sqrt(2 pi t^3) exp(-x^2/2t)``."""
    x = np.asarray(x, dtype=float)
    forcing = 2.0 * theta * x / np.sqrt(2.0 * np.pi * t**3) * np.exp(-x * x / (2.0 * t))
    return g_second(theta, t, x) - 2.0 * theta * g_prime(theta, t, x) - forcing


def _pieces(theta, t, x, y):
    """``p_t(y - x)``, ``p_t(x + y)`` and ``g_t(x + y)`` sharing one exponential."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u, v = y - x, x + y
    c = 1.0 / np.sqrt(2.0 * np.pi * t)
    ev = np.exp(-v * v / (2.0 * t))
    s = np.sqrt(2.0 * t)
    g = theta * erfcx(v / s + theta * s) * ev
    return u, v, c * np.exp(-u * u / (2.0 * t)), c * ev, g


def density(theta, t, x, y):
    """Absolutely continuous part of ``P_t(x, dy)`` for ``y > 0``."""
    _, _, p1, p2, g = _pieces(theta, t, x, y)
    return p1 - p2 + 2.0 * g


def density_dx(theta, t, x, y):
    """``d/dx`` of :func:`density`."""
    u, v, p1, p2, g = _pieces(theta, t, x, y)
    return (u * p1 + v * p2) / t + 4.0 * theta * (g - p2)


def density_dxx(theta, t, x, y):
    u, v, p1, p2, g = _pieces(theta, t, x, y)
    return ((u * u / t - 1.0) * p1 - (v * v / t - 1.0) * p2) / t \
        + 2.0 * (4.0 * theta**2 * (g - p2) + 2.0 * theta * (v / t) * p2)


def atom_mass(theta, t, x):
    """Mass ``g_t(x) / theta`` that ``P_t(x, .)`` puts at 0."""
    return g_fn(theta, t, x) / theta


def atom_mass_dx(theta, t, x):
    return g_prime(theta, t, x) / theta


def atom_mass_dxx(theta, t, x):
    return g_second(theta, t, x) / theta


def tail_mass(theta, t, x, a):
    """``int_a^inf density(x, y) dy`` in closed form."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(t)
    return (ndtr((x - a) / s) - ndtr(-(x + a) / s)
            + erfc((x + a) / np.sqrt(2.0 * t)) - g_fn(theta, t, x + a) / theta)


def tail_mass_dx(theta, t, x, a):
    x = np.asarray(x, dtype=float)
    return gaussian(t, a - x) + gaussian(t, a + x) - 2.0 * g_fn(theta, t, x + a)


def positive_part_cdf(theta, t, y):
    """``int_0^y 2 g_t(u) du`` in closed form (the law of X_t on (0, y] from 0)."""
    y = np.asarray(y, dtype=float)
    # 2 g = 2 p + g' / theta
    return (g_fn(theta, t, y) - g_fn(theta, t, 0.0)) / theta + 2.0 * ndtr(y / np.sqrt(t)) - 1.0


# reflected Brownian motion: images without an atom

def reflected_density(t, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return gaussian(t, y - x) + gaussian(t, x + y)


def reflected_density_dx(t, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return -gaussian_prime(t, y - x) + gaussian_prime(t, x + y)


def reflected_tail_mass(t, x, a):
    x = np.asarray(x, dtype=float)
    s = np.sqrt(t)
    return ndtr((x - a) / s) + ndtr(-(x + a) / s)


def reflected_tail_mass_dx(t, x, a):
    x = np.asarray(x, dtype=float)
    return gaussian(t, a - x) - gaussian(t, a + x)


def _value_at_zero(f) -> float:
    return float(np.asarray(f(np.zeros(1)), dtype=float).reshape(-1)[0])


def _integrate_rows(kernel, f, x, reach, width, tol, chunk=256, max_doublings=6):
    """``int_0^inf kernel(x_i, y) f(y) dy`` for each ``x_i``, adaptively.

    Row ``i`` is integrated over ``[max(0, x_i - reach), x_i + reach]``; both
    images of the kernel are below ``exp(-72)`` outside that window when
    ``reach = 12 sqrt(t)``. When the windows overlap heavily all rows share
    one window instead. ``f`` is always called on a flat array.
    """
    x = np.asarray(x, dtype=float)
    lo = np.maximum(x - reach, 0.0)
    span = x + reach - lo
    if len(x) and float(np.max(x + reach) - np.min(lo)) <= 8.0 * reach:
        # windows overlap heavily: one shared set of nodes (f is called once per pass)
        lo = np.full_like(x, np.min(lo))
        span = np.max(x + reach) - lo
    n = max(1, int(np.ceil(float(np.max(span, initial=reach)) / width)))

    same = len(x) > 0 and np.all(lo == lo[0]) and np.all(span == span[0])

    def once(n_panels):
        u, w = panel_nodes(0.0, 1.0, n_panels)
        shared = np.asarray(f(lo[0] + span[0] * u), dtype=float) if same else None
        out = np.empty(len(x))
        for i in range(0, len(x), chunk):
            xs, ls, sp = x[i:i + chunk, None], lo[i:i + chunk, None], span[i:i + chunk, None]
            y = ls + sp * u[None, :]
            if shared is None:
                fy = np.asarray(f(y.ravel()), dtype=float).reshape(y.shape)
            else:
                fy = shared[None, :]
            out[i:i + chunk] = np.sum(kernel(xs, y) * fy * (sp * w[None, :]), axis=1)
        return out

    prev = once(n)
    for _ in range(max_doublings):
        n *= 2
        cur = once(n)
        if np.max(np.abs(cur - prev), initial=0.0) < tol:
            return cur
        prev = cur
    return prev


@dataclass(frozen=True)
class SemigroupParams:
    theta: float
    t: float

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        _check_t(self.t)


@dataclass(frozen=True)
class TransitionKernel:
    """``P_t(x, dy)`` for fixed ``(theta, t)``.

    ``apply``, ``apply_prime`` and ``apply_second`` return ``P_t f``, its first
    and second ``x``-derivatives at the points ``x`` (scalar or array).
    """

    params: SemigroupParams
    tol: float = 1e-10

    @property
    def theta(self):
        return self.params.theta

    @property
    def t(self):
        return self.params.t

    def density(self, x, y):
        return density(self.theta, self.t, x, y)

    def atom(self, x):
        return atom_mass(self.theta, self.t, x)

    def _reach(self):
        return TRUNCATION_WIDTHS * np.sqrt(self.t)

    def _width(self):
        return min(0.5, 0.5 * np.sqrt(self.t), 0.5 / self.theta)

    def _apply(self, f, x, kern, atom_fn, drop_atom=False):
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        th, t = self.theta, self.t
        out = _integrate_rows(lambda a, b: kern(th, t, a, b), f, xa, self._reach(), self._width(), self.tol)
        if not drop_atom:
            out = out + atom_fn(th, t, xa) * _value_at_zero(f)
        return out if np.ndim(x) else float(out[0])

    def apply(self, f, x, drop_atom: bool = False):
        return self._apply(f, x, density, atom_mass, drop_atom)

    def apply_prime(self, f, x):
        return self._apply(f, x, density_dx, atom_mass_dx)

    def apply_second(self, f, x):
        return self._apply(f, x, density_dxx, atom_mass_dxx)

    def total_mass(self, x):
        """Atom plus quadrature integral of the density."""
        return self.apply(lambda y: np.ones_like(y), x)

    def generator_apply(self, f, x):
        """``D(P_t f) = 1_{(0,inf)} (P_t f)'``."""
        xa = np.asarray(x, dtype=float)
        return np.where(xa > 0, self.apply_prime(f, xa), 0.0)


def kernel(theta: float, t: float) -> TransitionKernel:
    return TransitionKernel(SemigroupParams(theta, t))


def apply(theta, t, f, x, drop_atom=False):
    """``P_t f(x)``; ``P_0`` is the identity."""
    if t == 0:
        return f(np.asarray(x, dtype=float))
    return kernel(theta, t).apply(f, x, drop_atom)


def apply_prime(theta, t, f, x):
    return kernel(theta, t).apply_prime(f, x)


def boundary_defect(theta, t, f):
    """``((P_t f)''(0+) - 2 theta (P_t f)'(0+), (P_t f)''(0+))``."""
    k = kernel(theta, t)
    d1 = k.apply_prime(f, 0.0)
    d2 = k.apply_second(f, 0.0)
    return d2 - 2.0 * theta * d1, d2


def reflected_apply(theta_unused, t, f, x, tol=1e-10):
    """``P+_t f(x)`` for reflected Brownian motion (``theta`` is ignored)."""
    _check_t(t)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    out = _integrate_rows(lambda a, b: reflected_density(t, a, b), f, xa, TRUNCATION_WIDTHS * np.sqrt(t),
                          min(0.5, 0.5 * np.sqrt(t)), tol)
    return out if np.ndim(x) else float(out[0])


def reflected_apply_prime(t, f, x, tol=1e-10):
    """``(P+_t f)'(x)``."""
    _check_t(t)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    out = _integrate_rows(lambda a, b: reflected_density_dx(t, a, b), f, xa, TRUNCATION_WIDTHS * np.sqrt(t),
                          min(0.5, 0.5 * np.sqrt(t)), tol)
    return out if np.ndim(x) else float(out[0])


def chapman_check(theta, s, t, f, x_grid, drop_atom: bool = False) -> float:
    """``max_x |P_{s+t} f(x) - P_s(P_t f)(x)|``.

    With ``drop_atom`` the composition uses both kernels without their atoms
    (an ablation that must fail).
    """
    x = np.asarray(x_grid, dtype=float)
    if s == 0 or t == 0:
        return 0.0
    direct = apply(theta, s + t, f, x)
    inner = kernel(theta, t)

    def h(y):
        return inner.apply(f, y, drop_atom)

    composed = kernel(theta, s).apply(h, x, drop_atom)
    return float(np.max(np.abs(direct - composed)))


def tabulate_csv(fname, theta, t, xs, ys) -> None:
    """Write ``x, y, density, atom`` rows for plotting."""
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "density", "atom"])
        for x in xs:
            a = float(atom_mass(theta, t, x))
            for y in ys:
                w.writerow([repr(float(x)), repr(float(y)), repr(float(density(theta, t, x, y))), repr(a)])
