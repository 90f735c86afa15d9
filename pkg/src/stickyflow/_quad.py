"""Composite Gauss-Legendre rules shared by the semigroup and G-transform code."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=8)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_nodes(a: float, b: float, n_panels: int, order: int = 32):
    """Flattened nodes and weights of a composite rule on [a, b]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, n_panels + 1)
    h = np.diff(edges)
    nodes = edges[:-1, None] + h[:, None] * x[None, :]
    weights = h[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def integrate(func, a: float, b: float, n_panels: int, order: int = 32) -> float:
    """Fixed composite rule; ``func`` must accept an array."""
    if b <= a:
        return 0.0
    nodes, weights = panel_nodes(a, b, n_panels, order)
    return float(np.dot(func(nodes), weights))


def adaptive_integrate(func, a: float, b: float, max_width: float, tol: float = 1e-10,
                       order: int = 32, max_doublings: int = 8) -> float:
    """Double the panel count until successive estimates differ by less than ``tol``."""
    if b <= a:
        return 0.0
    n = max(1, int(np.ceil((b - a) / max_width)))
    prev = integrate(func, a, b, n, order)
    for _ in range(max_doublings):
        n *= 2
        cur = integrate(func, a, b, n, order)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev
