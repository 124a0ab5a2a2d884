"""Gauss-Legendre panel rules used by the transforms and symbol evaluators."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, order=8):
    """Nodes and weights of a composite Gauss-Legendre rule on ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x).ravel()
    weights = (half[:, None] * w).ravel()
    return nodes, weights


def graded_edges(k_first, k_last, max_width, ratio=0.05):
    """Panel edges on [0, k_last]: one panel on [0, k_first], then widths
    growing geometrically (relative width ``ratio``) and capped by ``max_width``.
    """
    if k_last <= 0.0:
        return np.array([0.0, 0.0])
    k_first = min(k_first, k_last)
    edges = [0.0, k_first]
    k = k_first
    while k < k_last:
        step = min(max_width, ratio * k)
        k = min(k + step, k_last)
        edges.append(k)
    return np.asarray(edges)


def uniform_edges(a, b, max_width):
    n = max(1, int(np.ceil((b - a) / max_width)))
    return np.linspace(a, b, n + 1)


def bessel_ratio(nu, x):
    """J_nu(x) / x**nu, continuous at x = 0 (value 1 / (2**nu Gamma(nu + 1)))."""
    from scipy.special import gamma, jv

    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-3
    xs = x[small]
    # two-term series is exact to ~1e-13 below the switch point
    c0 = 1.0 / (2.0**nu * gamma(nu + 1.0))
    out[small] = c0 * (1.0 - xs**2 / (4.0 * (nu + 1.0)) + xs**4 / (32.0 * (nu + 1.0) * (nu + 2.0)))
    xl = x[~small]
    out[~small] = jv(nu, xl) / np.abs(xl) ** nu
    return out


def sphere_area(d):
    """Surface area of the unit sphere in R^d (2 for d = 1)."""
    from scipy.special import gamma

    return 2.0 * np.pi ** (d / 2.0) / gamma(d / 2.0)
