"""Composite Gauss-Legendre quadrature helpers shared by the solver modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on the panels defined by ``edges``.

    Nodes are strictly interior to each panel, so the returned nodes avoid
    the panel endpoints (in particular 0 for a mesh starting there).
    """
    edges = np.asarray(edges, dtype=float)
    x, w = _leggauss(order)
    a = edges[:-1]
    b = edges[1:]
    half = 0.5 * (b - a)
    nodes = (half[:, None] * x[None, :] + 0.5 * (a + b)[:, None]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_edges(a: float, b: float, n_panels: int, grading: float) -> np.ndarray:
    """Panel edges on [a, b] clustered toward ``a`` with power-law grading."""
    u = np.linspace(0.0, 1.0, n_panels + 1) ** grading
    return a + (b - a) * u


def geometric_edges(length: float, n_panels: int, ratio: float = 3.0) -> np.ndarray:
    """Edges [0, L/r^{n-1}, ..., L/r, L]: geometric refinement toward 0."""
    tail = length * ratio ** (-np.arange(n_panels - 1, -1.0, -1.0))
    return np.concatenate([[0.0], tail])


def singular_integral_nodes(
    delta: float,
    theta: float,
    *,
    order: int = 8,
    n_geo: int = 12,
    split: float = 1.0,
    reg_width: float = 0.5,
) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes/weights on (0, delta) for integrands ~ s^{-theta} * smooth.

    On [0, min(delta, split)] the variable is substituted as y = s^{1-theta}
    so the s^{-theta} factor becomes bounded; geometrically graded panels
    absorb the remaining Hoelder term.  Any remainder [split, delta] is
    covered by uniform panels, where the integrand is smooth.
    """
    if delta <= 0.0:
        return np.zeros(0), np.zeros(0)
    if theta == 0.0:
        n_pan = max(1, int(np.ceil(delta / reg_width)))
        nodes, weights = gauss_panels(np.linspace(0.0, delta, n_pan + 1), order)
        return nodes, weights
    head = min(delta, split)
    y_max = head ** (1.0 - theta)
    y, wy = gauss_panels(geometric_edges(y_max, n_geo), order)
    s = y ** (1.0 / (1.0 - theta))
    jac = y ** (theta / (1.0 - theta)) / (1.0 - theta)
    nodes = [s]
    weights = [wy * jac]
    if delta > split:
        n_pan = max(1, int(np.ceil((delta - split) / reg_width)))
        n2, w2 = gauss_panels(np.linspace(split, delta, n_pan + 1), order)
        nodes.append(n2)
        weights.append(w2)
    return np.concatenate(nodes), np.concatenate(weights)
