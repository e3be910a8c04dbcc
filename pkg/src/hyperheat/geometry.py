"""Geodesic-polar geometry of real hyperbolic space.

Radial quadrature grids carry the volume element omega_{d-1} sinh^{d-1}(rho),
so plain weighted sums over grid nodes approximate integrals over the whole
space for radial integrands.  Scalar radial profiles stand in for the
magnitude of vector fields; this is exact for scalar equations and an
upper-bound model for vectorial decay.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._quad import gauss_panels, graded_edges

DEFAULT_PANEL_ORDER = 8
DEFAULT_GRADING = 1.0
CUTOFF_DECAY_TOL = 1e-12


@dataclass(frozen=True)
class HyperbolicModel:
    """Real hyperbolic space of dimension ``dim`` with curvature -1."""

    dim: int

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dimension must be >= 2, got {self.dim}")


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1}."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass
class RadialGrid:
    """Radial quadrature grid for geodesic-polar integration.

    ``weights`` include the measure factor omega_{d-1} sinh^{d-1}(rho), so
    ``sum(weights * f(nodes))`` approximates the integral of the radial
    function f over hyperbolic space.  ``base_weights`` are the plain
    d-rho panel weights, used by solvers that integrate on the half line.
    """

    dim: int
    rho_max: float
    nodes: np.ndarray
    base_weights: np.ndarray
    weights: np.ndarray
    panel_order: int = DEFAULT_PANEL_ORDER
    n_panels: int = 0

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")
        if np.any(np.diff(self.nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))

    def ball_volume(self) -> float:
        return self.integrate(np.ones_like(self.nodes))

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "rhomax": self.rho_max,
            "nodes": self.nodes.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "RadialGrid":
        nodes = np.asarray(data["nodes"], dtype=float)
        weights = np.asarray(data["weights"], dtype=float)
        dim = int(data["dim"])
        base = weights / (sphere_area(dim) * np.sinh(nodes) ** (dim - 1))
        return cls(
            dim=dim,
            rho_max=float(data["rhomax"]),
            nodes=nodes,
            base_weights=base,
            weights=weights,
        )


def build_radial_grid(
    model: HyperbolicModel,
    rho_max: float,
    n: int,
    *,
    order: int = DEFAULT_PANEL_ORDER,
    grading: float = DEFAULT_GRADING,
) -> RadialGrid:
    """Composite Gauss-Legendre grid for the sinh^{d-1} measure on [0, rho_max].

    ``n`` is the requested node count; it is rounded up to a whole number of
    panels of ``order`` nodes each.  With the default uniform panels the rule
    integrates smooth radial functions with the composite Gauss order 2*order,
    which reproduces polynomial-times-measure integrands to ~1e-12 relative
    accuracy at the default resolutions (see tests).

    Parameters
    ----------
    model : HyperbolicModel
    rho_max : float
        Radial truncation.  Fields handed to the solvers must decay below
        1e-12 (relative) at the cutoff.
    n : int
        Requested number of nodes, at least 8.
    order : int
        Gauss order per panel.
    grading : float
        Power-law clustering of panel edges toward rho = 0 (1.0 = uniform).
    """
    if rho_max <= 0.0:
        raise ValueError(f"rho_max must be positive, got {rho_max}")
    if n < 8:
        raise ValueError(f"need at least 8 nodes, got {n}")
    n_panels = max(1, int(math.ceil(n / order)))
    edges = graded_edges(0.0, rho_max, n_panels, grading)
    nodes, base = gauss_panels(edges, order)
    measure = sphere_area(model.dim) * np.sinh(nodes) ** (model.dim - 1)
    return RadialGrid(
        dim=model.dim,
        rho_max=rho_max,
        nodes=nodes,
        base_weights=base,
        weights=base * measure,
        panel_order=order,
        n_panels=n_panels,
    )


@dataclass
class RadialField:
    """Scalar radial profile sampled on a RadialGrid."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.nodes.shape:
            raise ValueError("values must match grid nodes in length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def __add__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialField") -> "RadialField":
        return RadialField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "RadialField":
        return RadialField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "RadialField":
        return RadialField(self.grid, -self.values)

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy())

    def decays_at_cutoff(self, tol: float = CUTOFF_DECAY_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.values))))
        return bool(abs(self.values[-1]) <= tol * scale)

    def to_json_dict(self) -> dict:
        d = self.grid.to_json_dict()
        d["values"] = self.values.tolist()
        return d

    @classmethod
    def from_json_dict(cls, data: dict) -> "RadialField":
        return cls(RadialGrid.from_json_dict(data), np.asarray(data["values"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def lp_norm(u: RadialField, p: float) -> float:
    """L^p norm of a radial field for the sinh^{d-1} measure; p in [1, inf]."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    if math.isinf(p):
        return float(np.max(np.abs(u.values)))
    return float(np.sum(u.grid.weights * np.abs(u.values) ** p) ** (1.0 / p))


def gaussian_bump(
    grid: RadialGrid, amplitude: float = 1.0, center: float = 0.0, width: float = 0.7
) -> RadialField:
    """Smooth even radial bump exp(-(rho -+ c)^2 / 2w^2), symmetrized in rho.

    The symmetrization keeps the profile even at the origin, which is what a
    smooth radial function on hyperbolic space requires.
    """
    rho = grid.nodes
    vals = amplitude * (
        np.exp(-((rho - center) ** 2) / (2.0 * width**2))
        + np.exp(-((rho + center) ** 2) / (2.0 * width**2))
    )
    if center == 0.0:
        vals *= 0.5
    return RadialField(grid, vals)
