"""Abstract dispersive-semigroup contract and its concrete instances.

Every solver in this package is written against the two decay inequalities

    ||apply(t, u)||_Y        <= e^{-sigma t} ||u||_Y
    ||apply_after_B(t, x)||_Y <= alpha (t^{-theta} + 1) e^{-beta t} ||x||_X

the first for the semigroup itself, the second for the semigroup composed
with the connection operator B.  Instances provide states, norms, and the
two maps; the solvers never look inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import (
    HyperbolicModel,
    RadialField,
    RadialGrid,
    build_radial_grid,
    gaussian_bump,
    lp_norm,
)


@dataclass(frozen=True)
class SemigroupConstants:
    """Decay constants (sigma, beta, alpha, theta) of the two inequalities."""

    sigma: float
    beta: float
    alpha: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.sigma <= self.beta):
            raise ValueError(f"need 0 < sigma <= beta, got sigma={self.sigma}, beta={self.beta}")
        if not (0.0 <= self.theta < 1.0):
            raise ValueError(f"need 0 <= theta < 1, got {self.theta}")
        if self.alpha <= 0.0:
            raise ValueError(f"need alpha > 0, got {self.alpha}")

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "beta": self.beta, "alpha": self.alpha, "theta": self.theta}


def gamma_pq(p: float, q: float, d: int, delta_d: float) -> float:
    """Exponent increment (delta_d/2) [(1/p - 1/q) + (8/q)(1 - 1/p)].

    ``delta_d`` is a dimension-dependent positive constant that is free in
    this framework; callers supply it (default 1 throughout the package).
    """
    if delta_d <= 0.0:
        raise ValueError("delta_d must be positive")
    if p > q:
        raise ValueError(f"need p <= q, got p={p}, q={q}")
    if p < 1.0:
        raise ValueError("need p >= 1")
    ip = 0.0 if math.isinf(p) else 1.0 / p
    iq = 0.0 if math.isinf(q) else 1.0 / q
    return (delta_d / 2.0) * ((ip - iq) + 8.0 * iq * (1.0 - ip))


def dispersion_h(t: float, C: float, d: int) -> float:
    """Short-time dispersion factor h_d(t) = C max(t^{-d/2}, 1)."""
    if t <= 0.0:
        raise ValueError("need t > 0")
    return C * max(t ** (-d / 2.0), 1.0)


class DispersiveSemigroup:
    """Capability contract: decay constants plus the two evolution maps.

    States are opaque to the solvers; they only need vector-space operations
    (+, -, scalar *), which floats, numpy arrays and RadialField all provide.
    """

    constants: SemigroupConstants
    name: str = "abstract"

    def apply(self, t: float, u):
        raise NotImplementedError

    def apply_after_B(self, t: float, x):
        raise NotImplementedError

    def norm_y(self, u) -> float:
        raise NotImplementedError

    def norm_x(self, x) -> float:
        raise NotImplementedError

    def random_y(self, rng: np.random.Generator):
        raise NotImplementedError

    def random_x(self, rng: np.random.Generator):
        return self.random_y(rng)

    def zero_y(self):
        return 0.0 * self.random_y(np.random.default_rng(0))

    def describe(self) -> dict:
        return {"type": self.name, "constants": self.constants.to_dict()}


class MatrixSemigroup(DispersiveSemigroup):
    """Finite-dimensional oracle: diagonal generator, exact exponentials.

    apply(t, u) = e^{-t diag(spectrum)} u and B is a fixed matrix, so both
    contract inequalities hold with sigma = beta = min(spectrum), theta = 0
    and alpha = max(1, ||B||_2).
    """

    name = "matrix"

    def __init__(self, spectrum, b_matrix=None):
        self.spectrum = np.asarray(spectrum, dtype=float)
        if self.spectrum.ndim != 1 or np.any(self.spectrum <= 0.0):
            raise ValueError("spectrum must be a 1-D array of positive rates")
        n = self.spectrum.size
        self.B = np.eye(n) if b_matrix is None else np.asarray(b_matrix, dtype=float)
        if self.B.shape[0] != n:
            raise ValueError("B must map into the state space of the generator")
        self.b_is_identity = b_matrix is None or (
            self.B.shape[0] == self.B.shape[1] and np.allclose(self.B, np.eye(n))
        )
        lam = float(self.spectrum.min())
        alpha = 1.0 if self.b_is_identity else max(1.0, float(np.linalg.norm(self.B, 2)))
        self.constants = SemigroupConstants(sigma=lam, beta=lam, alpha=alpha, theta=0.0)

    @property
    def dim(self) -> int:
        return self.spectrum.size

    def apply(self, t, u):
        return np.exp(-t * self.spectrum) * u

    def apply_after_B(self, t, x):
        return np.exp(-t * self.spectrum) * (self.B @ np.atleast_1d(x))

    def norm_y(self, u):
        return float(np.linalg.norm(np.atleast_1d(u)))

    norm_x = norm_y

    def random_y(self, rng):
        return rng.standard_normal(self.dim)

    def random_x(self, rng):
        return rng.standard_normal(self.B.shape[1])

    def zero_y(self):
        return np.zeros(self.dim)

    def generator_rhs(self, t: float, u, forcing_x):
        """du/dt = -diag(spectrum) u + B f, for external ODE oracles."""
        return -self.spectrum * u + self.B @ np.atleast_1d(forcing_x)


class SingularToySemigroup(DispersiveSemigroup):
    """Scalar instance that saturates the smoothing inequality exactly.

    apply(t, u) = e^{-sigma t} u; apply_after_B(t, x) = alpha (t^{-theta}+1)
    e^{-beta t} x.  The saturation makes it a sharp stress test for the
    weakly singular quadrature.
    """

    name = "singular_toy"

    def __init__(self, constants: SemigroupConstants):
        self.constants = constants

    def apply(self, t, u):
        return math.exp(-self.constants.sigma * t) * u

    def apply_after_B(self, t, x):
        c = self.constants
        if t <= 0.0:
            raise ValueError("the smoothing map needs t > 0")
        return c.alpha * (t ** (-c.theta) + 1.0) * math.exp(-c.beta * t) * x

    def norm_y(self, u):
        return abs(float(u))

    norm_x = norm_y

    def random_y(self, rng):
        return float(rng.uniform(-1.0, 1.0))

    def zero_y(self):
        return 0.0


class HyperbolicHeatSemigroup(DispersiveSemigroup):
    """e^{-tA} on radial fields over three-dimensional hyperbolic space.

    B is the identity (X = Y = L^p of the sinh^2 measure), so theta = 0,
    alpha = 1 and sigma = beta = d - 1 = 2, the rate the scalar surrogate
    provably satisfies in every L^p.

    The propagator is evaluated spectrally: sinh-transmutation turns the
    radial flow into the 1-D heat equation on the half line, which a sine
    expansion on [0, rho_max] diagonalizes.  This matches the direct
    Gauss-Weierstrass convolution to ~1e-14 on admissible fields (tested)
    while being orders of magnitude faster inside the fixed-point loops.
    """

    name = "hyperbolic"
    dim = 3

    def __init__(
        self,
        *,
        rho_max: float = 16.0,
        n_nodes: int = 768,
        n_modes: int = 120,
        p: float = 2.0,
        panel_order: int = 12,
    ):
        model = HyperbolicModel(self.dim)
        self.grid: RadialGrid = build_radial_grid(model, rho_max, n_nodes, order=panel_order)
        self.p = p
        self.n_modes = n_modes
        self.constants = SemigroupConstants(sigma=2.0, beta=2.0, alpha=1.0, theta=0.0)
        k = np.arange(1, n_modes + 1)
        freq = k * math.pi / rho_max
        self._eigen = 3.0 + freq**2  # d-1 shift + transmutation e^{-t} + mode rate
        self._phi = np.sin(np.outer(self.grid.nodes, freq))
        self._fwd = (2.0 / rho_max) * (self._phi * self.grid.base_weights[:, None]).T
        self._sinh = np.sinh(self.grid.nodes)

    def apply(self, t, u: RadialField) -> RadialField:
        if t < 0.0:
            raise ValueError("need t >= 0")
        if t == 0.0:
            return u.copy()
        coef = self._fwd @ (self._sinh * u.values)
        out = self._phi @ (np.exp(-t * self._eigen) * coef)
        return RadialField(self.grid, out / self._sinh)

    apply_after_B = apply

    def norm_y(self, u: RadialField) -> float:
        return lp_norm(u, self.p)

    norm_x = norm_y

    def random_y(self, rng) -> RadialField:
        amp = rng.uniform(0.2, 1.0)
        center = rng.uniform(0.0, 2.5)
        width = rng.uniform(0.55, 1.2)
        return gaussian_bump(self.grid, amp, center, width)

    def zero_y(self) -> RadialField:
        return RadialField(self.grid, np.zeros(self.grid.size))

    def bump(self, amplitude=1.0, center=0.0, width=0.7) -> RadialField:
        return gaussian_bump(self.grid, amplitude, center, width)

    def describe(self) -> dict:
        d = super().describe()
        d.update({"rho_max": self.grid.rho_max, "n_nodes": self.grid.size, "n_modes": self.n_modes, "p": self.p})
        return d


@dataclass
class ContractReport:
    """Outcome of randomized verification of the two contract inequalities."""

    instance: str
    trials: int
    violations: int
    worst_rel_violation: float
    min_margin_decay: float
    min_margin_smoothing: float
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def verify_contract(
    S: DispersiveSemigroup,
    trials: int,
    time_range: tuple[float, float] = (0.05, 3.0),
    *,
    rng: np.random.Generator | None = None,
    rel_tol: float = 1e-10,
) -> ContractReport:
    """Test both decay inequalities on random states and times.

    Any relative violation beyond ``rel_tol`` counts as a failure; the
    report carries the worst violation and the smallest margins seen, so a
    mis-declared constant surfaces as a violation rather than an exception.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    rng = rng or np.random.default_rng(0)
    t0, t1 = time_range
    violations = 0
    worst = 0.0
    margin_decay = math.inf
    margin_smooth = math.inf
    c = S.constants
    for _ in range(trials):
        t = float(rng.uniform(t0, t1))
        u = S.random_y(rng)
        nu = S.norm_y(u)
        if nu > 0.0:
            lhs = S.norm_y(S.apply(t, u))
            bound = math.exp(-c.sigma * t) * nu
            rel = (lhs - bound) / bound
            worst = max(worst, rel)
            margin_decay = min(margin_decay, -rel)
            if rel > rel_tol:
                violations += 1
        x = S.random_x(rng)
        nx = S.norm_x(x)
        if nx > 0.0:
            lhs = S.norm_y(S.apply_after_B(t, x))
            bound = c.alpha * (t ** (-c.theta) + 1.0) * math.exp(-c.beta * t) * nx
            rel = (lhs - bound) / bound
            worst = max(worst, rel)
            margin_smooth = min(margin_smooth, -rel)
            if rel > rel_tol:
                violations += 1
    return ContractReport(
        instance=S.name,
        trials=trials,
        violations=violations,
        worst_rel_violation=worst,
        min_margin_decay=margin_decay,
        min_margin_smoothing=margin_smooth,
    )


def instance_from_config(cfg: dict) -> DispersiveSemigroup:
    """Build a semigroup instance from its JSON configuration dict."""
    kind = cfg.get("type")
    if kind == "matrix":
        return MatrixSemigroup(cfg["spectrum"], cfg.get("b_matrix"))
    if kind == "singular_toy":
        return SingularToySemigroup(SemigroupConstants(**cfg["constants"]))
    if kind == "hyperbolic":
        return HyperbolicHeatSemigroup(
            rho_max=cfg.get("rho_max", 16.0),
            n_nodes=cfg.get("nodes", 768),
            n_modes=cfg.get("modes", 120),
            p=cfg.get("p", 2.0),
        )
    raise ValueError(f"unknown instance type {kind!r}")
