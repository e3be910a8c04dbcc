"""Almost periodic, vanishing, and asymptotically almost periodic forcing.

Forcing terms are separable: scalar trigonometric (or decaying) amplitudes
times fixed spatial profiles.  That keeps every norm used by the solvers
computable from the time amplitudes alone and lets the fitting step operate
on trajectories of arbitrary state type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar


def _state_scale(profile, c: float):
    return c * profile if not isinstance(profile, (int, float)) else c * profile


def _default_norm(x) -> float:
    if isinstance(x, (int, float)):
        return abs(float(x))
    return float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))


@dataclass
class Mode:
    """One almost periodic mode: a cos(freq t) * profile + b sin(freq t) * sin_profile.

    ``sin_profile`` defaults to ``profile``; the fitting routine uses the
    separate slot because the cosine and sine responses of an evolution
    equation generally have different spatial shapes.
    """

    freq: float
    a: float
    b: float
    profile: Any = 1.0
    sin_profile: Any = None

    def __post_init__(self):
        if self.freq < 0.0:
            raise ValueError("frequencies must be nonnegative")

    def eval(self, t: float):
        cos_part = _state_scale(self.profile, self.a * math.cos(self.freq * t))
        sp = self.profile if self.sin_profile is None else self.sin_profile
        return cos_part + _state_scale(sp, self.b * math.sin(self.freq * t))

    def amplitude(self, norm_fn: Callable = _default_norm) -> float:
        sp = self.profile if self.sin_profile is None else self.sin_profile
        return math.hypot(abs(self.a) * norm_fn(self.profile), abs(self.b) * norm_fn(sp))


@dataclass
class APPart:
    """Almost periodic part: a finite sum of modes with distinct frequencies."""

    modes: Sequence[Mode] = field(default_factory=list)

    def __post_init__(self):
        freqs = [m.freq for m in self.modes]
        if len(set(freqs)) != len(freqs):
            raise ValueError("mode frequencies must be distinct")

    @property
    def frequencies(self) -> list[float]:
        return [m.freq for m in self.modes]

    def eval(self, t: float):
        if not self.modes:
            raise ValueError("empty almost periodic part has no state type")
        out = self.modes[0].eval(t)
        for m in self.modes[1:]:
            out = out + m.eval(t)
        return out

    def sup_norm_bound(self, norm_fn: Callable = _default_norm) -> float:
        """Triangle upper bound sum_j (|a_j| + |b_j|) ||profile_j||."""
        total = 0.0
        for m in self.modes:
            sp = m.profile if m.sin_profile is None else m.sin_profile
            total += abs(m.a) * norm_fn(m.profile) + abs(m.b) * norm_fn(sp)
        return total

    def sup_norm(self, norm_fn: Callable = _default_norm, *, window: float = 200.0, samples: int = 4096) -> float:
        """Numeric sup of ||h(t)|| over a long window (lower bound of the sup)."""
        ts = np.linspace(0.0, window, samples)
        return max(norm_fn(self.eval(float(t))) for t in ts)


@dataclass
class C0Part:
    """Vanishing part: monotone envelope times a fixed spatial profile.

    ``kind`` is "exp" (c e^{-mu t}) or "rational" (c / (1+t)^m).
    """

    kind: str = "exp"
    c: float = 1.0
    mu: float = 1.0
    m: int = 1
    profile: Any = 1.0

    def __post_init__(self):
        if self.kind not in ("exp", "rational"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.kind == "exp" and self.mu <= 0.0:
            raise ValueError("exponential envelope needs mu > 0")
        if self.kind == "rational" and self.m < 1:
            raise ValueError("rational envelope needs m >= 1")

    def envelope(self, t: float) -> float:
        if self.kind == "exp":
            return self.c * math.exp(-self.mu * t)
        return self.c / (1.0 + t) ** self.m

    def eval(self, t: float):
        return _state_scale(self.profile, self.envelope(t))

    def sup_norm(self, norm_fn: Callable = _default_norm) -> float:
        return abs(self.envelope(0.0)) * norm_fn(self.profile)


@dataclass
class AAPFunction:
    """Asymptotically almost periodic forcing f = h + phi (either part optional)."""

    ap: APPart | None = None
    c0: C0Part | None = None

    def __post_init__(self):
        if self.ap is None and self.c0 is None:
            raise ValueError("at least one of the parts must be present")

    def eval(self, t: float):
        if self.ap is None or not self.ap.modes:
            return self.c0.eval(t)
        out = self.ap.eval(t)
        if self.c0 is not None:
            out = out + self.c0.eval(t)
        return out

    def __call__(self, t: float):
        return self.eval(t)

    def aap_norm(self, norm_fn: Callable = _default_norm, **sup_kwargs) -> float:
        """||h||_sup + ||phi||_sup, measured on the numeric sampling window."""
        total = 0.0
        if self.ap is not None and self.ap.modes:
            total += self.ap.sup_norm(norm_fn, **sup_kwargs)
        if self.c0 is not None:
            total += self.c0.sup_norm(norm_fn)
        return total

    def sup_norm_on(self, t0: float, t1: float, norm_fn: Callable = _default_norm, samples: int = 20001) -> float:
        """Numeric sup of ||f(t)|| over [t0, t1] on a dense grid."""
        ts = np.linspace(t0, t1, samples)
        return max(norm_fn(self.eval(float(t))) for t in ts)


def eval_aap(f: AAPFunction, t: float):
    """Pointwise value f(t) = h(t) + phi(t)."""
    if t < 0.0:
        raise ValueError("forcing is defined for t >= 0")
    return f.eval(t)


# ---------------------------------------------------------------------------
# Almost period search
# ---------------------------------------------------------------------------

@dataclass
class AlmostPeriodResult:
    found: bool
    T: float | None
    defect: float | None
    eps: float
    scanned: tuple[float, float]


def find_almost_period(
    h: APPart,
    eps: float,
    interval: tuple[float, float],
    *,
    norm_fn: Callable = _default_norm,
    window: float = 200.0,
    samples_per_period: int = 48,
    scan_step: float | None = None,
) -> AlmostPeriodResult:
    """Search [a, b] for T with sup_t ||h(t+T) - h(t)|| < eps.

    The defect is measured on a dense grid over [0, window]; a coarse scan
    locates candidate minima and bounded scalar minimization refines the
    best one.  A not-found result only means no T passed at this scan
    resolution.
    """
    a, b = interval
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if not (b > a >= 0.0):
        raise ValueError("degenerate search interval")
    freqs = [m.freq for m in h.modes if m.freq > 0.0]
    max_freq = max(freqs) if freqs else 1.0
    dt = 2.0 * math.pi / (max_freq * samples_per_period)
    ts = np.arange(0.0, window, dt)

    base = [h.eval(float(t)) for t in ts]

    def defect(T: float) -> float:
        shifted = [h.eval(float(t + T)) for t in ts]
        return max(norm_fn(s - u) for s, u in zip(shifted, base))

    if not freqs:
        return AlmostPeriodResult(True, a, defect(a), eps, interval)

    step = scan_step if scan_step is not None else min(0.05, (b - a) / 50.0)
    grid = np.arange(a, b + step, step)
    coarse = np.array([defect(float(T)) for T in grid])
    order = np.argsort(coarse)
    for idx in order[:5]:
        lo = max(a, grid[idx] - step)
        hi = min(b, grid[idx] + step)
        res = minimize_scalar(defect, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
        if res.fun < eps:
            return AlmostPeriodResult(True, float(res.x), float(res.fun), eps, interval)
    best = order[0]
    return AlmostPeriodResult(False, float(grid[best]), float(coarse[best]), eps, interval)


# ---------------------------------------------------------------------------
# Trigonometric fitting of solver output
# ---------------------------------------------------------------------------

def _states_to_matrix(states) -> tuple[np.ndarray, Callable]:
    """Stack states into (n_times, dim) and return a rebuilder for profiles."""
    first = states[0]
    if isinstance(first, (int, float)) or (isinstance(first, np.ndarray) and first.ndim == 0):
        mat = np.asarray([float(s) for s in states])[:, None]
        return mat, lambda v: float(v[0])
    if isinstance(first, np.ndarray):
        return np.stack([np.asarray(s, dtype=float) for s in states]), lambda v: v
    # RadialField-like: has .values and .grid
    grid = first.grid
    mat = np.stack([s.values for s in states])
    return mat, lambda v: type(first)(grid, v)


def fit_ap_residual(
    samples,
    frequencies: Sequence[float],
    tail_start: float,
) -> tuple[APPart, "Trajectory", float]:
    """Least-squares cos/sin fit of a trajectory tail at known frequencies.

    Frequencies are taken from the forcing: linear evolution preserves them,
    and blind frequency estimation is out of scope.  Returns the fitted
    almost periodic part (state-valued cosine/sine profiles per frequency),
    the residual trajectory over the whole sampling window, and the
    condition number of the design matrix (large values flag
    near-duplicate frequencies).
    """
    from .mild import Trajectory

    times = np.asarray(samples.times, dtype=float)
    if times[-1] <= tail_start:
        raise ValueError("trajectory must extend beyond tail_start")
    mat, rebuild = _states_to_matrix(samples.states)
    sel = times >= tail_start
    tt = times[sel]

    freqs = list(dict.fromkeys(float(f) for f in frequencies))
    if not freqs:
        residual = Trajectory(times=times, states=list(samples.states), extra={"fit": "empty"})
        return APPart([]), residual, 1.0

    cols = []
    for f in freqs:
        cols.append(np.cos(f * tt))
        if f > 0.0:
            cols.append(np.sin(f * tt))
    design = np.column_stack(cols)
    cond = float(np.linalg.cond(design))
    coef, *_ = np.linalg.lstsq(design, mat[sel], rcond=None)

    modes = []
    k = 0
    for f in freqs:
        cos_state = rebuild(coef[k])
        k += 1
        if f > 0.0:
            sin_state = rebuild(coef[k])
            k += 1
            modes.append(Mode(freq=f, a=1.0, b=1.0, profile=cos_state, sin_profile=sin_state))
        else:
            modes.append(Mode(freq=f, a=1.0, b=0.0, profile=cos_state))
    fitted = APPart(modes)

    res_states = [samples.states[i] - fitted.eval(float(times[i])) for i in range(times.size)]
    residual = Trajectory(times=times, states=res_states, extra={"fit_condition": cond})
    return fitted, residual, cond
