"""Discrete and continuous controls (boundary curve s, flux g).

A discrete control holds grid values ``s_k = s(t_k)``, ``g_k = g(t_k)`` on
``t_k = k*T/n``. The lift back to functions of time is a C^1 piecewise
quadratic for ``s`` that passes through the midpoints ``(s_{k-1}+s_k)/2`` at
the knots, and the piecewise-linear interpolant for ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .expr import FunctionSpec, parse_expression
from .problem import ProblemData, gauss_legendre

__all__ = [
    "DiscreteControl",
    "ContinuousControl",
    "LiftControl",
    "AnalyticControl",
    "AdmissibilityReport",
    "norm_w22",
    "norm_w21",
    "sample_Qn",
    "lift_Pn",
    "continuous_norms",
    "check_admissible",
    "lipschitz_check",
    "default_control",
]

FD_STEP = 1e-6
# second derivatives difference the first derivative; a wider step keeps
# roundoff (eps / h) below the truncation error
FD_STEP_2 = 1e-4


@dataclass(frozen=True, eq=False)
class DiscreteControl:
    s_vals: np.ndarray
    g_vals: np.ndarray
    T: float

    def __post_init__(self):
        s = np.array(self.s_vals, dtype=float)
        g = np.array(self.g_vals, dtype=float)
        if s.ndim != 1 or s.shape != g.shape:
            raise ValueError("s_vals and g_vals must be 1-d of equal length")
        if len(s) < 2:
            raise ValueError("a discrete control needs n >= 1 (at least 2 values)")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(g))):
            raise ValueError("control values must be finite")
        if not self.T > 0:
            raise ValueError("T must be positive")
        s.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "s_vals", s)
        object.__setattr__(self, "g_vals", g)

    @property
    def n(self) -> int:
        return len(self.s_vals) - 1

    @property
    def tau(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.tau

    def replace(self, s_vals=None, g_vals=None) -> "DiscreteControl":
        return DiscreteControl(
            self.s_vals if s_vals is None else s_vals,
            self.g_vals if g_vals is None else g_vals,
            self.T,
        )

    def scaled(self, alpha: float) -> "DiscreteControl":
        return DiscreteControl(alpha * self.s_vals, alpha * self.g_vals, self.T)


def _check_seq(vals, tau):
    v = np.asarray(vals, dtype=float)
    if v.ndim != 1 or len(v) < 2:
        raise ValueError("need a sequence of length >= 2")
    if not tau > 0:
        raise ValueError("tau must be positive")
    return v


def norm_w22(s_vals, tau: float) -> float:
    """Squared discrete W_2^2 norm of a grid sequence.

    ``sum_{k<n} tau s_k^2 + sum_{k>=1} tau (backward difference)^2
    + sum_{0<k<n} tau (second difference)^2``.
    """
    s = _check_seq(s_vals, tau)
    d1 = np.diff(s) / tau
    d2 = np.diff(s, 2) / tau**2
    return float(tau * (np.sum(s[:-1] ** 2) + np.sum(d1**2) + np.sum(d2**2)))


def norm_w21(g_vals, tau: float) -> float:
    """Squared discrete W_2^1 norm of a grid sequence."""
    g = _check_seq(g_vals, tau)
    d1 = np.diff(g) / tau
    return float(tau * (np.sum(g[:-1] ** 2) + np.sum(d1**2)))


class ContinuousControl:
    """A boundary curve ``s`` (with derivatives) and a flux ``g`` on [0, T]."""

    kind = "analytic"
    T: float

    def s(self, t):
        raise NotImplementedError

    def ds(self, t):
        raise NotImplementedError

    def d2s(self, t):
        raise NotImplementedError

    def g(self, t):
        raise NotImplementedError

    def dg(self, t):
        raise NotImplementedError

    def panels(self, n_default: int = 256) -> np.ndarray:
        """Breakpoints used for composite quadrature over [0, T]."""
        return np.linspace(0.0, self.T, n_default + 1)


class LiftControl(ContinuousControl):
    """Piecewise-polynomial lift of a :class:`DiscreteControl`."""

    kind = "lift"

    def __init__(self, dc: DiscreteControl):
        self.dc = dc
        self.T = dc.T
        self.n = dc.n
        self.tau = dc.tau
        self.knots = dc.times
        s = dc.s_vals
        tau = self.tau
        d = np.diff(s) / tau  # d[k-1] = (s_k - s_{k-1}) / tau
        # piece k is stored by its end data (value and slope at t_{k-1} and
        # t_k) and its constant curvature
        self._v_right = 0.5 * (s[:-1] + s[1:])
        self._d_right = d
        self._v_left = np.concatenate(([s[0]], self._v_right[:-1]))
        self._d_left = np.concatenate(([0.0], d[:-1]))
        self._curv = (self._d_right - self._d_left) / tau
        self._g = dc.g_vals

    def _piece(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.knots, t, side="left")
        return np.clip(k, 1, self.n), t

    def piece_eval(self, k, t, order: int = 0):
        """Evaluate piece ``k`` (on [t_{k-1}, t_k]) of the s-lift or its derivatives.

        The quadratic is expanded about whichever end of the piece is nearer,
        so knot values and slopes are reproduced without cancellation.
        """
        k = np.asarray(k)
        t = np.asarray(t, dtype=float)
        j = k - 1
        r = t - self.knots[j]
        q = self.knots[k] - t
        c = self._curv[j]
        near_left = r <= 0.5 * self.tau
        if order == 0:
            left = self._v_left[j] + r * self._d_left[j] + 0.5 * r**2 * c
            right = self._v_right[j] - q * self._d_right[j] + 0.5 * q**2 * c
        elif order == 1:
            left = self._d_left[j] + r * c
            right = self._d_right[j] - q * c
        elif order == 2:
            left = right = c + 0 * r
        else:
            raise ValueError("order must be 0, 1 or 2")
        out = np.where(near_left, left, right)
        return float(out) if out.ndim == 0 else out

    def s(self, t):
        k, t = self._piece(t)
        return self.piece_eval(k, t, 0)

    def ds(self, t):
        k, t = self._piece(t)
        return self.piece_eval(k, t, 1)

    def d2s(self, t):
        k, t = self._piece(t)
        return self.piece_eval(k, t, 2)

    def g(self, t):
        out = np.interp(t, self.knots, self._g)
        return float(out) if np.ndim(out) == 0 else out

    def dg(self, t):
        k, _ = self._piece(t)
        out = (self._g[k] - self._g[k - 1]) / self.tau
        return float(out) if np.ndim(out) == 0 else out

    def g_average(self, k: int) -> float:
        """Mean of the flux lift over slab k (exact for a linear piece)."""
        return 0.5 * (self._g[k - 1] + self._g[k])

    def panels(self, n_default: int = 256) -> np.ndarray:
        return self.knots


def _central(fn, h):
    def d(t):
        t = np.asarray(t, dtype=float)
        out = (np.asarray(fn(t + h)) - np.asarray(fn(t - h))) / (2 * h)
        return float(out) if np.ndim(out) == 0 else out

    return d


def _as_time_fn(f):
    if isinstance(f, str):
        f = parse_expression(f, arity=1, var="t")
    if isinstance(f, FunctionSpec):
        spec = f

        def call(t):
            return spec(np.asarray(t, dtype=float))

        return call
    if callable(f):
        return f
    c = float(f)
    return lambda t: c + 0.0 * np.asarray(t, dtype=float)


class AnalyticControl(ContinuousControl):
    """A control given by closed-form curves.

    Missing derivatives are taken by central differences.
    """

    kind = "analytic"

    def __init__(
        self,
        s,
        g,
        T: float,
        ds: Callable | None = None,
        d2s: Callable | None = None,
        dg: Callable | None = None,
        s_expr: str | None = None,
        g_expr: str | None = None,
    ):
        self.T = float(T)
        self.s_expr = s_expr if s_expr is not None else (s if isinstance(s, str) else None)
        self.g_expr = g_expr if g_expr is not None else (g if isinstance(g, str) else None)
        self._s = _as_time_fn(s)
        self._g = _as_time_fn(g)
        self._ds = ds if ds is not None else _central(self._s, FD_STEP)
        self._d2s = d2s if d2s is not None else _central(self._ds, FD_STEP_2)
        self._dg = dg if dg is not None else _central(self._g, FD_STEP)

    def s(self, t):
        return self._s(t)

    def ds(self, t):
        return self._ds(t)

    def d2s(self, t):
        return self._d2s(t)

    def g(self, t):
        return self._g(t)

    def dg(self, t):
        return self._dg(t)


def sample_Qn(v: ContinuousControl, n: int) -> DiscreteControl:
    """Pointwise sampling of ``v`` at t_k = k*T/n."""
    if n < 1:
        raise ValueError("n must be positive")
    t = np.arange(n + 1) * (v.T / n)
    return DiscreteControl(np.asarray(v.s(t), dtype=float) * np.ones(n + 1),
                           np.asarray(v.g(t), dtype=float) * np.ones(n + 1), v.T)


def lift_Pn(dc: DiscreteControl) -> LiftControl:
    """Lift a discrete control to a C^1 quadratic spline s and linear g."""
    if dc.n < 1:
        raise ValueError("n must be at least 1")
    return LiftControl(dc)


def continuous_norms(v: ContinuousControl, n_panels: int = 256) -> tuple[float, float]:
    """Squared W_2^2 norm of s and W_2^1 norm of g by composite Gauss quadrature."""
    edges = np.asarray(v.panels(n_panels), dtype=float)
    u, w = gauss_legendre()
    h = np.diff(edges)
    t = (edges[:-1, None] + h[:, None] * u[None, :]).ravel()
    wt = (h[:, None] * w[None, :]).ravel()
    s, ds, d2s = v.s(t), v.ds(t), v.d2s(t)
    g, dg = v.g(t), v.dg(t)
    w22 = float(np.dot(wt, s**2 + ds**2 + d2s**2))
    w21 = float(np.dot(wt, g**2 + dg**2))
    return w22, w21


@dataclass(frozen=True)
class AdmissibilityReport:
    w22_s: float
    w21_g: float
    bounds_ok: bool
    norm_ok: bool

    @property
    def in_set(self) -> bool:
        return self.bounds_ok and self.norm_ok


def check_admissible(control, pd: ProblemData, epsilon: float = 0.0,
                     n_samples: int = 2001) -> AdmissibilityReport:
    """Membership test for the (discrete or continuous) ball of radius R + epsilon."""
    cap = (pd.R + epsilon) ** 2
    if isinstance(control, DiscreteControl):
        s = control.s_vals
        w22 = norm_w22(s, control.tau)
        w21 = norm_w21(control.g_vals, control.tau)
        bounds_ok = bool(np.all(s >= pd.delta) and np.all(s <= pd.l))
    else:
        t = np.linspace(0.0, control.T, n_samples)
        s = np.asarray(control.s(t))
        w22, w21 = continuous_norms(control)
        bounds_ok = bool(
            np.all(s >= pd.delta) and np.all(s <= pd.l)
            and abs(float(control.s(0.0)) - pd.s0) <= 1e-12 * max(1.0, abs(pd.s0))
        )
    return AdmissibilityReport(w22, w21, bounds_ok, bool(max(w22, w21) <= cap))


def lipschitz_check(dc: DiscreteControl, C_cap: float) -> bool:
    """True iff every increment |s_k - s_{k-1}| is at most ``C_cap * tau``."""
    if not C_cap > 0:
        raise ValueError("C_cap must be positive")
    # relative slack absorbs the rounding in t_k = k*tau sampling
    return bool(np.max(np.abs(np.diff(dc.s_vals))) <= C_cap * dc.tau * (1 + 1e-12))


def default_control(pd: ProblemData, n: int) -> DiscreteControl:
    """Constant boundary at s0 and zero flux."""
    return DiscreteControl(np.full(n + 1, pd.s0), np.zeros(n + 1), pd.T)
