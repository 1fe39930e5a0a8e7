"""Problem data for the one-phase Stefan control problem and time averaging."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from .expr import FunctionSpec, parse_expression

__all__ = [
    "GAUSS_ORDER",
    "gauss_legendre",
    "slab_nodes",
    "ProblemData",
    "Violation",
    "ValidationReport",
    "validate_data",
    "steklov_average",
    "trace_averages",
    "sup_coefficients",
]

# 4-point rule: exact for cubics in t, matching the quadratic boundary lift
GAUSS_ORDER = 4

_SPACE_TIME = ("a", "b", "c", "f", "gamma", "chi")
_TIME_ONLY = ("mu", "nu")


def gauss_legendre(order: int = GAUSS_ORDER):
    """Gauss-Legendre nodes and weights mapped to the unit interval [0, 1]."""
    xi, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (xi + 1.0), 0.5 * w


_UNIT_NODES, _UNIT_WEIGHTS = gauss_legendre()


def slab_nodes(k: int, tau: float):
    """Quadrature nodes on [t_{k-1}, t_k] and weights normalised to sum 1."""
    t0 = (k - 1) * tau
    return t0 + tau * _UNIT_NODES, _UNIT_WEIGHTS


@dataclass(frozen=True)
class ProblemData:
    """Coefficients, data and constants of the free-boundary problem.

    ``a, b, c, f, gamma, chi`` are functions of ``(x, t)``; ``phi`` is a
    function of ``x``; ``mu`` and ``nu`` are functions of ``t``.
    """

    a: FunctionSpec
    b: FunctionSpec
    c: FunctionSpec
    f: FunctionSpec
    phi: FunctionSpec
    gamma: FunctionSpec
    chi: FunctionSpec
    mu: FunctionSpec
    nu: FunctionSpec
    a0: float
    s0: float
    T: float
    l: float
    delta: float
    R: float
    beta0: float = 1.0
    beta1: float = 1.0
    source: Mapping[str, object] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if not 0 < self.delta <= self.s0 <= self.l:
            raise ValueError(
                f"need 0 < delta <= s0 <= l, got delta={self.delta}, s0={self.s0}, l={self.l}"
            )
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")
        if self.beta0 < 0 or self.beta1 < 0 or not self.beta0 + self.beta1 > 0:
            raise ValueError(
                f"cost weights must be >= 0 with positive sum, got {self.beta0}, {self.beta1}"
            )
        for name in _SPACE_TIME:
            if getattr(self, name).arity != 2:
                raise ValueError(f"{name} must be a function of (x, t)")
        for name in ("phi", "mu", "nu"):
            if getattr(self, name).arity != 1:
                raise ValueError(f"{name} must be a function of one variable")

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "ProblemData":
        """Build from a mapping of field name to expression text or number."""
        funcs = {}
        for name in _SPACE_TIME:
            funcs[name] = parse_expression(str(d.get(name, "0")), arity=2)
        funcs["phi"] = parse_expression(str(d.get("phi", "0")), arity=1, var="x")
        for name in _TIME_ONLY:
            funcs[name] = parse_expression(str(d.get(name, "0")), arity=1, var="t")
        missing = [k for k in ("a0", "s0", "T", "l", "delta", "R") if k not in d]
        if missing:
            raise KeyError(f"missing problem field(s): {', '.join(missing)}")
        consts = {k: float(d[k]) for k in ("a0", "s0", "T", "l", "delta", "R")}
        consts["beta0"] = float(d.get("beta0", 1.0))
        consts["beta1"] = float(d.get("beta1", 1.0))
        return cls(**funcs, **consts, source=dict(d))

    def to_dict(self) -> dict:
        out = {}
        for name in _SPACE_TIME + ("phi",) + _TIME_ONLY:
            out[name] = getattr(self, name).source
        for name in ("a0", "s0", "T", "l", "delta", "R", "beta0", "beta1"):
            out[name] = getattr(self, name)
        return out

    @cached_property
    def reflection_depth(self) -> int:
        """Upper bound N = 1 + floor(log2(l / delta)) on the extension folds."""
        return 1 + int(np.floor(np.log2(self.l / self.delta)))


@dataclass(frozen=True)
class Violation:
    label: str
    worst: float
    location: tuple


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def passed(self) -> bool:
        return not self.violations


def _grid(pd: ProblemData, samples: int):
    xs = np.linspace(0.0, pd.l, samples)
    ts = np.linspace(0.0, pd.T, samples)
    return np.meshgrid(xs, ts, indexing="ij")


def validate_data(pd: ProblemData, samples: int = 21, dadx_cap: float | None = None) -> ValidationReport:
    """Sample the data on a ``samples x samples`` grid over [0, l] x [0, T].

    Flags non-finite values, ``a < a0`` and (if ``dadx_cap`` is given)
    forward-difference estimates of ``|da/dx|`` above the cap. Nothing
    raises; every finding goes into the report.
    """
    if samples < 2:
        raise ValueError("need at least 2 samples per axis")
    X, Tt = _grid(pd, samples)
    violations = []

    values = {}
    for name in _SPACE_TIME:
        vals = getattr(pd, name).raw(X, Tt)
        values[name] = vals
        bad = ~np.isfinite(vals)
        if bad.any():
            i = np.argwhere(bad)[0]
            violations.append(
                Violation(f"non-finite sample of {name}", float(vals[tuple(i)]), (X[tuple(i)], Tt[tuple(i)]))
            )

    xs0 = np.linspace(0.0, pd.s0, samples)
    ts = np.linspace(0.0, pd.T, samples)
    for name, grid, var in (("phi", xs0, "x"), ("mu", ts, "t"), ("nu", ts, "t")):
        vals = getattr(pd, name).raw(grid)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            violations.append(Violation(f"non-finite sample of {name}", float(vals[i]), (var, grid[i])))

    a = values["a"]
    with np.errstate(invalid="ignore"):
        finite_a = np.where(np.isfinite(a), a, np.inf)
    i = np.unravel_index(np.argmin(finite_a), a.shape)
    if finite_a[i] < pd.a0:
        violations.append(Violation("ellipticity", float(a[i]), (X[i], Tt[i])))

    if dadx_cap is not None:
        dx = X[1, 0] - X[0, 0]
        with np.errstate(all="ignore"):
            slope = np.abs(np.diff(a, axis=0)) / dx
        slope = np.where(np.isfinite(slope), slope, np.inf)
        j = np.unravel_index(np.argmax(slope), slope.shape)
        if slope[j] > dadx_cap:
            violations.append(Violation("bounded da/dx", float(slope[j]), (X[j], Tt[j])))

    return ValidationReport(tuple(violations))


def sup_coefficients(pd: ProblemData, samples: int = 33) -> float:
    """Sampled max(sup|a|, sup|b|, sup|c|) over [0, l] x [0, T]."""
    X, Tt = _grid(pd, samples)
    return float(max(np.max(np.abs(getattr(pd, n)(X, Tt))) for n in ("a", "b", "c")))


def steklov_average(fn: FunctionSpec, k: int, tau: float, x=None):
    """Mean of ``fn`` over the time slab [t_{k-1}, t_k], t_k = k*tau.

    For arity-2 functions ``x`` may be a scalar or an array; the result has
    the shape of ``x``.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    if k < 1:
        raise ValueError("step index starts at 1")
    ts, ws = slab_nodes(k, tau)
    if fn.arity == 1:
        if x is not None:
            raise ValueError(f"{fn.source!r} is a function of time only")
        return float(np.dot(ws, fn(ts)))
    if x is None:
        raise ValueError(f"{fn.source!r} needs a spatial argument")
    xa = np.asarray(x, dtype=float)
    vals = fn(xa[..., None], ts)
    out = vals @ ws
    return float(out) if np.ndim(out) == 0 else out


def trace_averages(s_curve, gamma: FunctionSpec, chi: FunctionSpec, k, tau: float):
    """Slab means of gamma(s(t), t) s'(t) and chi(s(t), t).

    ``s_curve`` is anything with vectorised ``s(t)`` and ``ds(t)`` methods.
    ``k`` may be a single step index or an array of them.
    """
    kk = np.asarray(k)
    ts, ws = slab_nodes(kk[..., None], tau)
    st = s_curve.s(ts)
    gs = (gamma(st, ts) * s_curve.ds(ts)) @ ws
    ch = chi(st, ts) @ ws
    if kk.ndim == 0:
        return float(gs), float(ch)
    return gs, ch
