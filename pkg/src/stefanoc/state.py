"""Time march of the discrete state vector and its interpolants."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .control import DiscreteControl, LiftControl, lift_Pn
from .fem import (Mesh1D, StabilityWarning, assemble_step, solve_step, stability_threshold)
from .problem import ProblemData, sup_coefficients, trace_averages

__all__ = [
    "StateSlice",
    "DiscreteStateVector",
    "fold",
    "extend_eval",
    "extension_nodes",
    "solve_state",
    "eval_interpolant",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StateSlice:
    k: int
    s_k: float
    mesh: Mesh1D
    nodal: np.ndarray

    @property
    def nodes(self) -> np.ndarray:
        return self.mesh.nodes


@dataclass(frozen=True, eq=False)
class DiscreteStateVector:
    slices: tuple
    control: DiscreteControl
    lift: LiftControl
    problem: ProblemData

    @property
    def n(self) -> int:
        return len(self.slices) - 1

    @property
    def T(self) -> float:
        return self.control.T

    @property
    def tau(self) -> float:
        return self.control.tau

    def __getitem__(self, k: int) -> StateSlice:
        return self.slices[k]


def fold(x, s: float, max_depth: int | None = None):
    """Map points of [0, inf) into [0, s] by iterated even reflection.

    A point in the band [2^(j-1) s, 2^j s] goes to 2^j s - x; points on a band
    boundary use the lower band. Returns the folded points and the largest
    number of reflections used.
    """
    y = np.array(x, dtype=float, copy=True)
    depth = 0
    mask = y > s
    while mask.any():
        j = np.ceil(np.log2(y[mask] / s))
        y[mask] = np.ldexp(s, j.astype(int)) - y[mask]
        depth += 1
        if max_depth is not None and depth > max_depth:
            raise RuntimeError(f"reflection depth {depth} exceeds bound {max_depth}")
        mask = y > s
    return y, depth


def extend_eval(slice_: StateSlice, x, l: float, delta: float):
    """Value of the reflected extension of a slice at ``x`` in [0, l]."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa > l):
        raise ValueError(f"evaluation point outside [0, {l}]")
    if slice_.s_k < delta:
        raise ValueError(f"slice boundary {slice_.s_k} below delta={delta}")
    N = 1 + int(math.floor(math.log2(l / delta)))
    y, _ = fold(xa, slice_.s_k, max_depth=N)
    out = np.interp(y, slice_.mesh.nodes, slice_.nodal)
    return float(out) if out.ndim == 0 else out


def extension_nodes(slice_: StateSlice, l: float) -> np.ndarray:
    """Sorted kinks of the reflected extension on [0, l], including both ends.

    The extension is linear between consecutive returned points.
    """
    pts = np.asarray(slice_.mesh.nodes, dtype=float)
    span = slice_.s_k
    while span < l:
        span *= 2.0
        pts = np.concatenate((pts, span - pts[::-1]))
    pts = pts[pts < l]
    return np.unique(np.concatenate((pts, [l])))


def _initial_slice(pd: ProblemData, s0: float, m: int) -> StateSlice:
    mesh = Mesh1D.uniform(s0, m)
    return StateSlice(0, s0, mesh, np.asarray(pd.phi(mesh.nodes), dtype=float) * np.ones(m + 1))


def solve_state(dc: DiscreteControl, pd: ProblemData, m: int, *, M: float | None = None) -> DiscreteStateVector:
    """March the discrete state vector k = 1..n for a discrete control.

    Free-boundary trace data are slab means taken along the lifted curve and
    the flux of step k is the slab mean of the lifted flux. The previous
    slice enters through its reflected extension.
    """
    if m < 2:
        raise ValueError("need m >= 2 elements")
    if abs(dc.T - pd.T) > 1e-12 * pd.T:
        raise ValueError(f"control horizon {dc.T} differs from problem T={pd.T}")
    s = dc.s_vals
    if np.any(s < pd.delta) or np.any(s > pd.l):
        raise ValueError("boundary positions must lie in [delta, l]")
    tau = dc.tau
    if M is None:
        M = sup_coefficients(pd)
    tau0 = stability_threshold(M, pd.a0)
    if tau >= tau0:
        warnings.warn(f"tau={tau:.4g} is not below the uniqueness threshold {tau0:.4g}",
                      StabilityWarning, stacklevel=2)

    lift = lift_Pn(dc)
    slices = [_initial_slice(pd, float(s[0]), m)]
    gs, chi = trace_averages(lift, pd.gamma, pd.chi, np.arange(1, dc.n + 1), tau)
    for k in range(1, dc.n + 1):
        prev = slices[-1]
        sys = assemble_step(pd, k, float(s[k]), m, tau,
                            lambda x, p=prev: extend_eval(p, x, pd.l, pd.delta),
                            float(gs[k - 1]), float(chi[k - 1]), lift.g_average(k))
        u = solve_step(sys)
        slices.append(StateSlice(k, float(s[k]), sys.mesh, u))
    return DiscreteStateVector(tuple(slices), dc, lift, pd)


def eval_interpolant(dsv: DiscreteStateVector, x, t: float, mode: str = "constant"):
    """Piecewise-constant or piecewise-linear-in-time interpolant of the state."""
    pd = dsv.problem
    knots = dsv.control.times
    if mode not in ("constant", "linear"):
        raise ValueError("mode must be 'constant' or 'linear'")
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = int(np.searchsorted(knots, t, side="left"))
    if k > dsv.n:
        k = dsv.n
        t = knots[-1]
    here = extend_eval(dsv.slices[k], x, pd.l, pd.delta)
    if mode == "constant" or k == 0 or t == knots[k]:
        return here
    before = extend_eval(dsv.slices[k - 1], x, pd.l, pd.delta)
    theta = (t - knots[k - 1]) / dsv.tau
    return before + theta * (here - before)
