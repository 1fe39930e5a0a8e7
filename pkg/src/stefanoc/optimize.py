"""Minimisation of the discrete cost over the discrete admissible control set.

Box constraints on ``s`` are enforced by projection, ``s_0`` is pinned and
the norm ball is handled by a quadratic penalty.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize as sopt

from .control import DiscreteControl, norm_w21, norm_w22
from .cost import Measurements, discrete_cost
from .fem import SingularSystemError, StabilityWarning
from .problem import ProblemData, sup_coefficients
from .state import solve_state

__all__ = [
    "OptOptions",
    "OptResult",
    "HistoryRow",
    "project_box",
    "norm_penalty",
    "penalized_objective",
    "free_mask",
    "pack",
    "unpack",
    "fd_gradient",
    "minimize",
]

logger = logging.getLogger(__name__)

METHODS = ("fd_gradient", "nelder_mead")
ARMIJO_C = 1e-4
MAX_HALVINGS = 40
STALL_WINDOW = 5


@dataclass(frozen=True)
class OptOptions:
    max_iters: int = 200
    grad_step: float = 1e-6
    step0: float = 1.0
    tol: float = 1e-10
    penalty_weight: float = 1.0
    method: str = "fd_gradient"
    seed: int = 0
    optimize_s: bool = True
    optimize_g: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        for name in ("grad_step", "step0", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.penalty_weight < 0:
            raise ValueError("penalty_weight must be nonnegative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if not (self.optimize_s or self.optimize_g):
            raise ValueError("nothing to optimise: both optimize_s and optimize_g are off")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HistoryRow:
    iter: int
    cost: float
    penalty: float
    step: float


@dataclass(frozen=True, eq=False)
class OptResult:
    """Outcome of :func:`minimize`.

    ``best_cost`` and the history ``cost`` column are penalised objective
    values (discrete cost plus norm penalty); ``penalty`` is the penalty part.
    """

    best: DiscreteControl
    best_cost: float
    history: tuple = field(default=())
    converged: bool = False
    iters: int = 0
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "best": {
                "T": self.best.T,
                "n": self.best.n,
                "s": self.best.s_vals.tolist(),
                "g": self.best.g_vals.tolist(),
            },
            "best_cost": self.best_cost,
            "converged": self.converged,
            "iters": self.iters,
            "reason": self.reason,
        }


def project_box(dc: DiscreteControl, pd: ProblemData) -> DiscreteControl:
    """Clamp ``s_k`` into [delta, l] and reset ``s_0`` to the problem's s0."""
    s = np.clip(dc.s_vals, pd.delta, pd.l)
    s[0] = pd.s0
    if np.array_equal(s, dc.s_vals):
        return dc
    return dc.replace(s_vals=s)


def norm_penalty(dc: DiscreteControl, pd: ProblemData, w: float) -> float:
    """``w * (max(0, w22 - R^2)^2 + max(0, w21 - R^2)^2)``."""
    if w < 0:
        raise ValueError("penalty weight must be nonnegative")
    if w == 0:
        return 0.0
    R2 = pd.R**2
    e_s = max(0.0, norm_w22(dc.s_vals, dc.tau) - R2)
    e_g = max(0.0, norm_w21(dc.g_vals, dc.tau) - R2)
    return w * (e_s**2 + e_g**2)


def _evaluate(dc, pd, m, w, data, M):
    """(objective, penalty) at the projected control; +inf if the solve fails."""
    dc = project_box(dc, pd)
    pen = norm_penalty(dc, pd, w)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            dsv = solve_state(dc, pd, m, M=M)
        cost = discrete_cost(dsv, dc, pd, data).total
    except (SingularSystemError, ValueError, FloatingPointError, ArithmeticError) as exc:
        logger.debug("objective evaluation failed: %s", exc)
        return math.inf, pen
    if not math.isfinite(cost):
        return math.inf, pen
    return cost + pen, pen


def penalized_objective(dc: DiscreteControl, pd: ProblemData, m: int, w: float,
                        data: Measurements | None = None, M: float | None = None) -> float:
    """Discrete cost of the projected control plus the norm-ball penalty.

    A failed state solve yields ``+inf`` so that line searches reject it.
    """
    return _evaluate(dc, pd, m, w, data, M)[0]


def free_mask(n: int, optimize_s: bool = True, optimize_g: bool = True) -> np.ndarray:
    """Boolean mask over the stacked vector ``[s_0..s_n, g_0..g_n]``; ``s_0`` is never free."""
    mask = np.zeros(2 * (n + 1), dtype=bool)
    if optimize_s:
        mask[1:n + 1] = True
    if optimize_g:
        mask[n + 1:] = True
    return mask


def pack(dc: DiscreteControl, mask: np.ndarray) -> np.ndarray:
    return np.concatenate((dc.s_vals, dc.g_vals))[mask]


def unpack(x, dc: DiscreteControl, mask: np.ndarray) -> DiscreteControl:
    full = np.concatenate((dc.s_vals, dc.g_vals))
    full[mask] = x
    n1 = dc.n + 1
    return DiscreteControl(full[:n1], full[n1:], dc.T)


def fd_gradient(obj: Callable[[DiscreteControl], float], dc: DiscreteControl, h: float,
                mask: np.ndarray | None = None) -> np.ndarray:
    """Central-difference gradient over the free coordinates.

    With no mask the free coordinates are ``s_1..s_n, g_0..g_n``. A
    coordinate whose perturbed objective is not finite on one side falls back
    to a one-sided difference; failure on both sides raises.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if mask is None:
        mask = free_mask(dc.n)
    x = pack(dc, mask)
    f0 = None
    grad = np.empty_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = obj(unpack(xp, dc, mask))
        fm = obj(unpack(xm, dc, mask))
        if math.isfinite(fp) and math.isfinite(fm):
            grad[i] = (fp - fm) / (2 * h)
            continue
        if f0 is None:
            f0 = obj(dc)
        if not math.isfinite(f0):
            raise FloatingPointError("objective is not finite at the base point")
        if math.isfinite(fp):
            grad[i] = (fp - f0) / h
        elif math.isfinite(fm):
            grad[i] = (f0 - fm) / h
        else:
            raise FloatingPointError(f"objective not finite on either side of coordinate {i}")
    return grad


def _stalled(values, tol):
    if len(values) <= STALL_WINDOW:
        return False
    old, new = values[-STALL_WINDOW - 1], values[-1]
    return (old - new) <= tol * max(abs(old), np.finfo(float).tiny)


def minimize(pd: ProblemData, n: int, m: int, init: DiscreteControl, opts: OptOptions,
             data: Measurements | None = None) -> OptResult:
    """Minimise the penalised discrete cost starting from ``init``.

    ``fd_gradient`` runs projected gradient descent with a backtracking
    Armijo search; ``nelder_mead`` hands the same objective to scipy.
    """
    if init.n != n:
        raise ValueError(f"init has n={init.n}, expected {n}")
    if abs(init.T - pd.T) > 1e-12 * pd.T:
        raise ValueError("init horizon differs from problem T")
    M = sup_coefficients(pd)
    w = opts.penalty_weight
    mask = free_mask(n, opts.optimize_s, opts.optimize_g)

    def evaluate(dc):
        return _evaluate(dc, pd, m, w, data, M)

    def obj(dc):
        return evaluate(dc)[0]

    x0 = project_box(init, pd)
    f0, p0 = evaluate(x0)
    if not math.isfinite(f0):
        raise FloatingPointError("objective is not finite at the initial control")
    if opts.method == "nelder_mead":
        return _nelder_mead(obj, evaluate, x0, f0, p0, pd, mask, opts)
    return _projected_gradient(obj, evaluate, x0, f0, p0, pd, mask, opts)


def _projected_gradient(obj, evaluate, x, f, pen, pd, mask, opts) -> OptResult:
    history = [HistoryRow(0, f, pen, 0.0)]
    values = [f]
    step = opts.step0
    converged, reason = False, "max_iters"
    it = 0
    while it < opts.max_iters:
        if f == 0.0:
            converged, reason = True, "zero objective"
            break
        grad = fd_gradient(obj, x, opts.grad_step, mask)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < opts.tol:
            converged, reason = True, "gradient norm below tol"
            break
        base = pack(x, mask)
        # start each search at twice the last accepted step so the step can grow back
        trial = min(2.0 * step, opts.step0 * 2.0**10)
        accepted = None
        for _ in range(MAX_HALVINGS):
            cand = project_box(unpack(base - trial * grad, x, mask), pd)
            fc, pc = evaluate(cand)
            # projected Armijo condition: decrease measured along the actual move
            move = pack(cand, mask) - base
            if math.isfinite(fc) and fc <= f + ARMIJO_C * float(np.dot(grad, move)):
                accepted = (cand, fc, pc)
                break
            trial *= 0.5
        if accepted is None:
            reason = "line search failed"
            break
        it += 1
        x, f, pen = accepted
        step = trial
        history.append(HistoryRow(it, f, pen, trial))
        values.append(f)
        if _stalled(values, opts.tol):
            converged, reason = True, "relative decrease below tol"
            break
    return OptResult(x, f, tuple(history), converged, it, reason)


def _nelder_mead(obj, evaluate, x0, f0, p0, pd, mask, opts) -> OptResult:
    z0 = pack(x0, mask)
    rng = np.random.default_rng(opts.seed)
    scale = 0.05 * np.maximum(np.abs(z0), 1.0)
    simplex = np.vstack([z0, z0 + np.diag(scale * (1.0 + 0.1 * rng.random(len(z0))))])
    cache: dict[bytes, tuple[float, float]] = {}

    def point(z):
        return project_box(unpack(z, x0, mask), pd)

    def ev(z):
        key = np.asarray(z, dtype=float).tobytes()
        if key not in cache:
            cache[key] = evaluate(point(z))
        return cache[key]

    def fun(z):
        return ev(z)[0]

    history = [HistoryRow(0, f0, p0, 0.0)]
    state = {"best": (f0, p0, z0)}

    def callback(intermediate_result):
        z = intermediate_result.x
        fz, pz = ev(z)
        if fz <= state["best"][0]:
            state["best"] = (fz, pz, z.copy())
        fb, pb, _ = state["best"]
        history.append(HistoryRow(len(history), fb, pb, 0.0))

    res = sopt.minimize(fun, z0, method="Nelder-Mead", callback=callback,
                        options={"maxiter": opts.max_iters, "initial_simplex": simplex,
                                 "fatol": opts.tol, "xatol": opts.tol})
    fr, pr = ev(res.x)
    if fr <= state["best"][0]:
        state["best"] = (fr, pr, res.x)
    fb, pb, zb = state["best"]
    reason = "converged" if res.success else str(res.message)
    return OptResult(point(zb), fb, tuple(history), bool(res.success), int(res.nit), reason)
