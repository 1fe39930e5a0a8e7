"""Per-step Galerkin system on [0, s_k] with piecewise-linear hat functions."""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .problem import ProblemData, steklov_average

__all__ = [
    "Mesh1D",
    "StepSystem",
    "SingularSystemError",
    "StabilityWarning",
    "stability_threshold",
    "assemble_step",
    "solve_step",
    "step_residual",
    "weak_step_residual",
    "element_quadrature",
    "clear_cache",
]

_G = 1.0 / math.sqrt(3.0)
# reference 2-point Gauss rule on [0, 1]
_QR = np.array([0.5 * (1 - _G), 0.5 * (1 + _G)])
_QW = np.array([0.5, 0.5])


class SingularSystemError(RuntimeError):
    def __init__(self, message: str, k: int | None = None):
        where = f" (step k={k})" if k is not None else ""
        super().__init__(message + where)
        self.k = k


class StabilityWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    @classmethod
    def uniform(cls, s_k: float, m: int) -> "Mesh1D":
        if m < 1:
            raise ValueError("need at least one element")
        if not s_k > 0:
            raise ValueError("interval length must be positive")
        nodes = np.linspace(0.0, s_k, m + 1)
        nodes.flags.writeable = False
        return cls(nodes)

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    @property
    def length(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        return self.length / self.m


@dataclass(frozen=True, eq=False)
class StepSystem:
    """Tridiagonal system: ``sub[i] = A[i+1, i]``, ``sup[i] = A[i, i+1]``."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray
    mesh: Mesh1D
    k: int | None = None
    factor: tuple | None = field(default=None, repr=False)

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.sub, -1) + np.diag(self.sup, 1)

    def matvec(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[:-1] += self.sup * u[1:]
        out[1:] += self.sub * u[:-1]
        return out

    def reversed(self) -> "StepSystem":
        """The same system with node numbering reversed."""
        return StepSystem(self.sup[::-1].copy(), self.diag[::-1].copy(), self.sub[::-1].copy(),
                          self.rhs[::-1].copy(), self.mesh, self.k)

    def with_rhs(self, rhs) -> "StepSystem":
        return StepSystem(self.sub, self.diag, self.sup, np.asarray(rhs, dtype=float),
                          self.mesh, self.k, self.factor)


def stability_threshold(M: float, a0: float) -> float:
    """Step size below which each step has a unique solution.

    ``tau0 = 1 / (M^2 / (2 a0) + M)`` where ``M`` bounds |a|, |b|, |c|.
    """
    if M < 0 or not a0 > 0:
        raise ValueError("need M >= 0 and a0 > 0")
    if M == 0:
        return math.inf
    return 1.0 / (M * M / (2.0 * a0) + M)


def element_quadrature(mesh: Mesh1D):
    """Quadrature points (m, 2), weights (m, 2) and hat values (2, 2) per element.

    ``hats[q, i]`` is the value of local shape function ``i`` at point ``q``.
    """
    x = mesh.nodes
    h = np.diff(x)
    xq = x[:-1, None] + h[:, None] * _QR[None, :]
    wq = h[:, None] * _QW[None, :]
    hats = np.stack([1.0 - _QR, _QR], axis=1)
    return xq, wq, hats


def _coefficients(pd: ProblemData, k: int, tau: float, xq):
    return (steklov_average(pd.a, k, tau, xq), steklov_average(pd.b, k, tau, xq),
            steklov_average(pd.c, k, tau, xq), steklov_average(pd.f, k, tau, xq))


class _OperatorCache:
    """Step matrices keyed by (problem, k, s_k, m, tau).

    The matrix and source load of a step do not depend on the previous slice
    or the boundary data, so repeated solves with the same boundary position
    (line searches, finite-difference gradients) reuse them.
    """

    def __init__(self, maxsize: int = 8192):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()

    def get(self, pd: ProblemData, k: int, s_k: float, m: int, tau: float):
        key = (id(pd), k, s_k, m, tau)
        hit = self._data.get(key)
        if hit is not None and hit[0] is pd:
            self._data.move_to_end(key)
            return hit[1]
        op = _build_operator(pd, k, s_k, m, tau)
        self._data[key] = (pd, op)
        if len(self._data) > self.maxsize:
            self._data.popitem(last=False)
        return op

    def clear(self):
        self._data.clear()


def _build_operator(pd: ProblemData, k: int, s_k: float, m: int, tau: float):
    mesh = Mesh1D.uniform(s_k, m)
    xq, wq, hats = element_quadrature(mesh)
    a, b, c, f = _coefficients(pd, k, tau, xq)
    h = np.diff(mesh.nodes)
    dN = np.stack([-1.0 / h, 1.0 / h], axis=1)  # (m, 2) per element, local i

    # K[e, i, j] = sum_q w (a dNj dNi - b dNj Ni - c Nj Ni + Nj Ni / tau)
    react = (1.0 / tau - c) * wq
    stiff = np.einsum("eq,ei,ej->eij", a * wq, dN, dN)
    conv = -np.einsum("eq,ej,qi->eij", b * wq, dN, hats)
    mass = np.einsum("eq,qj,qi->eij", react, hats, hats)
    K = stiff + conv + mass

    diag = np.zeros(m + 1)
    diag[:-1] += K[:, 0, 0]
    diag[1:] += K[:, 1, 1]
    sup = K[:, 0, 1].copy()
    sub = K[:, 1, 0].copy()

    fw = f * wq
    f_load = np.zeros(m + 1)
    f_load[:-1] += fw @ hats[:, 0]
    f_load[1:] += fw @ hats[:, 1]
    for arr in (diag, sup, sub, f_load):
        arr.flags.writeable = False
    return mesh, xq, wq, hats, sub, diag, sup, f_load, thomas_factor(sub, diag, sup)


_operators = _OperatorCache()


def clear_cache():
    _operators.clear()


def assemble_step(
    pd: ProblemData,
    k: int,
    s_k: float,
    m: int,
    tau: float,
    u_prev: Callable,
    gs_k: float,
    chi_k: float,
    g_k: float,
) -> StepSystem:
    """Assemble the Galerkin system for step ``k`` on a uniform mesh of [0, s_k].

    Matrix entries are ``int a_k eta_j' eta_i' - b_k eta_j' eta_i - c_k eta_j eta_i
    + eta_j eta_i / tau``; the right side is ``int (u_prev / tau - f_k) eta_i``
    minus the free-boundary term at ``s_k`` and the flux term at 0.
    """
    mesh, xq, wq, hats, sub, diag, sup, f_load, factor = _operators.get(
        pd, k, float(s_k), m, float(tau))
    up = np.asarray(u_prev(xq.ravel()), dtype=float).reshape(xq.shape)
    load = up * (wq / tau)
    rhs = -f_load.copy()
    rhs[:-1] += load @ hats[:, 0]
    rhs[1:] += load @ hats[:, 1]
    rhs[-1] -= gs_k - chi_k
    rhs[0] -= g_k
    return StepSystem(sub, diag, sup, rhs, mesh, k, factor)


def thomas_factor(sub, diag, sup):
    """Forward-elimination factors of a tridiagonal matrix, or None on a tiny pivot.

    A pivot is rejected when ``|pivot| < 1e-14 * row scale``.
    """
    n = len(diag)
    a = sub.tolist()
    b = diag.tolist()
    c = sup.tolist()
    cp = [0.0] * n
    den = [0.0] * n
    for i in range(n):
        scale = max(abs(b[i]), abs(a[i - 1]) if i > 0 else 0.0, abs(c[i]) if i < n - 1 else 0.0)
        d = b[i] - (a[i - 1] * cp[i - 1] if i > 0 else 0.0)
        if scale == 0.0 or abs(d) < 1e-14 * scale:
            return None
        den[i] = d
        if i < n - 1:
            cp[i] = c[i] / d
    return a, cp, den


def thomas_solve(factor, rhs) -> np.ndarray:
    a, cp, den = factor
    d = rhs.tolist()
    n = len(d)
    dp = [0.0] * n
    dp[0] = d[0] / den[0]
    for i in range(1, n):
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / den[i]
    x = dp
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def _residual_ok(sys: StepSystem, u) -> bool:
    if u is None or not np.all(np.isfinite(u)):
        return False
    r = np.max(np.abs(sys.matvec(u) - sys.rhs))
    return bool(r <= 1e-10 * (1.0 + np.max(np.abs(sys.rhs))))


def solve_step(sys: StepSystem) -> np.ndarray:
    """Solve a step system by the Thomas algorithm with a dense pivoted fallback."""
    factor = sys.factor if sys.factor is not None else thomas_factor(sys.sub, sys.diag, sys.sup)
    u = None if factor is None else thomas_solve(factor, sys.rhs)
    if _residual_ok(sys, u):
        return u
    try:
        u = np.linalg.solve(sys.dense(), sys.rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"singular step system: {exc}", sys.k) from exc
    if not _residual_ok(sys, u):
        raise SingularSystemError("step system could not be solved to tolerance", sys.k)
    return u


def step_residual(sys: StepSystem, u) -> np.ndarray:
    return sys.matvec(u) - sys.rhs


def weak_step_residual(pd: ProblemData, k: int, mesh: Mesh1D, u_nodal, tau: float,
                       u_prev: Callable, gs_k: float, chi_k: float, g_k: float) -> np.ndarray:
    """Evaluate the step identity for every hat function directly from the FE function.

    Returns one residual per node: the identity's left side with ``eta``
    set to that node's hat function.
    """
    xq, wq, hats = element_quadrature(mesh)
    a, b, c, f = _coefficients(pd, k, tau, xq)
    u = np.asarray(u_nodal, dtype=float)
    h = np.diff(mesh.nodes)
    uq = u[:-1, None] * hats[None, :, 0] + u[1:, None] * hats[None, :, 1]
    du = ((u[1:] - u[:-1]) / h)[:, None]
    up = np.asarray(u_prev(xq.ravel()), dtype=float).reshape(xq.shape)
    # integrand = A(x) eta' + B(x) eta
    A = a * du * wq
    B = (-b * du - c * uq + f + (uq - up) / tau) * wq
    res = np.zeros(len(u))
    left = -A.sum(axis=1) / h + B @ hats[:, 0]
    right = A.sum(axis=1) / h + B @ hats[:, 1]
    res[:-1] += left
    res[1:] += right
    res[-1] += gs_k - chi_k
    res[0] += g_k
    return res
