"""Discrete cost functional and its fine-grid approximation of the continuous cost."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import ContinuousControl, DiscreteControl, sample_Qn
from .problem import ProblemData, steklov_average
from .state import DiscreteStateVector, solve_state

__all__ = [
    "CostBreakdown",
    "Measurements",
    "measurements_from_problem",
    "synthesize_measurements",
    "boundary_traces",
    "discrete_cost",
    "continuous_cost_estimate",
]


@dataclass(frozen=True)
class CostBreakdown:
    flux_term: float
    phase_term: float

    @property
    def total(self) -> float:
        return self.flux_term + self.phase_term

    def to_dict(self) -> dict:
        return {"total": self.total, "flux_term": self.flux_term, "phase_term": self.phase_term}


@dataclass(frozen=True, eq=False)
class Measurements:
    """Per-step target traces ``nu_k`` (at x = 0) and ``mu_k`` (at x = s_k), k = 1..n."""

    nu: np.ndarray
    mu: np.ndarray

    @property
    def n(self) -> int:
        return len(self.nu)


def measurements_from_problem(pd: ProblemData, n: int) -> Measurements:
    """Slab means of the problem's nu and mu on the grid with n steps."""
    tau = pd.T / n
    nu = np.array([steklov_average(pd.nu, k, tau) for k in range(1, n + 1)])
    mu = np.array([steklov_average(pd.mu, k, tau) for k in range(1, n + 1)])
    return Measurements(nu, mu)


def boundary_traces(dsv: DiscreteStateVector) -> tuple[np.ndarray, np.ndarray]:
    """State values u(0; k) and u(s_k; k) for k = 1..n."""
    left = np.array([sl.nodal[0] for sl in dsv.slices[1:]])
    right = np.array([sl.nodal[-1] for sl in dsv.slices[1:]])
    return left, right


def synthesize_measurements(dc: DiscreteControl, pd: ProblemData, m: int,
                            which: str = "nu_mu") -> Measurements:
    """Targets produced by the discrete forward model itself.

    ``which="nu"`` replaces only the flux-side target and keeps the problem's
    mu; ``"nu_mu"`` replaces both.
    """
    if which not in ("nu", "nu_mu"):
        raise ValueError("which must be 'nu' or 'nu_mu'")
    left, right = boundary_traces(solve_state(dc, pd, m))
    if which == "nu":
        return Measurements(left, measurements_from_problem(pd, dc.n).mu)
    return Measurements(left, right)


def discrete_cost(dsv: DiscreteStateVector, dc: DiscreteControl, pd: ProblemData,
                  data: Measurements | None = None) -> CostBreakdown:
    """Weighted squared trace mismatch summed over steps k = 1..n."""
    if dsv.n != dc.n:
        raise ValueError(f"state has n={dsv.n} but control has n={dc.n}")
    if data is None:
        data = measurements_from_problem(pd, dc.n)
    elif data.n != dc.n:
        raise ValueError(f"measurements have n={data.n} but control has n={dc.n}")
    left, right = boundary_traces(dsv)
    tau = dc.tau
    flux = pd.beta0 * tau * float(np.sum((left - data.nu) ** 2))
    phase = pd.beta1 * tau * float(np.sum((right - data.mu) ** 2))
    return CostBreakdown(flux, phase)


def continuous_cost_estimate(v: ContinuousControl, pd: ProblemData, n_fine: int, m: int,
                             data: Measurements | None = None) -> CostBreakdown:
    """Approximate the continuous cost of ``v`` by the discrete cost of its samples.

    The discrete costs of the sampled control converge to the continuous
    cost as the grid is refined, so ``n_fine`` should be several times the
    working resolution. ``data``, if given, must be on the ``n_fine`` grid.
    """
    if n_fine < 4:
        raise ValueError("n_fine must be at least 4")
    dc = sample_Qn(v, n_fine)
    return discrete_cost(solve_state(dc, pd, m), dc, pd, data)
