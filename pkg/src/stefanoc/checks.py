"""Self-check suites run by ``stefanoc verify``.

Each suite returns a :class:`SuiteResult`; none of them raise on a failed
check, only on programming errors.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .control import (AnalyticControl, DiscreteControl, continuous_norms, lift_Pn, norm_w21,
                      norm_w22, sample_Qn)
from .fem import StabilityWarning, solve_step, stability_threshold, step_residual, weak_step_residual
from .problem import ProblemData, sup_coefficients, trace_averages
from .state import extend_eval, extension_nodes, solve_state

__all__ = [
    "SuiteResult",
    "random_smooth_control",
    "check_control_norms",
    "check_lift_smoothness",
    "check_fem_oracles",
    "check_reflection_bounds",
    "run_all",
    "manufactured_problem",
    "MANUFACTURED_TRUTH",
]

MANUFACTURED_TRUTH = ("1+t/4", "1")


def manufactured_problem(**overrides) -> ProblemData:
    """Problem whose exact solution is u = x^2 + x + 2t with s = 1 + t/4 and g = 1."""
    d = dict(a="1", b="0", c="0", f="0", phi="x^2+x", gamma="1", chi="2*x+1+1/4",
             mu="(1+t/4)^2+(1+t/4)+2*t", nu="2*t", a0=1.0, s0=1.0, T=1.0, l=2.0,
             delta=0.5, R=2.0)
    d.update(overrides)
    return ProblemData.from_dict(d)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    checks: int
    failures: tuple = ()

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = "" if self.passed else f"; first failure: {self.failures[0]}"
        return f"[{status}] {self.name} ({self.checks} checks{tail})"


class _Tally:
    def __init__(self, name):
        self.name = name
        self.count = 0
        self.failures = []

    def check(self, ok: bool, what: str):
        self.count += 1
        if not ok:
            self.failures.append(what)

    def result(self) -> SuiteResult:
        return SuiteResult(self.name, not self.failures, self.count, tuple(self.failures))


def random_smooth_control(rng: np.random.Generator, s0: float, T: float, cap: float,
                          delta: float | None = None, l: float | None = None) -> AnalyticControl:
    """A random trigonometric-polynomial control with s(0) = s0 and norms at most ``cap``.

    The perturbation is scaled down until both continuous norms are within
    ``cap`` and, when given, ``s`` stays inside [delta, l].
    """
    n_modes = int(rng.integers(1, 4))
    amp = rng.normal(size=n_modes)
    freq = rng.uniform(0.2, 3.0, size=n_modes) * math.pi / T
    lin = rng.normal()
    g_amp = rng.normal(size=3)
    g_freq = rng.uniform(0.2, 3.0) * math.pi / T

    def make(alpha):
        def s(t):
            t = np.asarray(t, dtype=float)
            return s0 + alpha * (lin * t / T + np.sum(amp[:, None] * np.sin(freq[:, None] * np.ravel(t)),
                                                      axis=0).reshape(t.shape))

        def ds(t):
            t = np.asarray(t, dtype=float)
            return alpha * (lin / T + np.sum((amp * freq)[:, None] * np.cos(freq[:, None] * np.ravel(t)),
                                             axis=0).reshape(t.shape))

        def d2s(t):
            t = np.asarray(t, dtype=float)
            return -alpha * np.sum((amp * freq**2)[:, None] * np.sin(freq[:, None] * np.ravel(t)),
                                   axis=0).reshape(t.shape)

        def g(t):
            t = np.asarray(t, dtype=float)
            return alpha * (g_amp[0] + g_amp[1] * t / T + g_amp[2] * np.cos(g_freq * t))

        def dg(t):
            t = np.asarray(t, dtype=float)
            return alpha * (g_amp[1] / T - g_amp[2] * g_freq * np.sin(g_freq * t))

        return AnalyticControl(s, g, T, ds=ds, d2s=d2s, dg=dg)

    alpha = 1.0
    tt = np.linspace(0.0, T, 513)
    for _ in range(200):
        v = make(alpha)
        w22, w21 = continuous_norms(v, 512)
        s = v.s(tt)
        inside = (delta is None or s.min() >= delta) and (l is None or s.max() <= l)
        if max(w22, w21) <= cap and inside:
            return v
        alpha *= 0.7
    raise RuntimeError("could not scale a random control into the requested ball")


def check_control_norms(seed: int = 0, trials: int = 40, R: float = 2.0, eps: float = 0.25,
                        n_list=(8, 32, 128)) -> SuiteResult:
    """Sampling inequality for random smooth controls and closed-form norm values."""
    tally = _Tally("control norms")
    rng = np.random.default_rng(seed)
    cap = (R - eps) ** 2
    for i in range(trials):
        v = random_smooth_control(rng, s0=1.0, T=1.0, cap=cap)
        for n in n_list:
            dc = sample_Qn(v, n)
            lhs = max(norm_w22(dc.s_vals, dc.tau), norm_w21(dc.g_vals, dc.tau))
            tally.check(lhs <= cap + R**2 * dc.tau + 1e-10,
                        f"trial {i}, n={n}: {lhs:.6g} > {cap + R**2 * dc.tau:.6g}")
    # constant sequence c on [0, 1]: only the L2 part survives, equal to c^2
    for c in (0.0, 1.0, 2.5):
        tally.check(abs(norm_w22(np.full(9, c), 1 / 8) - c * c) <= 1e-12, f"w22 of constant {c}")
        tally.check(abs(norm_w21(np.full(9, c), 1 / 8) - c * c) <= 1e-12, f"w21 of constant {c}")
    return tally.result()


def check_lift_smoothness(seed: int = 0, trials: int = 25) -> SuiteResult:
    """C^1 continuity at knots, midpoint interpolation and flux interpolation."""
    tally = _Tally("lift smoothness")
    rng = np.random.default_rng(seed)
    for i in range(trials):
        n = int(rng.integers(2, 65))
        T = float(rng.uniform(0.5, 2.0))
        dc = DiscreteControl(1.0 + 0.3 * rng.random(n + 1), rng.normal(size=n + 1), T)
        lift = lift_Pn(dc)
        k = np.arange(1, n)
        tk = dc.times[1:-1]
        jump0 = np.abs(lift.piece_eval(k, tk, 0) - lift.piece_eval(k + 1, tk, 0))
        jump1 = np.abs(lift.piece_eval(k, tk, 1) - lift.piece_eval(k + 1, tk, 1))
        tally.check(float(np.max(jump0, initial=0.0)) <= 1e-12, f"trial {i}: value jump")
        tally.check(float(np.max(jump1, initial=0.0)) <= 1e-12, f"trial {i}: slope jump")
        mids = 0.5 * (dc.s_vals[:-1] + dc.s_vals[1:])
        tally.check(bool(np.array_equal(np.asarray(lift.s(dc.times[1:])), mids)), f"trial {i}: midpoints")
        tally.check(bool(np.array_equal(np.asarray(lift.g(dc.times)), dc.g_vals)),
                    f"trial {i}: flux at knots")
    return tally.result()


def check_fem_oracles(pd: ProblemData | None = None, seed: int = 0) -> SuiteResult:
    """Zero data gives zero state, step residuals vanish and the manufactured error shrinks."""
    tally = _Tally("fem oracles")
    zero = manufactured_problem(phi="0", chi="0", mu="0", nu="0", gamma="0", b="0.3", c="-0.2")
    dc = DiscreteControl(np.linspace(1.0, 1.2, 17), np.zeros(17), 1.0)
    u = solve_state(dc, zero, 24)
    tally.check(max(float(np.max(np.abs(sl.nodal))) for sl in u.slices) <= 1e-12, "zero data")

    problems = [manufactured_problem()] + ([pd] if pd is not None else [])
    for j, p in enumerate(problems):
        M = sup_coefficients(p)
        n = max(8, int(math.ceil(2 * p.T / min(stability_threshold(M, p.a0), p.T))))
        s = np.full(n + 1, p.s0)
        dc = DiscreteControl(s, np.zeros(n + 1), p.T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            dsv = solve_state(dc, p, 16)
        tau = dc.tau
        gs, ch = trace_averages(dsv.lift, p.gamma, p.chi, np.arange(1, n + 1), tau)
        worst = 0.0
        for k in range(1, n + 1):
            prev = dsv.slices[k - 1]
            r = weak_step_residual(p, k, dsv.slices[k].mesh, dsv.slices[k].nodal, tau,
                                   lambda x, q=prev: extend_eval(q, x, p.l, p.delta),
                                   float(gs[k - 1]), float(ch[k - 1]), dsv.lift.g_average(k))
            worst = max(worst, float(np.max(np.abs(r))))
        tally.check(worst <= 1e-9, f"problem {j}: step residual {worst:.3g}")

    mp = manufactured_problem()
    v = AnalyticControl(*MANUFACTURED_TRUTH, T=1.0)
    errs = []
    for n, m in ((8, 16), (16, 32), (32, 64)):
        dsv = solve_state(sample_Qn(v, n), mp, m)
        errs.append(max(float(np.max(np.abs(sl.nodal - (sl.nodes**2 + sl.nodes + 2 * sl.k * dsv.tau))))
                        for sl in dsv.slices))
    tally.check(errs[0] > errs[1] > errs[2], f"manufactured errors not decreasing: {errs}")
    return tally.result()


def _trapezoid_sq(x, y) -> float:
    return float(np.sum(0.5 * (y[1:] ** 2 + y[:-1] ** 2) * np.diff(x)))


def extension_energy(sl, l: float, delta: float) -> tuple[float, float]:
    """(integral of the squared extension over [0, l], integral of u^2 over [0, s_k])."""
    pts = extension_nodes(sl, l)
    ext = np.asarray(extend_eval(sl, pts, l, delta))
    return _trapezoid_sq(pts, ext), _trapezoid_sq(sl.nodes, sl.nodal)


def check_reflection_bounds(pd: ProblemData | None = None, n: int = 16, m: int = 32) -> SuiteResult:
    """Extension energy over [0, l] is at most 2^N times the slice energy."""
    tally = _Tally("reflection bounds")
    cases = [(manufactured_problem(), sample_Qn(AnalyticControl(*MANUFACTURED_TRUTH, T=1.0), n))]
    if pd is not None:
        cases.append((pd, DiscreteControl(np.full(n + 1, pd.s0), np.zeros(n + 1), pd.T)))
    for j, (p, dc) in enumerate(cases):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            dsv = solve_state(dc, p, m)
        bound = 2.0 ** p.reflection_depth
        for sl in dsv.slices:
            big, small = extension_energy(sl, p.l, p.delta)
            tally.check(big <= bound * small * (1 + 1e-12) + 1e-300,
                        f"case {j}, slice {sl.k}: {big:.6g} > {bound:g} * {small:.6g}")
    return tally.result()


def run_all(pd: ProblemData | None = None, seed: int = 0) -> list[SuiteResult]:
    return [
        check_control_norms(seed),
        check_lift_smoothness(seed),
        check_fem_oracles(pd, seed),
        check_reflection_bounds(pd),
    ]
