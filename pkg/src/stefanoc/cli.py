"""Command-line entry point: forward solves, inversion, self-checks and sweeps.

Exit status 0 on success, 1 for configuration or usage errors, 2 for
runtime failures and 3 when a verify suite fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .analysis import SWEEP_COLUMNS, convergence_sweep, energy_report
from .checks import run_all
from .control import AnalyticControl, DiscreteControl, default_control, sample_Qn
from .cost import continuous_cost_estimate, discrete_cost, synthesize_measurements
from .expr import ExpressionError
from .optimize import METHODS, OptOptions, minimize
from .outputs import controls_rows, state_rows, write_csv, write_json
from .problem import ProblemData
from .state import solve_state

__all__ = ["ConfigError", "RunConfig", "RunSettings", "TruthSpec", "load_config", "main", "build_parser"]

logger = logging.getLogger("stefanoc")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3

_OPT_FIELDS = ("max_iters", "grad_step", "step0", "tol", "penalty_weight", "method", "seed",
               "optimize_s", "optimize_g")


class ConfigError(Exception):
    def __init__(self, fld: str, message: str):
        super().__init__(f"config field '{fld}': {message}")
        self.field = fld


@dataclass(frozen=True)
class TruthSpec:
    s_expr: str
    g_expr: str

    def control(self, T: float) -> AnalyticControl:
        return AnalyticControl(self.s_expr, self.g_expr, T)


@dataclass(frozen=True)
class RunSettings:
    n: int = 16
    m: int = 64
    n_fine: int | None = None
    n_list: tuple = (4, 8, 16, 32)
    m_per_n: int = 2
    synthesize: str = "nu"
    init_s: str | None = None
    init_g: str | None = None
    optimizer: OptOptions = field(default_factory=OptOptions)

    @property
    def fine(self) -> int:
        return self.n_fine if self.n_fine is not None else 4 * self.n

    def to_dict(self) -> dict:
        out = {"n": self.n, "m": self.m, "n_fine": self.fine, "n_list": list(self.n_list),
               "m_per_n": self.m_per_n, "synthesize": self.synthesize,
               "optimizer": self.optimizer.to_dict()}
        init = {k: v for k, v in (("s", self.init_s), ("g", self.init_g)) if v is not None}
        if init:
            out["init"] = init
        return out


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemData
    run: RunSettings
    truth: TruthSpec | None
    output: str

    def to_dict(self) -> dict:
        out = {"problem": self.problem.to_dict(), "run": self.run.to_dict(), "output": self.output}
        if self.truth is not None:
            out["truth"] = {"s_expr": self.truth.s_expr, "g_expr": self.truth.g_expr}
        return out


def _positive_int(d: Mapping, key: str, where: str, default=None):
    if key not in d:
        if default is None:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{where}.{key}", f"must be a positive integer, got {v!r}")
    return v


def _parse_problem(d) -> ProblemData:
    if not isinstance(d, Mapping):
        raise ConfigError("problem", "must be an object")
    for key in ("a0", "s0", "T", "l", "delta", "R"):
        if key not in d:
            raise ConfigError(f"problem.{key}", "missing")
        if isinstance(d[key], bool) or not isinstance(d[key], (int, float)):
            raise ConfigError(f"problem.{key}", f"must be a number, got {d[key]!r}")
    for key in ("a", "b", "c", "f", "phi", "gamma", "chi", "mu", "nu"):
        if key in d and not isinstance(d[key], (str, int, float)):
            raise ConfigError(f"problem.{key}", "must be an expression string or number")
    try:
        return ProblemData.from_dict(d)
    except ExpressionError as exc:
        bad = _first_bad_expression(d)
        raise ConfigError(f"problem.{bad}", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("problem", str(exc)) from exc


def _first_bad_expression(d) -> str:
    from .expr import parse_expression

    for key in ("a", "b", "c", "f", "gamma", "chi"):
        try:
            parse_expression(str(d.get(key, "0")), arity=2)
        except ExpressionError:
            return key
    for key, var in (("phi", "x"), ("mu", "t"), ("nu", "t")):
        try:
            parse_expression(str(d.get(key, "0")), arity=1, var=var)
        except ExpressionError:
            return key
    return "?"


def _parse_optimizer(d) -> OptOptions:
    if not isinstance(d, Mapping):
        raise ConfigError("run.optimizer", "must be an object")
    unknown = set(d) - set(_OPT_FIELDS)
    if unknown:
        raise ConfigError(f"run.optimizer.{sorted(unknown)[0]}", "unknown option")
    if "method" in d and d["method"] not in METHODS:
        raise ConfigError("run.optimizer.method", f"must be one of {', '.join(METHODS)}")
    try:
        return OptOptions(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError("run.optimizer", str(exc)) from exc


def _parse_run(d) -> RunSettings:
    if not isinstance(d, Mapping):
        raise ConfigError("run", "must be an object")
    n = _positive_int(d, "n", "run", 16)
    m = _positive_int(d, "m", "run", 64)
    if m < 2:
        raise ConfigError("run.m", "need at least 2 elements")
    n_fine = _positive_int(d, "n_fine", "run", 4 * n)
    if n_fine < 4:
        raise ConfigError("run.n_fine", "must be at least 4")
    n_list = d.get("n_list", [4, 8, 16, 32])
    if (not isinstance(n_list, list) or not n_list
            or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in n_list)
            or any(b <= a for a, b in zip(n_list, n_list[1:]))):
        raise ConfigError("run.n_list", "must be a strictly increasing list of positive integers")
    m_per_n = _positive_int(d, "m_per_n", "run", 2)
    synth = d.get("synthesize", "nu")
    if synth not in ("nu", "nu_mu"):
        raise ConfigError("run.synthesize", "must be 'nu' or 'nu_mu'")
    init = d.get("init", {})
    if not isinstance(init, Mapping) or set(init) - {"s", "g"}:
        raise ConfigError("run.init", "must be an object with optional keys 's' and 'g'")
    opts = _parse_optimizer(d.get("optimizer", {}))
    return RunSettings(n, m, n_fine, tuple(n_list), m_per_n, synth,
                       None if init.get("s") is None else str(init["s"]),
                       None if init.get("g") is None else str(init["g"]), opts)


def _parse_truth(d) -> TruthSpec | None:
    if d is None:
        return None
    if not isinstance(d, Mapping):
        raise ConfigError("truth", "must be an object")
    for key in ("s_expr", "g_expr"):
        if key not in d:
            raise ConfigError(f"truth.{key}", "missing")
        try:
            AnalyticControl(str(d[key]), "0", 1.0)
        except ExpressionError as exc:
            raise ConfigError(f"truth.{key}", str(exc)) from exc
    return TruthSpec(str(d["s_expr"]), str(d["g_expr"]))


def config_from_dict(d: Mapping) -> RunConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("<root>", "must be an object")
    unknown = set(d) - {"problem", "run", "truth", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown section")
    if "problem" not in d:
        raise ConfigError("problem", "missing")
    output = d.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("output", "must be a directory path")
    return RunConfig(_parse_problem(d["problem"]), _parse_run(d.get("run", {})),
                     _parse_truth(d.get("truth")), output)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return config_from_dict(raw)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    run = cfg.run
    opt = {}
    if args.seed is not None:
        opt["seed"] = args.seed
    if args.max_iters is not None:
        opt["max_iters"] = args.max_iters
    if args.tol is not None:
        opt["tol"] = args.tol
    if args.method is not None:
        opt["method"] = args.method
    try:
        opts = replace(run.optimizer, **opt)
    except ValueError as exc:
        raise ConfigError("run.optimizer", str(exc)) from exc
    changes = {"optimizer": opts}
    if args.n is not None:
        if args.n < 1:
            raise ConfigError("run.n", "must be a positive integer")
        changes["n"] = args.n
        if cfg.run.n_fine == 4 * cfg.run.n:
            changes["n_fine"] = 4 * args.n
    if args.m is not None:
        if args.m < 2:
            raise ConfigError("run.m", "need at least 2 elements")
        changes["m"] = args.m
    if getattr(args, "n_list", None):
        try:
            ns = tuple(int(v) for v in args.n_list.split(","))
        except ValueError as exc:
            raise ConfigError("run.n_list", f"bad --n-list {args.n_list!r}") from exc
        if any(v < 1 for v in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("run.n_list", "must be strictly increasing positive integers")
        changes["n_list"] = ns
    out = args.out if args.out is not None else cfg.output
    return replace(cfg, run=replace(run, **changes), output=out)


def _need_truth(cfg: RunConfig) -> TruthSpec:
    if cfg.truth is None:
        raise ConfigError("truth", "this command needs a truth control (s_expr, g_expr)")
    return cfg.truth


def cmd_forward(cfg: RunConfig) -> int:
    pd, run = cfg.problem, cfg.run
    truth = _need_truth(cfg).control(pd.T)
    dc = sample_Qn(truth, run.n)
    dsv = solve_state(dc, pd, run.m)
    out = Path(cfg.output)
    write_csv(out / "state.csv", ("k", "t_k", "i", "x", "u"), state_rows(dsv))
    cost = discrete_cost(dsv, dc, pd)
    fine = continuous_cost_estimate(truth, pd, run.fine, run.m)
    write_json(out / "cost.json", dict(cost.to_dict(), n_fine=run.fine, continuous_estimate=fine.total))
    write_json(out / "energy.json", energy_report(dsv, dc, pd).to_dict())
    print(f"forward n={run.n} m={run.m}: cost {cost.total:.6g} -> {out}")
    return EXIT_OK


def _initial_control(cfg: RunConfig) -> DiscreteControl:
    pd, run = cfg.problem, cfg.run
    base = default_control(pd, run.n)
    if run.init_s is None and run.init_g is None:
        return base
    v = AnalyticControl(run.init_s if run.init_s is not None else pd.s0,
                        run.init_g if run.init_g is not None else 0.0, pd.T)
    return sample_Qn(v, run.n)


def cmd_invert(cfg: RunConfig) -> int:
    pd, run = cfg.problem, cfg.run
    truth = sample_Qn(_need_truth(cfg).control(pd.T), run.n)
    data = synthesize_measurements(truth, pd, run.m, which=run.synthesize)
    init = _initial_control(cfg)
    res = minimize(pd, run.n, run.m, init, run.optimizer, data=data)
    best_cost = discrete_cost(solve_state(res.best, pd, run.m), res.best, pd, data)
    out = Path(cfg.output)
    payload = res.to_dict()
    payload.update(
        cost=best_cost.to_dict(),
        initial_cost=res.history[0].cost,
        n=run.n,
        m=run.m,
        options=run.optimizer.to_dict(),
        synthesize=run.synthesize,
    )
    write_json(out / "result.json", payload)
    write_csv(out / "history.csv", ("iter", "cost", "penalty", "step"),
              ((h.iter, h.cost, h.penalty, h.step) for h in res.history))
    write_csv(out / "recovered_control.csv", ("k", "t_k", "s_k", "g_k"), controls_rows(res.best))
    print(f"invert n={run.n} m={run.m}: cost {res.history[0].cost:.6g} -> {res.best_cost:.6g} "
          f"in {res.iters} iterations ({res.reason}) -> {out}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    results = run_all(cfg.problem, cfg.run.optimizer.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def cmd_sweep(cfg: RunConfig, fixed_m: int | None) -> int:
    pd, run = cfg.problem, cfg.run
    truth = _need_truth(cfg).control(pd.T)
    m_of_n = fixed_m if fixed_m is not None else (lambda n: run.m_per_n * n)
    table = convergence_sweep(pd, truth, run.n_list, m_of_n)
    out = Path(cfg.output)
    write_csv(out / "sweep.csv", SWEEP_COLUMNS, (r.values() for r in table.rows))
    for n, msg in table.failures:
        print(f"sweep row n={n} failed: {msg}", file=sys.stderr)
    print(f"sweep over n={list(run.n_list)}: {len(table.rows)} rows -> {out}")
    return EXIT_OK if not table.failures else EXIT_RUNTIME


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stefanoc", description="Discrete optimal control of a one-phase Stefan problem.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "forward": "solve the state for the truth control and write state, cost and energy",
        "invert": "recover the control from synthetic measurements",
        "verify": "run the built-in invariant suites",
        "sweep": "refinement study at the truth control",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--n", type=int, help="number of time steps")
        p.add_argument("--m", type=int, help="number of elements per step")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--tol", type=float)
        p.add_argument("--method", choices=METHODS)
        if name == "sweep":
            p.add_argument("--n-list", dest="n_list", help="comma-separated increasing step counts")
        p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"stefanoc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        if args.command == "forward":
            return cmd_forward(cfg)
        if args.command == "invert":
            return cmd_invert(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_sweep(cfg, args.m)
    except ConfigError as exc:
        print(f"stefanoc: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to one exit code
        logger.debug("runtime failure", exc_info=True)
        print(f"stefanoc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
