"""Command-line experiment runner: simulation, tuning campaigns, optimizer
comparison, parameter robustness sweeps and the on-off switching study."""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .fopid import ControllerParams, build_controller
from .ga import GAConfig, ga_optimize
from .kriging import KERNELS
from .microgrid import MicrogridParams, SwitchingPolicy, simulate
from .objective import CostSpec, ExpensiveObjective, Problem, expected_cost
from .stochastic import Scenario
from .surrogate_opt import Bounds, InfillConfig, RunHistory, optimize

log = logging.getLogger(__name__)

MODES = ("simulate", "tune", "compare", "robustness", "switching")

# best parameters per (method, controller); PID rows have lam = mu = 1
PRESETS = {
    "exponential-pid": ControllerParams(3.613, 1.822, 0.344),
    "exponential-fopid": ControllerParams(0.984, 3.359, 1.426, 0.677, 0.623),
    "gaussian-pid": ControllerParams(3.666, 1.903, 0.333),
    "gaussian-fopid": ControllerParams(2.461, 5.000, 0.948, 0.926, 0.744),
    "linear-pid": ControllerParams(4.150, 1.250, 0.350),
    "linear-fopid": ControllerParams(2.204, 3.155, 1.233, 0.768, 0.705),
    "spherical-pid": ControllerParams(3.678, 1.351, 0.342),
    "spherical-fopid": ControllerParams(2.450, 4.750, 0.950, 0.860, 0.780),
    "spline-pid": ControllerParams(3.712, 1.391, 0.333),
    "spline-fopid": ControllerParams(0.950, 4.350, 1.250, 0.660, 0.700),
    "ga-pid": ControllerParams(3.124, 1.087, 0.324),
    "ga-fopid": ControllerParams(1.703, 2.166, 1.310, 0.992, 0.654),
}

# (parameter, relative perturbation) for the robustness sweep
ROBUSTNESS_CASES = (
    ("D", 0.70), ("2H", 0.50), ("R", 0.70), ("T_FC", 0.20),
    ("T_g", 0.70), ("T_t", 0.70), ("T_IC", 0.005), ("T_IN", 0.50),
)

COMPARE_COLUMNS = ("method", "controller", "n_runs", "n_evals", "J_min", "J_mean", "J_std",
                   "J_median")
CONVERGENCE_COLUMNS = ("method", "controller", "eval_index", "best", "median", "mean", "worst")
RUNS_COLUMNS = ("method", "controller", "run", "seed", "J_final", "Kp", "Ki", "Kd", "lam", "mu")
ROBUSTNESS_COLUMNS = ("parameter", "perturbation", "controller", "J_nominal", "J_increase",
                      "J_decrease")
GATES_COLUMNS = ("t", "state")

_CONTROLLER_KEYS = ("Kp", "Ki", "Kd", "lam", "mu")


@dataclass
class RunConfig:
    mode: str = "simulate"
    controller: str = "fopid"
    kernel: str = "spline"
    optimizer: str = "kriging"
    n_runs: int = 5
    seed: int = 0
    budget: int = 150
    out: str = "results"
    preset: Optional[str] = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.controller not in ("pid", "fopid", "both"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.kernel not in (*KERNELS, "all"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.optimizer not in ("kriging", "ga", "both"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")

    @property
    def controllers(self) -> list:
        return ["pid", "fopid"] if self.controller == "both" else [self.controller]

    @property
    def kernels(self) -> list:
        return list(KERNELS) if self.kernel == "all" else [self.kernel]

    @property
    def seeds(self) -> list:
        return [self.seed + r for r in range(self.n_runs)]

    @property
    def out_dir(self) -> Path:
        p = Path(self.out)
        p.mkdir(parents=True, exist_ok=True)
        return p


# ---------------------------------------------------------------- overrides

def _parse_value(text: str):
    low = text.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text.strip()


def _split_overrides(overrides: dict):
    targets = {"plant": {f.name for f in fields(MicrogridParams)} | {"2H"},
               "cost": {f.name for f in fields(CostSpec)},
               "infill": {f.name for f in fields(InfillConfig)},
               "policy": {"deadband", "min_on_time"},
               "scenario": {"noise", "t_end", "dt"},
               "problem": {"n_rep"},
               "controller": set(_CONTROLLER_KEYS)}
    out = {k: {} for k in targets}
    for key, value in overrides.items():
        for group, names in targets.items():
            if key in names:
                out[group]["M" if key == "2H" else key] = value
                break
        else:
            raise ValueError(f"unknown override {key!r}")
    return out


def build_problem(cfg: RunConfig, policy: SwitchingPolicy = SwitchingPolicy()) -> Problem:
    o = _split_overrides(cfg.overrides)
    kw = {k: float(v) for k, v in o["plant"].items()}
    scen = Scenario(**o["scenario"])
    policy = replace(policy, **o["policy"])
    problem = Problem(params=MicrogridParams(**kw), scenario=scen,
                      cost=CostSpec(**o["cost"]), policy=policy)
    if o["problem"]:
        problem = replace(problem, n_rep=int(o["problem"]["n_rep"]))
    return problem


def infill_config(cfg: RunConfig) -> InfillConfig:
    kw = _split_overrides(cfg.overrides)["infill"]
    if "weights" in kw and isinstance(kw["weights"], str):
        kw["weights"] = tuple(float(w) for w in kw["weights"].split(","))
    return InfillConfig(**kw)


def resolve_controller(cfg: RunConfig, controller: Optional[str] = None) -> ControllerParams:
    """Preset row (``--preset spline`` picks the row matching the controller)
    with per-gain overrides applied."""
    controller = controller or (cfg.controller if cfg.controller != "both" else "fopid")
    name = cfg.preset or "spline"
    if name not in PRESETS:
        name = f"{name}-{controller}"
    if name not in PRESETS:
        raise ValueError(f"unknown preset {cfg.preset!r}; choose from {sorted(PRESETS)}")
    params = PRESETS[name]
    gains = {k: float(v) for k, v in _split_overrides(cfg.overrides)["controller"].items()}
    return replace(params, **gains) if gains else params


# ---------------------------------------------------------------- campaigns

@dataclass
class Campaign:
    method: str
    controller: str
    seed: int
    history: RunHistory
    n_evals: int

    @property
    def J_final(self) -> float:
        return self.history.best_J

    @property
    def best_params(self) -> ControllerParams:
        return ControllerParams.from_vector(self.history.best_x)


def run_campaign(method: str, controller: str, seed: int, problem: Problem,
                 budget: int = 150, infill: InfillConfig = InfillConfig()) -> Campaign:
    """One tuning run: ``method`` is a kernel name or ``ga``. The noise
    replicates of every evaluation in the run share ``seed``."""
    objective = ExpensiveObjective(problem, run_seed=seed, budget=budget)
    bounds = Bounds.for_controller(controller)
    if method == "ga":
        pop = GAConfig(bounds, seed=seed).population
        if budget % pop:
            raise ValueError(f"GA budget must be a multiple of the population size {pop}")
        _, history = ga_optimize(objective, GAConfig(bounds, generations=budget // pop,
                                                     seed=seed))
    else:
        _, history = optimize(objective, bounds, method, budget, seed, infill)
    if objective.n_evals != budget:
        raise RuntimeError(f"{method}/{controller} used {objective.n_evals} of {budget} evaluations")
    return Campaign(method, controller, seed, history, objective.n_evals)


def compare_statistics(campaigns: list) -> dict:
    J = np.array([c.J_final for c in campaigns])
    return {"n_runs": len(J), "n_evals": sum(c.n_evals for c in campaigns),
            "J_min": float(J.min()), "J_mean": float(J.mean()),
            "J_std": float(J.std()), "J_median": float(np.median(J))}


def convergence_statistics(campaigns: list) -> np.ndarray:
    """Rows ``(eval_index, best, median, mean, worst)`` across runs of the
    best-so-far curves."""
    curves = np.array([c.history.best_so_far for c in campaigns])
    idx = np.arange(curves.shape[1])
    return np.column_stack([idx, curves.min(0), np.median(curves, 0), curves.mean(0),
                            curves.max(0)])


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])
    return path


def run_simulate(cfg: RunConfig) -> Path:
    problem = build_problem(cfg)
    params = resolve_controller(cfg)
    trace = simulate(problem.params, build_controller(params, problem.oustaloup),
                     problem.scenario, problem.policy, seed=cfg.seed)
    path = cfg.out_dir / "trace.csv"
    trace.to_csv(path)
    return path


def run_tune(cfg: RunConfig) -> list:
    problem = build_problem(cfg)
    method = "ga" if cfg.optimizer == "ga" else cfg.kernels[0]
    paths = []
    for controller in cfg.controllers:
        for seed in cfg.seeds:
            c = run_campaign(method, controller, seed, problem, cfg.budget, infill_config(cfg))
            single = len(cfg.seeds) == 1 and len(cfg.controllers) == 1
            d = cfg.out_dir if single else cfg.out_dir / f"{method}_{controller}_seed{seed}"
            d.mkdir(parents=True, exist_ok=True)
            c.history.to_csv(d / "history.csv")
            log.info("%s %s seed %d: J=%.6g at %s", method, controller, seed, c.J_final,
                     np.round(c.history.best_x, 4))
            paths.append(d / "history.csv")
    return paths


def run_compare(cfg: RunConfig) -> dict:
    """Independent campaigns for every (method, controller) pair; writes
    ``compare.csv``, ``convergence.csv`` and ``runs.csv``."""
    problem = build_problem(cfg)
    infill = infill_config(cfg)
    methods = [] if cfg.optimizer == "ga" else cfg.kernels
    if cfg.optimizer in ("ga", "both"):
        methods = methods + ["ga"]
    results = {}
    for method in methods:
        for controller in cfg.controllers:
            results[method, controller] = [
                run_campaign(method, controller, s, problem, cfg.budget, infill)
                for s in cfg.seeds]
    out = cfg.out_dir
    _write_csv(out / "compare.csv", COMPARE_COLUMNS,
               ((m, c, *compare_statistics(v).values()) for (m, c), v in results.items()))
    _write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS,
               ((m, c, int(r[0]), *r[1:]) for (m, c), v in results.items()
                for r in convergence_statistics(v)))
    _write_csv(out / "runs.csv", RUNS_COLUMNS,
               ((m, c, i, k.seed, k.J_final, *k.best_params.as_vector())
                for (m, c), v in results.items() for i, k in enumerate(v)))
    return results


def run_robustness(cfg: RunConfig, pid: Optional[ControllerParams] = None,
                   fopid: Optional[ControllerParams] = None,
                   cases=ROBUSTNESS_CASES) -> list:
    """Expected cost of both controllers with one plant parameter scaled up
    and down; writes ``robustness.csv``."""
    problem = build_problem(cfg)
    controllers = {"pid": pid or resolve_controller(cfg, "pid"),
                   "fopid": fopid or resolve_controller(cfg, "fopid")}
    nominal = {k: expected_cost(p, cfg.seed, problem).J_mean for k, p in controllers.items()}
    rows = []
    for name, frac in cases:
        try:
            plants = [problem.params.perturbed(name, +frac), problem.params.perturbed(name, -frac)]
        except ValueError as exc:
            raise ValueError(f"case {name} +/-{frac}: {exc}") from None
        for key, params in controllers.items():
            J = [expected_cost(params, cfg.seed, replace(problem, params=p)).J_mean
                 for p in plants]
            rows.append((name, frac, key, nominal[key], *J))
    _write_csv(cfg.out_dir / "robustness.csv", ROBUSTNESS_COLUMNS, rows)
    return rows


def run_switching(cfg: RunConfig, policy: Optional[SwitchingPolicy] = None):
    """Closed-loop run with FC/DEG on-off gating; writes ``trace.csv`` and
    ``gates.csv``."""
    policy = policy or SwitchingPolicy(enabled=True)
    problem = build_problem(cfg, policy)
    params = resolve_controller(cfg)
    trace = simulate(problem.params, build_controller(params, problem.oustaloup),
                     problem.scenario, problem.policy, seed=cfg.seed)
    trace.to_csv(cfg.out_dir / "trace.csv")
    _write_csv(cfg.out_dir / "gates.csv", GATES_COLUMNS, trace.gate_events)
    return trace


# ---------------------------------------------------------------- entry point

def read_config_file(path) -> dict:
    """``key = value`` lines under a ``[run]`` section; other keys are
    treated as parameter overrides."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        for k, v in parser.items(section):
            values[k] = v
    return values


def _config_from(values: dict) -> RunConfig:
    own = {f.name for f in fields(RunConfig)} - {"overrides"}
    aliases = {"runs": "n_runs"}
    kw, overrides = {}, {}
    for key, raw in values.items():
        key = aliases.get(key, key)
        if key in own:
            kw[key] = _parse_value(raw) if key in ("n_runs", "seed", "budget") else raw
        else:
            overrides[key] = _parse_value(raw)
    return RunConfig(**kw, overrides=overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="microgrid-fopid", description=__doc__)
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--controller", choices=("pid", "fopid", "both"))
    p.add_argument("--kernel", choices=(*KERNELS, "all"))
    p.add_argument("--optimizer", choices=("kriging", "ga", "both"))
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--out")
    p.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))} or a method name")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a plant, cost, infill, policy or controller parameter")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    values["mode"] = args.mode
    for key in ("controller", "kernel", "optimizer", "runs", "seed", "budget", "out", "preset"):
        v = getattr(args, key)
        if v is not None:
            values[key] = str(v)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = value
    return _config_from(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        build_problem(cfg)
        infill_config(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    runner = {"simulate": run_simulate, "tune": run_tune, "compare": run_compare,
              "robustness": run_robustness, "switching": run_switching}[cfg.mode]
    runner(cfg)
    print(f"wrote results to {cfg.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
