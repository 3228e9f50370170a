"""``rapid-purify`` command-line runner.

Every subcommand writes a CSV whose ``#`` header lists the fully resolved
configuration. That header is itself a valid config file, so

    rapid-purify fig2 --config previous.csv

reproduces ``previous.csv`` exactly. Precedence is flag > config file > default.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__, analytic, critline, montecarlo
from .bloch import SCHEMES, SimParams
from .policies import BangBangUnbiased, FixedBasisCritical, IdealUnbounded, NoFeedback

SUBCOMMANDS = ("fig1", "fig2", "raw-curve", "trajectory", "critline")
POLICIES = ("none", "ideal", "bangbang", "critical")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str = "fig1"
    k: float = 1.0
    dt: float | None = None
    lam: float = 20.0
    lambda_grid: str = "1,2,5,10,20,50,100,200"
    target: float = 0.05
    targets: str = "0.2,0.1,0.05,0.02,0.01,0.001,0.0001,1e-05,1e-06"
    n: int = 4000
    seed: int = 1
    max_time: float | None = None
    passage_def: str = "mean-crossing"
    record: bool = False
    stride: int = 10
    policy: str = "none"
    index: int = 0
    points: int = 21
    max_iters: int = 200
    nodes: int = critline.DEFAULT_NODES
    angle_tol: float = critline.DEFAULT_ANGLE_TOL
    arrival: str = "combined"
    scheme: str = "kraus"
    line: str | None = None

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.passage_def not in montecarlo.PASSAGE_DEFS:
            raise ConfigError(f"passage-def must be one of {montecarlo.PASSAGE_DEFS}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if self.arrival not in critline.ARRIVALS:
            raise ConfigError(f"arrival must be one of {critline.ARRIVALS}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.stride < 1 or self.points < 1 or self.max_iters < 0 or self.nodes < 2:
            raise ConfigError("stride, points, nodes must be positive and max-iters nonnegative")
        try:
            self.sim_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for t in self.target_grid():
            if not 0 < t < 0.5:
                raise ConfigError(f"target {t!r} outside (0, 0.5)")
        if any(not x >= 0 for x in self.lambda_multiples()):
            raise ConfigError("lambda grid must be nonnegative")

    def sim_params(self) -> SimParams:
        return SimParams(k=self.k, dt=self.dt, lam=self.lam,
                         target_impurity=self.target, max_time=self.max_time,
                         master_seed=self.seed, scheme=self.scheme)

    def lambda_multiples(self) -> list[float]:
        return _float_list(self.lambda_grid)

    def target_grid(self) -> list[float]:
        return _float_list(self.targets)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}") from exc


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
# keys kept out of the header: they do not affect the numbers
_UNRECORDED = {"out", "config", "workers"}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    if value in ("None", ""):
        return None
    if "bool" in kind:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} expects a boolean, got {value!r}")
    try:
        if kind.startswith("int"):
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key} expects a number, got {value!r}") from exc
    return value


def read_config_file(path: str) -> dict:
    """Flat ``key=value`` lines; leading ``#`` and blank or unparsable lines are ignored."""
    out = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip().lstrip("#").strip()
            if "=" not in line:
                continue
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key in _FIELD_TYPES:
                out[key] = _coerce(key, value)
    return out


def header_lines(cfg: ExperimentConfig) -> list[str]:
    lines = [f"# rapid-purify {__version__} {cfg.subcommand}"]
    for key, value in sorted(asdict(cfg).items()):
        if key in _UNRECORDED:
            continue
        if isinstance(value, float):
            value = repr(value)
        lines.append(f"# {key}={value}")
    return lines


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(cfg: ExperimentConfig, columns, rows, fh) -> None:
    for line in header_lines(cfg):
        fh.write(line + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])


# -- experiments -----------------------------------------------------------


def run_fig1(cfg: ExperimentConfig, workers: int = 1):
    rows = []
    for target in cfg.target_grid():
        try:
            rows.append((target, analytic.speedup_bound(target, cfg.k), "ok"))
        except ArithmeticError as exc:
            rows.append((target, math.nan, f"error: {exc}"))
    return ["target_impurity", "speedup_bound", "status"], rows


def run_fig2(cfg: ExperimentConfig, workers: int = 1):
    params = cfg.sim_params()
    lambdas = [m * cfg.k for m in cfg.lambda_multiples()]
    if not lambdas:
        raise ConfigError("lambda grid is empty")
    points = montecarlo.speedup_vs_lambda(lambdas, params, cfg.n, cfg.target, cfg.passage_def, workers=workers)
    bound = analytic.speedup_bound(cfg.target, cfg.k)
    rows = [
        (p.lam / cfg.k, p.speedup, p.stderr, bound, 1.0, p.censored_fraction, p.flagged)
        for p in points
    ]
    return ["lambda_over_k", "speedup", "stderr", "bound", "unity", "censored_fraction", "flagged"], rows


def run_raw_curve(cfg: ExperimentConfig, workers: int = 1):
    params = cfg.sim_params()
    times, paths, _ = montecarlo.impurity_paths(NoFeedback(), params, cfg.n, workers=workers)
    steps = np.unique(np.round(np.linspace(0, len(times) - 1, cfg.points)).astype(int))
    rows = []
    for j in steps:
        t = float(times[j])
        col = paths[j]
        rows.append((
            t,
            analytic.raw_impurity(t, cfg.k),
            analytic.optimal_impurity(t, cfg.k),
            float(col.mean()),
            float(col.std(ddof=1) / math.sqrt(cfg.n)),
        ))
    return ["t", "raw_impurity", "optimal_impurity", "mc_mean", "mc_stderr"], rows


def _load_line(cfg: ExperimentConfig) -> critline.CriticalLine:
    if cfg.line:
        with open(cfg.line) as fh:
            return critline.read_line_csv(fh)
    return critline.CriticalLine.plane_then_rotate(cfg.target, cfg.nodes)


def _policy(cfg: ExperimentConfig):
    if cfg.policy == "none":
        return NoFeedback()
    if cfg.policy == "ideal":
        return IdealUnbounded()
    if cfg.policy == "bangbang":
        return BangBangUnbiased(cfg.lam)
    return FixedBasisCritical(cfg.lam, _load_line(cfg))


def run_trajectory(cfg: ExperimentConfig, workers: int = 1):
    params = cfg.sim_params()
    rec = montecarlo.run_trajectory(_policy(cfg), params, cfg.index, stride=cfg.stride,
                                    record=cfg.record, stop_at_target=False)
    columns = ["t", "delta", "a_z", "impurity"]
    cols = [rec.times, rec.delta, rec.a_z, rec.impurities]
    if cfg.record:
        columns.append("dr")
        cols.append(rec.record)
    return columns, list(zip(*cols))


def run_critline(cfg: ExperimentConfig, workers: int = 1):
    params = cfg.sim_params()
    if not params.lam > 0:
        raise ConfigError("critline needs lambda > 0")
    initial = _load_line(cfg)
    kw = dict(angle_tol=cfg.angle_tol, arrival=cfg.arrival, workers=workers)
    res = critline.optimize(initial, params, cfg.n, cfg.seed, cfg.max_iters, **kw)
    baseline = critline.CriticalLine.plane_then_rotate(cfg.target, len(initial.psi))
    opt_mean, base_mean, paired = critline.compare(res.line, baseline, params, cfg.n, cfg.seed, **kw)
    opt_st = critline.time_to_target(res.line, params, cfg.n, cfg.seed, **kw)
    rows = [
        (p, r, r0, base_mean, opt_mean, opt_st.stderr, paired, res.converged)
        for p, r, r0 in zip(res.line.psi, res.line.radius, initial.radius)
    ]
    columns = ["psi", "radius", "initial_radius", "baseline_objective", "optimized_objective",
               "stderr", "paired_stderr", "converged"]
    return columns, rows


RUNNERS = {
    "fig1": run_fig1,
    "fig2": run_fig2,
    "raw-curve": run_raw_curve,
    "trajectory": run_trajectory,
    "critline": run_critline,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; here 2 means a numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    common.add_argument("--config", default=None, help="flat key=value file (a previous CSV header works)")
    common.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    common.add_argument("--workers", type=int, default=1, help="worker processes; never changes results")
    common.add_argument("--k", type=float, default=S, help="measurement strength")
    common.add_argument("--dt", type=float, default=S, help="integrator step (default 1e-3/k)")
    common.add_argument("--lambda", dest="lam", type=float, default=S, help="maximum rotation rate")
    common.add_argument("--lambda-grid", dest="lambda_grid", default=S, help="comma list of lambda/k for fig2")
    common.add_argument("--target", type=float, default=S, help="target impurity")
    common.add_argument("--targets", default=S, help="comma list of target impurities for fig1")
    common.add_argument("--n", type=int, default=S, help="number of trajectories")
    common.add_argument("--seed", type=int, default=S, help="master seed")
    common.add_argument("--max-time", dest="max_time", type=float, default=S, help="simulation horizon")
    common.add_argument("--passage-def", dest="passage_def", choices=montecarlo.PASSAGE_DEFS, default=S)
    common.add_argument("--record", action="store_const", const=True, default=S,
                        help="emit the measurement record increments")
    common.add_argument("--stride", type=int, default=S, help="output every STRIDE steps (trajectory)")
    common.add_argument("--policy", choices=POLICIES, default=S, help="policy for trajectory")
    common.add_argument("--index", type=int, default=S, help="trajectory index (trajectory)")
    common.add_argument("--points", type=int, default=S, help="time-grid points (raw-curve)")
    common.add_argument("--max-iters", dest="max_iters", type=int, default=S, help="simplex iterations (critline)")
    common.add_argument("--nodes", type=int, default=S, help="critical-line nodes (critline)")
    common.add_argument("--angle-tol", dest="angle_tol", type=float, default=S, help="arrival angle tolerance")
    common.add_argument("--arrival", choices=critline.ARRIVALS, default=S, help="arrival criterion")
    common.add_argument("--scheme", choices=SCHEMES, default=S, help="measurement integrator")
    common.add_argument("--line", default=S, help="initial critical line CSV (critline, trajectory)")

    parser = _Parser(prog="rapid-purify", description="Rapid qubit purification experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "fig1": "speed-up bound versus target impurity",
        "fig2": "bang-bang speed-up versus feedback strength",
        "raw-curve": "no-feedback mean impurity: quadrature, ideal curve and Monte Carlo",
        "trajectory": "a single sampled trajectory",
        "critline": "optimize the fixed-basis switching line",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            values.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
    for key in _FIELD_TYPES:
        if key in vars(args) and key != "subcommand":
            values[key] = getattr(args, key)
    values["subcommand"] = args.subcommand
    cfg = ExperimentConfig(**values)
    cfg.validate()
    # freeze derived defaults so the header is self-contained
    params = cfg.sim_params()
    cfg.dt, cfg.max_time = params.dt, params.max_time
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        columns, rows = RUNNERS[cfg.subcommand](cfg, workers=args.workers)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"rapid-purify: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"rapid-purify: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    buf = io.StringIO()
    write_csv(cfg, columns, rows, buf)
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            print(f"rapid-purify: cannot write {args.out!r}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
