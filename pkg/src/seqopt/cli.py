"""Command-line entry point.

Exit codes: ``solve`` 0 converged / 2 iteration cap / 3 solver failure;
``verify`` 0 pass / 4 fail / 5 inconclusive; 1 for bad usage or input.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import auglag, oracle, penalty, problemlib
from .optimality import CertifyOptions, Condition, certify_trace
from .serialize import TraceFormatError, format_report, read_trace, write_trace

EXIT_OK, EXIT_USAGE, EXIT_MAX_OUTER, EXIT_FAILED = 0, 1, 2, 3
EXIT_VERIFY_FAIL, EXIT_INCONCLUSIVE = 4, 5

CONDITIONS = {"akkt": "AKKT", "akkt2": "AKKT2", "csakkt2": "C_SAKKT2", "ssakkt2": "S_SAKKT2"}

PENALTY_DEFAULTS = dict(eps0=1e-2, theta=0.5, rho0=10.0, gamma=10.0, max_outer=50, stop_tol=1e-8)
AUGLAG_DEFAULTS = dict(
    mu_min=-1e6, mu_max=1e6, omega_max=1e6, tau=0.5, rho1=10.0,
    eps0=1e-2, theta=0.2, gamma=10.0, max_outer=50, stop_tol=1e-8,
)
ORACLE_DEFAULTS = dict(delta=0.3, rho0=1e5, gamma=10.0, k_max=8, grid=5, starts=20, seed=0, jobs=1)

log = logging.getLogger("seqopt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _vector(text):
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _read_config(path):
    cfg = {}
    if not path:
        return cfg
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


def _resolve(args, defaults, config):
    """Explicit flag > config file > module default."""
    out = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in config:
            try:
                out[key] = type(default)(float(config[key]))
            except ValueError:
                raise UsageError(f"config value for {key!r} is not numeric: {config[key]!r}") from None
        else:
            out[key] = default
    return out


def _entry(name):
    try:
        return problemlib.get(name)
    except problemlib.ProblemNotFound as exc:
        raise UsageError(str(exc)) from None


def _summary(trace):
    if not trace.records:
        return f"status={trace.status} records=0 {trace.message}".rstrip()
    r = trace.final
    lam = r.extras.get("proj_lambda_min")
    res = ", ".join(f"{v:.3e}" for v in r.residuals)
    x = ", ".join(f"{v:.10g}" for v in r.x)
    mu = ", ".join(f"{v:.10g}" for v in r.mu)
    line = (
        f"status={trace.status} k={r.k} x=[{x}] mu=[{mu}] residuals=[{res}] "
        f"rho={r.rho:.3e} lambda_min={lam if lam is None else format(lam, '.3e')}"
    )
    if trace.message:
        line += f" ({trace.message})"
    return line


def cmd_solve(args) -> int:
    entry = _entry(args.problem)
    prob = entry.problem
    config = _read_config(args.config)
    x0 = args.x0 if args.x0 is not None else entry.x0
    if x0.shape != (prob.n,):
        raise UsageError(f"--x0 must have {prob.n} components")

    if args.method in ("penalty", "penalty-warm"):
        kw = _resolve(args, PENALTY_DEFAULTS, config)
        params = penalty.PenaltyParams(x0=x0, **kw)
        runner = penalty.run_basic if args.method == "penalty" else penalty.run_modified
        try:
            trace = runner(prob, params)
        except penalty.PreconditionError as exc:
            raise UsageError(str(exc)) from None
    else:
        kw = _resolve(args, AUGLAG_DEFAULTS, config)
        params = auglag.AugLagParams(x0=x0, **kw)
        trace = auglag.run(prob, params)

    if args.output:
        write_trace(args.output, trace, prob.n, prob.p, prob.m)
    print(_summary(trace))
    return {"converged": EXIT_OK, "max_outer": EXIT_MAX_OUTER}.get(trace.status, EXIT_FAILED)


def cmd_verify(args) -> int:
    try:
        trace, dims = read_trace(args.trace)
    except (OSError, TraceFormatError) as exc:
        raise UsageError(f"cannot read trace: {exc}") from None
    entry = _entry(args.problem or trace.problem)
    prob = entry.problem
    if dims != (prob.n, prob.p, prob.m):
        raise UsageError(f"trace dimensions {dims} do not match problem {prob.name!r}")
    if not trace.records:
        raise UsageError("trace has no records")

    if args.x_star in (None, "auto"):
        x_star = trace.final.x
    else:
        x_star = _vector(args.x_star)
        if x_star.shape != (prob.n,):
            raise UsageError(f"--x-star must have {prob.n} components")
    opts = CertifyOptions(
        window=args.window, radius_factor=args.radius_factor, tol_act=args.tol_act,
        tol_mult=args.tol_mult, n_samples=args.samples, seed=args.seed, eps_rule=args.eps_rule,
    )
    report = certify_trace(prob, trace, x_star, CONDITIONS[args.condition], opts)
    text = format_report(report)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    line = f"{report.condition.value}: {report.verdict}"
    if report.reason:
        line += f" ({report.reason})"
    print(line)
    return {"pass": EXIT_OK, "fail": EXIT_VERIFY_FAIL}.get(report.verdict, EXIT_INCONCLUSIVE)


def cmd_oracle(args) -> int:
    entry = _entry(args.problem)
    prob = entry.problem
    kw = _resolve(args, ORACLE_DEFAULTS, _read_config(args.config))
    x_bar = args.x_bar if args.x_bar is not None else entry.x_bar
    if x_bar is None or x_bar.shape != (prob.n,):
        raise UsageError(f"--x-bar must have {prob.n} components")
    cfg = oracle.OracleConfig(
        x_bar=x_bar, delta=kw["delta"], rho0=kw["rho0"], gamma=kw["gamma"], k_max=kw["k_max"],
        grid_points=kw["grid"], random_starts=kw["starts"], seed=kw["seed"], jobs=kw["jobs"],
    )
    try:
        cfg.validate(prob.n)
        trace = oracle.regularized_penalty_sequence(prob, cfg)
    except oracle.UnsupportedScale as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.output:
        write_trace(args.output, trace, prob.n, prob.p, prob.m)
    print(_summary(trace))
    return EXIT_OK if trace.status == "converged" else EXIT_FAILED


def cmd_reference(args) -> int:
    entry = _entry(args.problem)
    if entry.reference_trace is None:
        raise UsageError(f"problem {entry.name!r} has no reference sequence")
    trace = entry.reference_trace(args.k_first, args.k_last)
    prob = entry.problem
    if args.output:
        write_trace(args.output, trace, prob.n, prob.p, prob.m)
    print(f"reference trace for {entry.name}: k={args.k_first}..{args.k_last}")
    return EXIT_OK


def cmd_list(args) -> int:
    for e in problemlib.entries():
        if args.filter and args.filter not in e.name:
            continue
        print(e.name if args.names_only else f"{e.name:15s} {e.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="seqopt", description="Quartic penalty / augmented Lagrangian solvers and "
                                              "second-order sequential optimality certification.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run a solver and write a trace")
    s.add_argument("--problem", required=True)
    s.add_argument("--method", required=True, choices=["penalty", "penalty-warm", "auglag"])
    s.add_argument("--x0", type=_vector)
    s.add_argument("--config", help="key=value file overriding defaults")
    s.add_argument("-o", "--output")
    for name in ("eps0", "theta", "rho0", "gamma", "stop_tol", "mu_min", "mu_max", "omega_max", "tau", "rho1"):
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    s.add_argument("--max-outer", dest="max_outer", type=int)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="certify a trace against a sequential condition")
    v.add_argument("--trace", required=True)
    v.add_argument("--problem", help="defaults to the problem named in the trace header")
    v.add_argument("--condition", required=True, choices=sorted(CONDITIONS))
    v.add_argument("--x-star", default="auto", help="'auto' (final iterate) or comma-separated point")
    v.add_argument("--report")
    v.add_argument("--window", type=int, default=5)
    v.add_argument("--radius-factor", type=float, default=10.0)
    v.add_argument("--tol-act", type=float, default=1e-6)
    v.add_argument("--tol-mult", type=float, default=0.0)
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--eps-rule", choices=["envelope", "recorded"], default="envelope")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="build the regularised-penalty sequence around x_bar")
    o.add_argument("--problem", required=True)
    o.add_argument("--x-bar", type=_vector)
    o.add_argument("--delta", type=float)
    o.add_argument("--k-max", dest="k_max", type=int)
    o.add_argument("--rho0", type=float)
    o.add_argument("--gamma", type=float)
    o.add_argument("--grid", type=int, help="grid points per axis for multistart seeds")
    o.add_argument("--starts", type=int, help="additional random starts")
    o.add_argument("--seed", type=int)
    o.add_argument("--jobs", type=int)
    o.add_argument("--config")
    o.add_argument("-o", "--output")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("reference", help="write a problem's reference sequence as a trace")
    r.add_argument("--problem", required=True)
    r.add_argument("--k-first", type=int, default=3)
    r.add_argument("--k-last", type=int, default=50)
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_reference)

    ls = sub.add_parser("list", help="list registered problems")
    ls.add_argument("--names-only", action="store_true")
    ls.add_argument("--filter", default="")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"seqopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())
