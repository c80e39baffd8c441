"""``cpdkit`` command line: generate, decompose, experiment, condition, rate.

Exit codes: 0 success/converged, 1 argument or I/O error, 2 sweep budget
exhausted without convergence.  Every subcommand accepts ``--config FILE``
with ``key = value`` lines named after the long options; explicit flags
win over the file, which wins over built-in defaults.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .conditioning import condition_number, condition_number_compressed, condition_number_direct
from .diagnostics import InsufficientSamplesError, empirical_order
from .experiments import RECIPES, run_recipe
from .generators import GeneratorSpec, generate
from .io import FormatError, read_model, read_tensor, read_trace, write_csv, write_model, write_tensor, write_trace
from .model import normalize_model, residual_and_fitness
from .solvers import SolverConfig, SolverError, ThresholdSchedule, run

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2

log = logging.getLogger("cpdkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dims {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(f"bad dims {text!r}")
    return dims


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _schedule(text: str) -> ThresholdSchedule:
    try:
        return ThresholdSchedule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cpdkit", description="Dense CP decomposition with ALS, AMDM and thresholded AMDM.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic tensor and its model")
    g.add_argument("--config")
    g.add_argument("--family", choices=["random", "collinear", "planted"], default="random")
    g.add_argument("--dims", type=_dims, default=(30, 30, 30))
    g.add_argument("--rank", type=int, default=10)
    g.add_argument("--collinearity", type=float, default=0.9)
    g.add_argument("--eps-perp", type=float, default=0.0)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="generated", help="output directory")

    d = sub.add_parser("decompose", help="fit a CP model to a tensor file")
    d.add_argument("tensor")
    d.add_argument("--config")
    d.add_argument("--alg", choices=["als", "amdm", "hybrid", "general"], default="amdm")
    d.add_argument("--rank", type=int, default=10)
    d.add_argument("--max-sweeps", type=int, default=100)
    d.add_argument("--tol", type=float, default=1e-10, help="factor-change tolerance")
    d.add_argument("--tol-resid", type=float, default=1e-12, help="relative residual-change tolerance")
    d.add_argument("--schedule", type=_schedule, default=None, help="fixed:T, decay:T0:K or reltol:TAU")
    d.add_argument("--granularity", choices=["sweep", "subsweep"], default="subsweep")
    d.add_argument("--cond", action="store_true", help="record the condition number in the trace")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--init", help="model directory used as the initial guess")
    d.add_argument("--out", default="model", help="output model directory")
    d.add_argument("--trace", help="trace CSV path (default OUT/trace.csv)")

    e = sub.add_parser("experiment", help="run a canned experiment recipe")
    e.add_argument("recipe", choices=RECIPES)
    e.add_argument("--config")
    e.add_argument("--order", type=int)
    e.add_argument("--dims", type=int, help="mode length s of an s^order tensor")
    e.add_argument("--rank", type=int)
    e.add_argument("--rank-exact", type=int)
    e.add_argument("--trials", type=int)
    e.add_argument("--guesses", type=int)
    e.add_argument("--eps", type=float)
    e.add_argument("--eps-perp", type=_floats)
    e.add_argument("--collinearity", type=float)
    e.add_argument("--sigma", type=float)
    e.add_argument("--max-sweeps", type=int)
    e.add_argument("--schedule")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", help="summary CSV path (default <recipe>.csv)")

    c = sub.add_parser("condition", help="print the condition number of a model")
    c.add_argument("model")
    c.add_argument("--config")
    c.add_argument("--method", choices=["auto", "direct", "compressed"], default="auto")

    r = sub.add_parser("rate", help="estimate the convergence order from a trace CSV")
    r.add_argument("trace")
    r.add_argument("--config")
    r.add_argument("--lo", type=float, default=1e-12)
    r.add_argument("--hi", type=float, default=1e-2)
    return p


def _read_config(path) -> dict[str, str]:
    out = {}
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{i}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = _read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    converted = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if act.nargs == 0:
            converted[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                converted[key] = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if act.choices is not None and converted[key] not in act.choices:
                raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(act.choices)}")
    subparser.set_defaults(**converted)
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    spec = GeneratorSpec(
        family=args.family, shape=tuple(args.dims), rank=args.rank,
        collinearity=args.collinearity, eps_perp=args.eps_perp, noise=args.noise, seed=args.seed,
    )
    X, model = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "tensor.tnsr", X)
    write_model(out / "model", model)
    print(f"family={spec.family} dims={','.join(map(str, spec.shape))} rank={spec.rank} "
          f"collinearity={spec.collinearity:g} eps_perp={spec.eps_perp:g} noise={spec.noise:g} seed={spec.seed}")
    label = "planted half" if spec.family == "planted" else "model"
    print(f"wrote {out / 'tensor.tnsr'} and {label} in {out / 'model'}")
    return EXIT_OK


def cmd_decompose(args) -> int:
    X = read_tensor(args.tensor)
    init = read_model(args.init) if args.init else None
    cfg = SolverConfig(
        rank=args.rank, algorithm=args.alg, max_sweeps=args.max_sweeps, tol_change=args.tol,
        tol_resid=args.tol_resid, schedule=args.schedule, seed=args.seed,
        granularity=args.granularity, track_condition=args.cond,
    )
    res = run(X, cfg, init=init)
    out = Path(args.out)
    write_model(out, res.model)
    trace_path = Path(args.trace) if args.trace else out / "trace.csv"
    meta = {
        "algorithm": cfg.algorithm, "rank": cfg.rank, "schedule": str(cfg.effective_schedule()),
        "max_sweeps": cfg.max_sweeps, "tol_change": cfg.tol_change, "tol_resid": cfg.tol_resid,
        "seed": cfg.seed, "status": res.status, "backend": _kernels.BACKEND,
    }
    write_trace(trace_path, res.trace, res.tensor_norm, meta)
    r, f = residual_and_fitness(res.model, X)
    print(f"status={res.status} sweeps={res.sweeps} residual={r:.6e} "
          f"relative={r / res.tensor_norm:.3e} fitness={f:.12f}")
    if res.status == "nonfinite":
        return EXIT_ERROR
    return EXIT_OK if res.converged else EXIT_BUDGET


_EXPERIMENT_KEYS = {
    "exact-rate": {"order": "order", "dims": "s", "rank": "rank", "trials": "trials",
                   "max_sweeps": "max_sweeps", "seed": "seed"},
    "large-rank": {"order": "order", "dims": "s", "rank": "rank", "schedule": "schedule",
                   "max_sweeps": "max_sweeps", "seed": "seed"},
    "planted-probability": {"order": "order", "dims": "s", "rank_exact": "rank_exact", "rank": "rank",
                            "trials": "trials", "guesses": "guesses", "eps": "eps",
                            "eps_perp": "eps_perp", "max_sweeps": "max_sweeps", "seed": "seed"},
    "noisy-collinear": {"order": "order", "dims": "s", "rank": "rank", "collinearity": "collinearity",
                        "sigma": "sigma", "max_sweeps": "max_sweeps", "schedule": "schedule", "seed": "seed"},
    "condition-trace": {"order": "order", "dims": "s", "rank": "rank", "collinearity": "collinearity",
                        "max_sweeps": "max_sweeps", "seed": "seed"},
}


def cmd_experiment(args) -> int:
    keys = _EXPERIMENT_KEYS[args.recipe]
    kwargs = {}
    for dest in ("order", "dims", "rank", "rank_exact", "trials", "guesses", "eps", "eps_perp",
                 "collinearity", "sigma", "max_sweeps", "schedule", "seed"):
        val = getattr(args, dest)
        if val is None:
            continue
        if dest not in keys:
            raise UsageError(f"--{dest.replace('_', '-')} does not apply to {args.recipe}")
        kwargs[keys[dest]] = val
    rows, cols, meta = run_recipe(args.recipe, **kwargs)
    meta = dict(meta)
    meta["backend"] = _kernels.BACKEND
    out = Path(args.out) if args.out else Path(f"{args.recipe}.csv")
    write_csv(out, rows, cols, meta)
    if args.recipe in ("exact-rate", "planted-probability"):
        for row in rows:
            print(", ".join(f"{c}={row[c]}" for c in cols))
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_condition(args) -> int:
    m = normalize_model(read_model(args.model))
    if args.method == "direct":
        kappa = condition_number_direct(m)
    elif args.method == "compressed":
        kappa = condition_number_compressed(m)
    else:
        kappa = condition_number(m)
    print("inf" if math.isinf(kappa) else f"{kappa:.17g}")
    return EXIT_OK


def cmd_rate(args) -> int:
    meta, rows = read_trace(args.trace)
    xnorm = float(meta["xnorm"]) if "xnorm" in meta else None
    sub = [r for r in rows if r["mode"] != 0] or rows
    errs = [r["residual"] / xnorm if xnorm else 1.0 - r["fitness"] for r in sub]
    est = empirical_order(errs, args.lo, args.hi)
    print(f"alpha_hat={est.alpha:.6f} samples={len(est.window)} pairs={est.pairs} fit_residual={est.fit_residual:.3e}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "decompose": cmd_decompose,
    "experiment": cmd_experiment,
    "condition": cmd_condition,
    "rate": cmd_rate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors; report the code instead
        return int(exc.code or 0)
    except (UsageError, OSError) as exc:
        print(f"cpdkit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, FormatError, OSError, ValueError, SolverError,
            InsufficientSamplesError, np.linalg.LinAlgError) as exc:
        print(f"cpdkit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
