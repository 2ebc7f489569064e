"""Command line harness: deterministic runs, CSV/JSON artifacts.

Subcommands: ``greens | certify | paths | solve | limits | converge``.
Every run echoes its fully resolved configuration (defaults included) into
a ``<out>.config.json`` sidecar so artifacts are reproducible from their
own provenance; reruns with the same config are bit-identical.  Floats in
CSV output use fixed 17-significant-digit scientific notation so doubles
round-trip exactly.

Exit codes: 0 success, 2 configuration problems, 3 failed problem-spec
validation, 4 contraction bound too large, 1 anything else.  Failures emit
a machine-readable ``{"error": {"code", "message"}}`` object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .experiments import converge_constant, converge_first_kind
from .greens import NEUMANN_FORMS, KernelTable, certify_green
from .model import (
    BoundaryKind,
    ConditionViolation,
    ConfigError,
    Grid,
    ProblemSpec,
    load_problem,
    require_valid,
)
from .solver import B0Function, BracketError, MaxIterExceeded, NoContraction, picard_solve
from .stochastic import eta, kappa, sample_path

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_NO_CONTRACTION = 4


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(out_path: str, args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    resolved["version"] = __version__
    _write_json(out_path + ".config.json", resolved)


def _load_validated(config_path: str) -> ProblemSpec:
    if not os.path.exists(config_path):
        raise FileNotFoundError(config_path)
    spec = load_problem(config_path)
    require_valid(spec)
    return spec


def _default_threads() -> int:
    env = os.environ.get("STOCH_BVP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"STOCH_BVP_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# -- subcommands -------------------------------------------------------------


def _cmd_greens(args) -> None:
    kind = BoundaryKind(args.kind)
    grid = Grid(args.grid)
    if args.certify:
        report = certify_green(kind, args.eps, args.p, grid, neumann_form=args.neumann_form)
        payload = report.as_dict()
        if args.out:
            _write_json(args.out, payload)
            _echo_config(args.out, args)
        else:
            print(json.dumps(payload, indent=2, sort_keys=True))
        return
    if not args.out:
        raise ConfigError("greens needs --out for the kernel table CSV")
    table = KernelTable.build(kind, args.eps, args.p, grid, neumann_form=args.neumann_form)
    pts = grid.points
    n1 = grid.n + 1
    idx = np.arange(n1)
    lower_mask = idx[:, None] >= idx[None, :]
    minus = np.where(lower_mask & (idx[:, None] != idx[None, :]), table.dt_lower, table.dt_upper)
    plus = np.where(lower_mask, table.dt_lower, table.dt_upper)
    rows = (
        (float(pts[i]), float(pts[j]), float(table.values[i, j]), float(minus[i, j]), float(plus[i, j]))
        for i in range(n1)
        for j in range(n1)
    )
    _write_csv(args.out, ["t", "s", "G", "dGdt_minus", "dGdt_plus"], rows)
    _echo_config(args.out, args)


def _cmd_certify(args) -> None:
    args.certify = True
    _cmd_greens(args)


def _cmd_paths(args) -> None:
    rows = []
    for stream in range(args.count):
        path = sample_path(args.n, args.seed, stream)
        for t, w in zip(path.grid.points, path.values):
            rows.append((stream, float(t), float(w)))
    _write_csv(args.out, ["path", "t", "W"], rows)
    _echo_config(args.out, args)


def _cmd_solve(args) -> None:
    spec = _load_validated(args.config)
    path = sample_path(args.n, args.seed, args.stream)
    sol = picard_solve(spec, args.eps, path, tol=args.tol, max_iter=args.max_iter)
    rows = zip((float(t) for t in path.grid.points), (float(v) for v in sol.x), (float(v) for v in sol.xdot))
    _write_csv(args.out, ["t", "x", "xdot"], rows)
    _echo_config(args.out, args)
    print(json.dumps(sol.diagnostics(), sort_keys=True), file=sys.stderr)


def _cmd_limits(args) -> None:
    spec = _load_validated(args.config)
    path = sample_path(args.n, args.seed, args.stream)
    kap = kappa(spec, path)
    eta_val = eta(spec, path)
    zeta = B0Function(spec).inverse(eta_val.value)
    _write_csv(args.out, ["t", "kappa"], zip((float(t) for t in path.grid.points), (float(v) for v in kap.values)))
    _echo_config(args.out, args)
    print(json.dumps({"eta": eta_val.value, "zeta": zeta}, sort_keys=True))


def _cmd_converge(args) -> None:
    spec = _load_validated(args.config)
    try:
        ladder = tuple(float(tok) for tok in args.ladder.split(","))
    except ValueError:
        raise ConfigError(f"cannot parse ladder {args.ladder!r}; expected comma-separated floats") from None
    threads = args.threads if args.threads else _default_threads()
    study = converge_first_kind if spec.boundary is BoundaryKind.FIRST_KIND else converge_constant
    table = study(spec, ladder, paths=args.paths, n=args.n, base_seed=args.seed, threads=threads)
    rows = ((cell.eps, cell.stream, cell.sup_err if cell.sup_err is not None else float("nan")) for cell in table.cells)
    _write_csv(args.out, ["eps", "seed", "sup_err"], rows)
    _echo_config(args.out, args)
    _write_json(os.path.splitext(args.out)[0] + ".summary.json", table.as_dict())
    print(json.dumps(table.as_dict(), sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoch-bvp", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_kernel_args(p):
        p.add_argument("--kind", required=True, choices=[k.value for k in BoundaryKind])
        p.add_argument("--eps", required=True, type=float)
        p.add_argument("--p", required=True, type=float)
        p.add_argument("--grid", required=True, type=int)
        p.add_argument("--neumann-form", default="reflected", choices=list(NEUMANN_FORMS))
        p.add_argument("--out", default=None)

    p_greens = sub.add_parser("greens", help="emit a kernel table as CSV (or a certification report)")
    add_kernel_args(p_greens)
    p_greens.add_argument("--certify", action="store_true")
    p_greens.set_defaults(func=_cmd_greens)

    p_cert = sub.add_parser("certify", help="certify the kernel properties, report as JSON")
    add_kernel_args(p_cert)
    p_cert.set_defaults(func=_cmd_certify)

    p_paths = sub.add_parser("paths", help="emit sampled Brownian paths as CSV")
    p_paths.add_argument("--n", required=True, type=int)
    p_paths.add_argument("--seed", required=True, type=int)
    p_paths.add_argument("--count", type=int, default=1)
    p_paths.add_argument("--out", required=True)
    p_paths.set_defaults(func=_cmd_paths)

    p_solve = sub.add_parser("solve", help="solve one path, emit t,x,xdot CSV")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--eps", required=True, type=float)
    p_solve.add_argument("--seed", required=True, type=int)
    p_solve.add_argument("--stream", type=int, default=0)
    p_solve.add_argument("--n", required=True, type=int)
    p_solve.add_argument("--tol", type=float, default=1e-10)
    p_solve.add_argument("--max-iter", type=int, default=200)
    p_solve.add_argument("--out", required=True)
    p_solve.set_defaults(func=_cmd_solve)

    p_limits = sub.add_parser("limits", help="emit the limit objects kappa, eta, zeta for one path")
    p_limits.add_argument("--config", required=True)
    p_limits.add_argument("--n", required=True, type=int)
    p_limits.add_argument("--seed", required=True, type=int)
    p_limits.add_argument("--stream", type=int, default=0)
    p_limits.add_argument("--out", required=True)
    p_limits.set_defaults(func=_cmd_limits)

    p_conv = sub.add_parser("converge", help="run a coupled eps-ladder convergence study")
    p_conv.add_argument("--config", required=True)
    p_conv.add_argument("--ladder", required=True, help="comma-separated eps values, strictly decreasing")
    p_conv.add_argument("--paths", type=int, default=200)
    p_conv.add_argument("--n", type=int, default=1024)
    p_conv.add_argument("--seed", type=int, default=7)
    p_conv.add_argument("--threads", type=int, default=0, help="0 = STOCH_BVP_THREADS or available parallelism")
    p_conv.add_argument("--out", required=True)
    p_conv.set_defaults(func=_cmd_converge)

    return parser


_ERROR_CODES = (
    (FileNotFoundError, "config_not_found", EXIT_CONFIG),
    (ConfigError, "config_invalid", EXIT_CONFIG),
    (ConditionViolation, "condition_c2_violated", EXIT_VALIDATION),
    (NoContraction, "no_contraction", EXIT_NO_CONTRACTION),
    (BracketError, "bracket_failure", EXIT_ERROR),
    (MaxIterExceeded, "max_iter_exceeded", EXIT_ERROR),
    (ValueError, "invalid_argument", EXIT_ERROR),
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except tuple(exc for exc, _, _ in _ERROR_CODES) as err:
        for exc_type, code, exit_code in _ERROR_CODES:
            if isinstance(err, exc_type):
                print(json.dumps({"error": {"code": code, "message": str(err)}}), file=sys.stderr)
                return exit_code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
