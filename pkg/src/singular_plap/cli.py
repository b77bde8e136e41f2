"""Command-line front end.

Exit codes: 0 success / comparison holds, 1 solver or I/O failure,
2 negative verdict or failed hypothesis, 3 inconclusive, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from .comparison import INCONCLUSIVE, SCP_FAILS, SCP_HOLDS, HypothesisViolated, run_scp_experiment
from .counterexample import CounterexampleSpec, PreconditionFailed, build_certificate
from .expr import ExprError, parse_radial_fn, parse_scalar_fn
from .fd import FdOptions, make_nodes, solve_fd
from .model import Autonomous, ProfileError, RadialProblem, RadialProfile, Source
from .multiplicity import HypothesisFailure, bifurcation_sweep, three_solution_search
from .shooting import find_center_values, profile_from_shot

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NEGATIVE = 2
EXIT_INCONCLUSIVE = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class SpecError(UsageError):
    """Invalid problem specification; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------- problem files


def _number(data: dict, key: str, path: str) -> float:
    if key not in data:
        raise SpecError(path + key, "missing field")
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SpecError(path + key, f"expected a finite number, got {v!r}")
    return float(v)


def problem_from_dict(data) -> RadialProblem:
    """Build a :class:`RadialProblem` from the JSON problem format

    ``{"p", "N", "R", "delta", "lambda", "reaction": {"type": "source", "f": ...}
    | {"type": "autonomous", "G": expr | {"ko": {"alpha": ...}}}}``.
    """
    if not isinstance(data, dict):
        raise SpecError("$", "expected a JSON object")
    unknown = sorted(set(data) - {"p", "N", "R", "delta", "lambda", "reaction"})
    if unknown:
        raise SpecError(unknown[0], "unknown field")
    p = _number(data, "p", "")
    if not p > 1:
        raise SpecError("p", f"must be > 1, got {p}")
    if "N" not in data:
        raise SpecError("N", "missing field")
    dim = data["N"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise SpecError("N", f"expected an integer >= 1, got {dim!r}")
    radius = _number(data, "R", "")
    if not radius > 0:
        raise SpecError("R", f"must be > 0, got {radius}")
    delta = _number(data, "delta", "")
    if not 0 < delta < 1:
        raise SpecError("delta", f"must lie in (0, 1), got {delta}")
    lam = _number(data, "lambda", "")
    if not lam > 0:
        raise SpecError("lambda", f"must be > 0, got {lam}")
    if "reaction" not in data:
        raise SpecError("reaction", "missing field")
    rx = data["reaction"]
    if not isinstance(rx, dict):
        raise SpecError("reaction", "expected an object")
    kind = rx.get("type")
    if kind == "source":
        if set(rx) != {"type", "f"}:
            raise SpecError("reaction", "a source reaction has exactly the fields 'type' and 'f'")
        if not isinstance(rx["f"], str):
            raise SpecError("reaction.f", "expected an expression string")
        try:
            reaction = Source(parse_radial_fn(rx["f"]))
        except ExprError as exc:
            raise SpecError("reaction.f", str(exc)) from None
    elif kind == "autonomous":
        if set(rx) != {"type", "G"}:
            raise SpecError("reaction", "an autonomous reaction has exactly the fields 'type' and 'G'")
        g = rx["G"]
        if isinstance(g, str):
            text, path = g, "reaction.G"
        elif isinstance(g, dict) and set(g) == {"ko"} and isinstance(g["ko"], dict):
            alpha = _number(g["ko"], "alpha", "reaction.G.ko.")
            if not alpha > 0:
                raise SpecError("reaction.G.ko.alpha", f"must be > 0, got {alpha}")
            text, path = f"ko({alpha!r})", "reaction.G.ko"
        else:
            raise SpecError("reaction.G", "expected an expression string or {\"ko\": {\"alpha\": number}}")
        try:
            reaction = Autonomous(parse_scalar_fn(text, delta))
            bad = reaction.check()
        except ExprError as exc:
            raise SpecError(path, str(exc)) from None
        if bad:
            raise SpecError(path, "fails " + " and ".join(bad) + " (sampled on [0, 50])")
    else:
        raise SpecError("reaction.type", f"expected 'source' or 'autonomous', got {kind!r}")
    return RadialProblem(p, delta, lam, dim, radius, reaction)


def load_problem(path: str) -> RadialProblem:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError("$", f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(data)


def load_profile(path: str) -> RadialProfile:
    try:
        with open(path, encoding="utf-8") as fh:
            return RadialProfile.from_csv(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except (ProfileError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- output


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    """Plain JSON types; numpy scalars become Python floats (repr round-trips)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _emit(text: str, path: Optional[str] = None) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        write_atomic(path, text)


def _note(msg: str) -> None:
    sys.stderr.write(msg.rstrip("\n") + "\n")


# ---------------------------------------------------------------- commands


def _shoot_profile(problem: RadialProblem, nodes, a_hint: Optional[float]):
    if a_hint is not None:
        roots = find_center_values(problem, 0.5 * a_hint, 2.0 * a_hint, 16)
        if not roots:
            raise RuntimeError(f"no shooting root near the FD center value {a_hint:.6g}")
        a = min(roots, key=lambda x: abs(x - a_hint))
    else:
        roots = find_center_values(problem, 1e-6, 1e6, 121)
        if not roots:
            raise RuntimeError("no shooting root with center value in [1e-6, 1e6]")
        a = roots[0]
    return profile_from_shot(a, problem, nodes), a, roots


def cmd_solve(args) -> int:
    problem = load_problem(args.spec)
    opts = FdOptions(grid_m=args.grid)
    nodes = make_nodes(opts, problem.radius)
    summary = {"method": args.method, "grid": args.grid}
    out = None
    if args.method in ("fd", "both"):
        prof, info = solve_fd(problem, opts, full_output=True)
        summary["fd"] = {
            "center_value": prof.values[0],
            "sup_norm": float(np.max(prof.values)),
            "residual": info.residual,
            "scaled_residual": info.scaled_residual,
            "newton_iterations": info.iterations,
        }
        out = prof
    if args.method in ("shoot", "both"):
        hint = out.values[0] if out is not None else None
        shot, a, roots = _shoot_profile(problem, nodes, hint)
        summary["shoot"] = {
            "center_value": a,
            "roots": roots,
        }
        if out is not None:
            summary["max_deviation"] = float(np.max(np.abs(shot.values - out.values)))
        else:
            out = shot
    _emit(out.to_csv(), args.out)
    if args.out is None:
        sys.stderr.write(dump_json(summary))
    else:
        _emit(dump_json(summary))
    return EXIT_OK


def cmd_compare(args) -> int:
    pu, pv = load_problem(args.spec_u), load_problem(args.spec_v)
    for name in ("p", "delta", "lam", "dim", "radius"):
        if getattr(pu, name) != getattr(pv, name):
            raise UsageError(f"the two specs must share p, delta, lambda, N and R (they differ in {name})")
    if not isinstance(pu.reaction, Source) or not isinstance(pv.reaction, Source):
        raise UsageError("compare needs two source reactions")
    grid = args.grid
    escalated = None
    while True:
        try:
            exp = run_scp_experiment(pu.p, pu.delta, pu.lam, pu.reaction.f, pv.reaction.f, pu.dim, pu.radius,
                                     FdOptions(grid_m=grid))
        except HypothesisViolated as exc:
            _emit(dump_json({"verdict": INCONCLUSIVE, "hypothesis_violated": str(exc), "grid": grid}))
            _note(f"hypothesis violated: {exc}")
            return EXIT_INCONCLUSIVE
        # one refinement step (M -> 4M - 3) before reporting INCONCLUSIVE
        if exp.report.verdict == INCONCLUSIVE and escalated is None and args.grid <= 4097:
            escalated = grid
            grid = 4 * (grid - 1) + 1
            continue
        break
    report = json.loads(exp.report.to_json())
    report["escalated_from_grid"] = escalated
    _emit(dump_json(report))
    return {SCP_HOLDS: EXIT_OK, SCP_FAILS: EXIT_NEGATIVE}.get(exp.report.verdict, EXIT_INCONCLUSIVE)


def cmd_counterexample(args) -> int:
    spec = CounterexampleSpec(args.p, args.N, args.delta, args.lam, args.theta1, args.theta2)
    try:
        cert = build_certificate(spec, grid_m=args.grid)
    except PreconditionFailed as exc:
        _emit(dump_json({"verdict": False, "precondition_failed": exc.check, "detail": exc.detail}))
        _note(f"precondition failed: {exc.check} ({exc.detail})")
        return EXIT_NEGATIVE
    _emit(cert.to_json())
    sys.stderr.write(cert.table())
    return EXIT_OK if cert.verdict else EXIT_NEGATIVE


def cmd_bifurcate(args) -> int:
    problem = load_problem(args.spec)
    if not isinstance(problem.reaction, Autonomous):
        raise UsageError("bifurcate needs an autonomous reaction G")
    if not 0 < args.lambda_min <= args.lambda_max:
        raise UsageError("need 0 < --lambda-min <= --lambda-max")
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    lambdas = np.geomspace(args.lambda_min, args.lambda_max, args.steps) if args.steps > 1 else [args.lambda_min]
    diagram = bifurcation_sweep(problem, lambdas, args.a_min, args.a_max)
    _emit(diagram.to_csv())
    for row in diagram.rows:
        msg = f"lambda={row.lam:.6g}: {len(row.roots)} root(s)"
        if row.rejected:
            msg += f", {len(row.rejected)} rejected by certification"
        if row.error:
            msg += f", {row.error}"
        _note(msg)
    return EXIT_OK


def cmd_threesol(args) -> int:
    problem = load_problem(args.spec)
    if not isinstance(problem.reaction, Autonomous):
        raise UsageError("threesol needs an autonomous reaction G")
    prof = {k: load_profile(getattr(args, k)) for k in ("psi1", "phi1", "psi2", "phi2")}
    try:
        res = three_solution_search(problem, prof["psi1"], prof["phi1"], prof["psi2"], prof["phi2"])
    except HypothesisFailure as exc:
        _emit(dump_json({"count": 0, "failed_check": exc.check, "detail": str(exc)}))
        _note(f"hypothesis check failed: {exc.check}")
        return EXIT_NEGATIVE
    manifest = res.manifest()
    # one r,u,flux CSV per solution, embedded next to its tag
    manifest["profiles"] = [{"tag": tag, "csv": s.profile.to_csv()} for tag, s in res.solutions]
    _emit(dump_json(manifest))
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _grid(text: str) -> int:
    try:
        m = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid size {text!r}") from None
    if m < 33:
        raise argparse.ArgumentTypeError("grid size must be >= 33")
    return m


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="singular-plap", description="Radial singular p-Laplace problems in a ball.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one problem and write its profile CSV")
    p.add_argument("spec", help="problem JSON file")
    p.add_argument("--method", choices=("fd", "shoot", "both"), default="fd")
    p.add_argument("--grid", type=_grid, default=1025, help="number of graded nodes (default 1025)")
    p.add_argument("--out", help="profile CSV path (default: stdout, summary to stderr)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="strong comparison experiment for two source problems")
    p.add_argument("spec_u")
    p.add_argument("spec_v")
    p.add_argument("--grid", type=_grid, default=1025)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("counterexample", help="certificate for the closed-form family when p > 2")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--theta1", type=float, required=True)
    p.add_argument("--theta2", type=float, required=True)
    p.add_argument("--grid", type=_grid, default=4096)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("bifurcate", help="certified center values over a geometric lambda grid")
    p.add_argument("spec")
    p.add_argument("--lambda-min", type=float, required=True)
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--a-min", type=float, required=True)
    p.add_argument("--a-max", type=float, required=True)
    p.set_defaults(func=cmd_bifurcate)

    p = sub.add_parser("threesol", help="verify sub/supersolution pairs and search three solutions")
    p.add_argument("spec")
    for name in ("psi1", "phi1", "psi2", "phi2"):
        p.add_argument(f"--{name}", required=True, help="profile CSV (r,u,flux)")
    p.set_defaults(func=cmd_threesol)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _note(f"usage error: {exc}")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    except OSError as exc:
        _note(f"I/O error: {exc}")
        return EXIT_FAILURE
    except Exception as exc:
        _note(f"failure: {type(exc).__name__}: {exc}")
        return EXIT_FAILURE


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
