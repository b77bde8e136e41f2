"""Sub/supersolutions, monotone A_G iteration, the three-solution search and
bifurcation sweeps for -Delta_p u = lam (u^-delta + G(u))."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fd import FdOptions, apply_ag, make_nodes, scaled_residual, solve_fd, solve_xi_lambda
from .model import Autonomous, RadialProblem, RadialProfile
from .shooting import ShootingOptions, find_roots, integrate_shot, profile_from_shot, shoot_residual

__all__ = [
    "OrderInterval",
    "IterationTrace",
    "CertifiedSolution",
    "BifurcationRow",
    "BifurcationDiagram",
    "HypothesisFailure",
    "MonotonicityViolation",
    "check_subsolution",
    "check_supersolution",
    "monotone_iterate",
    "check_ag_gap",
    "certify_center_value",
    "three_solution_search",
    "bifurcation_sweep",
    "candidates_from_solutions",
    "thread_cap",
]


class HypothesisFailure(ValueError):
    def __init__(self, check: str, detail: str = ""):
        super().__init__(f"{check}: {detail}" if detail else check)
        self.check = check


class MonotonicityViolation(RuntimeError):
    pass


def thread_cap() -> int:
    """Worker cap from SINGULAR_PLAP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("SINGULAR_PLAP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class OrderInterval:
    """[lower, upper] = {u : lower <= u <= upper nodewise}."""

    lower: RadialProfile
    upper: RadialProfile

    def __post_init__(self):
        if not self.lower.same_grid(self.upper):
            raise ValueError("grid mismatch")
        if np.any(self.lower.values > self.upper.values):
            raise ValueError("order interval needs lower <= upper at every node")

    def contains(self, u: RadialProfile, tol: float = 0.0) -> bool:
        return _in_interval(u, self.lower, self.upper, tol)


def _require_autonomous(problem: RadialProblem):
    if not isinstance(problem.reaction, Autonomous):
        raise TypeError("this operation needs an Autonomous reaction G")


def _sub_super(profile: RadialProfile, problem: RadialProblem, tol: float, sign: float):
    if np.any(profile.values[:-1] <= 0):
        raise ValueError("profile must be positive at interior nodes")
    if profile.values[-1] != 0:
        raise ValueError("profile must vanish at r = R")
    res = sign * scaled_residual(profile, problem)
    k = int(np.argmax(res))
    return bool(res[k] <= tol), float(profile.nodes[k]), float(-res[k])


def check_subsolution(profile: RadialProfile, problem: RadialProblem, tol: float = 1e-8):
    """Nodewise surrogate of the weak subsolution inequality: the scaled residual
    of -Delta_p u - lam(u^-delta + G(u)) is <= tol at every interior node.

    Returns ``(ok, worst_radius, margin)`` where margin = -max scaled residual
    (positive for a strict subsolution).
    """
    return _sub_super(profile, problem, tol, 1.0)


def check_supersolution(profile: RadialProfile, problem: RadialProblem, tol: float = 1e-8):
    """Same as :func:`check_subsolution` with the inequality reversed."""
    return _sub_super(profile, problem, tol, -1.0)


@dataclass
class IterationTrace:
    iterates: list
    direction: str
    converged: bool
    final_residual: float
    steps: list = field(default_factory=list)  # sup-norm of successive differences
    max_violation: float = 0.0


def monotone_iterate(start: RadialProfile, problem: RadialProblem, direction: str = "ascending",
                     tol: float = 1e-8, max_iter: int = 200, opts: FdOptions = FdOptions(newton_tol=1e-11),
                     violation_tol: float = 1e-10, keep_iterates: bool = True) -> IterationTrace:
    """u_{k+1} = A_G(u_k) from a sub- (ascending) or supersolution (descending)."""
    _require_autonomous(problem)
    if direction not in ("ascending", "descending"):
        raise ValueError("direction must be 'ascending' or 'descending'")
    sgn = 1.0 if direction == "ascending" else -1.0
    u = start
    iterates = [u]
    steps = []
    worst = 0.0
    converged = False
    for _ in range(max_iter):
        w = apply_ag(u, problem, opts, init=u if np.all(u.values[:-1] > 0) else None)
        diff = sgn * (w.values - u.values)
        worst = max(worst, float(-diff.min()))
        if -diff.min() > violation_tol:
            raise MonotonicityViolation(
                f"{direction} iteration moved the wrong way by {-diff.min():.3e} "
                "(start is not a sub/supersolution or A_G is inaccurate)")
        step = float(np.max(np.abs(w.values - u.values)))
        steps.append(step)
        u = w
        if keep_iterates:
            iterates.append(u)
        if step <= tol:
            converged = True
            break
    if not keep_iterates:
        iterates.append(u)
    res = float(np.max(np.abs(scaled_residual(u, problem, opts.eps_min, 0.0))))
    return IterationTrace(iterates, direction, converged, res, steps, worst)


def check_ag_gap(psi: RadialProfile, problem: RadialProblem, e: RadialProfile, supersolution: bool = False,
                 opts: FdOptions = FdOptions(newton_tol=1e-11)):
    """Strict gap A_G(psi) > psi (or A_G(phi) < phi with ``supersolution``).

    Returns ``(strict, e_margin, w)`` with e_margin = min over interior nodes
    of the gap divided by e, the constant c in ``gap >= c e``.
    """
    _require_autonomous(problem)
    if np.any(psi.values[:-1] <= 0):
        raise ValueError("profile must be positive at interior nodes")
    w = apply_ag(psi, problem, opts)
    gap = (psi.values - w.values) if supersolution else (w.values - psi.values)
    strict = bool(np.all(gap[:-1] > 0))
    margin = float(np.min(gap[:-1] / e.values[:-1]))
    return strict, margin, w


@dataclass
class CertifiedSolution:
    a_star: float
    sup_norm: float
    residual: float  # max scaled FD residual of the polished profile
    shot_deviation: float  # max |FD - shot| / a
    profile: Optional[RadialProfile] = None
    certified: bool = False


def certify_center_value(a: float, problem: RadialProblem, nodes, certify_tol: float = 1e-7,
                         shoot_opts: ShootingOptions = ShootingOptions(), fd_opts: FdOptions = FdOptions(),
                         deviation_tol: float = 1e-3) -> CertifiedSolution:
    """Polish the shot from ``a`` with FD Newton on ``nodes`` and certify it.

    Certified means: the scaled FD residual is <= certify_tol, the profile is
    positive inside and zero at R, and the polished profile stays within
    ``deviation_tol * a`` of the shot (same branch).
    """
    try:
        shot = profile_from_shot(a, problem, nodes, shoot_opts)
        polish_opts = FdOptions(grid_m=len(nodes), gamma=fd_opts.gamma, eps0=fd_opts.eps_min,
                                eps_min=fd_opts.eps_min, newton_tol=fd_opts.newton_tol,
                                max_newton=fd_opts.max_newton)
        if problem.p != 2:
            polish_opts = fd_opts
        prof = solve_fd(problem, polish_opts, shot)
    except Exception:
        return CertifiedSolution(a, float("nan"), float("inf"), float("inf"))
    # residual of the discrete problem actually solved (identical to eps = 0 when p = 2)
    res = float(np.max(np.abs(scaled_residual(prof, problem, polish_opts.eps_min, 0.0))))
    dev = float(np.max(np.abs(prof.values - shot.values)) / a)
    ok = bool(res <= certify_tol and prof.is_positive_solution_shape() and dev <= deviation_tol)
    return CertifiedSolution(a, float(np.max(prof.values)), res, dev, prof, ok)


def _in_interval(u: RadialProfile, lo: RadialProfile, hi: RadialProfile, tol: float) -> bool:
    return bool(np.all(lo.values - tol <= u.values) and np.all(u.values <= hi.values + tol))


@dataclass
class ThreeSolutionResult:
    solutions: list  # (tag, CertifiedSolution)
    checks: list  # (name, ok, detail)
    u3_status: str

    @property
    def count(self) -> int:
        return len(self.solutions)

    def manifest(self) -> dict:
        return {
            "count": self.count,
            "u3_status": self.u3_status,
            "checks": [{"name": n, "ok": bool(ok), "detail": d} for n, ok, d in self.checks],
            "solutions": [
                {
                    "tag": tag,
                    "a_star": s.a_star,
                    "sup_norm": s.sup_norm,
                    "residual": s.residual,
                    "certified": s.certified,
                }
                for tag, s in self.solutions
            ],
        }


def three_solution_search(problem: RadialProblem, psi1: RadialProfile, phi1: RadialProfile,
                          psi2: RadialProfile, phi2: RadialProfile, certify_tol: float = 1e-7,
                          fd_opts: FdOptions = FdOptions(), shoot_opts: ShootingOptions = ShootingOptions(),
                          n_scan: int = 48, sub_tol: float = 1e-8, max_iter: int = 400) -> ThreeSolutionResult:
    """Verify the hypotheses of the three-solution theorem for two ordered
    sub/supersolution pairs and compute the solutions.

    u1 comes from ascending A_G iteration from psi1, u2 from descending
    iteration from phi1; a third solution is looked for by shooting between
    their center values and kept only if it lies in [psi1, phi1] but in
    neither [psi1, phi2] nor [psi2, phi1].  Raises :class:`HypothesisFailure`
    naming the first failed check.
    """
    _require_autonomous(problem)
    profiles = {"psi1": psi1, "phi1": phi1, "psi2": psi2, "phi2": phi2}
    base = psi1
    for name, prof in profiles.items():
        if not prof.same_grid(base):
            raise HypothesisFailure(f"grid({name})", "all four profiles must share nodes")
    member_tol = 10 * certify_tol
    checks = []

    def need(name, ok, detail=""):
        checks.append((name, bool(ok), detail))
        if not ok:
            raise HypothesisFailure(name, detail)

    for name in ("psi1", "psi2"):
        prof = profiles[name]
        ok = prof.is_positive_solution_shape() and check_subsolution(prof, problem, sub_tol)[0]
        need(f"subsolution({name})", ok)
    for name in ("phi1", "phi2"):
        prof = profiles[name]
        ok = prof.is_positive_solution_shape() and check_supersolution(prof, problem, sub_tol)[0]
        need(f"supersolution({name})", ok)
    for lo, hi in (("psi1", "psi2"), ("psi2", "phi1"), ("psi1", "phi2"), ("phi2", "phi1")):
        need(f"{lo} <= {hi}", np.all(profiles[lo].values <= profiles[hi].values))
    need("psi2 not-leq phi2", np.any(psi2.values > phi2.values))
    bad = problem.reaction.check(u_max=float(np.max(phi1.values)), n=4001)
    need("G(0)=0 and G nondecreasing on [0, max phi1]", not bad, ", ".join(bad))
    e = RadialProfile(base.nodes, _e_on(base.nodes, problem))
    strict, margin, _ = check_ag_gap(phi2, problem, e, supersolution=True)
    need("A_G(phi2) < phi2", strict, f"e-margin {margin:.3e}")
    strict, margin, _ = check_ag_gap(psi2, problem, e)
    need("A_G(psi2) > psi2", strict, f"e-margin {margin:.3e}")

    solutions = []
    t1 = monotone_iterate(psi1, problem, "ascending", max_iter=max_iter, keep_iterates=False)
    u1 = _as_certified(t1.iterates[-1], problem, certify_tol, fd_opts.eps_min)
    need("u1 converged", t1.converged and u1.certified, f"residual {u1.residual:.3e}")
    need("u1 in [psi1, phi2]", _in_interval(u1.profile, psi1, phi2, member_tol))
    solutions.append(("u1 in [psi1,phi2]", u1))
    t2 = monotone_iterate(phi1, problem, "descending", max_iter=max_iter, keep_iterates=False)
    u2 = _as_certified(t2.iterates[-1], problem, certify_tol, fd_opts.eps_min)
    need("u2 converged", t2.converged and u2.certified, f"residual {u2.residual:.3e}")
    need("u2 in [psi2, phi1]", _in_interval(u2.profile, psi2, phi1, member_tol))
    solutions.append(("u2 in [psi2,phi1]", u2))

    a_lo, a_hi = sorted((u1.profile.values[0], u2.profile.values[0]))
    roots = find_roots(lambda a: shoot_residual(a, problem, shoot_opts), a_lo * (1 + 1e-6), a_hi * (1 - 1e-6),
                       n_scan, shoot_opts.tol)
    status = "NOT FOUND"
    for a in roots:
        cand = certify_center_value(a, problem, base.nodes, certify_tol, shoot_opts, fd_opts)
        if not cand.certified:
            continue
        u3 = cand.profile
        if not _in_interval(u3, psi1, phi1, member_tol):
            continue
        if _in_interval(u3, psi1, phi2, member_tol) or _in_interval(u3, psi2, phi1, member_tol):
            continue
        if all(np.max(np.abs(u3.values - s.profile.values)) >= 100 * certify_tol for _, s in solutions):
            solutions.append(("u3 in [psi1,phi1] minus both", cand))
            status = "FOUND"
            break
    return ThreeSolutionResult(solutions, checks, status)


def _e_on(nodes, problem):
    from .fd import e_closed_form

    return e_closed_form(problem.p, problem.dim, problem.radius, nodes)


def _as_certified(prof: RadialProfile, problem, certify_tol, eps: float = 0.0) -> CertifiedSolution:
    res = float(np.max(np.abs(scaled_residual(prof, problem, eps, 0.0))))
    ok = res <= certify_tol and prof.is_positive_solution_shape()
    return CertifiedSolution(float(prof.values[0]), float(np.max(prof.values)), res, 0.0, prof, bool(ok))


def candidates_from_solutions(lower: RadialProfile, upper: RadialProfile, problem: RadialProblem,
                              eps_rel: float = 1e-3, c_small: float = 0.5, fd_opts: FdOptions = FdOptions()):
    """Sub/supersolution candidates (psi1, phi1, psi2, phi2) built around a
    lower and an upper computed solution:

        psi1 = c xi_lam,  phi2 = lower + eps e,  psi2 = upper - eps e,  phi1 = upper + eps e,

    with e the torsion function scaled to the solution size.  They must still
    pass the hypothesis checks of :func:`three_solution_search`.
    """
    nodes = lower.nodes
    xi = solve_xi_lambda(problem.lam, problem.p, problem.delta, problem.dim, problem.radius,
                         FdOptions(grid_m=len(nodes), gamma=fd_opts.gamma), )
    if not xi.same_grid(lower):
        xi = RadialProfile(nodes, np.interp(nodes, xi.nodes, xi.values))
    e = _e_on(nodes, problem)
    e = e / e[0]
    psi1 = RadialProfile(nodes, c_small * xi.values)
    phi2 = RadialProfile(nodes, lower.values + eps_rel * lower.values[0] * e)
    psi2 = RadialProfile(nodes, upper.values - eps_rel * upper.values[0] * e)
    phi1 = RadialProfile(nodes, upper.values + eps_rel * upper.values[0] * e)
    return psi1, phi1, psi2, phi2


@dataclass
class BifurcationRow:
    lam: float
    roots: list  # CertifiedSolution, certified only, ascending a*
    rejected: list = field(default_factory=list)  # roots that failed certification
    error: Optional[str] = None


@dataclass
class BifurcationDiagram:
    rows: list

    def to_csv(self) -> str:
        lines = ["lambda,root_index,a_star,sup_norm,residual"]
        for row in self.rows:
            for k, s in enumerate(row.roots):
                lines.append(f"{row.lam:.17g},{k},{s.a_star:.17g},{s.sup_norm:.17g},{s.residual:.17g}")
        return "\n".join(lines) + "\n"

    def max_count(self) -> int:
        return max((len(r.roots) for r in self.rows), default=0)


def _sweep_row(args):
    lam, problem, a_min, a_max, n_scan, shoot_opts, fd_opts, certify_tol, residual_fn, certify = args
    prob = problem.replace(lam=lam)
    try:
        if residual_fn is not None:
            roots = find_roots(lambda a: residual_fn(a, prob), a_min, a_max, n_scan, shoot_opts.tol)
        else:
            roots = find_roots(lambda a: shoot_residual(a, prob, shoot_opts), a_min, a_max, n_scan, shoot_opts.tol)
    except Exception as exc:  # recorded in-row, the sweep continues
        return BifurcationRow(lam, [], [], f"{type(exc).__name__}: {exc}")
    if not certify:
        return BifurcationRow(lam, [CertifiedSolution(a, a, 0.0, 0.0) for a in roots])
    nodes = make_nodes(fd_opts, prob.radius)
    good, bad = [], []
    for a in roots:
        c = certify_center_value(a, prob, nodes, certify_tol, shoot_opts, fd_opts)
        c.profile = None
        (good if c.certified else bad).append(c)
    return BifurcationRow(lam, good, bad)


def bifurcation_sweep(problem: RadialProblem, lambdas, a_min: float, a_max: float, n_scan: int = 48,
                      shoot_opts: ShootingOptions = ShootingOptions(tol=1e-9),
                      fd_opts: FdOptions = FdOptions(), certify_tol: float = 1e-7,
                      residual_fn: Optional[Callable] = None, certify: Optional[bool] = None,
                      workers: Optional[int] = None) -> BifurcationDiagram:
    """Roots of the shooting residual for each lambda, each certified by FD.

    ``residual_fn(a, problem)`` replaces the shooting residual (used to
    validate the root machinery); certification is then off by default.
    Rows are independent and are computed in parallel with ``workers``
    processes (default from SINGULAR_PLAP_THREADS), merged in lambda order.
    """
    lambdas = [float(x) for x in lambdas]
    if any(x <= 0 for x in lambdas) or any(b <= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be positive and ascending")
    if certify is None:
        certify = residual_fn is None
    if certify:
        _require_autonomous(problem)
    jobs = [(lam, problem, a_min, a_max, n_scan, shoot_opts, fd_opts, certify_tol, residual_fn, certify)
            for lam in lambdas]
    workers = workers or thread_cap()
    if workers > 1 and residual_fn is None:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    return BifurcationDiagram(rows)
