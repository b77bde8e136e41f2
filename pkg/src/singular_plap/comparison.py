"""Weak and strong comparison checks between two radial solution profiles."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .fd import FdOptions, make_nodes, solve_fd
from .model import RadialProblem, RadialProfile, Source

__all__ = [
    "SCP_HOLDS",
    "SCP_FAILS",
    "INCONCLUSIVE",
    "HypothesisViolated",
    "ComparisonReport",
    "ScpExperiment",
    "check_weak_order",
    "check_scp",
    "is_nonincreasing",
    "run_scp_experiment",
]

SCP_HOLDS = "SCP_HOLDS"
SCP_FAILS = "SCP_FAILS"
INCONCLUSIVE = "INCONCLUSIVE"


class HypothesisViolated(ValueError):
    pass


@dataclass(frozen=True)
class ComparisonReport:
    weak_ok: bool
    weak_max_violation: float
    interior_gap_min: float
    interior_gap_argmin: float
    du_at_R: float
    dv_at_R: float
    hopf_margin: float
    gap_tol: float
    hopf_tol: float
    verdict: str
    grid_nodes: int
    h_max: float
    radius: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=_json_float) + "\n"


def _json_float(x):
    return float(x)


def _check_grid(u: RadialProfile, v: RadialProfile):
    if not u.same_grid(v):
        raise ValueError("grid mismatch: profiles must share nodes")


def check_weak_order(u: RadialProfile, v: RadialProfile, tol: float = 0.0) -> tuple[bool, float]:
    """(u <= v + tol at every node, max(u - v, 0))."""
    _check_grid(u, v)
    diff = u.values - v.values
    return bool(np.all(diff <= tol)), float(max(np.max(diff), 0.0))


def check_scp(u: RadialProfile, v: RadialProfile, gap_tol: Optional[float] = None,
              hopf_tol: Optional[float] = None, weak_tol: float = 0.0) -> ComparisonReport:
    """Evidence for 0 < u < v inside and v'(R) < u'(R) < 0.

    The interior gap is measured on r <= 0.9 R; closer to the boundary the
    Hopf margin is the relevant quantity.  Default tolerances are
    ``10 h max|slope|`` for the gap and ``5 h`` for the derivatives, with h
    the largest mesh spacing.
    """
    _check_grid(u, v)
    if u.values[-1] != 0 or v.values[-1] != 0:
        raise ValueError("both profiles must vanish at r = R")
    h = u.h
    if gap_tol is None:
        gap_tol = 10.0 * h * float(max(np.max(np.abs(u.slopes())), np.max(np.abs(v.slopes()))))
    if hopf_tol is None:
        hopf_tol = 5.0 * h
    weak_ok, viol = check_weak_order(u, v, weak_tol)
    inner = u.nodes <= 0.9 * u.radius
    gap = (v.values - u.values)[inner]
    k = int(np.argmin(gap))
    gap_min = float(gap[k])
    du, dv = u.boundary_slope(), v.boundary_slope()
    margin = du - dv
    if not weak_ok or gap_min <= 0 or margin <= 0 or du >= 0:
        verdict = SCP_FAILS
    elif gap_min > gap_tol and margin > hopf_tol and du < -hopf_tol:
        verdict = SCP_HOLDS
    else:
        verdict = INCONCLUSIVE
    return ComparisonReport(
        weak_ok=weak_ok,
        weak_max_violation=viol,
        interior_gap_min=gap_min,
        interior_gap_argmin=float(u.nodes[inner][k]),
        du_at_R=du,
        dv_at_R=dv,
        hopf_margin=margin,
        gap_tol=float(gap_tol),
        hopf_tol=float(hopf_tol),
        verdict=verdict,
        grid_nodes=len(u),
        h_max=h,
        radius=u.radius,
    )


def is_nonincreasing(profile: RadialProfile, tol: float = 1e-10) -> bool:
    return bool(np.all(np.diff(profile.values) <= tol))


@dataclass
class ScpExperiment:
    report: ComparisonReport
    u: RadialProfile
    v: RadialProfile
    shooting_deviation: Optional[float] = None


def run_scp_experiment(p: float, delta: float, lam: float, f: Callable, g: Callable, dim: int,
                       radius: float = 1.0, opts: FdOptions = FdOptions(), cross_check: bool = False,
                       gap_tol: Optional[float] = None, hopf_tol: Optional[float] = None) -> ScpExperiment:
    """Solve -Delta_p u - lam/u^delta = f and the same with g, then compare.

    Raises :class:`HypothesisViolated` unless 0 <= f <= g with f not identically
    g on the grid and both computed solutions are radially nonincreasing.
    """
    r = make_nodes(opts, radius)
    fv = np.broadcast_to(np.asarray(f(r[:-1]), float), r[:-1].shape)
    gv = np.broadcast_to(np.asarray(g(r[:-1]), float), r[:-1].shape)
    if np.any(fv < 0):
        raise HypothesisViolated("f >= 0 fails")
    if np.any(fv > gv):
        raise HypothesisViolated("f <= g fails")
    if not np.any(gv > fv):
        raise HypothesisViolated("f not identically g fails")
    pu = RadialProblem(p, delta, lam, dim, radius, Source(f))
    pv = RadialProblem(p, delta, lam, dim, radius, Source(g))
    u = solve_fd(pu, opts)
    v = solve_fd(pv, opts)
    for name, prof in (("u", u), ("v", v)):
        if not is_nonincreasing(prof):
            raise HypothesisViolated(f"solution {name} is not radially nonincreasing")
    dev = None
    if cross_check:
        from .shooting import find_center_values, profile_from_shot

        dev = 0.0
        for prob, prof in ((pu, u), (pv, v)):
            a0 = prof.values[0]
            roots = find_center_values(prob, 0.5 * a0, 2.0 * a0, 16)
            if not roots:
                dev = float("inf")
                break
            a = min(roots, key=lambda x: abs(x - a0))
            shot = profile_from_shot(a, prob, prof.nodes)
            dev = max(dev, float(np.max(np.abs(shot.values - prof.values))))
    report = check_scp(u, v, gap_tol, hopf_tol)
    return ScpExperiment(report, u, v, dev)
