"""Radial shooting on the center value a = u(0).

The radial equation is integrated as the first-order system

    u1' = phi_p_inv(u2),
    u2' = -(N-1)/r u2 - (lam u1^-delta + f(r)),

with u1 = u and u2 = |u'|^(p-2) u', starting from a series expansion at
r0 > 0.  The boundary mismatch S(a) changes sign across every solution of
the Dirichlet problem, and roots are located by scanning and bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .expr import DomainError
from .model import Autonomous, Frozen, RadialProblem, RadialProfile, Source, phi_p_inv

__all__ = [
    "ShootingState",
    "ShotOutcome",
    "ShootingOptions",
    "ShootingError",
    "ode_rhs",
    "series_start",
    "integrate_shot",
    "shoot_residual",
    "find_roots",
    "find_center_values",
    "profile_from_shot",
]


class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ShootingState:
    r: float
    u1: float
    u2: float


@dataclass
class ShotOutcome:
    kind: str  # "reached_boundary" | "hit_zero" | "fell_below_floor"
    trajectory: list
    u_at_R: Optional[float] = None
    r_star: Optional[float] = None

    @property
    def final(self) -> ShootingState:
        return self.trajectory[-1]

    def to_csv(self) -> str:
        lines = ["r,u1,u2"]
        lines += [f"{s.r:.17g},{s.u1:.17g},{s.u2:.17g}" for s in self.trajectory]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ShootingOptions:
    r0: Optional[float] = None  # default 1e-6 R
    u_floor: Optional[float] = None  # default 1e-9 a
    tol: float = 1e-10
    max_steps: int = 200_000


def _beta(r: float, u1: float, problem: RadialProblem) -> float:
    if u1 <= 0:
        raise DomainError(f"u1 = {u1!r} <= 0: singular reaction undefined")
    rx = problem.reaction
    if isinstance(rx, Source):
        extra = float(rx(r))
    elif isinstance(rx, Autonomous):
        extra = problem.lam * float(rx(u1))
    else:
        raise TypeError("shooting needs a Source or Autonomous reaction, not Frozen")
    return -(problem.lam * u1 ** (-problem.delta) + extra)


def ode_rhs(state: ShootingState, problem: RadialProblem) -> tuple[float, float]:
    r, u1, u2 = state.r, state.u1, state.u2
    beta = _beta(r, u1, problem)
    du1 = float(phi_p_inv(u2, problem.p))
    du2 = -(problem.dim - 1) / r * u2 + beta
    return du1, du2


def series_start(a: float, r0: float, problem: RadialProblem) -> ShootingState:
    """First-order start: (r^(N-1) u2)' = r^(N-1) beta gives u2 ~ beta(0, a) r0 / N."""
    if a <= 0:
        raise ValueError("center value a must be positive")
    return ShootingState(r0, a, _beta(0.0, a, problem) * r0 / problem.dim)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600,
    0.0,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)


class _Rhs:
    """Scalar right-hand side specialised to the problem (hot loop)."""

    def __init__(self, problem: RadialProblem):
        self.nm1 = problem.dim - 1
        self.lam = problem.lam
        self.delta = problem.delta
        self.q = 1.0 / (problem.p - 1.0)
        rx = problem.reaction
        if isinstance(rx, Source):
            f = rx.f
            self.extra = lambda r, u: float(f(r))
        elif isinstance(rx, Autonomous):
            g = rx.g_fn
            lam = problem.lam
            self.extra = lambda r, u: lam * float(g(u))
        else:
            raise TypeError("shooting needs a Source or Autonomous reaction, not Frozen")

    def __call__(self, r, u1, u2):
        if not u1 > 0:
            return None
        du1 = math.copysign(abs(u2) ** self.q, u2) if u2 != 0 else 0.0
        du2 = -self.nm1 / r * u2 - (self.lam * u1 ** (-self.delta) + self.extra(r, u1))
        return du1, du2


def _dp_step(rhs, r, y1, y2, k1, h):
    """One Dormand-Prince step; returns None if a stage leaves u1 > 0."""
    ks = [k1]
    for i in range(1, 7):
        a = _A[i]
        s1 = y1 + h * sum(a[j] * ks[j][0] for j in range(i))
        s2 = y2 + h * sum(a[j] * ks[j][1] for j in range(i))
        k = rhs(r + _C[i] * h, s1, s2)
        if k is None:
            return None
        ks.append(k)
        if i == 6:
            n1, n2 = s1, s2
    e1 = h * sum(_E[j] * ks[j][0] for j in range(7))
    e2 = h * sum(_E[j] * ks[j][1] for j in range(7))
    return n1, n2, ks[6], e1, e2


def _end_radius(problem: RadialProblem) -> float:
    """R, or a point just short of R when the source is not finite at R
    (the last stretch is then bridged by linear extrapolation)."""
    R = problem.radius
    if isinstance(problem.reaction, Source):
        try:
            ok = bool(np.all(np.isfinite(problem.reaction(np.array([R])))))
        except (DomainError, ZeroDivisionError, FloatingPointError):
            ok = False
        if not ok:
            return R * (1.0 - 1e-10)
    return R


def integrate_shot(a: float, problem: RadialProblem, opts: ShootingOptions = ShootingOptions()) -> ShotOutcome:
    """Integrate from the series start at r0 until r = R or u1 reaches 0."""
    if not a > 0:
        raise ValueError("center value a must be positive")
    R = problem.radius
    r0 = opts.r0 if opts.r0 is not None else 1e-6 * R
    u_floor = opts.u_floor if opts.u_floor is not None else 1e-9 * a
    tol = opts.tol
    rhs = _Rhs(problem)

    r_end = _end_radius(problem)
    start = series_start(a, r0, problem)
    traj = [ShootingState(0.0, a, 0.0), start]
    r, y1, y2 = start.r, start.u1, start.u2
    k1 = rhs(r, y1, y2)
    h = min(1e-3 * R, 0.1 * R)
    steps = 0
    while True:
        if steps >= opts.max_steps:
            raise ShootingError(f"max_steps={opts.max_steps} exceeded at r={r:.6g} (a={a:.6g})")
        steps += 1
        h = min(h, r_end - r)
        step = _dp_step(rhs, r, y1, y2, k1, h)
        if step is None or step[0] <= 0:
            # the zero of u1 lies inside this step: shrink onto it
            if h <= tol * R:
                r_star = r + h
                return ShotOutcome("hit_zero", traj, r_star=min(r_star, R))
            h *= 0.5
            continue
        n1, n2, k7, e1, e2 = step
        sc1 = tol + tol * max(abs(y1), abs(n1))
        sc2 = tol + tol * max(abs(y2), abs(n2))
        err = math.sqrt(((e1 / sc1) ** 2 + (e2 / sc2) ** 2) / 2)
        if err > 1.0 and h > 1e-14 * R:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        r = r_end if r_end - (r + h) <= 1e-15 * R else r + h
        y1, y2, k1 = n1, n2, k7
        traj.append(ShootingState(r, y1, y2))
        if r >= r_end:
            if r_end < R:
                y1 = y1 + k1[0] * (R - r_end)
                traj.append(ShootingState(R, y1, y2))
            return ShotOutcome("reached_boundary", traj, u_at_R=y1)
        if y1 < u_floor and k1[0] < 0:
            # linear extrapolation to the zero
            r_star = r - y1 / k1[0]
            if R - r_star <= 100 * tol * R:
                # the zero is R itself up to integration accuracy
                u_R = y1 + k1[0] * (R - r)
                traj.append(ShootingState(R, u_R, y2))
                return ShotOutcome("reached_boundary", traj, u_at_R=u_R)
            if r_star < R:
                return ShotOutcome("fell_below_floor", traj, r_star=r_star)
        fac = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
        h *= max(0.2, fac)


def shoot_residual(a: float, problem: RadialProblem, opts: ShootingOptions = ShootingOptions()) -> float:
    """S(a) = u(R) if the shot reaches R, else -(R - r_star)."""
    out = integrate_shot(a, problem, opts)
    if out.kind == "reached_boundary":
        return float(out.u_at_R)
    return -(problem.radius - out.r_star)


def find_roots(S: Callable[[float], float], a_min: float, a_max: float, n_scan: int = 64, tol: float = 1e-10) -> list[float]:
    """Scan S on a log-spaced grid and bisect every sign change to |da| <= tol*a."""
    if not 0 < a_min < a_max:
        raise ValueError("need 0 < a_min < a_max")
    if n_scan < 8:
        raise ValueError("n_scan must be >= 8")
    grid = np.geomspace(a_min, a_max, n_scan)
    vals = [S(float(a)) for a in grid]
    roots = []
    for lo, hi, slo, shi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if slo == 0:
            roots.append(float(lo))
            continue
        if slo * shi > 0 or shi == 0:
            continue
        lo, hi = float(lo), float(hi)
        while hi - lo > tol * lo:
            mid = 0.5 * (lo + hi)
            smid = S(mid)
            if smid == 0:
                lo = hi = mid
                break
            if (smid > 0) == (slo > 0):
                lo, slo = mid, smid
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    roots.sort()
    merged = []
    for a in roots:
        if merged and a - merged[-1] <= 10 * tol * a:
            continue
        merged.append(a)
    return merged


def find_center_values(problem: RadialProblem, a_min: float, a_max: float, n_scan: int = 64,
                       opts: ShootingOptions = ShootingOptions()) -> list[float]:
    return find_roots(lambda a: shoot_residual(a, problem, opts), a_min, a_max, n_scan, opts.tol)


def profile_from_shot(a_star: float, problem: RadialProblem, nodes, opts: ShootingOptions = ShootingOptions(),
                      outcome: Optional[ShotOutcome] = None) -> RadialProfile:
    """Interpolate the shot from ``a_star`` onto ``nodes`` (cubic Hermite on
    the accepted steps).  The boundary value is clamped to 0."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.size < 9:
        raise ValueError(f"profile grids need at least 9 nodes, got {nodes.size}")
    out = outcome if outcome is not None else integrate_shot(a_star, problem, opts)
    traj = out.trajectory
    r = np.array([s.r for s in traj])
    u1 = np.array([s.u1 for s in traj])
    u2 = np.array([s.u2 for s in traj])
    du1 = phi_p_inv(u2, problem.p)
    R = problem.radius
    end = r[-1]
    if end < R:
        # a root is allowed to stop a hair before R; extend linearly to the zero
        if out.r_star is None or R - out.r_star > 1e-6 * R:
            raise ShootingError(f"trajectory ends at r={end:.6g}, outside requested range [0, {R}]")
        r = np.append(r, R)
        u1 = np.append(u1, 0.0)
        du1 = np.append(du1, du1[-1])
        u2 = np.append(u2, u2[-1])
    if nodes[0] < 0 or nodes[-1] > R * (1 + 1e-12):
        raise ShootingError("requested nodes outside the trajectory range")
    keep = np.concatenate([[True], np.diff(r) > 0])
    spline = CubicHermiteSpline(r[keep], u1[keep], du1[keep])
    values = spline(nodes)
    values[-1] = 0.0
    flux = np.interp(nodes, r[keep], u2[keep])
    return RadialProfile(nodes, values, flux)
