"""Conservative finite differences for the radial singular p-Laplace problem.

For nodes 0 = r_0 < ... < r_M = R the discrete equation at node i < M is

    -(F_{i+1/2} - F_{i-1/2}) / (h_i w_i) - (lam u_i^-delta + s_i) = 0,

with fluxes F_{i+1/2} = r_{i+1/2}^(N-1) phi_eps((u_{i+1} - u_i)/dr_i),
h_i = (r_{i+1} - r_{i-1})/2 and weight w_i = r_i^(N-1).  At the axis
F_{-1/2} = 0, h_0 = r_1/2 and w_0 = (r_1/2)^(N-1)/N (the cell volume
divided by h_0).  Residuals are therefore pointwise approximations of
-Delta_p u - lam u^-delta - s, and u_M = 0.

The flux uses phi_eps(t) = (t^2 + eps^2)^((p-2)/2) t; eps is driven from
eps0 down to eps_min by halving, each stage warm-started.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .model import Autonomous, Frozen, RadialProblem, RadialProfile, Source, graded_nodes, phi_p, uniform_nodes

__all__ = [
    "FdOptions",
    "FdInfo",
    "NonConvergence",
    "NegativeIterate",
    "LinearizedCoefficients",
    "make_nodes",
    "assemble_residual",
    "pointwise_residual",
    "solve_fd",
    "solve_xi_lambda",
    "solve_e",
    "e_closed_form",
    "apply_ag",
    "e_norm",
    "linearized_coefficients",
    "residual_norm",
    "residual_scale",
    "scaled_residual",
]


class NonConvergence(RuntimeError):
    def __init__(self, stage, iterations, residual):
        super().__init__(f"Newton did not converge (stage {stage}, {iterations} iterations, residual {residual:.3e})")
        self.stage = stage
        self.iterations = iterations
        self.residual = residual


class NegativeIterate(RuntimeError):
    pass


@dataclass(frozen=True)
class FdOptions:
    grid_m: int = 1025
    gamma: Optional[float] = 2.0  # None -> uniform grid
    eps0: float = 1e-2
    eps_min: float = 1e-8
    newton_tol: float = 1e-9
    max_newton: int = 60

    def __post_init__(self):
        if self.grid_m < 33:
            raise ValueError("grid_m must be >= 33")
        if not 0 < self.eps_min <= self.eps0:
            raise ValueError("need 0 < eps_min <= eps0")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")


@dataclass
class FdInfo:
    residual: float
    iterations: int
    stage_residuals: list = field(default_factory=list)
    scaled_residual: float = float("nan")


def make_nodes(opts: FdOptions, radius: float) -> np.ndarray:
    if opts.gamma is None:
        return uniform_nodes(opts.grid_m, radius)
    return graded_nodes(opts.grid_m, radius, opts.gamma)


class _Grid:
    def __init__(self, r: np.ndarray, dim: int):
        self.r = r
        self.dr = np.diff(r)
        rm = 0.5 * (r[:-1] + r[1:])
        self.rm_w = rm ** (dim - 1)
        h = np.empty(r.size - 1)
        h[0] = 0.5 * r[1]
        h[1:] = 0.5 * (r[2:] - r[:-2])
        w = np.empty(r.size - 1)
        w[0] = (0.5 * r[1]) ** (dim - 1) / dim
        w[1:] = r[1:-1] ** (dim - 1)
        self.w = w
        self.hw = h * w


def _phi_eps(t, p, eps):
    if p == 2.0:
        return t
    return (t * t + eps * eps) ** ((p - 2.0) / 2.0) * t


def _dphi_eps(t, p, eps):
    if p == 2.0:
        return np.ones_like(t)
    s = t * t + eps * eps
    return s ** ((p - 4.0) / 2.0) * ((p - 1.0) * t * t + eps * eps)


def _extra(problem: RadialProblem, r, u_int):
    """Non-singular part of the reaction on interior nodes."""
    rx = problem.reaction
    if isinstance(rx, Source):
        return np.broadcast_to(rx(r[:-1]), u_int.shape).astype(float)
    if isinstance(rx, Autonomous):
        return problem.lam * rx(np.maximum(u_int, 0.0))
    vals = rx.values
    if vals.shape[0] == r.size:
        return vals[:-1]
    if vals.shape[0] == r.size - 1:
        return vals
    raise ValueError("frozen source does not match the grid")


def _residual(grid: _Grid, u_int, problem, eps, clamp, extra=None):
    p = problem.p
    u = np.append(u_int, 0.0)
    t = np.diff(u) / grid.dr
    F = grid.rm_w * _phi_eps(t, p, eps)
    div = F.copy()
    div[1:] -= F[:-1]
    uc = np.maximum(u_int, clamp) if clamp > 0 else u_int
    if extra is None:
        extra = _extra(problem, grid.r, u_int)
    with np.errstate(divide="ignore"):
        sing = problem.lam * uc ** (-problem.delta) if problem.lam != 0 else np.zeros_like(uc)
    return -div / grid.hw - sing - extra, t


def pointwise_residual(profile: RadialProfile, problem: RadialProblem, eps: float = 0.0,
                       clamp: Optional[float] = None) -> np.ndarray:
    """Residual divided by the node weight (an approximation of the PDE
    residual at each node); the last entry is the Dirichlet row u_M.

    The singular term uses max(u, clamp) with clamp = eps unless given.
    """
    clamp = eps if clamp is None else clamp
    if profile.values[:-1].min() <= 0 and clamp <= 0:
        raise ValueError("profile must be positive at interior nodes when clamp = 0")
    grid = _Grid(profile.nodes, problem.dim)
    res, _ = _residual(grid, profile.values[:-1], problem, eps, clamp)
    return np.append(res, profile.values[-1])


def assemble_residual(profile: RadialProfile, problem: RadialProblem, eps: float = 0.0,
                      clamp: Optional[float] = None) -> np.ndarray:
    """Flux-form residual -(F_{i+1/2} - F_{i-1/2})/h_i - w_i (lam max(u_i, clamp)^-delta + s_i)
    with w_i = r_i^(N-1) (and w_0 = (r_1/2)^(N-1)/N at the axis); the last
    entry is the Dirichlet row u_M."""
    res = pointwise_residual(profile, problem, eps, clamp)
    res[:-1] *= _Grid(profile.nodes, problem.dim).w
    return res


def residual_norm(profile: RadialProfile, problem: RadialProblem, eps: float = 0.0,
                  clamp: Optional[float] = None) -> float:
    return float(np.max(np.abs(assemble_residual(profile, problem, eps, clamp))))


def residual_scale(profile: RadialProfile, problem: RadialProblem, eps: float = 0.0,
                   clamp: Optional[float] = None) -> np.ndarray:
    """Magnitude of the terms entering each interior residual entry:
    (|F_{i+1/2}| + |F_{i-1/2}|)/(h_i w_i) + lam u_i^-delta + |s_i|."""
    grid = _Grid(profile.nodes, problem.dim)
    u = profile.values
    u_int = u[:-1]
    F = np.abs(grid.rm_w * _phi_eps(np.diff(u) / grid.dr, problem.p, eps))
    flux = F.copy()
    flux[1:] += F[:-1]
    clamp = eps if clamp is None else clamp
    uc = np.maximum(u_int, clamp) if clamp > 0 else u_int
    sing = problem.lam * uc ** (-problem.delta) if problem.lam != 0 else 0.0
    return flux / grid.hw + sing + np.abs(_extra(problem, grid.r, u_int))


def scaled_residual(profile: RadialProfile, problem: RadialProblem, eps: float = 0.0,
                    clamp: Optional[float] = None) -> np.ndarray:
    """Interior residuals relative to :func:`residual_scale` (scale-free, so
    solutions of very different size are certified on equal footing)."""
    res = pointwise_residual(profile, problem, eps, clamp)[:-1]
    return res / residual_scale(profile, problem, eps, clamp)


def _g_prime(problem, u):
    rx = problem.reaction
    if not isinstance(rx, Autonomous):
        return None
    step = 1e-6 * np.maximum(u, 1e-3)
    lo = np.maximum(u - step, 0.0)
    hi = u + step
    return problem.lam * (rx(hi) - rx(lo)) / (hi - lo)


def _jacobian_bands(grid: _Grid, u_int, t, problem, eps, clamp):
    n = u_int.size
    D = grid.rm_w * _dphi_eps(t, problem.p, eps) / grid.dr  # per cell, n cells
    diag = D[:n] / grid.hw
    diag[1:] += D[: n - 1] / grid.hw[1:]
    upper = -D[: n - 1] / grid.hw[: n - 1]  # d Res_i / d u_{i+1}
    lower = -D[: n - 1] / grid.hw[1:]  # d Res_i / d u_{i-1}
    if problem.lam != 0:
        active = u_int > clamp
        diag += np.where(active, problem.lam * problem.delta * np.maximum(u_int, clamp) ** (-problem.delta - 1.0), 0.0)
    gp = _g_prime(problem, u_int)
    if gp is not None:
        diag -= gp
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return ab


def _initial_guess(problem: RadialProblem, r: np.ndarray):
    extra = _extra(problem, r, np.ones(r.size - 1))
    level = problem.lam + max(0.0, float(np.max(extra[np.isfinite(extra)], initial=0.0)))
    e = e_closed_form(problem.p, problem.dim, problem.radius, r)
    u = level ** (1.0 / (problem.p - 1.0)) * e
    # lift the boundary layer so the singular term starts moderate
    u = np.maximum(u, 0.5 * u[0] * (problem.radius - r) / problem.radius)
    u[-1] = 0.0
    return u


def _newton(grid, u_int, problem, eps, tol, max_iter, stage):
    # relative clamp keeps tiny solutions (u ~ 1e-4 and below) unaffected
    clamp = eps * float(np.max(u_int))
    res, t = _residual(grid, u_int, problem, eps, clamp)
    nrm = np.max(np.abs(res))
    for it in range(1, max_iter + 1):
        if nrm <= tol:
            return u_int, nrm, it - 1
        ab = _jacobian_bands(grid, u_int, t, problem, eps, clamp)
        step = solve_banded((1, 1), ab, -res)
        l2 = np.linalg.norm(res)
        s = 1.0
        for _ in range(30):
            trial = u_int + s * step
            if np.all(trial > 0):
                tres, tt = _residual(grid, trial, problem, eps, clamp)
                if np.all(np.isfinite(tres)) and np.linalg.norm(tres) < (1 - 1e-4 * s) * l2:
                    break
            s *= 0.5
        else:
            if np.max(np.abs(step)) <= 1e-10 * np.max(u_int):
                # rounding floor: the update no longer changes the iterate
                return u_int, nrm, it
            if not np.all(u_int + s * step > 0):
                raise NegativeIterate(f"damping could not keep the iterate positive (stage {stage})")
            raise NonConvergence(stage, it, nrm)
        u_int, res, t = trial, tres, tt
        nrm = np.max(np.abs(res))
    if nrm <= tol:
        return u_int, nrm, max_iter
    raise NonConvergence(stage, max_iter, nrm)


def _eps_schedule(opts: FdOptions):
    eps = [opts.eps0]
    while eps[-1] * 0.5 > opts.eps_min:
        eps.append(eps[-1] * 0.5)
    if eps[-1] != opts.eps_min:
        eps.append(opts.eps_min)
    return eps


def _node_flux(r, u, p):
    du = np.gradient(u, r, edge_order=2)
    du[0] = 0.0
    return phi_p(du, p)


def solve_fd(problem: RadialProblem, opts: FdOptions = FdOptions(), init: Optional[RadialProfile] = None,
             full_output: bool = False):
    """Damped Newton with eps-continuation.  Returns the profile (and an
    :class:`FdInfo` when ``full_output``)."""
    if init is not None:
        r = init.nodes
        u0 = np.array(init.values, dtype=float)
        if np.any(u0[:-1] <= 0):
            raise NegativeIterate("initial profile must be positive at interior nodes")
    else:
        r = make_nodes(opts, problem.radius)
        u0 = _initial_guess(problem, r)
    grid = _Grid(r, problem.dim)
    u_int = u0[:-1].copy()
    info = FdInfo(residual=np.inf, iterations=0)
    schedule = _eps_schedule(opts)
    for k, eps in enumerate(schedule):
        last = k == len(schedule) - 1
        tol = opts.newton_tol if last else max(opts.newton_tol, 1e-6)
        u_int, nrm, its = _newton(grid, u_int, problem, eps, tol, opts.max_newton, k)
        info.iterations += its
        info.stage_residuals.append(float(nrm))
    # report with the unclamped singular term
    res, _ = _residual(grid, u_int, problem, schedule[-1], 0.0)
    info.residual = float(np.max(np.abs(res)))
    u = np.append(u_int, 0.0)
    prof = RadialProfile(r, u, _node_flux(r, u, problem.p))
    if full_output:
        info.scaled_residual = float(np.max(np.abs(scaled_residual(prof, problem, schedule[-1], 0.0))))
        return prof, info
    return prof


def solve_xi_lambda(lam: float, p: float, delta: float, dim: int, radius: float = 1.0,
                    opts: FdOptions = FdOptions(), init: Optional[RadialProfile] = None) -> RadialProfile:
    """The pure-singular solution: -Delta_p xi = lam xi^-delta, xi = 0 on the boundary."""
    problem = RadialProblem(p, delta, lam, dim, radius, Source(lambda r: np.zeros_like(np.asarray(r, float))))
    return solve_fd(problem, opts, init)


def e_closed_form(p: float, dim: int, radius, r):
    """Solution of -Delta_p e = 1 on B_R: (p-1)/p N^(-1/(p-1)) (R^q - r^q), q = p/(p-1)."""
    q = p / (p - 1.0)
    r = np.asarray(r, dtype=float)
    return (p - 1.0) / p * dim ** (-1.0 / (p - 1.0)) * (radius**q - r**q)


def solve_e(p: float, dim: int, radius: float = 1.0, opts: FdOptions = FdOptions()) -> RadialProfile:
    """Torsion function: -Delta_p e = 1, e = 0 on the boundary (computed by FD)."""
    problem = RadialProblem(p, 0.5, 0.0, dim, radius, Source(lambda r: np.ones_like(np.asarray(r, float))),
                            allow_zero_lambda=True)
    return solve_fd(problem, opts)


def apply_ag(u: RadialProfile, problem: RadialProblem, opts: FdOptions = FdOptions(),
             init: Optional[RadialProfile] = None) -> RadialProfile:
    """A_G(u) = w, the solution of -Delta_p w - lam/w^delta = lam G(u) on u's grid."""
    rx = problem.reaction
    if not isinstance(rx, Autonomous):
        raise TypeError("apply_ag needs an Autonomous reaction G")
    if np.any(u.values < 0):
        raise ValueError("A_G is applied to nonnegative profiles")
    frozen = problem.replace(reaction=Frozen(problem.lam * rx(u.values)))
    if init is None:
        init = u if np.all(u.values[:-1] > 0) else None
    if init is None:
        init = RadialProfile(u.nodes, _initial_guess(frozen, u.nodes))
    return solve_fd(frozen, opts, init)


def e_norm(u: RadialProfile, e: RadialProfile) -> float:
    """max_i |u_i| / e_i over nodes with r_i < R."""
    if not u.same_grid(e):
        raise ValueError("grid mismatch")
    ev = e.values[:-1]
    if np.any(ev <= 0):
        raise ValueError("e must be positive at interior nodes")
    return float(np.max(np.abs(u.values[:-1]) / ev))


@dataclass(frozen=True, eq=False)
class LinearizedCoefficients:
    nodes: np.ndarray
    a_vals: np.ndarray
    b_vals: np.ndarray
    degenerate: np.ndarray  # p < 2 with both slopes 0 at the node

    @property
    def elliptic(self) -> bool:
        ok = ~self.degenerate
        return bool(np.all(self.a_vals[ok] > 0) and np.all(np.isfinite(self.a_vals[ok])))

    @property
    def a_range(self) -> tuple[float, float]:
        ok = ~self.degenerate
        return float(np.min(self.a_vals[ok])), float(np.max(self.a_vals[ok]))


def linearized_coefficients(u: RadialProfile, v: RadialProfile, problem: RadialProblem, r_lo: float,
                            quad_n: int = 16) -> LinearizedCoefficients:
    """Radial diffusion coefficient a(r) and zeroth-order coefficient B(r) of
    the linear equation satisfied by w = v - u on the annulus [r_lo, R)."""
    if not u.same_grid(v):
        raise ValueError("grid mismatch")
    if r_lo <= 0:
        raise ValueError("r_lo must be positive")
    r = u.nodes
    sel = np.nonzero((r >= r_lo) & (r < r[-1]))[0]
    uu, vv = u.values[sel], v.values[sel]
    if np.any(uu <= 0) or np.any(vv <= 0):
        raise ValueError("u and v must be positive on [r_lo, R)")
    du = u.slopes()[sel]
    dv = v.slopes()[sel]
    x, wq = np.polynomial.legendre.leggauss(quad_n)
    t = 0.5 * (x + 1.0)
    wq = 0.5 * wq
    p, delta = problem.p, problem.delta
    g = np.abs((1 - t)[None, :] * du[:, None] + t[None, :] * dv[:, None])
    degenerate = (p < 2) & (du == 0) & (dv == 0)
    with np.errstate(divide="ignore"):
        a = (p - 1.0) * (g ** (p - 2.0) @ wq) if p != 2 else np.full(sel.size, 1.0)
    mix = (1 - t)[None, :] * uu[:, None] + t[None, :] * vv[:, None]
    b = -delta * (mix ** (-delta - 1.0) @ wq)
    a = np.where(degenerate, np.inf, a)
    return LinearizedCoefficients(r[sel], a, b, degenerate)
