"""The closed-form family u_theta = 1 - r^theta and a certificate that strong
comparison fails for p > 2.

For every theta, u_theta solves -Delta_p u - lam u^-delta = f_theta in the
unit ball with

    f_theta(r) = ((p-1)(theta-1) - 1 + N) theta^(p-1) r^((p-1)(theta-1)-1)
                 - lam (1 - r^theta)^-delta.

All u_theta share the center value 1, so two members with ordered sources
touch at the origin although their sources differ.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .comparison import SCP_FAILS, check_scp
from .expr import DomainError
from .fd import assemble_residual
from .model import RadialProblem, RadialProfile, Source, graded_nodes, uniform_nodes

__all__ = [
    "CounterexampleSpec",
    "CounterexampleCertificate",
    "PreconditionFailed",
    "u_theta",
    "f_theta",
    "dtheta_f",
    "plap_u_theta",
    "verify_pde_identity",
    "fd_residual_u_theta",
    "l_p_fn",
    "lambda_condition_rhs",
    "check_lambda_condition",
    "build_certificate",
]


class PreconditionFailed(ValueError):
    def __init__(self, check: str, detail: str):
        super().__init__(f"{check}: {detail}")
        self.check = check
        self.detail = detail


@dataclass(frozen=True)
class CounterexampleSpec:
    p: float
    dim: int
    delta: float
    lam: float
    theta1: float
    theta2: float

    def violations(self) -> list[tuple[str, str]]:
        out = []
        if not self.p > 2:
            out.append(("requires p>2", f"p = {self.p}"))
            return out
        if not 0 < self.delta < 1:
            out.append(("delta in (0,1)", f"delta = {self.delta}"))
        if not self.lam > 0:
            out.append(("lambda > 0", f"lambda = {self.lam}"))
        if int(self.dim) != self.dim or self.dim < 1:
            out.append(("N >= 1", f"N = {self.dim}"))
        if not self.theta1 < self.theta2:
            out.append(("theta1 < theta2", f"{self.theta1} >= {self.theta2}"))
        lo = self.p / (self.p - 2)
        if not self.theta1 >= lo:
            out.append(("theta1 >= p/(p-2)", f"theta1 = {self.theta1} < {lo}"))
        if not out:
            ok, margin = check_lambda_condition(self)
            if not ok:
                ld = self.lam * self.delta
                out.append(("lambda condition",
                            f"lambda*delta = {ld:.17g} < {ld - margin:.17g}, margin {margin:.17g}"))
        return out


def u_theta(theta: float, r):
    """1 - r^theta, computed as -expm1(theta ln r) to keep relative accuracy near r = 1."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.expm1(theta * np.log(r))
    return np.where(r == 0, 1.0, out)


def _exponent(theta, p):
    return (p - 1.0) * (theta - 1.0) - 1.0


def f_theta(theta: float, p: float, dim: int, lam: float, delta: float, r):
    r = np.asarray(r, dtype=float)
    if np.any(r >= 1) or np.any(r < 0):
        raise DomainError("f_theta is defined for 0 <= r < 1")
    k = _exponent(theta, p)
    with np.errstate(divide="ignore"):
        lead = ((p - 1.0) * (theta - 1.0) - 1.0 + dim) * theta ** (p - 1.0) * r**k
    out = lead - lam * u_theta(theta, r) ** (-delta)
    if not np.all(np.isfinite(out)):
        raise DomainError("f_theta is unbounded at r = 0 for these parameters")
    return out


def dtheta_f(theta: float, p: float, dim: int, lam: float, delta: float, r):
    """Partial derivative of f_theta in theta (three closed-form summands)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0) or np.any(r >= 1):
        raise DomainError("dtheta_f is evaluated for 0 < r < 1")
    k = _exponent(theta, p)
    rk = r**k
    ln = np.log(r)
    t1 = (p - 1.0) * (p * (theta - 1.0) + dim) * theta ** (p - 2.0) * rk
    t2 = (p - 1.0) * (p * (theta - 1.0) + dim - theta) * theta ** (p - 1.0) * rk * ln
    rt = r**theta
    t3 = -lam * delta * u_theta(theta, r) ** (-delta - 1.0) * rt * ln
    return t1 + t2 + t3


def plap_u_theta(theta: float, p: float, dim: int, r):
    """-Delta_p u_theta by the product rule on r^(1-N) (r^(N-1) phi(u'))'."""
    r = np.asarray(r, dtype=float)
    du = -theta * r ** (theta - 1.0)
    d2u = -theta * (theta - 1.0) * r ** (theta - 2.0)
    flux = -np.abs(du) ** (p - 1.0)
    return -(dim - 1.0) / r * flux - (p - 1.0) * np.abs(du) ** (p - 2.0) * d2u


def verify_pde_identity(theta: float, p: float, dim: int, lam: float, delta: float, grid) -> float:
    """max |-Delta_p u_theta - lam u_theta^-delta - f_theta| over ``grid`` (inside (0, 1))."""
    r = np.asarray(grid, dtype=float)
    lhs = plap_u_theta(theta, p, dim, r) - lam * u_theta(theta, r) ** (-delta)
    return float(np.max(np.abs(lhs - f_theta(theta, p, dim, lam, delta, r))))


def fd_residual_u_theta(theta: float, p: float, dim: int, lam: float, delta: float, m: int,
                        gamma: Optional[float] = 2.0) -> float:
    """Flux-form discrete residual of the exact u_theta with source f_theta on a
    graded grid (uniform for ``gamma=None``); measures consistency of the
    finite-difference operator."""
    r = uniform_nodes(m, 1.0) if gamma is None else graded_nodes(m, 1.0, gamma)
    prof = RadialProfile(r, u_theta(theta, r))
    src = Source(lambda x: f_theta(theta, p, dim, lam, delta, x))
    problem = RadialProblem(p, delta, lam, dim, 1.0, src)
    return float(np.max(np.abs(assemble_residual(prof, problem, 0.0)[:-1])))


def l_p_fn(theta: float, p: float, dim: int) -> float:
    """1/theta + 1/(p(theta-1) + N - theta)."""
    if not theta > 1:
        raise ValueError("l_p needs theta > 1")
    den = p * (theta - 1.0) + dim - theta
    if den <= 0:
        raise ZeroDivisionError(f"p(theta-1) + N - theta = {den} <= 0")
    return 1.0 / theta + 1.0 / den


def lambda_condition_rhs(theta, p: float, dim: int):
    theta = np.asarray(theta, dtype=float)
    return (p - 1.0) * (p * (theta - 1.0) + dim - theta) * theta ** (p - 1.0)


def check_lambda_condition(spec: CounterexampleSpec, n_samples: int = 257) -> tuple[bool, float]:
    """lam*delta >= rhs(theta) on [theta1, theta2]; rhs is evaluated at theta2 and
    the sampled maximum over the interval must not exceed it."""
    rhs2 = float(lambda_condition_rhs(spec.theta2, spec.p, spec.dim))
    samples = lambda_condition_rhs(np.linspace(spec.theta1, spec.theta2, n_samples), spec.p, spec.dim)
    rhs = max(rhs2, float(np.max(samples)))
    margin = spec.lam * spec.delta - rhs
    return margin >= 0, margin


@dataclass
class CounterexampleCertificate:
    spec: CounterexampleSpec
    grid_m: int
    pde_residual_max: dict
    fd_residual: dict
    lambda_margin: float
    dtheta_min: float
    dtheta_argmin: tuple
    f_order_ok: bool
    f_order_min_gap: float
    u_order_ok: bool
    u_gap_min_interior: float
    touch_at_zero: bool
    scp_verdict: str
    scp_gap_argmin: float
    hopf_margin: float
    checks: list = field(default_factory=list)
    verdict: bool = False

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        rows = [("check", "value", "threshold", "result")]
        for name, value, threshold, ok in self.checks:
            rows.append((name, f"{value:.6g}" if isinstance(value, float) else str(value), threshold,
                         "pass" if ok else "FAIL"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"verdict: {'SCP violated (certificate valid)' if self.verdict else 'certificate NOT valid'}")
        return "\n".join(lines) + "\n"


def build_certificate(spec: CounterexampleSpec, grid_m: int = 4096, n_theta: int = 512,
                      r_floor: float = 1e-6) -> CounterexampleCertificate:
    bad = spec.violations()
    if bad:
        raise PreconditionFailed(*bad[0])
    p, dim, lam, delta = spec.p, spec.dim, spec.lam, spec.delta
    t1, t2 = spec.theta1, spec.theta2
    r_in = np.linspace(r_floor, 1.0 - r_floor, grid_m)

    res = {str(t): verify_pde_identity(t, p, dim, lam, delta, r_in) for t in (t1, t2)}
    fd_res = {str(t): fd_residual_u_theta(t, p, dim, lam, delta, 1025) for t in (t1, t2)}

    ok_lam, margin = check_lambda_condition(spec)

    thetas = np.linspace(t1, t2, n_theta)
    dmin, arg = np.inf, (t1, r_floor)
    for th in thetas:
        d = dtheta_f(th, p, dim, lam, delta, r_in)
        j = int(np.argmin(d))
        if d[j] < dmin:
            dmin, arg = float(d[j]), (float(th), float(r_in[j]))

    f_gap = f_theta(t2, p, dim, lam, delta, r_in) - f_theta(t1, p, dim, lam, delta, r_in)
    f_ok = bool(np.all(f_gap >= 0))

    r_full = np.linspace(0.0, 1.0, grid_m)
    u1 = RadialProfile(r_full, u_theta(t1, r_full))
    u2 = RadialProfile(r_full, u_theta(t2, r_full))
    touch = bool(u1.values[0] == 1.0 and u2.values[0] == 1.0)
    gap_int = (u2.values - u1.values)[1:-1]
    u_ok = bool(np.all(gap_int > 0))
    rep = check_scp(u1, u2)

    checks = [
        (f"pde residual theta1={t1:g}", res[str(t1)], "<= 1e-10", res[str(t1)] <= 1e-10),
        (f"pde residual theta2={t2:g}", res[str(t2)], "<= 1e-10", res[str(t2)] <= 1e-10),
        ("lambda condition margin", float(margin), ">= 0", ok_lam),
        ("min d/dtheta f_theta", dmin, ">= -1e-10", dmin >= -1e-10),
        ("min f_theta2 - f_theta1", float(np.min(f_gap)), ">= 0", f_ok),
        ("u_theta1(0) = u_theta2(0) = 1", touch, "exact", touch),
        ("min interior u_theta2 - u_theta1", float(np.min(gap_int)), "> 0", u_ok),
        ("check_scp verdict", rep.verdict, SCP_FAILS, rep.verdict == SCP_FAILS),
        ("check_scp gap argmin", rep.interior_gap_argmin, "r = 0", rep.interior_gap_argmin == 0.0),
    ]
    # ordering of the sources must follow from the sign of the derivative
    if dmin >= -1e-10 and not f_ok:
        checks.append(("mean value consistency", False, "f order follows", False))
    verdict = all(bool(c[3]) for c in checks)
    return CounterexampleCertificate(
        spec=spec,
        grid_m=grid_m,
        pde_residual_max=res,
        fd_residual=fd_res,
        lambda_margin=float(margin),
        dtheta_min=dmin,
        dtheta_argmin=arg,
        f_order_ok=f_ok,
        f_order_min_gap=float(np.min(f_gap)),
        u_order_ok=u_ok,
        u_gap_min_interior=float(np.min(gap_int)),
        touch_at_zero=touch,
        scp_verdict=rep.verdict,
        scp_gap_argmin=rep.interior_gap_argmin,
        hopf_margin=rep.hopf_margin,
        checks=[(c[0], c[1] if not isinstance(c[1], (np.floating, np.bool_)) else c[1].item(), c[2], bool(c[3]))
                for c in checks],
        verdict=verdict,
    )
