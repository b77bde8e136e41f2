"""Problem data, radial profiles and the scalar p-Laplace primitives."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .expr import RadialFn, ScalarFn, DomainError

__all__ = [
    "phi_p",
    "phi_p_inv",
    "Source",
    "Autonomous",
    "Frozen",
    "Reaction",
    "RadialProblem",
    "RadialProfile",
    "uniform_nodes",
    "graded_nodes",
    "ProfileError",
]


def phi_p(t, p: float):
    """|t|^(p-2) t, extended by 0 at t = 0."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def phi_p_inv(y, p: float):
    """Inverse of :func:`phi_p`: sign(y) |y|^(1/(p-1))."""
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.abs(y) ** (1.0 / (p - 1.0))


@dataclass(frozen=True)
class Source:
    """Fixed radial source: -Delta_p u - lam/u^delta = f(r)."""

    f: Union[RadialFn, Callable]

    def __call__(self, r):
        return np.asarray(self.f(r), dtype=float)


@dataclass(frozen=True)
class Autonomous:
    """-Delta_p u = lam (1/u^delta + G(u))."""

    g_fn: Union[ScalarFn, Callable]

    def __call__(self, u):
        return np.asarray(self.g_fn(u), dtype=float)

    def check(self, u_max: float = 50.0, n: int = 2001, tol: float = 1e-12):
        """Sample G on [0, u_max]: G(0) = 0 and nondecreasing.  Returns the
        list of violated properties (empty when both hold)."""
        u = np.linspace(0.0, u_max, n)
        g = self(u)
        bad = []
        if abs(g[0]) > tol:
            bad.append("G(0) = 0")
        if np.any(np.diff(g) < -tol * np.maximum(1.0, np.abs(g[1:]))):
            bad.append("G nondecreasing")
        return bad


@dataclass(frozen=True, eq=False)
class Frozen:
    """Per-node source values (the inner problem of the A_G map)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


Reaction = Union[Source, Autonomous, Frozen]


@dataclass(frozen=True)
class RadialProblem:
    """Radial Dirichlet problem on the ball B_R in R^N with singular term lam/u^delta."""

    p: float
    delta: float
    lam: float
    dim: int = 1
    radius: float = 1.0
    reaction: Reaction = field(default_factory=lambda: Source(lambda r: np.zeros_like(np.asarray(r, float))))
    allow_zero_lambda: bool = False

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.lam > 0 or (self.allow_zero_lambda and self.lam == 0)):
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dimension N must be an integer >= 1, got {self.dim}")
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if not isinstance(self.reaction, (Source, Autonomous, Frozen)):
            raise TypeError("reaction must be Source, Autonomous or Frozen")

    def replace(self, **changes) -> "RadialProblem":
        from dataclasses import replace

        return replace(self, **changes)

    def reaction_values(self, r, u):
        """Total right-hand side lam*u^-delta + (source or lam*G(u)) at nodes.

        ``u`` must be positive wherever the singular term is evaluated.
        """
        r = np.asarray(r, dtype=float)
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise DomainError("singular reaction needs u > 0")
        return self.lam * u ** (-self.delta) + self.extra_values(r, u)

    def extra_values(self, r, u):
        """The non-singular part: f(r), lam*G(u), or the frozen values."""
        rx = self.reaction
        if isinstance(rx, Source):
            return np.broadcast_to(rx(r), np.shape(r)).astype(float)
        if isinstance(rx, Autonomous):
            return self.lam * rx(u)
        vals = rx.values
        if vals.shape != np.shape(r):
            raise ValueError("frozen source does not match the grid")
        return vals


def uniform_nodes(m: int, radius: float = 1.0) -> np.ndarray:
    """``m`` equally spaced nodes on [0, radius]."""
    return np.linspace(0.0, radius, m)


def graded_nodes(m: int, radius: float = 1.0, gamma: float = 2.0) -> np.ndarray:
    """``m`` nodes r_i = R (1 - (1 - i/M)^gamma), refined towards r = R."""
    s = np.linspace(0.0, 1.0, m)
    r = radius * (1.0 - (1.0 - s) ** gamma)
    r[-1] = radius
    return r


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Values (and optionally the flux |u'|^(p-2) u') on a radial grid."""

    nodes: np.ndarray
    values: np.ndarray
    flux: Optional[np.ndarray] = None

    def __post_init__(self):
        r = np.array(self.nodes, dtype=float)
        u = np.array(self.values, dtype=float)
        if r.ndim != 1 or u.shape != r.shape:
            raise ProfileError("nodes and values must be 1-D arrays of equal length")
        if r.size < 9:
            raise ProfileError(f"a profile needs at least 9 nodes (M >= 8), got {r.size}")
        if r[0] != 0.0 or np.any(np.diff(r) <= 0):
            raise ProfileError("nodes must start at r = 0 and be strictly increasing")
        r.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "nodes", r)
        object.__setattr__(self, "values", u)
        if self.flux is not None:
            w = np.array(self.flux, dtype=float)
            if w.shape != r.shape:
                raise ProfileError("flux must match nodes")
            w.setflags(write=False)
            object.__setattr__(self, "flux", w)

    @property
    def radius(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> float:
        """Largest mesh spacing."""
        return float(np.max(np.diff(self.nodes)))

    def __len__(self):
        return self.nodes.size

    def with_values(self, values, flux=None) -> "RadialProfile":
        return RadialProfile(self.nodes, values, flux)

    def same_grid(self, other: "RadialProfile") -> bool:
        return self.nodes.shape == other.nodes.shape and np.array_equal(self.nodes, other.nodes)

    def is_positive_solution_shape(self) -> bool:
        return bool(np.all(self.values[:-1] > 0) and self.values[-1] == 0)

    def boundary_slope(self) -> float:
        """u'(R) by the 3-point one-sided difference (exact for quadratics
        on nonuniform grids)."""
        r, u = self.nodes, self.values
        h1 = r[-1] - r[-2]
        h2 = r[-1] - r[-3]
        # Lagrange derivative at r[-1] through (r[-3], r[-2], r[-1])
        c0 = (h1 + h2) / (h1 * h2)
        c1 = -h2 / (h1 * (h2 - h1))
        c2 = h1 / (h2 * (h2 - h1))
        return float(c0 * u[-1] + c1 * u[-2] + c2 * u[-3])

    def slopes(self) -> np.ndarray:
        """Cell slopes (u_{i+1} - u_i) / (r_{i+1} - r_i)."""
        return np.diff(self.values) / np.diff(self.nodes)

    def to_csv(self) -> str:
        flux = self.flux if self.flux is not None else np.full_like(self.values, np.nan)
        lines = ["r,u,flux"]
        for r, u, w in zip(self.nodes, self.values, flux):
            lines.append(f"{r:.17g},{u:.17g},{w:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "RadialProfile":
        rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not rows or rows[0].replace(" ", "") not in ("r,u,flux", "r,u"):
            raise ProfileError("profile CSV must start with header 'r,u,flux'")
        data = np.array([[float(x) for x in row.split(",")] for row in rows[1:]])
        if data.ndim != 2 or data.shape[1] < 2:
            raise ProfileError("malformed profile CSV")
        flux = data[:, 2] if data.shape[1] > 2 and not np.all(np.isnan(data[:, 2])) else None
        return cls(data[:, 0], data[:, 1], flux)
