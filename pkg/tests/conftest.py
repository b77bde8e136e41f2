import numpy as np
import pytest

from singular_plap.counterexample import f_theta
from singular_plap.expr import parse_scalar_fn
from singular_plap.fd import FdOptions, make_nodes
from singular_plap.model import Autonomous, RadialProblem, Source
from singular_plap.multiplicity import certify_center_value
from singular_plap.shooting import ShootingOptions, find_center_values

# Ko model used throughout: p=2, N=1, delta=0.25, alpha=20.  At this lambda
# the shooting residual has three roots with center values near 1.6e-4, 148
# and 939, all below the turning point of G (about 1563).
KO_LAMBDA = 3.5e-5


def manufactured_problem(theta=2.0, p=2.0, dim=3, lam=1.0, delta=0.5):
    """Source problem whose exact solution is 1 - r^theta."""
    return RadialProblem(p, delta, lam, dim, 1.0, Source(lambda r: f_theta(theta, p, dim, lam, delta, r)))


def ko_problem(lam=KO_LAMBDA, alpha=20.0):
    return RadialProblem(2.0, 0.25, lam, 1, 1.0, Autonomous(parse_scalar_fn(f"ko({alpha!r})", 0.25)))


def zero_g_problem(lam=1.0, p=1.5, delta=0.5, dim=2):
    return RadialProblem(p, delta, lam, dim, 1.0, Autonomous(lambda u: np.zeros_like(np.asarray(u, float))))


@pytest.fixture(scope="session")
def manufactured():
    return manufactured_problem()


@pytest.fixture(scope="session")
def ko():
    return ko_problem()


@pytest.fixture(scope="session")
def ko_solutions(ko):
    """The three certified Ko solutions on the default 1025-node graded grid."""
    roots = find_center_values(ko, 1e-6, 1e6, 64, ShootingOptions(tol=1e-9))
    nodes = make_nodes(FdOptions(), 1.0)
    sols = [certify_center_value(a, ko, nodes) for a in roots]
    assert len(sols) == 3 and all(s.certified for s in sols)
    return sols
