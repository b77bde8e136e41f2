import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singular_plap.comparison import SCP_FAILS
from singular_plap.counterexample import (
    CounterexampleSpec,
    PreconditionFailed,
    build_certificate,
    check_lambda_condition,
    dtheta_f,
    f_theta,
    fd_residual_u_theta,
    l_p_fn,
    lambda_condition_rhs,
    plap_u_theta,
    u_theta,
    verify_pde_identity,
)
from singular_plap.expr import DomainError

SPEC = CounterexampleSpec(p=3.0, dim=3, delta=0.5, lam=600.0, theta1=3.0, theta2=4.0)


@pytest.fixture(scope="module")
def certificate():
    return build_certificate(SPEC, 4096)


def test_u_theta_values():
    for th in (0.5, 2.0, 3.0, 7.5):
        assert u_theta(th, 0.0) == 1.0
        assert u_theta(th, 1.0) == 0.0
    assert u_theta(2.0, 0.5) == 0.75


def test_f_theta_examples():
    assert np.allclose(f_theta(2.0, 2.0, 3, 0.0, 0.5, np.linspace(0, 0.99, 50)), 6.0, rtol=0, atol=1e-13)
    assert f_theta(2.0, 2.0, 3, 1.0, 0.5, 0.0) == 5.0
    with pytest.raises(DomainError):
        f_theta(2.0, 2.0, 3, 1.0, 0.5, 1.0)


def test_plap_of_u_theta_against_finite_differences():
    # independent oracle: differentiate r^(N-1) phi_p(u') numerically
    th, p, dim = 3.5, 3.0, 3
    r = np.linspace(0.2, 0.9, 15)
    h = 1e-5

    def flux(x):
        du = -th * x ** (th - 1)
        return x ** (dim - 1) * np.abs(du) ** (p - 2) * du

    fd = -(flux(r + h) - flux(r - h)) / (2 * h) / r ** (dim - 1)
    assert np.allclose(plap_u_theta(th, p, dim, r), fd, rtol=1e-7)


@pytest.mark.parametrize("args", [(3.0, 3.0, 3, 600.0, 0.5), (2.0, 2.0, 3, 1.0, 0.5), (4.0, 3.0, 3, 600.0, 0.5)])
def test_pde_identity(args):
    grid = np.linspace(1e-6, 1 - 1e-6, 4096)
    assert verify_pde_identity(*args, grid) <= 1e-10


def test_fd_residual_converges():
    coarse = fd_residual_u_theta(3.0, 3.0, 3, 600.0, 0.5, 513)
    fine = fd_residual_u_theta(3.0, 3.0, 3, 600.0, 0.5, 1025)
    assert coarse / fine >= 1.8


def test_l_p_examples():
    assert l_p_fn(3.0, 3.0, 3) == pytest.approx(0.5, abs=1e-15)
    assert l_p_fn(2.0, 3.0, 3) == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ZeroDivisionError):
        l_p_fn(3.0, 0.5, 1)
    with pytest.raises(ValueError):
        l_p_fn(1.0, 3.0, 3)


def test_dtheta_f_central_difference_example():
    args = (3.0, 3, 600.0, 0.5, 0.3)
    h = 1e-5
    fd = (f_theta(3.5 + h, *args) - f_theta(3.5 - h, *args)) / (2 * h)
    assert abs(dtheta_f(3.5, *args) - fd) <= 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(3.0, 6.0), st.floats(2.2, 4.0), st.integers(1, 5), st.floats(0.0, 1000.0),
       st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_dtheta_f_matches_central_difference(theta, p, dim, lam, delta, r):
    h = 1e-5
    args = (p, dim, lam, delta, r)
    fd = (f_theta(theta + h, *args) - f_theta(theta - h, *args)) / (2 * h)
    exact = dtheta_f(theta, *args)
    assert abs(exact - fd) <= 1e-6 * max(1.0, abs(exact))


def test_dtheta_f_domain_and_sign_near_one():
    with pytest.raises(DomainError):
        dtheta_f(3.0, 3.0, 3, 600.0, 0.5, 0.0)
    with pytest.raises(DomainError):
        dtheta_f(3.0, 3.0, 3, 600.0, 0.5, 1.0)
    r = 1 - 1e-6
    t3 = dtheta_f(3.0, 3.0, 3, 600.0, 0.5, r) - dtheta_f(3.0, 3.0, 3, 0.0, 0.5, r)
    assert t3 > 0


def test_dtheta_f_nonnegative_in_regime():
    r = np.linspace(1e-6, 1 - 1e-6, 4096)
    for th in np.linspace(3.0, 4.0, 9):
        assert np.min(dtheta_f(th, 3.0, 3, 600.0, 0.5, r)) >= 0


def test_lambda_condition_examples():
    ok, margin = check_lambda_condition(SPEC)
    assert ok and margin == pytest.approx(44.0, abs=1e-12)
    ok, margin = check_lambda_condition(CounterexampleSpec(3.0, 3, 0.5, 400.0, 3.0, 4.0))
    assert not ok and margin == pytest.approx(200.0 - 256.0, abs=1e-12)
    assert check_lambda_condition(CounterexampleSpec(3.0, 3, 0.5, 1e300, 3.0, 40.0))[0]


def test_lambda_rhs_increasing_in_theta():
    th = np.linspace(1.0, 20.0, 400)
    for p, dim in ((2.5, 1), (3.0, 3), (5.0, 10)):
        assert np.all(np.diff(lambda_condition_rhs(th, p, dim)) > 0)


def test_certificate_verdict(certificate):
    c = certificate
    assert c.verdict
    assert all(ok for *_, ok in c.checks)
    assert max(c.pde_residual_max.values()) <= 1e-10
    assert c.dtheta_min >= -1e-10
    assert c.f_order_ok and c.u_order_ok and c.touch_at_zero
    assert c.scp_verdict == SCP_FAILS and c.scp_gap_argmin == 0.0
    assert c.hopf_margin > 0
    assert c.lambda_margin == pytest.approx(44.0)


def test_certificate_serialization(certificate):
    d = json.loads(certificate.to_json())
    assert d["verdict"] is True
    assert d["spec"]["lam"] == 600.0
    table = certificate.table()
    assert "check_scp verdict" in table
    assert not any(line.endswith("FAIL") for line in table.splitlines())


def test_certificate_preconditions():
    with pytest.raises(PreconditionFailed) as err:
        build_certificate(CounterexampleSpec(3.0, 3, 0.5, 400.0, 3.0, 4.0))
    assert err.value.check == "lambda condition"
    assert "200 < 256" in err.value.detail
    with pytest.raises(PreconditionFailed) as err:
        build_certificate(CounterexampleSpec(3.0, 3, 0.5, 600.0, 2.0, 4.0))
    assert err.value.check == "theta1 >= p/(p-2)"
    with pytest.raises(PreconditionFailed) as err:
        build_certificate(CounterexampleSpec(2.0, 3, 0.5, 600.0, 3.0, 4.0))
    assert err.value.check == "requires p>2"


def test_mean_value_consistency(certificate):
    # independent of the certificate's own bookkeeping
    r = np.linspace(1e-6, 1 - 1e-6, 4096)
    gap = f_theta(4.0, 3.0, 3, 600.0, 0.5, r) - f_theta(3.0, 3.0, 3, 600.0, 0.5, r)
    if certificate.dtheta_min >= 0:
        assert np.all(gap >= 0)


def test_u_theta_ordering():
    r = np.linspace(0, 1, 1001)
    gap = u_theta(4.0, r) - u_theta(3.0, r)
    assert gap[0] == 0 and gap[-1] == 0
    assert np.all(gap[1:-1] > 0)


def test_verdict_monotone_in_lambda():
    verdicts = [build_certificate(CounterexampleSpec(3.0, 3, 0.5, lam, 3.0, 4.0), 512, 64).verdict
                for lam in (512.0, 600.0, 1e3, 1e5)]
    assert all(verdicts)
