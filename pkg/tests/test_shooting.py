import numpy as np
import pytest

from conftest import manufactured_problem
from singular_plap.expr import DomainError
from singular_plap.fd import FdOptions, make_nodes
from singular_plap.model import Frozen, RadialProblem, Source, uniform_nodes
from singular_plap.multiplicity import certify_center_value
from singular_plap.shooting import (
    ShootingError,
    ShootingOptions,
    ShootingState,
    find_center_values,
    find_roots,
    integrate_shot,
    ode_rhs,
    profile_from_shot,
    series_start,
    shoot_residual,
)


def zero_source(p=2.0, dim=1, lam=1.0, delta=0.5):
    return RadialProblem(p, delta, lam, dim, 1.0)


def test_ode_rhs_one_dimensional():
    assert ode_rhs(ShootingState(1.0, 1.0, 0.0), zero_source()) == (0.0, -1.0)


def test_ode_rhs_three_dimensional():
    du1, du2 = ode_rhs(ShootingState(1.0, 4.0, -2.0), zero_source(dim=3))
    assert du1 == -2.0
    assert du2 == pytest.approx(3.5, abs=1e-15)


def test_ode_rhs_rejects_zero_u():
    with pytest.raises(DomainError):
        ode_rhs(ShootingState(0.5, 0.0, -1.0), zero_source())


def test_ode_rhs_rejects_frozen_reaction():
    prob = RadialProblem(2.0, 0.5, 1.0, reaction=Frozen(np.ones(3)))
    with pytest.raises(TypeError):
        ode_rhs(ShootingState(0.5, 1.0, -1.0), prob)


def test_series_start_zero_source():
    s = series_start(1.0, 1e-4, zero_source(dim=2))
    assert s.u2 == pytest.approx(-5e-5, rel=1e-14)


def test_series_start_manufactured(manufactured):
    # beta(0, 1) = -(lam + f(0)) = -(1 + 5) = -6 and N = 3
    s = series_start(1.0, 1e-5, manufactured)
    assert s.u2 == pytest.approx(-2e-5, rel=1e-14)


def test_series_start_vanishes_with_reaction():
    prob = RadialProblem(2.0, 0.5, 1e-12, 2, 1.0)
    assert abs(series_start(1.0, 1e-4, prob).u2) < 1e-15


def test_exact_center_value_reaches_boundary(manufactured):
    out = integrate_shot(1.0, manufactured)
    assert out.kind == "reached_boundary"
    assert abs(out.u_at_R) <= 1e-6


def test_small_center_value_hits_zero(manufactured):
    out = integrate_shot(0.5, manufactured)
    assert out.kind in ("hit_zero", "fell_below_floor")
    assert out.r_star < 1.0


def test_trajectory_radii_increase(manufactured):
    out = integrate_shot(1.0, manufactured)
    r = np.array([s.r for s in out.trajectory])
    assert np.all(np.diff(r) > 0)


def test_shoot_residual_signs():
    prob = zero_source()
    assert shoot_residual(1e3, prob) > 0
    assert shoot_residual(1e-3, prob) < 0


def test_shoot_residual_at_exact_root(manufactured):
    assert abs(shoot_residual(1.0, manufactured)) <= 1e-6


def test_residual_does_not_grow_when_tolerance_shrinks(manufactured):
    vals = [abs(shoot_residual(1.0, manufactured, ShootingOptions(tol=t))) for t in (1e-4, 1e-6, 1e-8, 1e-10)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0]


def test_find_center_values_manufactured(manufactured):
    roots = find_center_values(manufactured, 0.1, 10.0, 32)
    assert len(roots) == 1
    assert roots[0] == pytest.approx(1.0, abs=1e-4)


def test_find_center_values_empty_window(manufactured):
    assert find_center_values(manufactured, 0.1, 0.5, 16) == []


def test_find_center_values_input_checks(manufactured):
    with pytest.raises(ValueError):
        find_center_values(manufactured, 1.0, 0.5, 16)
    with pytest.raises(ValueError):
        find_center_values(manufactured, 0.1, 1.0, 4)


def test_find_roots_synthetic_cubic():
    roots = find_roots(lambda a: (a - 1) * (a - 2) * (a - 3), 0.5, 5.0, 40, 1e-12)
    assert len(roots) == 3
    np.testing.assert_allclose(roots, [1.0, 2.0, 3.0], atol=1e-8)


def test_find_roots_merges_duplicates():
    # a root sitting exactly on a scan point must be reported once
    grid = np.geomspace(0.5, 5.0, 17)
    a0 = float(grid[8])
    roots = find_roots(lambda a: a - a0, 0.5, 5.0, 17, 1e-12)
    assert len(roots) == 1 and roots[0] == pytest.approx(a0, rel=1e-12)


def test_ko_model_has_three_ordered_roots(ko):
    roots = find_center_values(ko, 1e-6, 1e6, 64, ShootingOptions(tol=1e-9))
    assert len(roots) >= 3
    assert all(a < b for a, b in zip(roots, roots[1:]))


def test_profile_from_shot_matches_closed_form(manufactured):
    r = uniform_nodes(257)
    prof = profile_from_shot(1.0, manufactured, r)
    assert np.max(np.abs(prof.values - (1 - r**2))) <= 1e-5
    assert prof.values[-1] == 0.0


def test_profile_from_shot_rejects_degenerate_grid(manufactured):
    with pytest.raises(ValueError):
        profile_from_shot(1.0, manufactured, np.array([0.0, 1.0]))


def test_profile_from_shot_rejects_far_undershoot(manufactured):
    with pytest.raises(ShootingError):
        profile_from_shot(0.5, manufactured, uniform_nodes(33))


def test_boundary_flux_is_terminal_state(manufactured):
    out = integrate_shot(1.0, manufactured)
    prof = profile_from_shot(1.0, manufactured, uniform_nodes(65), outcome=out)
    assert prof.flux[-1] == out.final.u2
    assert prof.flux[-1] < 0
    assert prof.flux[-1] == pytest.approx(-2.0, abs=1e-4)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_flux_negative_and_u_decreasing_for_nonnegative_data(p):
    prob = RadialProblem(p, 0.5, 1.0, 2, 1.0, Source(lambda r: 1.0 - np.asarray(r)))
    a = find_center_values(prob, 0.01, 10.0, 24)[0]
    traj = integrate_shot(a, prob).trajectory[1:]
    u1 = np.array([s.u1 for s in traj])
    u2 = np.array([s.u2 for s in traj])
    assert np.all(u2 < 0)
    assert np.all(np.diff(u1) < 0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_roots_polish_to_fd_solutions(p):
    # a shooting root is the center value of an FD solution on the same branch
    prob = RadialProblem(p, 0.5, 1.0, 2, 1.0)
    a = find_center_values(prob, 0.01, 10.0, 24)[0]
    cert = certify_center_value(a, prob.replace(reaction=prob.reaction), make_nodes(FdOptions(), 1.0))
    assert cert.residual <= 1e-7
    assert cert.shot_deviation <= 1e-3


def test_source_singular_at_boundary_is_bridged():
    prob = manufactured_problem()
    out = integrate_shot(1.0, prob)
    assert out.trajectory[-1].r == 1.0
