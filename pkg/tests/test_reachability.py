import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from frontprop.eikonal import ConstantVelocity, EikonalProblem, Trajectory, solve
from frontprop.errors import NotMonotone, StepFailure
from frontprop.grid import Grid, ScalarField, datum_from_profile
from frontprop.reachability import (AnalyticVelocity, SmoothedVelocity, adjoint_growth_check, duality_check,
                                    front_tracking_check, lipschitz_check, minimal_time,
                                    pontryagin_integrate, seed_extremals, speed_bracket_check,
                                    taylor_deviation_check)


@pytest.fixture(scope="module")
def disk_traj():
    g = Grid.box(-2.0, 2.0, 0.02)
    d = datum_from_profile(np.clip(0.8 - g.radius(), -0.8, 0.8), g, -0.8)
    return solve(EikonalProblem(d, ConstantVelocity(1.0), 0.6), np.linspace(0, 0.6, 13))


def test_minimal_time_of_expanding_disk(disk_traj):
    mt = minimal_time(disk_traj)
    g = disk_traj.grid
    r = g.radius()
    ring = mt.finite & (r > 0.85) & (r < 1.35)
    # arrival at radius r is r - 0.8
    assert np.abs(mt.values[ring] - (r[ring] - 0.8)).max() <= 2 * g.h
    assert np.all(mt.values[r < 0.78] == 0.0)
    assert not mt.finite[r > 1.45].any()
    assert lipschitz_check(mt, 1.0).passed
    assert duality_check(mt, disk_traj).passed


def test_minimal_time_slope_scales_with_speed():
    g = Grid.box(-2.0, 2.0, 0.04)
    d = datum_from_profile(np.clip(0.5 - g.radius(), -0.8, 0.8), g, -0.8)
    traj = solve(EikonalProblem(d, ConstantVelocity(0.5), 1.0), np.linspace(0, 1, 11))
    rep = lipschitz_check(minimal_time(traj), 0.5)
    assert rep.passed and rep.lhs == pytest.approx(2.0, rel=0.15)


def test_not_monotone(disk_traj):
    f0, f1 = disk_traj.fields[0], disk_traj.fields[1]
    with pytest.raises(NotMonotone):
        minimal_time(Trajectory([0.0, 0.1], [f1, f0]))


def test_constant_speed_extremal_is_straight():
    vel = AnalyticVelocity(lambda x, t: 1.0, lambda x, t: np.zeros(2), 1.0, 1.0, 0.0)
    ext = pontryagin_integrate([1.0, 0.5], [3.0, 4.0], vel, 1.0, dt=0.01)
    np.testing.assert_allclose(ext.x[0], [1.0 - 0.6, 0.5 - 0.8], atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(ext.p, axis=1), 1.0)
    assert taylor_deviation_check(ext, 0.0, lambda s: 0.0).passed
    bent = ext.perturbed(50, [0.3, -0.3])
    assert not taylor_deviation_check(bent, 0.0, lambda s: 0.0).passed


def linear_speed():
    a = np.array([0.3, -0.1])
    return AnalyticVelocity(lambda x, t: 1.0 + a @ x, lambda x, t: a, 0.5, 1.5, float(np.linalg.norm(a))), a


def test_linear_speed_extremal_against_ivp():
    vel, a = linear_speed()
    ext = pontryagin_integrate([0.4, 0.2], [1.0, 0.0], vel, 1.0, steps=200)

    def rhs(t, z):
        x, p = z[:2], z[2:]
        n = np.linalg.norm(p)
        return np.concatenate([(1 + a @ x) * p / n, -a * n])

    ref = solve_ivp(rhs, (1.0, 0.0), [0.4, 0.2, 1.0, 0.0], rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(ext.x[0], ref.y[:2, -1], atol=1e-8)
    np.testing.assert_allclose(ext.p[0], ref.y[2:, -1], atol=1e-8)
    assert speed_bracket_check(ext, 0.5, 1.5).passed
    assert adjoint_growth_check(ext, vel.C).passed
    # |x''| <= |Dc| c + c |p'|/|p| <= 2 |a| c_hi
    M = 2 * vel.C * 1.5
    assert taylor_deviation_check(ext, M, lambda s: 0.0, slack_factor=0.0).passed


def test_zero_adjoint_is_a_step_failure():
    vel, _ = linear_speed()
    with pytest.raises(StepFailure):
        pontryagin_integrate([0.0, 0.0], [0.0, 0.0], vel, 1.0)


def test_extremals_track_the_front(disk_traj):
    g = disk_traj.grid
    vel = SmoothedVelocity(g, [0.0], [np.ones(g.shape)])
    seeds = seed_extremals(disk_traj.final, 6)
    assert len(seeds) == 6
    for x, n in seeds:
        assert np.linalg.norm(x) == pytest.approx(1.4, abs=2 * g.h)
        assert n @ x / np.linalg.norm(x) == pytest.approx(1.0, abs=0.02)
        ext = pontryagin_integrate(x, n, vel, 0.6, dt=0.01)
        assert front_tracking_check(ext, disk_traj).passed
        assert np.linalg.norm(ext.x[0]) == pytest.approx(0.8, abs=2 * g.h)


def test_smoothed_velocity_gradient():
    g = Grid.box(-1.0, 1.0, 0.02)
    X, _ = g.mesh()
    vel = SmoothedVelocity(g, [0.0, 1.0], [1.0 + 0.2 * X, 1.0 + 0.4 * X])
    c, grad = vel.value_and_gradient(np.array([0.1, 0.0]), 0.5)
    assert c == pytest.approx(1.03, abs=1e-3)
    np.testing.assert_allclose(grad, [0.3, 0.0], atol=1e-3)
    # lowest speed over all frames, after smoothing
    assert math.isclose(vel.c_lo, 1.0 + 0.4 * X.min(), abs_tol=0.02)
