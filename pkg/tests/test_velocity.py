import math

import numpy as np
import pytest
from scipy import special

from frontprop.errors import AlphaRangeViolation, H3Violation, HypothesisViolation, PaddingTooSmall
from frontprop.grid import Grid, PhaseIndicator
from frontprop.velocity import (K_N_FROZEN, DislocationModel, FnModel, HeatState, affine_clamped,
                                calibrate_k_n, constant, disk_kernel, dislocation_velocity, fn_velocity,
                                gaussian, heat_run, heat_step, parse_call, regularity_report,
                                scalar_function)


@pytest.fixture(scope="module")
def g():
    return Grid.box(-2.2, 2.2, 0.02)


@pytest.fixture(scope="module")
def disloc(g):
    return DislocationModel(g, disk_kernel(1.0, 0.25, g.h), 1.0, T=0.5)


def direct_convolution(chi, kernel, dv):
    """Plain shifted-sum oracle for (kernel * chi) with zero extension."""
    out = np.zeros(chi.shape)
    m, n = kernel.shape[0] // 2, kernel.shape[1] // 2
    pad = np.pad(chi, ((m, m), (n, n)))
    for i in range(kernel.shape[0]):
        for j in range(kernel.shape[1]):
            if kernel[i, j]:
                out += kernel[i, j] * pad[2 * m - i: 2 * m - i + chi.shape[0], 2 * n - j: 2 * n - j + chi.shape[1]]
    return out * dv


def test_parse_and_builtins():
    assert parse_call("affine_clamped(0.5, 1, 0.5, 1.5)") == ("affine_clamped", [0.5, 1.0, 0.5, 1.5])
    f = scalar_function("affine_clamped(0.5, 1, 0.5, 1.5)")
    assert f(np.array([-1.0, 0.25, 3.0])).tolist() == [0.5, 0.75, 1.5]
    assert scalar_function(2.0).lo == 2.0
    with pytest.raises(ValueError):
        scalar_function("cosine(1)")


def test_h3_disk_kernel(disloc):
    rep = disloc.validate_h3()
    assert rep.passed
    assert disloc.constants["L1"] == pytest.approx(math.pi / 4, abs=2e-4)
    assert disloc.c_lo == pytest.approx(1 - math.pi / 4, abs=2e-4)
    assert disloc.c_hi == pytest.approx(1 + math.pi / 4, abs=2e-4)


def test_h3_violation(g):
    m = DislocationModel(g, disk_kernel(1.0, 0.25, g.h), 0.5, T=0.5)
    with pytest.raises(H3Violation) as exc:
        m.validate_h3()
    assert "c_lo" in exc.value.inequality


def test_h3_trivial_kernel(g):
    m = DislocationModel(g, np.zeros((3, 3)), 1.0)
    m.validate_h3()
    assert m.c_lo == m.c_hi == 1.0 and m.C == 0.0


def test_zero_indicator_gives_c1(disloc, g):
    c = dislocation_velocity(disloc, np.zeros(g.shape))
    assert np.all(c.values == 1.0)


def test_full_overlap_disk():
    errs = []
    for h, n in ((0.04, 111), (0.02, 221)):
        g = Grid((-n * h / 2,) * 2, h, (n, n))
        m = DislocationModel(g, disk_kernel(1.0, 0.25, h), 1.0)
        c = dislocation_velocity(m, (g.radius() <= 1.0).astype(float)).values
        errs.append(abs(c[g.index_of((0.0, 0.0))] - (1 + math.pi / 4)))
        assert errs[-1] <= h / 2
    # rasterising the indicator costs O(h)
    assert errs[1] < 0.6 * errs[0]


def test_spectral_matches_direct_sum():
    grid = Grid.box(-1.28, 1.28, 0.04)
    assert grid.shape == (64, 64)
    rng = np.random.default_rng(11)
    chi = (rng.random(grid.shape) < 0.4).astype(float)
    chi[:10], chi[-10:], chi[:, :10], chi[:, -10:] = 0, 0, 0, 0
    kernel = disk_kernel(0.3, 0.7, grid.h) - 0.2 * np.pad(disk_kernel(0.15, 1.0, grid.h), 3)
    m = DislocationModel(grid, kernel, 2.0)
    ours = m.velocity(chi) - 2.0
    ref = direct_convolution(chi, kernel, grid.cell_volume)
    assert np.abs(ours - ref).max() <= 1e-10


def test_convolution_linearity(disloc, g):
    X, Y = g.mesh()
    a = (np.hypot(X + 0.8, Y) < 0.5).astype(float)
    b = (np.hypot(X - 0.8, Y) < 0.5).astype(float)
    lhs = disloc.velocity(a + b) - 1.0
    rhs = (disloc.velocity(a) - 1.0) + (disloc.velocity(b) - 1.0)
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_uniform_bounds_over_random_indicators(disloc, g):
    rng = np.random.default_rng(5)
    r = g.radius()
    lip_bound = disloc.C
    for _ in range(5):
        chi = ((rng.random(g.shape) < rng.random()) & (r < 1.8)).astype(float)
        c = disloc.velocity(chi)
        assert c.min() >= disloc.c_lo - 1e-12 and c.max() <= disloc.c_hi + 1e-12
        slope = max(np.abs(np.diff(c, axis=a)).max() for a in (0, 1)) / g.h
        assert slope <= lip_bound * (1 + 1e-9)


def test_padding_too_small(disloc, g):
    chi = np.zeros(g.shape)
    chi[0, 5] = 1
    with pytest.raises(PaddingTooSmall):
        disloc.velocity(chi)


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small():
    return Grid.box(-1.0, 1.0, 0.04)


def test_uniform_source_gives_v_equal_t(small):
    m = FnModel(small, affine_clamped(1.0, 0.5, 0.5, 1.5), 1.0, 0.0, 0.0, T=0.5)
    chi = PhaseIndicator.constant(m.heat_grid, [0.0], 1.0)
    for method in ("exponential", "crank_nicolson"):
        st = m.initial_state()
        for _ in range(5):
            st = heat_step(st, chi.frames[0], m, 0.1, method)
        assert np.abs(st.v.values - 0.5).max() <= 1e-12
    c = fn_velocity(st, m)
    assert np.allclose(c.values, 1.25)


def test_gaussian_evolves_as_heat_kernel(small):
    s0 = 0.05
    m = FnModel(small, constant(1.0), 0.0, 0.0, f"gaussian({s0})", T=0.1)
    st = m.initial_state()
    for _ in range(10):
        st = heat_step(st, np.zeros(m.heat_grid.shape), m, 0.01)
    exact = gaussian(s0 + 0.1, m.heat_grid)
    assert np.abs(st.v.values - exact).max() <= 2e-3 * exact.max()
    # mass is conserved by the Neumann walls
    assert st.v.values.sum() == pytest.approx(m.v0.sum(), rel=1e-10)


def test_crank_nicolson_agrees_with_exponential(small):
    m = FnModel(small, constant(1.0), 1.0, -0.5, "gaussian(0.05)", T=0.2)
    chi = (m.heat_grid.radius() < 0.5).astype(float)
    a = b = m.initial_state()
    for _ in range(40):
        a = heat_step(a, chi, m, 0.005, "exponential")
        b = heat_step(b, chi, m, 0.005, "crank_nicolson")
    assert np.abs(a.v.values - b.v.values).max() <= 1e-3


def test_bound_i_and_max_principle(small):
    m = FnModel(small, affine_clamped(0.5, 1.0, 0.5, 1.5), 1.0, 0.1, 0.0, T=0.5)
    chi = PhaseIndicator(m.heat_grid, [0.0, 0.25],
                         np.stack([(m.heat_grid.radius() < r).astype(float) for r in (0.6, 0.9)]))
    states = heat_run(m, chi, np.linspace(0, 0.5, 11))
    prev = states[0]
    for s in states:
        assert np.abs(s.v.values).max() <= m.v0_inf + m.gamma * s.time + 1e-8
        dt = s.time - prev.time
        assert s.v.values.min() >= prev.v.values.min() + m.g_lo * dt - 1e-12
        assert s.v.values.max() <= prev.v.values.max() + m.g_hi * dt + 1e-12
        prev = s


def test_alpha_range_violation(small):
    with pytest.raises(AlphaRangeViolation):
        FnModel(small, affine_clamped(-0.5, 1.0, -1.0, 1.0), 1.0, 0.0, T=0.5)
    m = FnModel(small, affine_clamped(1.0, 0.5, 0.5, 1.5), 1.0, 0.0, 0.0, T=0.5)
    bad = HeatState(m.initial_state().v.with_values(np.full(m.heat_grid.shape, 10.0)), 0.0)
    m.c_hi = 1.2
    with pytest.raises(AlphaRangeViolation):
        fn_velocity(bad, m)


def test_g_ordering_is_checked(small):
    with pytest.raises(HypothesisViolation):
        FnModel(small, constant(1.0), 0.0, 1.0, T=0.5)


def test_half_plane_regularity_against_erf_oracle():
    grid = Grid.box(-1.0, 1.0, 0.02)
    m = FnModel(grid, constant(1.0), 1.0, 0.0, 0.0, T=0.25)
    x = m.heat_grid.mesh()[0]
    chi = PhaseIndicator.constant(m.heat_grid, [0.0], (x >= 0).astype(float))
    states = heat_run(m, chi, np.linspace(0, 0.25, 6))
    rep = regularity_report(states, m)
    assert rep.passed
    lip = rep.info["spatial_lipschitz"][-1]
    # Duhamel: v_x(0, t) = int_0^t (4 pi s)^{-1/2} ds = sqrt(t / pi)
    assert lip == pytest.approx(math.sqrt(0.25 / math.pi), rel=0.02)
    assert lip <= m.gamma * K_N_FROZEN[2] * 0.5
    # full profile: v(x, t) = int_0^t erfc(-x / (2 sqrt s)) / 2 ds by Gauss-Legendre
    nodes, w = np.polynomial.legendre.leggauss(64)
    s = 0.125 * (nodes + 1)
    xs = grid.axes()[0]
    prof = (0.125 * w[None, :] * 0.5 * special.erfc(-xs[:, None] / (2 * np.sqrt(s[None, :])))).sum(1)
    mid = states[-1].v.values[m.window][:, grid.shape[1] // 2]
    assert np.abs(mid - prof).max() <= 2e-3


def test_regularity_trivial_and_temporal(small):
    m = FnModel(small, constant(1.0), 1.0, 1.0, 0.0, T=0.2)
    chi = PhaseIndicator.constant(m.heat_grid, [0.0], 1.0)
    states = heat_run(m, chi, [0.0, 0.1, 0.2])
    rep = regularity_report(states, m)
    assert rep.passed and max(rep.info["spatial_lipschitz"]) <= 1e-12


def test_k_n_calibration_is_frozen_value():
    k = calibrate_k_n()
    assert k == pytest.approx(K_N_FROZEN[2], rel=0.01)
    assert k == pytest.approx(2 / math.sqrt(math.pi), rel=0.01)
