import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from frontprop.errors import BadBand, EmptyShape, FullShape, GridMismatch, NoEta
from frontprop.grid import (Grid, PhaseIndicator, ScalarField, band_measure, build_truncated_sdf,
                            edt_felzenszwalb, gradient_norm, h2_certificate, measure_ge,
                            signed_distance, sup_norm_difference)


@pytest.fixture(scope="module")
def grid():
    # odd cell count: a cell centre sits on the origin
    return Grid((-3.01, -3.01), 0.02, (301, 301))


@pytest.fixture(scope="module")
def disk_sdf(grid):
    return signed_distance(grid.radius() <= 1.0, grid)


def value_at(f, x):
    return f.values[f.grid.index_of(x)]


def test_grid_geometry():
    g = Grid.box(-1.0, 1.0, 0.25)
    assert g.shape == (8, 8)
    assert g.axes()[0][0] == pytest.approx(-0.875)
    assert g.upper == pytest.approx((1.0, 1.0))
    assert g.index_of((0.01, -0.99)) == (4, 0)
    with pytest.raises(ValueError):
        Grid.box(0, 1, 0.25)
    with pytest.raises(ValueError):
        Grid((0, 0, 0), 0.1, (10, 10, 10))


@settings(max_examples=40, deadline=None)
@given(arrays(bool, (12, 9), elements=st.booleans()))
def test_edt_matches_lower_envelope_oracle(mask):
    from scipy import ndimage
    if not (~mask).any():
        mask[0, 0] = False
    ours = edt_felzenszwalb(mask, 0.5)
    ref = ndimage.distance_transform_edt(mask, sampling=0.5)
    np.testing.assert_allclose(ours, ref, atol=1e-12)


def test_edt_brute_force_small():
    rng = np.random.default_rng(3)
    mask = rng.random((10, 11)) < 0.8
    mask[4, 4] = False
    zeros = np.argwhere(~mask)
    brute = np.array([[np.sqrt(((zeros - (i, j)) ** 2).sum(1).min()) for j in range(11)]
                      for i in range(10)])
    np.testing.assert_allclose(edt_felzenszwalb(mask), brute, atol=1e-12)


def test_signed_distance_disk(disk_sdf, grid):
    h = grid.h
    assert value_at(disk_sdf, (2.0, 0.0)) == pytest.approx(1.0, abs=h)
    assert value_at(disk_sdf, (0.0, 0.0)) == pytest.approx(-1.0, abs=h)


def test_signed_distance_square_corner(grid):
    X, Y = grid.mesh()
    sq = signed_distance((np.abs(X) <= 1) & (np.abs(Y) <= 1), grid)
    # brute force: nearest boundary cell centre of the square
    inside = (np.abs(X) <= 1) & (np.abs(Y) <= 1)
    pts = np.stack([X[inside], Y[inside]], 1)
    brute = np.sqrt(((pts - (2.0, 2.0)) ** 2).sum(1)).min()
    got = value_at(sq, (2.0, 2.0))
    assert got == pytest.approx(math.sqrt(2), abs=2 * grid.h)
    assert abs(got - brute) <= grid.h


def test_signed_distance_errors(grid):
    with pytest.raises(EmptyShape):
        signed_distance(np.zeros(grid.shape), grid)
    with pytest.raises(FullShape):
        signed_distance(np.ones(grid.shape), grid)
    with pytest.raises(GridMismatch):
        signed_distance(np.ones((3, 3)), grid)


def test_signed_distance_gradient_is_unit():
    # centred differences across the kinks of a sampled distance miss 1 by ~0.11
    # independently of h, so the 5h band is only meaningful for h >= 0.04
    grid = Grid.box(-3.0, 3.0, 0.04)
    h = grid.h
    r = grid.radius()
    sdf = signed_distance(r <= 1.0, grid)
    sel = (np.abs(r - 1) > 2 * h) & (r > 0.3) & (r < 2.5)
    g = gradient_norm(sdf.values, h)[sel]
    assert g.min() >= 1 - 5 * h and g.max() <= 1 + 5 * h


def test_signed_distance_idempotent(disk_sdf):
    again = signed_distance(disk_sdf.with_values(-disk_sdf.values))
    assert np.abs(again.values - disk_sdf.values).max() <= 2 * disk_sdf.grid.h


def test_band_measure_annulus(disk_sdf):
    u = disk_sdf
    assert band_measure(u, 0.0, 0.5) == pytest.approx(math.pi * (1.5 ** 2 - 1), rel=0.02)


def test_band_measure_edge_cases(grid, disk_sdf):
    u = disk_sdf
    assert band_measure(u, 10.0, 10.0 + 1e-3) == 0.0
    zero = ScalarField(grid, grid.zeros())
    assert band_measure(zero, -1.0, 1.0) == pytest.approx(6.02 ** 2)
    with pytest.raises(BadBand):
        band_measure(u, 0.2, 0.2)


@pytest.mark.parametrize("a,b,c", [(-0.5, 0.0, 0.5), (-0.3, 0.1, 0.2), (0.05, 0.4, 1.2)])
def test_band_measure_additive(disk_sdf, a, b, c):
    u = disk_sdf
    total = band_measure(u, a, c)
    parts = band_measure(u, a, b) + band_measure(u, b, c)
    assert abs(total - parts) <= 1e-9 + 2 * u.grid.cell_volume * 10


def test_measure_ge_disk(grid):
    u = ScalarField(grid, 1.0 - grid.radius())
    assert measure_ge(u, 0.0) == pytest.approx(math.pi, rel=2e-4)
    assert measure_ge(u, 0.5) == pytest.approx(math.pi / 4, rel=1e-3)


def test_sup_norm_difference(grid, disk_sdf):
    assert sup_norm_difference(disk_sdf, disk_sdf) == 0.0
    shifted = disk_sdf.with_values(disk_sdf.values + 0.3)
    assert sup_norm_difference(disk_sdf, shifted) == pytest.approx(0.3)
    big = signed_distance(grid.radius() <= 1.1, grid)
    assert sup_norm_difference(disk_sdf, big) == pytest.approx(0.1, abs=grid.h)
    with pytest.raises(GridMismatch):
        sup_norm_difference(disk_sdf, ScalarField(Grid.box(-1, 1, 0.1), np.zeros((20, 20))))


def test_truncated_sdf_datum():
    g = Grid((-4.01, -4.01), 0.02, (401, 401))
    d = build_truncated_sdf(g.radius() <= 1.0, -1.0, g)
    assert d.values[g.index_of((0.0, 0.0))] == pytest.approx(1.0, abs=g.h)
    assert np.all(d.values[g.radius() >= 2.0 + g.h] == -1.0)
    assert d.eta0 >= 0.5
    ring = np.abs(g.radius() - 1.0) < 0.5 * g.h
    assert np.abs(d.values[ring]).max() <= g.h
    eta, _ = h2_certificate(d.values, g.h, d.floor)
    assert eta == pytest.approx(d.eta0)


def test_truncated_sdf_errors():
    g = Grid.box(-1.0, 1.0, 0.05)
    with pytest.raises(NoEta):
        build_truncated_sdf(np.ones(g.shape), -0.5, g)
    with pytest.raises(EmptyShape):
        build_truncated_sdf(np.zeros(g.shape), -0.5, g)
    # touching the boundary leaves no room for the floor
    X, _ = g.mesh()
    with pytest.raises(NoEta):
        build_truncated_sdf(X < 0.2, -0.5, g)


def test_phase_indicator_l1():
    g = Grid.box(-1.0, 1.0, 0.1)
    a = PhaseIndicator.constant(g, [0.0, 1.0], 0.0)
    b = PhaseIndicator.constant(g, [0.0, 1.0], 1.0)
    assert a.l1_distance(b) == pytest.approx(4.0)
    assert b.frame_at(0.5).sum() == g.shape[0] * g.shape[1]
    assert a.check_interior() and not b.check_interior()
    with pytest.raises(ValueError):
        PhaseIndicator.constant(g, [0.0, 1.0], 2.0)


def test_one_dimensional_grid():
    g = Grid.box(-2.0, 2.0, 0.01, dim=1)
    u = ScalarField(g, 1 - np.abs(g.axes()[0]))
    assert measure_ge(u, 0.0) == pytest.approx(2.0, abs=1e-9)
    assert band_measure(u, 0.0, 0.5) == pytest.approx(1.0, abs=1e-9)
