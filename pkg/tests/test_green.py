import math

import numpy as np
import pytest
from scipy import integrate

from frontprop.eikonal import Trajectory
from frontprop.errors import CertificateMissing
from frontprop.geometry import ConeParams, cone_certificate, extract_front
from frontprop.green import Potential, green_kernel, i_n_constant, i_n_integrand, lipschitz_in_r_check, phi
from frontprop.grid import Grid, ScalarField


def test_i_n_constants():
    assert i_n_constant(1) == pytest.approx(4.0, abs=1e-8)
    assert i_n_constant(2) == pytest.approx(12 + 4 * math.sqrt(math.pi), rel=1e-9)
    # direct quadrature of the singular integrand as a second route
    direct, _ = integrate.quad(lambda u: i_n_integrand(u, 2), 0, 1, limit=400)
    assert direct == pytest.approx(12 + 4 * math.sqrt(math.pi), rel=1e-6)
    with pytest.raises(ValueError):
        i_n_constant(3)


@pytest.mark.parametrize("s", [0.01, 0.1, 1.0])
def test_green_kernel_mass(s):
    val, _ = integrate.dblquad(lambda y, x: green_kernel(np.array([x, y]), s), -np.inf, np.inf,
                               -np.inf, np.inf)
    assert val == pytest.approx(1.0, rel=1e-8)
    one_d, _ = integrate.quad(lambda x: green_kernel(x, s, dim=1), -np.inf, np.inf)
    assert one_d == pytest.approx(1.0, rel=1e-8)


def static(grid, values, T=1.0):
    f = ScalarField(grid, values)
    return Trajectory([0.0, T], [f, f])


@pytest.fixture(scope="module")
def grid():
    return Grid.box(-2.0, 2.0, 0.02)


def test_full_plane_gives_elapsed_time(grid):
    K = static(grid, np.ones(grid.shape))
    assert phi((0.0, 0.0), 0.02, 0.0, K) == pytest.approx(0.02, rel=1e-9)
    # the box [-2, 2]^2 holds the whole set; mass outside it is lost by the tails
    for t in (0.1, 0.5):
        box, _ = integrate.quad(lambda s: math.erf(1 / math.sqrt(s)) ** 2 if s > 0 else 1.0, 0, t)
        assert box < t
        assert phi((0.0, 0.0), t, 0.0, K) == pytest.approx(box, rel=1e-6)
    assert phi((0.0, 0.0), 0.0, 0.0, K) == 0.0


def disk_oracle(a, t):
    # Gaussian of variance 2 sigma per axis falls inside radius a with probability 1 - exp(-a^2 / (4 sigma))
    val, _ = integrate.quad(lambda s: 1 - math.exp(-a * a / (4 * s)) if s > 0 else 1.0, 0, t)
    return val


def test_static_disk_against_polar_oracle(grid):
    K = static(grid, np.clip(0.5 - grid.radius(), -0.5, 0.5))
    pot = Potential(K, r_max=0.1)
    for t in (0.1, 0.3):
        got = pot.values((0.0, 0.0), t, [0.0, 0.05, 0.1])
        want = [disk_oracle(0.5 + r, t) for r in (0.0, 0.05, 0.1)]
        np.testing.assert_allclose(got, want, atol=2e-3 * t)


def test_lipschitz_in_r_and_certificate(grid):
    u = np.clip(0.5 - grid.radius(), -0.5, 0.5)
    K = static(grid, u, 0.3)
    with pytest.raises(CertificateMissing):
        lipschitz_in_r_check(K, [(0.0, 0.0)], [0.2], [0.05], 1.0)
    cert = cone_certificate(extract_front(K.final), ConeParams(0.05, 0.2))
    rep = lipschitz_in_r_check(K, [(0.0, 0.0), (0.5, 0.0)], [0.2], [0.025, 0.05], 1.0, certificate=cert)
    assert rep.passed
    assert rep.info["lambda0_hat"] <= 1.0
