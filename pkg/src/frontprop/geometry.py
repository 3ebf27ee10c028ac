"""Front extraction, perimeters, interior cones, perimeter and band-measure bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree
from skimage import measure

from .errors import (BadBand, BadParams, BandOutsideEta, CertificateMissing, EmptyLevelSet,
                     NonpositiveInput, TouchesBoundary)
from .grid import Grid, ScalarField, band_measure, gradient, gradient_norm, measure_ge, signed_distance
from .reports import EstimateReport

# Calibrated on disks (r = 1, 1.5), the square of side 2 and evolved S2 fronts, whose
# largest perimeter/volume ratio is 2.0; 25% headroom.
LAMBDA_HAT_DEFAULT = 2.5


@dataclass
class FrontSet:
    polylines: list
    enclosed: np.ndarray
    level: float
    field: ScalarField

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def vertices(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, self.grid.dim))
        return np.concatenate(self.polylines, axis=0)

    def volume(self) -> float:
        return measure_ge(self.field, self.level)

    def segments(self):
        """(start, end) arrays over all closed polylines (2D only)."""
        starts, ends = [], []
        for line in self.polylines:
            if len(line) < 2:
                continue
            starts.append(line)
            ends.append(np.roll(line, -1, axis=0))
        if not starts:
            return np.zeros((0, 2)), np.zeros((0, 2))
        return np.concatenate(starts), np.concatenate(ends)

    def densified(self, spacing: float) -> np.ndarray:
        if self.grid.dim == 1:
            return self.vertices
        pts = []
        for a, b in zip(*self.segments()):
            n = max(1, int(math.ceil(np.linalg.norm(b - a) / spacing)))
            s = np.arange(n)[:, None] / n
            pts.append(a + s * (b - a))
        return np.concatenate(pts) if pts else np.zeros((0, 2))


def _to_physical(grid: Grid, idx: np.ndarray) -> np.ndarray:
    return np.asarray(grid.origin) + (idx + 0.5) * grid.h


def extract_front(u: ScalarField, level: float = 0.0) -> FrontSet:
    """Contour {u = level} by marching squares with linear interpolation along edges."""
    vals = u.values
    mask = vals >= level
    if not mask.any():
        raise EmptyLevelSet(f"{{u >= {level}}} is empty")
    ring = np.ones(mask.shape, dtype=bool)
    ring[tuple(slice(1, n - 1) for n in mask.shape)] = False
    if mask[ring].any():
        raise TouchesBoundary("the level set reaches the grid boundary")
    grid = u.grid
    if grid.dim == 1:
        pts = []
        for i in range(len(vals) - 1):
            a, b = vals[i] - level, vals[i + 1] - level
            if (a >= 0) != (b >= 0):
                s = a / (a - b)
                pts.append(np.array([_to_physical(grid, np.array([i + s]))[0]]))
        return FrontSet(pts, mask, level, u)
    lines = []
    for c in measure.find_contours(vals, level):
        if len(c) > 1 and np.allclose(c[0], c[-1]):
            c = c[:-1]
        lines.append(_to_physical(grid, c))
    return FrontSet(lines, mask, level, u)


def perimeter(front: FrontSet) -> float:
    """Total closed-polyline length in 2D, number of crossing points in 1D."""
    if front.grid.dim == 1:
        return float(len(front.polylines))
    a, b = front.segments()
    return float(np.linalg.norm(b - a, axis=1).sum())


def hausdorff(front_a: FrontSet, front_b: FrontSet, spacing: float | None = None) -> float:
    """Symmetric Hausdorff distance between two fronts (densified polylines)."""
    spacing = spacing or front_a.grid.h / 4
    pa, pb = front_a.densified(spacing), front_b.densified(spacing)
    if len(pa) == 0 or len(pb) == 0:
        return 0.0 if len(pa) == len(pb) else math.inf
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float(max(da.max(), db.max()))


# ---------------------------------------------------------------------------
# interior cones


@dataclass(frozen=True)
class ConeParams:
    rho: float
    theta: float

    def __post_init__(self):
        if not (0 < self.rho < self.theta):
            raise BadParams(f"need 0 < rho < theta, got rho={self.rho}, theta={self.theta}")

    def scaled(self, factor: float) -> "ConeParams":
        return ConeParams(self.rho * factor, self.theta * factor)


@dataclass
class ConeCertificate:
    boundary_samples: list = field(default_factory=list)
    params: ConeParams | None = None

    @property
    def coverage_fraction(self) -> float:
        if not self.boundary_samples:
            return 1.0
        return sum(1 for s in self.boundary_samples if s[2]) / len(self.boundary_samples)

    def failures(self):
        return [s for s in self.boundary_samples if not s[2]]


def cone_lattice(params: ConeParams, spacing: float, dim: int = 2) -> np.ndarray:
    """Cone samples in local (lambda, xi) coordinates: axis first, then transverse offsets.

    The lattice is anchored at the apex and independent of rho, so shrinking
    rho only removes samples.
    """
    n = max(1, int(math.ceil(params.theta / spacing)))
    lam = np.linspace(0.0, params.theta, n + 1)
    if dim == 1:
        return lam[:, None]
    k = params.rho / params.theta
    jmax = int(math.floor(params.theta * k / spacing + 1e-12))
    j = np.arange(-jmax, jmax + 1) * spacing
    L, J = np.meshgrid(lam, j, indexing="ij")
    keep = np.abs(J) <= k * L + 1e-12
    return np.stack([L[keep], J[keep]], axis=1)


class ConeTester:
    """Grid-slack membership test ``u >= -h |Du|_inf`` at cone samples."""

    def __init__(self, u: ScalarField, spacing: float | None = None):
        self.u = u
        self.grid = u.grid
        self.spacing = spacing or self.grid.h / 2
        self.slack = self.grid.h * float(gradient_norm(u.values, self.grid.h).max())
        self._lattice = {}

    def lattice(self, params):
        if params not in self._lattice:
            self._lattice[params] = cone_lattice(params, self.spacing, self.grid.dim)
        return self._lattice[params]

    def sample(self, points: np.ndarray) -> np.ndarray:
        coords = self.grid.to_index_coords(points)
        return ndimage.map_coordinates(self.u.values, coords, order=1, mode="nearest")

    def points(self, x, nu, params) -> np.ndarray:
        local = self.lattice(params)
        x = np.asarray(x, dtype=float)
        nu = np.asarray(nu, dtype=float)
        if self.grid.dim == 1:
            return x + local[:, :1] * nu
        perp = np.array([-nu[1], nu[0]])
        return x + local[:, :1] * nu + local[:, 1:2] * perp

    def fits(self, x, nu, params) -> bool:
        nu = _unit(nu)
        return bool(np.all(self.sample(self.points(x, nu, params)) >= -self.slack))


def _unit(nu):
    nu = np.asarray(nu, dtype=float)
    n = np.linalg.norm(nu)
    if not n > 0:
        raise BadParams("cone axis must be nonzero")
    return nu / n


def cone_fits(u: ScalarField, x, nu, params: ConeParams) -> bool:
    """Whether x + [0, theta] B(nu, rho/theta) lies in {u >= 0} up to grid slack."""
    if not isinstance(params, ConeParams):
        params = ConeParams(*params)
    return ConeTester(u).fits(x, nu, params)


def in_cone(points, x, nu, params: ConeParams) -> np.ndarray:
    """Exact membership in the cone, by minimising |p - lam nu|^2 - (k lam)^2 over lam."""
    p = np.atleast_2d(points) - np.asarray(x, dtype=float)
    nu = _unit(nu)
    k = params.rho / params.theta
    a = p @ nu
    lam = np.clip(a / (1 - k * k), 0.0, params.theta)
    d2 = (p * p).sum(axis=1) - 2 * lam * a + lam * lam
    return d2 <= (k * lam) ** 2 + 1e-12


def _inward_normals(u: ScalarField, points: np.ndarray) -> np.ndarray:
    g = gradient(u.values, u.grid.h)
    coords = u.grid.to_index_coords(points)
    comps = [ndimage.map_coordinates(gi, coords, order=1, mode="nearest") for gi in g]
    n = np.stack(comps, axis=1)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return np.where(norm > 0, n / np.where(norm > 0, norm, 1), 0.0)


def cone_certificate(front: FrontSet, params: ConeParams, axis_count: int = 16) -> ConeCertificate:
    """Per boundary vertex: inward normal first, then ``axis_count`` evenly spread axes."""
    if axis_count < 8 and front.grid.dim == 2:
        raise ValueError("axis_count must be at least 8")
    tester = ConeTester(front.field)
    pts = front.vertices
    cert = ConeCertificate(params=params)
    if len(pts) == 0:
        return cert
    normals = _inward_normals(front.field, pts)
    if front.grid.dim == 1:
        axes = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(axis_count) / axis_count
        axes = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    for x, nrm in zip(pts, normals):
        found = None
        candidates = ([nrm] if np.any(nrm) else []) + list(axes)
        for nu in candidates:
            if tester.fits(x, nu, params):
                found = nu
                break
        cert.boundary_samples.append((x, found if found is not None else nrm, found is not None))
    return cert


def omega_inverse_linear(L_t: float):
    """Inverse of the modulus s -> L_t s (infinite when the velocity is time-independent)."""
    if L_t < 0:
        raise NonpositiveInput("time-Lipschitz constant must be nonnegative")
    return (lambda s: math.inf) if L_t == 0 else (lambda s: s / L_t)


def cone_parameters(c_lo: float, c_hi: float, C: float, omega_R_inverse, r: float) -> ConeParams:
    """theta = min(c_lo^2/(6 C c_hi), c_lo w^{-1}(c_lo/4), r) and rho = c_lo theta/(2 c_hi)."""
    if not (c_lo > 0 and c_hi > 0 and r > 0) or C < 0 or c_lo > c_hi:
        raise NonpositiveInput(f"invalid constants c_lo={c_lo}, c_hi={c_hi}, C={C}, r={r}")
    t1 = math.inf if C == 0 else c_lo ** 2 / (6 * C * c_hi)
    t2 = math.inf if omega_R_inverse is None else c_lo * float(omega_R_inverse(c_lo / 4))
    theta = min(t1, t2, r)
    if not theta > 0:
        raise NonpositiveInput("cone height evaluates to zero")
    return ConeParams(c_lo * theta / (2 * c_hi), theta)


def interior_ball_radius(u: ScalarField, level: float = 0.0, tol: float | None = None) -> float:
    """Largest r such that {u >= level} is a union of closed r-balls, up to one cell.

    Bisection on the morphological opening: erode by r using the signed
    distance, dilate back, and compare with the set.
    """
    grid = u.grid
    K = u.values >= level
    depth = -signed_distance(K, grid).values
    tol = tol or grid.h / 4

    def ok(r):
        core = depth >= r
        if not core.any():
            return False
        dist = ndimage.distance_transform_edt(~core, sampling=grid.h)
        covered = dist <= r + grid.h
        return not np.any(K & ~covered)

    lo, hi = 0.0, float(depth.max())
    if ok(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# estimates


def _volume_in_ball(u: ScalarField, level: float, R: float) -> float:
    """L^N(K intersect B(0,R)) with sub-cell level crossings and cell-averaged ball coverage."""
    grid = u.grid
    r = grid.radius()
    cover = np.clip(0.5 + (R - r) / grid.h, 0.0, 1.0)
    return measure_ge(u, level, mask=cover)


def perimeter_in_ball(front: FrontSet, R: float) -> float:
    if front.grid.dim == 1:
        return float(sum(1 for p in front.polylines if abs(p[0]) <= R))
    a, b = front.segments()
    mid = 0.5 * (a + b)
    keep = np.linalg.norm(mid, axis=1) <= R
    return float(np.linalg.norm(b - a, axis=1)[keep].sum())


def perimeter_bound_check(front: FrontSet, params: ConeParams, R: float,
                          certificate: ConeCertificate | None = None,
                          lambda_hat: float = LAMBDA_HAT_DEFAULT) -> EstimateReport:
    """H^{N-1}(dK in B(0,R)) <= Lambda_hat L^N(K in B(0, R + rho/4))."""
    if certificate is None or certificate.coverage_fraction < 1.0:
        raise CertificateMissing("a cone certificate with full coverage is required")
    lhs = perimeter_in_ball(front, R)
    vol = _volume_in_ball(front.field, front.level, R + params.rho / 4)
    rep = EstimateReport("perimeter_bound", info={"lambda_hat": lambda_hat, "volume": vol,
                                                 "ratio": lhs / vol if vol > 0 else math.inf})
    rep.add(front.field.time, lhs, lambda_hat * vol)
    return rep


def calibrate_lambda_hat(fronts, margin: float = 1.25) -> float:
    """Largest perimeter/volume ratio over a family, times a safety margin."""
    return margin * max(perimeter(f) / f.volume() for f in fronts)


def band_estimate_check(traj, a: float, b: float, eta_bar: float, c_lo: float, tau: float,
                        c_hi: float, Du0_inf: float, eta: float | None = None) -> EstimateReport:
    """Time-integrated band volume against its two upper bounds, relative slack 10h."""
    if not a < b:
        raise BadBand(f"need a < b, got a={a}, b={b}")
    if eta is not None and not (-eta / 2 - 1e-12 <= a and b <= eta / 2 + 1e-12):
        raise BandOutsideEta(f"band [{a}, {b}] is not inside [-eta/2, eta/2] = +-{eta / 2:.4g}")
    h = traj.grid.h
    times = [t for t in traj.times if t <= tau + 1e-12]
    fields = [f for t, f in traj if t <= tau + 1e-12]
    if times[-1] < tau - 1e-12:
        times.append(tau)
        fields.append(ScalarField(traj.grid, traj.at(tau), tau))
    meas = [band_measure(f, a, b) for f in fields]
    lhs = float(trapezoid(meas, times)) if len(times) > 1 else 0.0
    u0, u_tau = fields[0], fields[-1]
    factor = (b - a) / (eta_bar * c_lo)
    rhs1 = factor * (measure_ge(u_tau, a) - measure_ge(u0, b))
    rhs2 = factor * (measure_ge(u0, a - c_hi * Du0_inf * tau) - measure_ge(u0, b))
    rep = EstimateReport("band_estimate", info={"a": a, "b": b, "tau": tau, "eta_bar": eta_bar,
                                               "c_lo": c_lo, "rhs_base1": rhs1, "rhs_base2": rhs2})
    rep.add(tau, lhs, rhs1, lhs <= rhs1 * (1 + 10 * h))
    rep.add(tau, lhs, rhs2, lhs <= rhs2 * (1 + 10 * h))
    return rep
