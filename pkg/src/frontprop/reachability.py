"""Minimal-time function of the expanding front and Pontryagin extremals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import NotMonotone, StepFailure
from .geometry import _inward_normals, extract_front
from .grid import Grid, ScalarField
from .reports import EstimateReport


@dataclass(frozen=True)
class MinimalTimeField:
    grid: Grid
    values: np.ndarray  # +inf where the front never arrives before T
    T: float

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.values)


def minimal_time(traj, tol: float = 1e-12) -> MinimalTimeField:
    """v(x) = first time u(x, t) >= 0, linearly interpolated between recorded slices."""
    U = traj.values()
    times = np.asarray(traj.times)
    drops = np.diff(U, axis=0)
    if drops.size and drops.min() < -tol:
        raise NotMonotone(f"u decreases by {-drops.min():.3g} between slices")
    reached = U >= 0
    v = np.full(U.shape[1:], np.inf)
    v[reached[0]] = 0.0
    for k in range(1, len(times)):
        new = reached[k] & ~reached[k - 1]
        if not new.any():
            continue
        a, b = U[k - 1][new], U[k][new]
        frac = np.where(b > a, -a / np.where(b > a, b - a, 1.0), 1.0)
        v[new] = times[k - 1] + np.clip(frac, 0.0, 1.0) * (times[k] - times[k - 1])
    return MinimalTimeField(traj.grid, v, float(times[-1]))


def lipschitz_check(mt: MinimalTimeField, c_lo: float) -> EstimateReport:
    """Largest |v(x) - v(y)|/h over neighbouring reached cells <= 1/c_lo + 10h/c_lo^2."""
    h = mt.grid.h
    best = 0.0
    fin = mt.finite
    if not fin.any():
        raise ValueError("minimal-time field has no finite region")
    for ax in range(mt.grid.dim):
        both = fin[tuple(_sl(ax, mt.grid.dim, 0))] & fin[tuple(_sl(ax, mt.grid.dim, 1))]
        if not both.any():
            continue
        d = np.abs(np.diff(np.where(fin, mt.values, 0.0), axis=ax))[both] / h
        best = max(best, float(d.max()))
    rep = EstimateReport("minimal_time_lipschitz", info={"c_lo": c_lo})
    rep.add(mt.T, best, 1 / c_lo + 10 * h / c_lo ** 2)
    return rep


def _sl(ax, dim, start):
    s = [slice(None)] * dim
    s[ax] = slice(start, None) if start else slice(None, -1)
    return s


def duality_check(mt: MinimalTimeField, traj) -> EstimateReport:
    """{v <= t} against {u(t) >= 0} per slice; mismatches must sit within one cell of the front."""
    rep = EstimateReport("arrival_duality")
    for t, f in traj:
        a = mt.values <= t + 1e-12
        b = f.values >= 0
        diff = a ^ b
        front = ndimage.binary_dilation(b, iterations=1) & ~ndimage.binary_erosion(b, iterations=1)
        bad = int((diff & ~front).sum())
        rep.add(t, bad, 0)
    return rep


# ---------------------------------------------------------------------------
# velocity fields with a spatial gradient


class AnalyticVelocity:
    def __init__(self, c, grad, c_lo=None, c_hi=None, C=None):
        self.c, self.grad = c, grad
        self.c_lo, self.c_hi, self.C = c_lo, c_hi, C

    def value_and_gradient(self, x, t):
        return float(self.c(x, t)), np.asarray(self.grad(x, t), dtype=float)


class SmoothedVelocity:
    """Gaussian-mollified (width ``sigma_cells`` cells) velocity frames with cubic-spline sampling."""

    def __init__(self, grid: Grid, times, frames, sigma_cells: float = 2.0):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self._c, self._g = [], []
        for f in frames:
            f = np.broadcast_to(np.asarray(f, dtype=float), grid.shape)
            s = ndimage.gaussian_filter(f, sigma_cells, mode="nearest")
            gr = np.gradient(s, grid.h)
            gr = list(gr) if isinstance(gr, (list, tuple)) else [gr]
            self._c.append(ndimage.spline_filter(s, order=3, mode="nearest"))
            self._g.append([ndimage.spline_filter(g, order=3, mode="nearest") for g in gr])
        self.c_lo = float(min(ndimage.gaussian_filter(np.asarray(f, float), sigma_cells).min() for f in frames))

    @classmethod
    def from_provider(cls, grid, provider, times, sigma_cells=2.0):
        return cls(grid, times, [provider(t) for t in times], sigma_cells)

    def _sample(self, arr, x):
        coords = self.grid.to_index_coords(np.asarray(x, dtype=float)[None, :])
        return float(ndimage.map_coordinates(arr, coords, order=3, mode="nearest", prefilter=False)[0])

    def value_and_gradient(self, x, t):
        ts = self.times
        if len(ts) == 1 or t <= ts[0]:
            k, w = 0, 0.0
        elif t >= ts[-1]:
            k, w = len(ts) - 1, 0.0
        else:
            k = int(np.searchsorted(ts, t, side="right")) - 1
            w = (t - ts[k]) / (ts[k + 1] - ts[k])

        def at(i):
            return self._sample(self._c[i], x), np.array([self._sample(g, x) for g in self._g[i]])

        c0, g0 = at(k)
        if w == 0:
            return c0, g0
        c1, g1 = at(k + 1)
        return (1 - w) * c0 + w * c1, (1 - w) * g0 + w * g1


# ---------------------------------------------------------------------------


@dataclass
class ExtremalTrajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    xdot: np.ndarray
    dt: float

    def perturbed(self, index: int, shift) -> "ExtremalTrajectory":
        x = self.x.copy()
        x[index] = x[index] + np.asarray(shift)
        return ExtremalTrajectory(self.times, x, self.p, self.xdot, self.dt)


def _rhs(velocity, x, p, t):
    c, g = velocity.value_and_gradient(x, t)
    n = np.linalg.norm(p)
    if n < 1e-12:
        raise StepFailure(f"adjoint collapsed (|p| = {n:.3g}) at t = {t:.4g}")
    return c * p / n, -g * n, c


def pontryagin_integrate(x_end, p_end, velocity, t_end: float, dt: float | None = None,
                         steps: int | None = None) -> ExtremalTrajectory:
    """Backward RK4 for x' = c p/|p|, -p' = Dc |p| from (x_end, p_end) at t_end down to 0.

    ``p_end`` is normalised to unit length; its magnitude then evolves freely.
    """
    x = np.asarray(x_end, dtype=float).copy()
    p = np.asarray(p_end, dtype=float).copy()
    if not np.linalg.norm(p) > 1e-12:
        raise StepFailure("p_end must be nonzero")
    p = p / np.linalg.norm(p)
    if steps is None:
        dt = dt or 1e-2
        steps = max(1, int(math.ceil(t_end / dt - 1e-9)))
    dt = t_end / steps
    xs, ps, vs, ts = [x.copy()], [p.copy()], [], [t_end]
    t = t_end
    for _ in range(steps):
        # integrate in reversed time s = t_end - t: dx/ds = -x', dp/ds = -p'
        k1x, k1p, c = _rhs(velocity, x, p, t)
        vs.append(k1x)
        k2x, k2p, _ = _rhs(velocity, x - 0.5 * dt * k1x, p - 0.5 * dt * k1p, t - 0.5 * dt)
        k3x, k3p, _ = _rhs(velocity, x - 0.5 * dt * k2x, p - 0.5 * dt * k2p, t - 0.5 * dt)
        k4x, k4p, _ = _rhs(velocity, x - dt * k3x, p - dt * k3p, t - dt)
        x = x - dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        p = p - dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
        t -= dt
        xs.append(x.copy())
        ps.append(p.copy())
        ts.append(max(t, 0.0))
    vs.append(_rhs(velocity, x, p, max(t, 0.0))[0])
    order = slice(None, None, -1)
    return ExtremalTrajectory(np.array(ts)[order], np.array(xs)[order], np.array(ps)[order],
                              np.array(vs)[order], dt)


def taylor_deviation_check(ext: ExtremalTrajectory, M: float, omega_R, slack_factor: float = 10.0,
                           ) -> EstimateReport:
    """|x(tb) - x(t) - x'(tb)(tb - t)| <= M/2 (tb - t)^2 + omega_R(tb - t)(tb - t) for t < tb."""
    if len(ext.times) < 3:
        raise ValueError("need at least three samples")
    ts, xs, vs = ext.times, ext.x, ext.xdot
    slack = slack_factor * ext.dt
    rep = EstimateReport("taylor_deviation", info={"M": M, "slack": slack})
    worst_ratio = 0.0
    worst = None
    for j in range(1, len(ts)):
        d = ts[j] - ts[:j]
        lhs = np.linalg.norm(xs[j] - xs[:j] - vs[j] * d[:, None], axis=1)
        rhs = 0.5 * M * d ** 2 + np.array([omega_R(s) for s in d]) * d
        i = int(np.argmax(lhs - rhs))
        if worst is None or lhs[i] - rhs[i] > worst[1] - worst[2]:
            worst = (ts[j], lhs[i], rhs[i])
        pos = rhs > 0
        if pos.any():
            worst_ratio = max(worst_ratio, float((lhs[pos] / rhs[pos]).max()))
    t, lhs, rhs = worst
    rep.add(t, lhs, rhs + slack)
    rep.info["ratio"] = worst_ratio
    return rep


def speed_bracket_check(ext: ExtremalTrajectory, c_lo: float, c_hi: float, tol: float = 1e-6) -> EstimateReport:
    rep = EstimateReport("extremal_speed")
    steps = np.linalg.norm(np.diff(ext.x, axis=0), axis=1)
    dts = np.diff(ext.times)
    speed = steps / dts
    rep.add(ext.times[-1], float(speed.max()), c_hi + tol)
    rep.add(ext.times[0], c_lo - tol, float(speed.min()))
    return rep


def adjoint_growth_check(ext: ExtremalTrajectory, C: float, tol: float = 1e-9) -> EstimateReport:
    """|p(t)| <= |p(t_end)| e^{C (t_end - t)}."""
    rep = EstimateReport("adjoint_growth")
    n = np.linalg.norm(ext.p, axis=1)
    bound = n[-1] * np.exp(C * (ext.times[-1] - ext.times))
    k = int(np.argmax(n - bound))
    rep.add(ext.times[k], float(n[k]), float(bound[k]) + tol)
    return rep


def _position_at(ext: ExtremalTrajectory, t: float) -> np.ndarray:
    return np.array([np.interp(t, ext.times, ext.x[:, k]) for k in range(ext.x.shape[1])])


def front_tracking_check(ext: ExtremalTrajectory, traj, tol_cells: float = 3.0) -> EstimateReport:
    """An extremal seeded on the final front stays within ``tol_cells`` cells of the front at each recorded time."""
    h = traj.grid.h
    rep = EstimateReport("extremal_front_tracking")
    for t, f in traj:
        if t > ext.times[-1] + 1e-12:
            break
        pts = extract_front(f).densified(h / 4)
        dist, _ = cKDTree(pts).query(_position_at(ext, t))
        rep.add(t, float(dist), tol_cells * h)
    return rep


def seed_extremals(u: ScalarField, count: int) -> list:
    """``count`` evenly spaced points on the front of ``u`` with outward unit normals -Du/|Du|."""
    front = extract_front(u)
    pts = front.vertices
    idx = np.linspace(0, len(pts), count, endpoint=False).astype(int)
    pts = pts[idx]
    return [(x, -n) for x, n in zip(pts, _inward_normals(u, pts))]
