"""Uniform grids, sampled fields, signed distance and band measures.

Cell centers sit at ``origin + (i + 1/2) h`` along each axis, arrays use
``ij`` indexing (axis 0 is x).  Fields are treated as immutable values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.integrate import trapezoid

from .errors import BadBand, EmptyShape, FullShape, GridMismatch, NoEta


@dataclass(frozen=True)
class Grid:
    origin: tuple
    h: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        if len(self.origin) != len(self.shape):
            raise ValueError("origin and shape disagree on dimension")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.h > 0:
            raise ValueError("spacing must be positive")
        if min(self.shape) < 8:
            raise ValueError("need at least 8 cells per axis")

    @classmethod
    def box(cls, lo: float, hi: float, h: float, dim: int = 2) -> "Grid":
        """Square grid covering ``[lo, hi]^dim`` with spacing ``h``."""
        n = int(round((hi - lo) / h))
        return cls((lo,) * dim, h, (n,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def upper(self) -> tuple:
        return tuple(o + n * self.h for o, n in zip(self.origin, self.shape))

    def axes(self) -> list:
        return [o + (np.arange(n) + 0.5) * self.h for o, n in zip(self.origin, self.shape)]

    def mesh(self) -> tuple:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def radius(self) -> np.ndarray:
        """Distance of every cell center to the origin of space."""
        return np.sqrt(sum(x * x for x in self.mesh()))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def inner_radius(self, margin_cells: int = 0) -> float:
        """Radius of the largest ball centred at 0 inside the grid, minus a margin."""
        gaps = []
        for o, u in zip(self.origin, self.upper):
            gaps += [-o, u]
        return min(gaps) - margin_cells * self.h

    def index_of(self, x: Sequence[float]) -> tuple:
        """Index of the cell containing point ``x``."""
        return tuple(
            int(np.clip(math.floor((xi - o) / self.h), 0, n - 1))
            for xi, o, n in zip(x, self.origin, self.shape)
        )

    def to_index_coords(self, points: np.ndarray) -> np.ndarray:
        """Fractional array coordinates (for interpolation) of physical points, shape (n, dim)."""
        points = np.atleast_2d(points)
        return ((points - np.asarray(self.origin)) / self.h - 0.5).T

    def padded(self, cells: int) -> "Grid":
        return Grid(tuple(o - cells * self.h for o in self.origin), self.h,
                    tuple(n + 2 * cells for n in self.shape))

    def window_in(self, other: "Grid") -> tuple:
        """Slices selecting this grid inside a larger, aligned grid."""
        if not math.isclose(self.h, other.h):
            raise GridMismatch("spacings differ")
        out = []
        for o_in, n_in, o_out, n_out in zip(self.origin, self.shape, other.origin, other.shape):
            start = int(round((o_in - o_out) / self.h))
            if start < 0 or start + n_in > n_out:
                raise GridMismatch("grid is not contained in the other grid")
            out.append(slice(start, start + n_in))
        return tuple(out)


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    bound: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if self.bound is not None and np.abs(v).max() > self.bound:
            raise ValueError("field exceeds its declared bound")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def with_values(self, values, time=None) -> "ScalarField":
        return ScalarField(self.grid, values, self.time if time is None else time)

    def __sub__(self, other):
        _same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values, self.time)


@dataclass(frozen=True)
class PhaseIndicator:
    """Space-time occupancy: one [0, 1]-valued frame per time."""

    grid: Grid
    times: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        f = np.asarray(self.frames, dtype=float)
        if f.shape != (len(t),) + self.grid.shape:
            raise GridMismatch("frames do not match times x grid")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if f.min(initial=0) < 0 or f.max(initial=0) > 1:
            raise ValueError("indicator values must lie in [0, 1]")
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "frames", f)

    @classmethod
    def constant(cls, grid: Grid, times, frame) -> "PhaseIndicator":
        frame = np.broadcast_to(np.asarray(frame, dtype=float), grid.shape)
        return cls(grid, times, np.repeat(frame[None], len(times), axis=0))

    def frame_at(self, t: float) -> np.ndarray:
        """Frame in force at time ``t`` (the last frame with time <= t)."""
        k = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return self.frames[max(k, 0)]

    def l1_distance(self, other: "PhaseIndicator") -> float:
        """Space-time L1 distance (trapezoid in time)."""
        if other.grid != self.grid or not np.array_equal(other.times, self.times):
            raise GridMismatch("indicators live on different grids or times")
        per_frame = np.abs(self.frames - other.frames).reshape(len(self.times), -1).sum(axis=1)
        per_frame = per_frame * self.grid.cell_volume
        if len(self.times) == 1:
            return float(per_frame[0])
        return float(trapezoid(per_frame, self.times))

    def check_interior(self, margin_cells: int = 2) -> bool:
        """True when every frame vanishes on the outer ``margin_cells`` ring."""
        return not np.any(self.frames[:, _ring(self.grid.shape, margin_cells)])


@dataclass(frozen=True)
class InitialDatum:
    field: ScalarField
    R0: float
    eta0: float
    floor: float
    front_radius: float
    kink_cells: int = 0

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


def _ring(shape, margin):
    mask = np.ones(shape, dtype=bool)
    inner = tuple(slice(margin, n - margin) for n in shape)
    mask[inner] = False
    return mask


def _same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridMismatch("fields live on different grids")


# ---------------------------------------------------------------------------
# Euclidean distance transforms


def _lower_envelope_1d(f: np.ndarray) -> np.ndarray:
    """Squared distance transform of a 1D sampled function (Felzenszwalb-Huttenlocher)."""
    n = len(f)
    d = np.empty(n)
    finite = np.flatnonzero(np.isfinite(f))
    if len(finite) == 0:
        d[:] = np.inf
        return d
    v = np.empty(n, dtype=int)
    z = np.empty(n + 1)
    k = 0
    v[0] = finite[0]
    z[0], z[1] = -np.inf, np.inf
    for q in finite[1:]:
        while True:
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[k]:
                k -= 1
                continue
            break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def edt_felzenszwalb(mask: np.ndarray, h: float = 1.0) -> np.ndarray:
    """Exact Euclidean distance from each cell to the nearest ``False`` cell.

    Separable lower-envelope-of-parabolas algorithm, one pass per axis.
    Pure Python; used as an independent oracle for the scipy backend.
    """
    mask = np.asarray(mask, dtype=bool)
    g = np.where(mask, np.inf, 0.0)
    for axis in range(mask.ndim):
        g = np.apply_along_axis(_lower_envelope_1d, axis, g)
    return np.sqrt(g) * h


def _edt(mask: np.ndarray, h: float) -> np.ndarray:
    return ndimage.distance_transform_edt(mask, sampling=h)


def signed_distance(indicator, grid: Grid | None = None) -> ScalarField:
    """Signed distance to the set ``{indicator > 0}``: negative inside, positive outside.

    Distances are measured between cell centers and shifted by ``h/2`` so the
    zero crossing sits on the cell faces separating the set from its exterior.
    """
    mask, grid = _as_mask(indicator, grid)
    if not mask.any():
        raise EmptyShape("indicator is empty")
    if mask.all():
        raise FullShape("indicator has no exterior")
    half = 0.5 * grid.h
    outside = _edt(~mask, grid.h) - half
    inside = _edt(mask, grid.h) - half
    return ScalarField(grid, np.where(mask, -inside, outside))


def _as_mask(indicator, grid):
    if isinstance(indicator, ScalarField):
        return indicator.values > 0, indicator.grid
    if grid is None:
        raise ValueError("a grid is required for raw arrays")
    mask = np.asarray(indicator) > 0
    if mask.shape != grid.shape:
        raise GridMismatch("indicator shape does not match grid")
    return mask, grid


# ---------------------------------------------------------------------------
# discrete gradients


def gradient(values: np.ndarray, h: float, floor: float | None = None) -> list:
    """Per-axis discrete gradient.

    Centered differences, except at the interface with a truncation plateau
    (cells equal to ``floor`` next to cells above it) where the one-sided
    difference pointing away from the plateau is used.  Grid edges use
    one-sided differences.
    """
    u = np.asarray(values, dtype=float)
    out = []
    for axis in range(u.ndim):
        fwd, bwd = _one_sided(u, h, axis)
        g = 0.5 * (fwd + bwd)
        if floor is not None:
            flat = u <= floor
            nxt = _shift(flat, -1, axis)
            prv = _shift(flat, 1, axis)
            # plateau on exactly one side: take the difference toward the non-plateau side
            g = np.where(~flat & nxt & ~prv, bwd, g)
            g = np.where(~flat & prv & ~nxt, fwd, g)
            g = np.where(flat & ~nxt & prv, fwd, g)
            g = np.where(flat & ~prv & nxt, bwd, g)
        out.append(g)
    return out


def _shift(a, k, axis):
    """a[i - k] along axis with edge replication."""
    n = a.shape[axis]
    idx = np.clip(np.arange(n) - k, 0, n - 1)
    return np.take(a, idx, axis=axis)


def _one_sided(u, h, axis):
    n = u.shape[axis]
    up = np.take(u, np.minimum(np.arange(n) + 1, n - 1), axis=axis)
    dn = np.take(u, np.maximum(np.arange(n) - 1, 0), axis=axis)
    fwd = (up - u) / h
    bwd = (u - dn) / h
    # edges: fall back to the interior one-sided difference
    first = [slice(None)] * u.ndim
    last = [slice(None)] * u.ndim
    first[axis] = 0
    last[axis] = n - 1
    bwd[tuple(first)] = fwd[tuple(first)]
    fwd[tuple(last)] = bwd[tuple(last)]
    return fwd, bwd


def gradient_norm(values: np.ndarray, h: float, floor: float | None = None) -> np.ndarray:
    return np.sqrt(sum(g * g for g in gradient(values, h, floor)))


def lipschitz_constant(f: ScalarField) -> float:
    """Discrete sup of |Du| (centered differences)."""
    return float(gradient_norm(f.values, f.grid.h).max())


def kink_mask(values: np.ndarray, h: float) -> np.ndarray:
    """Concave kinks: cells where the slope drops by more than half the Lipschitz constant.

    Only these can carry a superdifferential containing small vectors; convex
    kinks have an empty superdifferential and impose nothing.
    """
    u = np.asarray(values, dtype=float)
    lip = max(float(gradient_norm(u, h).max()), 1e-300)
    mask = np.zeros(u.shape, dtype=bool)
    for axis in range(u.ndim):
        fwd, bwd = _one_sided(u, h, axis)
        mask |= (fwd - bwd) < -0.5 * lip
    return mask


def h2_certificate(values: np.ndarray, h: float, floor: float | None = None):
    """Largest eta0 passing the pointwise (H2) surrogate ``|u| + |Du| >= eta0``.

    ``|Du|`` is the centered gradient (one-sided at the floor interface).  On a
    symmetric ridge the centered gradient is close to 0, so ridges are still
    charged their ``|u|``.  Concave-kink cells are returned for reporting.
    """
    u = np.asarray(values, dtype=float)
    val = np.abs(u) + gradient_norm(u, h, floor)
    return float(val.min()), kink_mask(u, h)


def datum_from_profile(values, grid: Grid, floor: float = -1.0, tol: float = 1e-9) -> InitialDatum:
    """Truncate a profile from below at ``floor`` and certify condition (3) and (H2)."""
    if not floor < 0:
        raise ValueError("floor must be negative")
    u = np.maximum(np.asarray(values, dtype=float), floor)
    if not (u > 0).any():
        raise EmptyShape("{u0 > 0} is empty")
    if np.any(u[_ring(grid.shape, 2)] > floor):
        raise NoEta("datum is not at its floor near the grid boundary; condition (3) cannot hold")
    r = grid.radius()
    R0 = float(r[u > floor].max()) + grid.h
    front_radius = float(r[u >= 0].max())
    eta0, kinks = h2_certificate(u, grid.h, floor)
    if eta0 <= tol:
        raise NoEta(f"discrete (H2) certificate fails (best eta0 = {eta0:.3g})")
    return InitialDatum(ScalarField(grid, u), R0, eta0, float(floor), front_radius,
                        int(kinks.sum()))


def build_truncated_sdf(shape, floor: float, grid: Grid | None = None) -> InitialDatum:
    """Initial datum ``clip(-signed_distance(shape), floor, -floor)``."""
    mask, grid = _as_mask(shape, grid)
    if not mask.any():
        raise EmptyShape("shape is empty")
    if mask.all():
        raise FullShape("shape covers the grid; no exterior exists")
    if not floor < 0:
        raise ValueError("floor must be negative")
    profile = np.clip(-signed_distance(mask, grid).values, floor, -floor)
    return datum_from_profile(profile, grid, floor)


# ---------------------------------------------------------------------------
# level-set measures


def _frac_ge(s, widths):
    """Fraction of a cell where a linear function with center excess ``s`` is >= 0.

    ``widths`` are |g_axis| * h; the value over the cell is ``s`` plus a sum
    of independent uniforms on [-w/2, w/2], so the fraction is that sum's CDF.
    """
    if len(widths) == 1:
        p = widths[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.clip(0.5 + s / p, 0.0, 1.0)
        return np.where(p > 0, f, (s >= 0).astype(float))
    p = np.maximum(widths[0], widths[1])
    q = np.minimum(widths[0], widths[1])
    z = s + 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.clip((z - 0.5 * q) / p, 0.0, 1.0)
        lo = z * z / (2 * p * q)
        hi = 1.0 - (p + q - z) ** 2 / (2 * p * q)
        f = np.where(z <= 0, 0.0,
            np.where(z < q, lo,
            np.where(z <= p, lin,
            np.where(z < p + q, hi, 1.0))))
    tiny = q <= 1e-12 * np.maximum(p, 1e-300)
    one_d = np.where(p > 0, lin, (s >= 0).astype(float))
    return np.where(tiny, one_d, f)


def measure_ge(u: ScalarField, a: float, mask: np.ndarray | None = None) -> float:
    """L^N({u >= a}) with sub-cell linear reconstruction."""
    g = gradient(u.values, u.grid.h)
    widths = [np.abs(gi) * u.grid.h for gi in g]
    frac = _frac_ge(u.values - a, widths)
    if mask is not None:
        frac = frac * mask
    return float(frac.sum() * u.grid.cell_volume)


def band_measure(u: ScalarField, a: float, b: float) -> float:
    """L^N({a <= u <= b})."""
    if not a < b:
        raise BadBand(f"need a < b, got a={a}, b={b}")
    g = gradient(u.values, u.grid.h)
    widths = [np.abs(gi) * u.grid.h for gi in g]
    frac = _frac_ge(u.values - a, widths) - _frac_ge(u.values - b, widths)
    # cells sitting exactly on a flat level b belong to the closed band
    flat = sum(widths) == 0
    frac = np.where(flat & (u.values == b), 1.0, frac)
    return float(np.clip(frac, 0.0, 1.0).sum() * u.grid.cell_volume)


def sup_norm_difference(u1: ScalarField, u2: ScalarField) -> float:
    _same_grid(u1, u2)
    return float(np.abs(u1.values - u2.values).max())
