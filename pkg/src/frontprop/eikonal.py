"""Monotone upwind solver for u_t = c(x,t)|Du| with c >= 0, and its a-priori checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import BadDelta, CflViolation, DomainTooSmall, GridMismatch, NegativeVelocity, NoBand
from .grid import Grid, InitialDatum, ScalarField, gradient_norm
from .reports import EstimateReport


# ---------------------------------------------------------------------------
# velocity providers: callables t -> array (or scalar) carrying their constants


class ConstantVelocity:
    """c(x,t) = value."""

    def __init__(self, value: float):
        self.value = float(value)
        self.c_lo = self.c_hi = self.value
        self.C = 0.0
        self.L_t = 0.0

    def __call__(self, t):
        return self.value


class FunctionVelocity:
    """c(x,t) = fn(X, Y, ..., t) on a grid; constants are declared by the caller."""

    def __init__(self, grid: Grid, fn: Callable, c_lo: float, c_hi: float, C: float = 0.0,
                 L_t: float = 0.0):
        self.grid = grid
        self.fn = fn
        self.c_lo, self.c_hi, self.C, self.L_t = float(c_lo), float(c_hi), float(C), float(L_t)
        self._mesh = grid.mesh()

    def __call__(self, t):
        return np.broadcast_to(np.asarray(self.fn(*self._mesh, t), dtype=float), self.grid.shape)


class FrameVelocity:
    """Velocity sampled at increasing times, linear in between and constant outside."""

    def __init__(self, grid: Grid, times, frames):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.frames = [np.asarray(f, dtype=float) for f in frames]
        self.c_lo = float(min(f.min() for f in self.frames))
        self.c_hi = float(max(f.max() for f in self.frames))
        self.C = float(max(gradient_norm(f, grid.h).max() for f in self.frames))
        if len(self.times) > 1:
            rates = [np.abs(b - a).max() / (tb - ta) for a, b, ta, tb in
                     zip(self.frames[:-1], self.frames[1:], self.times[:-1], self.times[1:])]
            self.L_t = float(max(rates))
        else:
            self.L_t = 0.0

    def __call__(self, t):
        ts = self.times
        if t <= ts[0]:
            return self.frames[0]
        if t >= ts[-1]:
            return self.frames[-1]
        k = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.frames[k] + w * self.frames[k + 1]


# ---------------------------------------------------------------------------


@dataclass
class EikonalProblem:
    u0: InitialDatum | ScalarField
    velocity: Callable
    T: float
    cfl_safety: float = 0.9
    c_bar: float | None = None

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.T < 0:
            raise ValueError("horizon must be nonnegative")
        if self.c_bar is None:
            self.c_bar = float(getattr(self.velocity, "c_hi"))

    @property
    def field(self) -> ScalarField:
        return self.u0.field if isinstance(self.u0, InitialDatum) else self.u0


@dataclass
class Trajectory:
    times: list
    fields: list
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = [float(t) for t in self.times]
        if len(self.times) != len(self.fields):
            raise ValueError("times and fields differ in length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.fields))

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def final(self) -> ScalarField:
        return self.fields[-1]

    def values(self) -> np.ndarray:
        return np.stack([f.values for f in self.fields])

    def at(self, t: float) -> np.ndarray:
        """Linear interpolation between recorded slices."""
        ts = self.times
        if t <= ts[0]:
            return self.fields[0].values
        if t >= ts[-1]:
            return self.fields[-1].values
        k = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.fields[k].values + w * self.fields[k + 1].values

    def scaled(self, factor: float) -> "Trajectory":
        return Trajectory(self.times, [f.with_values(f.values * factor) for f in self.fields])


@dataclass(frozen=True)
class GradientBand:
    eta: float
    eta_bar: float
    gamma_hat: float
    band_minima: tuple = ()


def cfl_dt(grid: Grid, c_bar: float, safety: float = 0.9) -> float:
    if not c_bar > 0:
        raise ValueError("c_bar must be positive")
    return safety * grid.h / (math.sqrt(grid.dim) * c_bar)


def godunov_gradient(u: np.ndarray, h: float) -> np.ndarray:
    """Upwind |Du| for an expanding front: per axis the largest rise toward a neighbour."""
    sq = np.zeros(u.shape)
    p = np.pad(u, 1, mode="edge")
    for axis in range(u.ndim):
        hi = [slice(1, -1)] * u.ndim
        lo = [slice(1, -1)] * u.ndim
        hi[axis] = slice(2, None)
        lo[axis] = slice(None, -2)
        rise = np.maximum(np.maximum(p[tuple(hi)] - u, p[tuple(lo)] - u), 0.0)
        sq += rise * rise
    return np.sqrt(sq) / h


def _step_values(u, c, dt, h, dim):
    c_arr = np.asarray(c, dtype=float)
    cmin = float(c_arr.min())
    if cmin < 0:
        raise NegativeVelocity(f"velocity has negative values (min {cmin:.3g})")
    cmax = float(c_arr.max())
    if cmax > 0 and dt > h / (math.sqrt(dim) * cmax) * (1 + 1e-12):
        raise CflViolation(f"dt={dt:.4g} exceeds stability limit {h / (math.sqrt(dim) * cmax):.4g}")
    if cmax == 0:
        return u.copy()
    return u + dt * c_arr * godunov_gradient(u, h)


def step(u: ScalarField, c, dt: float) -> ScalarField:
    """One explicit Euler step; ``c`` is a ScalarField, an array or a scalar."""
    if isinstance(c, ScalarField):
        if c.grid != u.grid:
            raise GridMismatch("velocity and field grids differ")
        c = c.values
    new = _step_values(u.values, c, dt, u.grid.h, u.grid.dim)
    return ScalarField(u.grid, new, u.time + dt)


def front_radius(values: np.ndarray, grid: Grid) -> float:
    """Largest cell-centre distance to the origin over {u >= 0} (0 if empty)."""
    mask = values >= 0
    if not mask.any():
        return 0.0
    return float(grid.radius()[mask].max())


def check_domain(problem: EikonalProblem) -> None:
    """A-priori sizing from finite speed: the front stays in B(0, r0 + c_bar T)."""
    f = problem.field
    grid = f.grid
    r0 = front_radius(f.values, grid) + grid.h
    need = r0 + problem.c_bar * problem.T
    room = grid.inner_radius(margin_cells=2)
    if need > room:
        raise DomainTooSmall(
            f"front may reach radius {need:.4g} but the grid only allows {room:.4g}")


def solve(problem: EikonalProblem, record_times: Sequence[float] | None = None,
          check: bool = True) -> Trajectory:
    """Explicit Euler march to T; slices at ``record_times`` are linear in time between steps."""
    T = float(problem.T)
    rec = sorted({0.0, T} if record_times is None else {float(t) for t in record_times})
    if rec and (rec[0] < 0 or rec[-1] > T + 1e-12):
        raise ValueError("record times must lie in [0, T]")
    if check:
        check_domain(problem)
    f0 = problem.field
    grid = f0.grid
    u = np.array(f0.values, dtype=float)
    times, fields = [], []
    rec_iter = iter(rec)
    nxt = next(rec_iter, None)

    def record(tr, vals):
        times.append(tr)
        fields.append(ScalarField(grid, vals, tr))

    while nxt is not None and nxt <= 0.0:
        record(nxt, u.copy())
        nxt = next(rec_iter, None)
    if T == 0 or nxt is None:
        return Trajectory(times, fields, {"dt": 0.0, "steps": 0})

    n = max(1, math.ceil(T / cfl_dt(grid, problem.c_bar, problem.cfl_safety) - 1e-9))
    dt = T / n
    t = 0.0
    for k in range(n):
        c = problem.velocity(t)
        u_new = _step_values(u, c, dt, grid.h, grid.dim)
        t_new = T if k == n - 1 else (k + 1) * dt
        while nxt is not None and nxt <= t_new + 1e-12:
            w = min(max((nxt - t) / dt, 0.0), 1.0)
            record(nxt, (1 - w) * u + w * u_new)
            nxt = next(rec_iter, None)
        u, t = u_new, t_new
    return Trajectory(times, fields, {"dt": dt, "steps": n})


# ---------------------------------------------------------------------------
# a-priori estimates


def check_lipschitz_bound(traj: Trajectory, C: float, Du0_inf: float,
                          T: float | None = None) -> EstimateReport:
    """max |Du(t)| <= e^{CT} |Du0|_inf, with relative slack 5h."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    T = traj.times[-1] if T is None else T
    h = traj.grid.h
    rhs = math.exp(C * T) * Du0_inf
    rep = EstimateReport("lipschitz_bound", info={"C": C, "Du0_inf": Du0_inf})
    for t, f in traj:
        lhs = float(gradient_norm(f.values, h).max())
        rep.add(t, lhs, rhs, lhs <= rhs * (1 + 5 * h))
    return rep


def gradient_band(traj: Trajectory, eta_hi: float | None = None, tol: float = 1e-6,
                  iterations: int = 60) -> GradientBand:
    """Largest eta for which the band inequality holds with a fitted exponent.

    For a candidate eta the exponent is fitted from
    ``|u| + e^{gamma t}|Du|^2/4 >= eta`` over cells with ``|u| < eta``; the
    candidate is admissible when that is satisfiable (it must hold at t = 0
    with no exponent) and the band {|u| < eta/2} keeps
    ``|Du| >= sqrt(2 eta) e^{-gamma T/2}``.
    """
    h = traj.grid.h
    slices = [(t, f.values, gradient_norm(f.values, h)) for t, f in traj]
    T = traj.times[-1]

    def fit(eta):
        gamma = 0.0
        for t, u, g in slices:
            sel = np.abs(u) < eta
            if not sel.any():
                continue
            need = 4 * (eta - np.abs(u[sel]))
            g2 = g[sel] ** 2
            if t == 0:
                if np.any(need > g2 * (1 + 1e-12)):
                    return None
                continue
            if np.any((g2 == 0) & (need > 0)):
                return None
            with np.errstate(divide="ignore"):
                ratio = np.log(need / g2)
            gamma = max(gamma, float(ratio.max()) / t)
        return gamma

    def band_min(eta):
        mins = []
        for t, u, g in slices:
            sel = np.abs(u) < eta / 2
            mins.append(float(g[sel].min()) if sel.any() else math.inf)
        return mins

    def ok(eta):
        gamma = fit(eta)
        if gamma is None:
            return False
        m = min(band_min(eta))
        return m >= math.sqrt(2 * eta) * math.exp(-gamma * T / 2) - tol

    hi = eta_hi if eta_hi is not None else float(max(np.abs(u).max() for _, u, _ in slices))
    lo = 0.0
    if ok(hi):
        lo = hi
    else:
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo < tol * max(hi, 1e-12):
                break
    if lo <= tol:
        raise NoBand("no positive eta satisfies the band inequality")
    mins = band_min(lo)
    return GradientBand(lo, float(min(mins)), float(fit(lo)), tuple(mins))


def _sup_diff_integral(c1, c2, t_end: float, nodes: int = 201):
    ts = np.linspace(0.0, t_end, nodes)
    sup = np.array([float(np.max(np.abs(np.asarray(c1(t), dtype=float) - np.asarray(c2(t), dtype=float))))
                    for t in ts])
    return ts, cumulative_trapezoid(sup, ts, initial=0.0)


def difference_bound_check(traj1: Trajectory, traj2: Trajectory, c1, c2, C: float,
                           Du0_inf: float) -> EstimateReport:
    """|u1 - u2|(t) <= |Du0| e^{Ct} int_0^t |c1 - c2|_inf ds, with additive slack 10h."""
    if traj1.grid != traj2.grid:
        raise GridMismatch("trajectories live on different grids")
    if not np.allclose(traj1.times, traj2.times):
        raise GridMismatch("trajectories are recorded at different times")
    h = traj1.grid.h
    t_end = traj1.times[-1]
    ts, integral = _sup_diff_integral(c1, c2, t_end) if t_end > 0 else (np.array([0.0]), np.array([0.0]))
    rep = EstimateReport("difference_bound", info={"C": C, "Du0_inf": Du0_inf})
    for (t, f1), f2 in zip(traj1, traj2.fields):
        lhs = float(np.abs(f1.values - f2.values).max())
        rhs = Du0_inf * math.exp(C * t) * float(np.interp(t, ts, integral))
        rep.add(t, lhs, rhs, lhs <= rhs + 10 * h)
    return rep


def finite_speed_check(traj: Trajectory, R0: float, c_bar: float) -> EstimateReport:
    """{u(t) >= 0} inside the closed ball of radius R0 + c_bar t + 2h."""
    grid = traj.grid
    r = grid.radius()
    rep = EstimateReport("finite_speed", info={"R0": R0, "c_bar": c_bar})
    for t, f in traj:
        mask = f.values >= 0
        lhs = float(r[mask].max()) if mask.any() else 0.0
        rep.add(t, lhs, R0 + c_bar * t + 2 * grid.h)
    return rep


def _disk_offsets(radius_cells: float, dim: int):
    n = int(math.floor(radius_cells))
    rng = np.arange(-n, n + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    d2 = sum(g * g for g in grids)
    keep = d2 <= radius_cells ** 2 + 1e-9
    return np.stack([g[keep] for g in grids], axis=1)


def increase_principle_check(u: ScalarField, eta0: float, delta: float) -> EstimateReport:
    """On {|u| <= delta}: max of u over B(x, 2 delta/eta0) >= u(x) + delta - 2h|Du|_inf."""
    if not 0 < delta < eta0 / 2:
        raise BadDelta(f"need 0 < delta < eta0/2, got delta={delta}, eta0={eta0}")
    grid = u.grid
    h = grid.h
    vals = u.values
    lip = float(gradient_norm(vals, h).max())
    radius = 2 * delta / eta0
    offsets = _disk_offsets(radius / h, grid.dim)
    pad = int(np.abs(offsets).max()) if len(offsets) else 0
    padded = np.pad(vals, pad, mode="constant", constant_values=-np.inf)
    idx = np.argwhere(np.abs(vals) <= delta)
    rep = EstimateReport("increase_principle",
                         info={"eta0": eta0, "delta": delta, "radius": radius, "cells": len(idx)})
    if len(idx) == 0:
        rep.add(u.time, 0.0, 0.0, True)
        return rep
    best = np.full(len(idx), -np.inf)
    base = idx + pad
    for off in offsets:
        pos = base + off
        best = np.maximum(best, padded[tuple(pos.T)])
    need = vals[tuple(idx.T)] + delta - 2 * h * lip
    # report the worst cell as lhs = needed rise, rhs = achieved
    slack = best - need
    k = int(np.argmin(slack))
    rep.add(u.time, float(need[k]), float(best[k]), bool(slack[k] >= 0))
    rep.info["violations"] = int((slack < 0).sum())
    return rep


def resample(traj: Trajectory, times) -> Trajectory:
    """Trajectory at ``times`` by linear interpolation between the recorded slices."""
    times = [float(t) for t in times]
    return Trajectory(times, [ScalarField(traj.grid, traj.at(t), t) for t in times], dict(traj.info))
