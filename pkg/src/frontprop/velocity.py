"""Nonlocal velocity laws: dislocation convolution and heat-coupled (FitzHugh-Nagumo) speed."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft, signal

from .errors import (AlphaRangeViolation, H3Violation, HypothesisViolation, PaddingTooSmall,
                     SolverDivergence)
from .grid import Grid, PhaseIndicator, ScalarField, gradient_norm
from .reports import EstimateReport

# Fitted once on the half-plane calibration run (see calibrate_k_n) and frozen.
K_N_FROZEN = {1: 1.1284, 2: 1.1284}


# ---------------------------------------------------------------------------
# scalar functions with declared constants


@dataclass(frozen=True)
class ScalarFunction:
    name: str
    fn: Callable
    lo: float
    hi: float
    lip: float

    def __call__(self, r):
        return self.fn(np.asarray(r, dtype=float))

    def spot_verify(self, r_min: float, r_max: float, n: int = 10_000, seed: int = 0,
                    error=HypothesisViolation):
        """Check the declared bounds and Lipschitz constant on ``n`` random samples."""
        rng = np.random.default_rng(seed)
        r = np.sort(rng.uniform(r_min, r_max, n))
        val = self(r)
        if val.min() < self.lo - 1e-12 or val.max() > self.hi + 1e-12:
            raise error(f"{self.name}: values [{val.min():.4g}, {val.max():.4g}] leave "
                        f"declared range [{self.lo}, {self.hi}]")
        dr = np.diff(r)
        keep = dr > 1e-12
        if keep.any():
            slope = float((np.abs(np.diff(val))[keep] / dr[keep]).max())
            if slope > self.lip * (1 + 1e-9) + 1e-12:
                raise error(f"{self.name}: sampled slope {slope:.4g} exceeds declared {self.lip}")
        return True


def constant(value: float) -> ScalarFunction:
    value = float(value)
    return ScalarFunction(f"constant({value:g})", lambda r: np.full_like(r, value, dtype=float),
                          value, value, 0.0)


def affine_clamped(a: float, b: float, lo: float, hi: float) -> ScalarFunction:
    """r -> clip(a + b r, lo, hi)."""
    a, b, lo, hi = map(float, (a, b, lo, hi))
    return ScalarFunction(f"affine_clamped({a:g},{b:g},{lo:g},{hi:g})",
                          lambda r: np.clip(a + b * r, lo, hi), lo, hi, abs(b))


_BUILTIN_FUNCTIONS = {"constant": constant, "affine_clamped": affine_clamped}
_CALL = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")


def parse_call(text: str):
    """``"name(1, 2.5)"`` -> ``("name", [1.0, 2.5])``."""
    m = _CALL.match(str(text))
    if not m:
        raise ValueError(f"cannot parse built-in call {text!r}")
    args = [float(a) for a in m.group(2).split(",") if a.strip()]
    return m.group(1), args


def scalar_function(spec) -> ScalarFunction:
    if isinstance(spec, ScalarFunction):
        return spec
    if isinstance(spec, (int, float)):
        return constant(spec)
    name, args = parse_call(spec)
    if name not in _BUILTIN_FUNCTIONS:
        raise ValueError(f"unknown scalar function {name!r}")
    return _BUILTIN_FUNCTIONS[name](*args)


# ---------------------------------------------------------------------------
# kernels and fields


def disk_kernel(radius: float, scale: float, h: float, dim: int = 2, supersample: int = 8) -> np.ndarray:
    """``scale * 1_{B(0,radius)}`` on the displacement lattice, cell-averaged.

    Odd-sized and centred; each cell holds the covered fraction estimated on a
    ``supersample^dim`` sub-lattice.
    """
    n = int(math.ceil(radius / h - 0.5)) + 1
    idx = np.arange(-n, n + 1) * h
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    pts = (idx[:, None] + sub[None, :] * h).ravel()
    axes = np.meshgrid(*([pts] * dim), indexing="ij")
    inside = (sum(a * a for a in axes) <= radius * radius).astype(float)
    shape = []
    for _ in range(dim):
        shape += [2 * n + 1, supersample]
    frac = inside.reshape(shape).mean(axis=tuple(range(1, 2 * dim, 2)))
    return scale * frac


def gaussian(s0: float, grid: Grid) -> np.ndarray:
    """Heat kernel profile ``(4 pi s0)^{-N/2} exp(-|x|^2/(4 s0))`` on a grid."""
    r2 = grid.radius() ** 2
    return np.exp(-r2 / (4 * s0)) / (4 * math.pi * s0) ** (grid.dim / 2)


def _as_time_array(value, grid: Grid):
    """Normalize a scalar / array / callable into a function of t returning an array."""
    if callable(value):
        return lambda t: np.broadcast_to(np.asarray(value(t), dtype=float), grid.shape)
    arr = np.broadcast_to(np.asarray(value, dtype=float), grid.shape)
    return lambda t: arr


def _check_padding(chi: np.ndarray, margin: int = 2):
    ring = np.ones(chi.shape, dtype=bool)
    ring[tuple(slice(margin, n - margin) for n in chi.shape)] = False
    if np.any(chi[ring] != 0):
        raise PaddingTooSmall("phase indicator reaches the outer grid cells; enlarge the grid")


# ---------------------------------------------------------------------------
# dislocation dynamics


class DislocationModel:
    """c[chi] = c0 * chi + c1 with a compactly supported kernel c0.

    ``kernel`` is an odd-sized centred array (or a callable of t returning
    one) on the lattice of grid displacements; ``c1`` is a scalar, an array
    on the grid, or a callable of t.
    """

    kind = "dislocation"

    def __init__(self, grid: Grid, kernel, c1=1.0, T: float = 1.0, time_samples: int = 11,
                 c1_lip: float | None = None):
        self.grid = grid
        self.T = float(T)
        self._kernel = kernel if callable(kernel) else (lambda t, k=np.asarray(kernel, float): k)
        self._c1 = _as_time_array(c1, grid)
        self.time_samples = max(1, int(time_samples))
        self._c1_lip = c1_lip
        k0 = self._kernel(0.0)
        if any(n % 2 == 0 for n in k0.shape) or k0.ndim != grid.dim:
            raise ValueError("kernel must be an odd-sized array of the grid dimension")
        self._constants = None

    def kernel(self, t: float = 0.0) -> np.ndarray:
        return self._kernel(t)

    def c1(self, t: float = 0.0) -> np.ndarray:
        return self._c1(t)

    def sample_times(self):
        if self.time_samples == 1 or self.T == 0:
            return np.array([0.0])
        return np.linspace(0.0, self.T, self.time_samples)

    def kernel_l1(self, t: float = 0.0) -> float:
        return float(np.abs(self.kernel(t)).sum() * self.grid.cell_volume)

    def kernel_sup(self) -> float:
        return float(max(np.abs(self.kernel(t)).max() for t in self.sample_times()))

    def kernel_variation(self, t: float = 0.0) -> float:
        """Largest directional total variation, bounding Lip(c0 * chi) for 0 <= chi <= 1."""
        k = np.pad(self.kernel(t), 1)
        tv = [np.abs(np.diff(k, axis=a)).sum() * self.grid.h ** (self.grid.dim - 1)
              for a in range(k.ndim)]
        return float(math.sqrt(sum(v * v for v in tv)))

    def c1_lipschitz(self) -> float:
        if self._c1_lip is not None:
            return float(self._c1_lip)
        return float(max(gradient_norm(self.c1(t), self.grid.h).max() for t in self.sample_times()))

    def validate_h3(self) -> EstimateReport:
        """Evaluate the (H3) inequalities on the sampled times; raise on the first failure."""
        rep = EstimateReport("h3")
        lows, highs, lips = [], [], []
        for t in self.sample_times():
            l1 = self.kernel_l1(t)
            c1 = self.c1(t)
            lows.append(float(c1.min()) - l1)
            highs.append(float(c1.max()) + l1)
            lips.append(self.kernel_variation(t))
        c_lo, c_hi = min(lows), max(highs)
        C = max(lips) + self.c1_lipschitz()
        sup0 = self.kernel_sup()
        rep.add(0.0, 0.0, c_lo, c_lo > 0)
        if not c_lo > 0:
            raise H3Violation("0 < c_lo <= -|c0|_L1 + c1",
                              f"(H3) fails: min(c1) - |c0|_L1 = {c_lo:.6g} is not positive")
        rep.add(0.0, sup0, c_hi, sup0 <= c_hi)
        if sup0 > c_hi:
            raise H3Violation("|c0| <= c_hi", f"(H3) fails: sup|c0| = {sup0:.6g} > c_hi = {c_hi:.6g}")
        if not math.isfinite(C):
            raise H3Violation("Lipschitz bound C", "(H3) fails: velocity is not Lipschitz")
        rep.add(0.0, c_lo, c_hi, c_lo <= c_hi)
        rep.add(0.0, C, math.inf, True)
        self._constants = {"c_lo": c_lo, "c_hi": c_hi, "C": C, "L1": self.kernel_l1(0.0),
                           "kernel_sup": sup0}
        rep.info.update(self._constants)
        return rep

    @property
    def constants(self) -> dict:
        if self._constants is None:
            self.validate_h3()
        return self._constants

    @property
    def c_lo(self):
        return self.constants["c_lo"]

    @property
    def c_hi(self):
        return self.constants["c_hi"]

    @property
    def C(self):
        return self.constants["C"]

    def velocity(self, chi, t: float = 0.0) -> np.ndarray:
        chi = np.asarray(chi, dtype=float)
        if chi.shape != self.grid.shape:
            raise ValueError("phase indicator shape does not match the model grid")
        _check_padding(chi)
        if not chi.any():
            return np.array(self.c1(t), dtype=float)
        conv = signal.fftconvolve(chi, self.kernel(t), mode="same") * self.grid.cell_volume
        return conv + self.c1(t)

    def provider(self, chi: PhaseIndicator):
        return _DislocationProvider(self, chi)


class _DislocationProvider:
    def __init__(self, model: DislocationModel, chi: PhaseIndicator):
        self.model, self.chi = model, chi
        self.c_lo, self.c_hi, self.C = model.c_lo, model.c_hi, model.C
        self._cache = {}

    def __call__(self, t):
        k = _frame_index(self.chi.times, t)
        if k not in self._cache:
            self._cache = {k: self.model.velocity(self.chi.frames[k], self.chi.times[k])}
        return self._cache[k]


def _frame_index(times, t) -> int:
    """Index of the last frame at or before t (with round-off tolerance)."""
    return max(int(np.searchsorted(times, t + 1e-9, side="right")) - 1, 0)


def dislocation_velocity(model: DislocationModel, chi_slice, t: float = 0.0) -> ScalarField:
    return ScalarField(model.grid, model.velocity(chi_slice, t), t)


# ---------------------------------------------------------------------------
# heat-coupled model


@dataclass(frozen=True)
class HeatState:
    v: ScalarField
    time: float


class FnModel:
    """Speed alpha(v) where v_t - Lap v = g+(v) chi + g-(v)(1 - chi).

    The heat equation lives on ``heat_grid``: the eikonal grid padded by
    ``ceil(4 sqrt(T)/h)`` cells (rounded up to an FFT-friendly size) with
    homogeneous Neumann walls.
    """

    kind = "fn"

    def __init__(self, grid: Grid, alpha, gplus, gminus, v0=0.0, T: float = 1.0,
                 method: str = "exponential", max_substep: float = 0.02, verify: bool = True,
                 seed: int = 0):
        self.grid = grid
        self.seed = int(seed)
        self.T = float(T)
        self.alpha = scalar_function(alpha)
        self.gplus = scalar_function(gplus)
        self.gminus = scalar_function(gminus)
        if method not in ("exponential", "crank_nicolson"):
            raise ValueError(f"unknown heat method {method!r}")
        self.method = method
        self.max_substep = float(max_substep)
        pad = int(math.ceil(4 * math.sqrt(max(self.T, 1e-12)) / grid.h))
        extra = [fft.next_fast_len(n + 2 * pad, real=True) - (n + 2 * pad) for n in grid.shape]
        lo = [pad + e // 2 for e in extra]
        hi = [pad + e - e // 2 for e in extra]
        self.heat_grid = Grid(tuple(o - l * grid.h for o, l in zip(grid.origin, lo)), grid.h,
                              tuple(n + a + b for n, a, b in zip(grid.shape, lo, hi)))
        self.window = grid.window_in(self.heat_grid)
        self.v0 = self._initial(v0)
        self.Dv0_inf = float(gradient_norm(self.v0, grid.h).max())
        self.v0_inf = float(np.abs(self.v0).max())
        self.g_lo = float(self.gminus.lo)
        self.g_hi = float(self.gplus.hi)
        self.gamma = max(abs(self.g_lo), abs(self.g_hi))
        self.M = max(self.gplus.lip, self.gminus.lip)
        self.c_lo, self.c_hi, self.C_alpha = self.alpha.lo, self.alpha.hi, self.alpha.lip
        self._lam = self._eigenvalues()
        if verify:
            self.validate()

    def _initial(self, v0):
        if isinstance(v0, str):
            name, args = parse_call(v0)
            if name != "gaussian":
                raise ValueError(f"unknown field built-in {name!r}")
            return gaussian(args[0], self.heat_grid)
        if callable(v0):
            return np.asarray(v0(*self.heat_grid.mesh()), dtype=float)
        arr = np.asarray(v0, dtype=float)
        if arr.ndim == 0:
            return np.full(self.heat_grid.shape, float(arr))
        if arr.shape == self.heat_grid.shape:
            return arr.copy()
        if arr.shape == self.grid.shape:
            out = np.zeros(self.heat_grid.shape)
            out[self.window] = arr
            return out
        raise ValueError("v0 shape matches neither the eikonal nor the heat grid")

    @property
    def v_range(self):
        span = self.v0_inf + self.gamma * self.T
        return -span - 1.0, span + 1.0

    def validate(self):
        """Spot-check (H4)/(H5) constants over the range v can reach."""
        lo, hi = self.v_range
        self.alpha.spot_verify(lo, hi, seed=self.seed, error=AlphaRangeViolation)
        if not self.alpha.lo > 0:
            raise AlphaRangeViolation("alpha must be bounded below by a positive constant")
        self.gplus.spot_verify(lo, hi, seed=self.seed + 1)
        self.gminus.spot_verify(lo, hi, seed=self.seed + 2)
        r = np.random.default_rng(self.seed + 3).uniform(lo, hi, 10_000)
        gm, gp = self.gminus(r), self.gplus(r)
        if np.any(gm > gp + 1e-12) or gm.min() < self.g_lo - 1e-12 or gp.max() > self.g_hi + 1e-12:
            raise HypothesisViolation("need g_lo <= g- <= g+ <= g_hi on the sampled range")
        return True

    def _eigenvalues(self):
        h = self.heat_grid.h
        lams = []
        for ax, n in enumerate(self.heat_grid.shape):
            k = np.arange(n)
            lam = -(2 - 2 * np.cos(np.pi * k / n)) / h ** 2
            shape = [1] * self.heat_grid.dim
            shape[ax] = n
            lams.append(lam.reshape(shape))
        return sum(lams)

    def initial_state(self) -> HeatState:
        return HeatState(ScalarField(self.heat_grid, self.v0, 0.0), 0.0)

    def embed(self, chi) -> np.ndarray:
        chi = np.asarray(chi, dtype=float)
        if chi.shape == self.heat_grid.shape:
            return chi
        if chi.shape != self.grid.shape:
            raise ValueError("phase indicator shape matches neither grid")
        out = np.zeros(self.heat_grid.shape)
        out[self.window] = chi
        return out

    def source(self, v, chi):
        return self.gplus(v) * chi + self.gminus(v) * (1 - chi)

    def velocity(self, state: HeatState) -> np.ndarray:
        return self.alpha(state.v.values[self.window])

    def provider(self, chi: PhaseIndicator):
        return _FnProvider(self, chi)


def laplacian_neumann(v: np.ndarray, h: float) -> np.ndarray:
    """5-point Laplacian with mirrored ghost cells (cell-centred Neumann wall)."""
    p = np.pad(v, 1, mode="edge")
    out = -2 * v.ndim * v
    for ax in range(v.ndim):
        hi = [slice(1, -1)] * v.ndim
        lo = [slice(1, -1)] * v.ndim
        hi[ax] = slice(2, None)
        lo[ax] = slice(None, -2)
        out = out + p[tuple(hi)] + p[tuple(lo)]
    return out / (h * h)


def _dct(a):
    return fft.dctn(a, type=2, norm="ortho")


def _idct(a):
    return fft.idctn(a, type=2, norm="ortho")


def heat_step(state: HeatState, chi_slice, model: FnModel, dt: float,
              method: str | None = None) -> HeatState:
    """Advance v by dt with the source frozen at the start of the step.

    ``crank_nicolson``: (I - dt/2 A) v' = (I + dt/2 A) v + dt f, solved in the
    cosine basis and verified by its residual.  ``exponential``:
    v' = e^{dt A} v + dt phi1(dt A) f, which preserves the discrete maximum
    principle exactly.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    method = method or model.method
    v = state.v.values
    chi = model.embed(chi_slice)
    f = model.source(v, chi)
    lam = model._lam
    vh, fh = _dct(v), _dct(f)
    if method == "crank_nicolson":
        denom = 1 - 0.5 * dt * lam
        new = _idct(((1 + 0.5 * dt * lam) * vh + dt * fh) / denom)
        h = model.heat_grid.h
        resid = (new - 0.5 * dt * laplacian_neumann(new, h)) - (v + 0.5 * dt * laplacian_neumann(v, h) + dt * f)
        scale = max(1.0, float(np.abs(v).max()), float(np.abs(new).max()))
        if not np.all(np.isfinite(new)) or np.abs(resid).max() > 1e-10 * scale:
            raise SolverDivergence(f"Crank-Nicolson residual {np.abs(resid).max():.3g} above 1e-10")
    elif method == "exponential":
        z = dt * lam
        phi1 = np.where(z == 0, 1.0, np.expm1(z) / np.where(z == 0, 1.0, z))
        new = _idct(np.exp(z) * vh + dt * phi1 * fh)
        if not np.all(np.isfinite(new)):
            raise SolverDivergence("heat update produced non-finite values")
    else:
        raise ValueError(f"unknown heat method {method!r}")
    t = state.time + dt
    return HeatState(ScalarField(model.heat_grid, new, t), t)


def heat_run(model: FnModel, chi: PhaseIndicator, times=None) -> list:
    """Heat states at ``times`` (default: the frame times of chi), chi frozen per frame interval."""
    times = np.asarray(chi.times if times is None else times, dtype=float)
    state = model.initial_state()
    out = []
    for t_target in times:
        while state.time < t_target - 1e-12:
            k = _frame_index(chi.times, state.time)
            nxt = chi.times[k + 1] if k + 1 < len(chi.times) else math.inf
            dt = min(t_target - state.time, nxt - state.time, model.max_substep)
            state = heat_step(state, chi.frames[k], model, dt)
        out.append(HeatState(state.v, float(t_target)) if abs(state.time - t_target) > 0 else state)
    return out


def fn_velocity(state: HeatState, model: FnModel) -> ScalarField:
    c = model.velocity(state)
    if c.min() < model.c_lo - 1e-12 or c.max() > model.c_hi + 1e-12:
        raise AlphaRangeViolation(
            f"alpha(v) in [{c.min():.4g}, {c.max():.4g}] leaves [{model.c_lo}, {model.c_hi}]")
    return ScalarField(model.grid, c, state.time)


class _FnProvider:
    def __init__(self, model: FnModel, chi: PhaseIndicator):
        self.model, self.chi = model, chi
        self.states = heat_run(model, chi)
        self.frames = [fn_velocity(s, model).values for s in self.states]
        self.c_lo, self.c_hi = model.c_lo, model.c_hi
        self.C = model.C_alpha * (model.Dv0_inf + model.gamma * K_N_FROZEN[model.grid.dim] * math.sqrt(model.T))

    def __call__(self, t):
        return self.frames[_frame_index(self.chi.times, t)]


# ---------------------------------------------------------------------------
# regularity of v


def _spatial_lipschitz(v: np.ndarray, h: float) -> float:
    best = 0.0
    for ax in range(v.ndim):
        best = max(best, float(np.abs(np.diff(v, axis=ax)).max()) / h)
    return best


def regularity_report(states, model: FnModel, k_n: float | None = None,
                      tol: float = 1e-8) -> EstimateReport:
    """Bounds (i), (iv) and (v) on the heat variable with a frozen k_N."""
    if len(states) < 2:
        raise ValueError("need at least two heat states")
    k = K_N_FROZEN[model.grid.dim] if k_n is None else float(k_n)
    g, dv0, v0 = model.gamma, model.Dv0_inf, model.v0_inf
    h = model.heat_grid.h
    rep = EstimateReport("fn_regularity", info={"k_N": k, "gamma": g, "Dv0_inf": dv0})
    lips = []
    for s in states:
        vals = s.v.values
        lhs = float(np.abs(vals).max())
        rep.add(s.time, lhs, v0 + g * s.time + tol)
        lip = _spatial_lipschitz(vals, h)
        lips.append(lip)
        # discrete Lipschitz measured on neighbour pairs, so allow O(h) of curvature
        rep.add(s.time, lip, dv0 + g * k * math.sqrt(s.time) + tol)
    worst_time = 0.0
    for i, si in enumerate(states):
        for sj in states[i + 1:]:
            lhs = float(np.abs(sj.v.values - si.v.values).max())
            d = sj.time - si.time
            rhs = k * (dv0 + g * k * math.sqrt(si.time)) * math.sqrt(d) + g * d + tol
            worst_time = max(worst_time, lhs / rhs if rhs > 0 else 0.0)
            if lhs > rhs:
                rep.add(sj.time, lhs, rhs)
    rep.add(states[-1].time, worst_time, 1.0)
    rep.info["spatial_lipschitz"] = lips
    rep.info["temporal_ratio"] = worst_time
    return rep


def calibration_model(h: float = 0.02, T: float = 0.25, half_width: float = 1.0) -> tuple:
    """Half-plane source with g+ = 1, g- = -1 and v0 = 0: the sharpest gradient a unit source can build."""
    grid = Grid.box(-half_width, half_width, h)
    model = FnModel(grid, affine_clamped(1.0, 0.0, 1.0, 1.0), constant(1.0), constant(-1.0), 0.0, T)
    x = model.heat_grid.mesh()[0]
    frame = (x >= 0).astype(float)
    chi = PhaseIndicator.constant(model.heat_grid, [0.0], frame)
    return model, chi


def calibrate_k_n(h: float = 0.02, T: float = 0.25, samples: int = 11) -> float:
    """Smallest k_N with (iv) and (v) on the calibration run (g = +-1, v0 = 0)."""
    model, chi = calibration_model(h, T)
    times = np.linspace(0.0, T, samples)
    states = heat_run(model, chi, times)
    k_iv = 0.0
    for s in states[1:]:
        k_iv = max(k_iv, _spatial_lipschitz(s.v.values, h) / math.sqrt(s.time))
    k_v = 0.0
    for i, si in enumerate(states):
        for sj in states[i + 1:]:
            d = sj.time - si.time
            excess = float(np.abs(sj.v.values - si.v.values).max()) - d
            if excess > 0 and si.time > 0:
                k_v = max(k_v, math.sqrt(excess / (math.sqrt(si.time) * math.sqrt(d))))
    return max(k_iv, k_v)
