"""Picard fixed point for weak solutions (u, chi), classicality and uniqueness diagnostics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .eikonal import ConstantVelocity, EikonalProblem, Trajectory, cfl_dt, gradient_band, solve
from .errors import NoConvergence
from .geometry import extract_front, hausdorff, perimeter
from .grid import InitialDatum, PhaseIndicator, ScalarField, band_measure, gradient_norm, measure_ge
from .reports import EstimateReport
from .velocity import K_N_FROZEN


class ConstantModel:
    """Velocity independent of chi; used for decoupled runs and scenario S1."""

    kind = "constant"

    def __init__(self, value: float):
        self._v = ConstantVelocity(value)
        self.c_lo = self.c_hi = float(value)
        self.C = 0.0
        self.depends_on_chi = False

    def provider(self, chi):
        return self._v


def depends_on_chi(model) -> bool:
    flag = getattr(model, "depends_on_chi", None)
    if flag is not None:
        return bool(flag)
    if getattr(model, "kind", "") == "dislocation":
        return any(np.any(model.kernel(t)) for t in model.sample_times())
    return True


@dataclass
class WeakSolveConfig:
    datum: InitialDatum
    model: object
    T: float
    tol_chi: float = 1e-3
    max_iter: int = 20
    damping: float | None = None
    cfl_safety: float = 0.9
    strict: bool = False

    def __post_init__(self):
        if not self.tol_chi > 0:
            raise ValueError("tol_chi must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")

    @property
    def grid(self):
        return self.datum.grid

    def frame_times(self) -> np.ndarray:
        """Solver step times: chi is refreshed at every explicit step."""
        if self.T == 0:
            return np.array([0.0])
        n = max(1, math.ceil(self.T / cfl_dt(self.grid, self.model.c_hi, self.cfl_safety) - 1e-9))
        return np.linspace(0.0, self.T, n + 1)


@dataclass
class WeakSolution:
    traj: Trajectory
    chi: PhaseIndicator
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    converged: bool = True
    velocity: object = None


@dataclass(frozen=True)
class ContractionDiag:
    tau: float
    delta_tau: float
    psi_tau: float
    L_hat: float
    product: float
    contracted: bool
    trivial: bool = False


# ---------------------------------------------------------------------------
# seeds


def seed_zero(config: WeakSolveConfig) -> PhaseIndicator:
    g = config.grid
    return PhaseIndicator.constant(g, config.frame_times(), np.zeros(g.shape))


def seed_one(config: WeakSolveConfig) -> PhaseIndicator:
    """chi = 1 on the whole grid except the two-cell outer ring."""
    g = config.grid
    frame = np.zeros(g.shape)
    frame[tuple(slice(2, n - 2) for n in g.shape)] = 1.0
    return PhaseIndicator.constant(g, config.frame_times(), frame)


def seed_static(config: WeakSolveConfig) -> PhaseIndicator:
    g = config.grid
    return PhaseIndicator.constant(g, config.frame_times(), (config.datum.values >= 0).astype(float))


SEEDS = {"zero": seed_zero, "one": seed_one, "static": seed_static}


def seed(config: WeakSolveConfig, name: str) -> PhaseIndicator:
    if name not in SEEDS:
        raise ValueError(f"unknown seed {name!r}; choose from {sorted(SEEDS)}")
    return SEEDS[name](config)


# ---------------------------------------------------------------------------


def _indicator(traj: Trajectory) -> np.ndarray:
    return np.stack([(f.values >= 0).astype(float) for f in traj.fields])


def picard_solve(config: WeakSolveConfig, chi_init: PhaseIndicator | str = "zero") -> WeakSolution:
    """Iterate chi -> u = solve(c[chi]) -> 1_{u >= 0} until the space-time L1 change drops below tol."""
    if isinstance(chi_init, str):
        chi_init = seed(config, chi_init)
    times = config.frame_times()
    if chi_init.grid != config.grid:
        raise ValueError("seed lives on a different grid")
    if len(chi_init.times) != len(times) or not np.allclose(chi_init.times, times):
        chi_init = PhaseIndicator(config.grid, times, np.stack([chi_init.frame_at(t) for t in times]))
    chi = chi_init
    history = []
    model = config.model
    for k in range(1, config.max_iter + 1):
        provider = model.provider(chi)
        problem = EikonalProblem(config.datum, provider, config.T, config.cfl_safety, model.c_hi)
        traj = solve(problem, times)
        target = _indicator(traj)
        if config.damping is not None and config.damping < 1:
            frames = (1 - config.damping) * chi.frames + config.damping * target
        else:
            frames = target
        new = PhaseIndicator(config.grid, times, frames)
        if not depends_on_chi(model):
            # c[new] = c[chi], so the next solve would reproduce traj exactly
            history.append(0.0)
            return WeakSolution(traj, PhaseIndicator(config.grid, times, target), k, 0.0, history,
                                True, provider)
        res = new.l1_distance(chi)
        history.append(res)
        chi = new
        if res < config.tol_chi:
            return WeakSolution(traj, PhaseIndicator(config.grid, times, target), k, res, history,
                                True, provider)
    if config.strict:
        raise NoConvergence(history)
    warnings.warn(f"Picard iteration stopped after {config.max_iter} iterations; residuals {history}",
                  RuntimeWarning, stacklevel=2)
    return WeakSolution(traj, PhaseIndicator(config.grid, times, target), config.max_iter,
                        history[-1], history, False, provider)


def velocity_stats(sol: WeakSolution, times=None) -> dict:
    """Measured c_lo, c_hi, spatial Lipschitz C and time modulus L_t of the realised velocity."""
    grid = sol.traj.grid
    times = sol.chi.times if times is None else times
    lo, hi, lip, lt = math.inf, -math.inf, 0.0, 0.0
    prev = None
    for t in times:
        c = np.broadcast_to(np.asarray(sol.velocity(t), dtype=float), grid.shape)
        lo, hi = min(lo, float(c.min())), max(hi, float(c.max()))
        lip = max(lip, float(gradient_norm(c, grid.h).max()))
        if prev is not None and t > prev[0]:
            lt = max(lt, float(np.abs(c - prev[1]).max()) / (t - prev[0]))
        prev = (t, np.array(c))
    return {"c_lo": lo, "c_hi": hi, "C": lip, "L_t": lt}


# ---------------------------------------------------------------------------
# checks


def _band_ratios(traj: Trajectory, eps: float = 2.0, skip_zero: bool = True):
    h = traj.grid.h
    rows = []
    for t, f in traj:
        if skip_zero and t == 0:
            continue
        band = band_measure(f, -eps * h, eps * h)
        per = perimeter(extract_front(f))
        rows.append((t, band, per))
    return rows


def classicality_check(sol: WeakSolution, refined: WeakSolution | None = None,
                       eps: float = 2.0, ratio_max: float = 2.0, stride: int = 1) -> EstimateReport:
    """The zero level is a thin band: L^N(|u| <= eps h) <= ratio_max * 2 eps h * Per.

    With a refined solution (h/2) the band measure must also halve within 20%
    at the shared recorded times.
    """
    traj = sol.traj if isinstance(sol, WeakSolution) else sol
    sub = Trajectory(traj.times[::stride], traj.fields[::stride])
    if sub.times[-1] != traj.times[-1]:
        sub = Trajectory(sub.times + [traj.times[-1]], sub.fields + [traj.fields[-1]])
    h = traj.grid.h
    rep = EstimateReport("classicality", info={"eps": eps})
    rows = _band_ratios(sub, eps)
    for t, band, per in rows:
        rep.add(t, band, ratio_max * 2 * eps * h * per)
    if refined is not None:
        fine = refined.traj if isinstance(refined, WeakSolution) else refined
        fine_by_t = {round(t, 9): f for t, f in fine}
        ratios = []
        for t, band, _ in rows:
            f = fine_by_t.get(round(t, 9))
            if f is None:
                continue
            r = band_measure(f, -eps * fine.grid.h, eps * fine.grid.h) / band
            ratios.append(r)
            rep.add(t, abs(r - 0.5), 0.5 * 0.2)
        rep.info["refinement_ratios"] = ratios
    return rep


def _sup_difference(ta: Trajectory, tb: Trajectory, tau: float | None = None) -> float:
    out = 0.0
    for (t, fa), fb in zip(ta, tb.fields):
        if tau is not None and t > tau + 1e-12:
            break
        out = max(out, float(np.abs(fa.values - fb.values).max()))
    return out


def psi_tau(u0: ScalarField, delta: float, c_hi: float, Du0_inf: float, tau: float) -> float:
    """L^N{u0 >= -delta - c_hi |Du0| tau} - L^N{u0 >= 0}."""
    return measure_ge(u0, -delta - c_hi * Du0_inf * tau) - measure_ge(u0, 0.0)


def psi_tau_counting(u0: ScalarField, delta: float, c_hi: float, Du0_inf: float, tau: float) -> float:
    """Same quantity by plain cell counting."""
    v = u0.values
    a = -delta - c_hi * Du0_inf * tau
    return float(((v >= a).sum() - (v >= 0).sum()) * u0.grid.cell_volume)


def contraction_constants(sol: WeakSolution, datum: InitialDatum, model, T: float,
                          eta_bar: float | None = None, lambda0: float | None = None) -> dict:
    """Constants entering L, with realised velocity bounds measured on ``sol``."""
    stats = velocity_stats(sol)
    Du0 = float(gradient_norm(datum.values, datum.grid.h).max())
    if eta_bar is None:
        eta_bar = gradient_band(sol.traj).eta_bar
    out = {"kind": model.kind, "T": T, "Du0_inf": Du0, "eta_bar": eta_bar, **stats}
    if model.kind == "dislocation":
        out["kernel_sup"] = model.kernel_sup()
        out["C"] = model.C
    elif model.kind == "fn":
        k = K_N_FROZEN[datum.grid.dim]
        out.update(C_alpha=model.C_alpha, g_lo=model.g_lo, g_hi=model.g_hi, M=model.M,
                   C_tilde=model.C_alpha * (model.Dv0_inf + model.gamma * k * math.sqrt(T)),
                   lambda0=lambda0)
    return out


def contraction_L(constants: dict) -> float:
    """The contraction constant assembled from (measured) constants.

    Dislocation: 2 |c0|_inf / (eta_bar c_lo) |Du0| e^{CT}, paired with psi_tau.
    FN: 4 C_alpha |Du0| e^{C~T} (g_hi - g_lo) e^{3MT} Lambda0 / eta_bar, paired with tau.
    """
    c = constants
    if c["kind"] == "dislocation":
        return 2 * c["kernel_sup"] / (c["eta_bar"] * c["c_lo"]) * c["Du0_inf"] * math.exp(c["C"] * c["T"])
    if c["kind"] == "fn":
        if c.get("lambda0") is None:
            raise ValueError("the heat-coupled contraction constant needs a measured Lambda0")
        return (4 * c["C_alpha"] * c["Du0_inf"] * math.exp(c["C_tilde"] * c["T"])
                * (c["g_hi"] - c["g_lo"]) * math.exp(3 * c["M"] * c["T"]) * c["lambda0"] / c["eta_bar"])
    return 0.0


def contraction_diagnostics(sol_a: WeakSolution, sol_b: WeakSolution, tau: float,
                            constants: dict) -> ContractionDiag:
    """delta_tau, psi_tau and the contraction product at time tau."""
    delta = _sup_difference(sol_a.traj, sol_b.traj, tau)
    u0 = sol_a.traj.fields[0]
    psi = psi_tau(u0, delta, constants["c_hi"], constants["Du0_inf"], tau)
    L = contraction_L(constants)
    small = tau if constants["kind"] == "fn" else psi
    product = L * small
    return ContractionDiag(tau, delta, psi, L, product, product < 1, delta == 0)


def contraction_report(diag: ContractionDiag, h: float) -> EstimateReport:
    """delta_tau <= L psi_tau delta_tau + 10h and L psi_tau < 1."""
    rep = EstimateReport("contraction", info={"L": diag.L_hat, "psi_tau": diag.psi_tau,
                                             "delta_tau": diag.delta_tau})
    rep.add(diag.tau, diag.delta_tau, diag.product * diag.delta_tau + 10 * h)
    rep.add(diag.tau, diag.product, 1.0, diag.product < 1)
    return rep


@dataclass
class UniquenessResult:
    sol_a: WeakSolution
    sol_b: WeakSolution
    report: EstimateReport
    hausdorff: float
    sup_diff: float


def uniqueness_experiment(config: WeakSolveConfig, chi_a, chi_b) -> UniquenessResult:
    """Solve from two seeds; fronts within Hausdorff 3h and u within 5h |Du0|."""
    strict = WeakSolveConfig(**{**config.__dict__, "strict": True})
    sol_a = picard_solve(strict, chi_a)
    sol_b = picard_solve(strict, chi_b)
    h = config.grid.h
    Du0 = float(gradient_norm(config.datum.values, h).max())
    hd = hausdorff(extract_front(sol_a.traj.final), extract_front(sol_b.traj.final))
    sd = _sup_difference(sol_a.traj, sol_b.traj)
    rep = EstimateReport("uniqueness", info={"iterations": (sol_a.iterations, sol_b.iterations)})
    rep.add(config.T, hd, 3 * h)
    rep.add(config.T, sd, 5 * h * Du0)
    return UniquenessResult(sol_a, sol_b, rep, hd, sd)
