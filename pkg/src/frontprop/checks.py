"""Solve a scenario once and run named verification checks against the result."""
from __future__ import annotations

import inspect
from dataclasses import dataclass, field


from .eikonal import (ConstantVelocity, EikonalProblem, check_domain,
                      difference_bound_check, finite_speed_check, front_radius, gradient_band,
                      resample, solve)
from .eikonal import check_lipschitz_bound as lipschitz_bound_check
from .errors import ScenarioError
from .geometry import (LAMBDA_HAT_DEFAULT, band_estimate_check, cone_certificate, cone_parameters,
                       extract_front, interior_ball_radius, omega_inverse_linear, perimeter_bound_check)
from .green import lipschitz_in_r_check
from .grid import gradient_norm
from .reachability import (SmoothedVelocity, adjoint_growth_check, duality_check, front_tracking_check,
                           lipschitz_check, minimal_time, pontryagin_integrate, seed_extremals,
                           speed_bracket_check, taylor_deviation_check)
from .reports import EstimateReport
from .velocity import regularity_report
from .weak import (WeakSolveConfig, classicality_check, contraction_constants, contraction_diagnostics,
                   contraction_report, picard_solve, uniqueness_experiment, velocity_stats)


@dataclass
class Run:
    scenario: object
    grid: object
    datum: object
    model: object
    config: WeakSolveConfig
    solution: object
    traj: object  # solution resampled at the scenario's record times
    stats: dict
    cache: dict = field(default_factory=dict)

    @property
    def Du0_inf(self) -> float:
        return float(gradient_norm(self.datum.values, self.grid.h).max())

    @property
    def declared_C(self) -> float:
        return float(getattr(self.solution.velocity, "C", getattr(self.model, "C", 0.0)))

    def band(self):
        if "band" not in self.cache:
            self.cache["band"] = gradient_band(self.traj)
        return self.cache["band"]


def preflight(scenario, seed: int = 0):
    """Build grid, datum and model and validate hypotheses; raises before any solve."""
    grid = scenario.build_grid()
    datum = scenario.build_datum(grid)
    model = scenario.build_model(grid, seed)
    if getattr(model, "kind", "") == "dislocation":
        model.validate_h3()
    check_domain(EikonalProblem(datum, ConstantVelocity(model.c_hi), scenario.T))
    return grid, datum, model


def execute(scenario, seed: int = 0) -> Run:
    grid, datum, model = preflight(scenario, seed)
    p = scenario.picard
    cfg = WeakSolveConfig(datum, model, scenario.T, tol_chi=float(p.get("tol_chi", 1e-3)),
                          max_iter=int(p.get("max_iter", 20)), strict=bool(p.get("strict", True)))
    sol = picard_solve(cfg, p.get("seed", "zero"))
    traj = resample(sol.traj, scenario.record_times())
    return Run(scenario, grid, datum, model, cfg, sol, traj, velocity_stats(sol))


# ---------------------------------------------------------------------------
# checks: each takes the run plus keyword parameters and returns reports


def check_finite_speed(run: Run, tight: bool = False):
    reps = [finite_speed_check(run.traj, run.datum.R0, run.model.c_hi)]
    if tight:
        r = finite_speed_check(run.traj, front_radius(run.datum.values, run.grid), run.model.c_hi)
        r.check = "finite_speed_tight"
        reps.append(r)
    return reps


def check_lipschitz_bound(run: Run):
    return [lipschitz_bound_check(run.traj, run.declared_C, run.Du0_inf)]


def check_gradient_band(run: Run):
    gb = run.band()
    rep = EstimateReport("gradient_band", info={"eta": gb.eta, "eta_bar": gb.eta_bar,
                                                "gamma_hat": gb.gamma_hat})
    rep.add(run.scenario.T, 0.0, gb.eta_bar, gb.eta_bar > 0)
    return [rep]


def check_band_estimate(run: Run, a: float = -0.1, b: float = 0.1, tau: float | None = None):
    gb = run.band()
    tau = run.scenario.T if tau is None else float(tau)
    return [band_estimate_check(run.traj, float(a), float(b), gb.eta_bar, run.stats["c_lo"], tau,
                                run.stats["c_hi"], run.Du0_inf, eta=gb.eta)]


def cone_params(run: Run, scaled: bool = True):
    s = run.stats
    r = interior_ball_radius(run.datum.field)
    p = cone_parameters(s["c_lo"], s["c_hi"], s["C"], omega_inverse_linear(s["L_t"]), r)
    if not scaled:
        return p
    factor = 1 - 4 * run.grid.h / p.theta
    return p.scaled(factor) if factor > 0 else None


def check_cone(run: Run, axis_count: int = 16):
    p = cone_params(run)
    rep = EstimateReport("interior_cone")
    if p is None:
        # grid too coarse for the certified height; nothing can be tested
        rep.add(0.0, 1.0, 0.0)
        rep.info["reason"] = "4h exceeds the cone height"
        return [rep]
    certs = []
    for t, f in run.traj:
        cert = cone_certificate(extract_front(f), p, axis_count)
        certs.append(cert)
        rep.add(t, 1.0 - cert.coverage_fraction, 0.0)
    rep.info.update(rho=p.rho, theta=p.theta)
    run.cache["cone"] = (p, certs)
    return [rep]


def _certificates(run: Run):
    if "cone" not in run.cache:
        check_cone(run)
    return run.cache.get("cone", (None, []))


def check_perimeter(run: Run, lambda_hat: float = LAMBDA_HAT_DEFAULT, R: float | None = None):
    p, certs = _certificates(run)
    R = run.grid.inner_radius(2) if R is None else float(R)
    rep = EstimateReport("perimeter_bound", info={"lambda_hat": lambda_hat})
    ratios = []
    for (t, f), cert in zip(run.traj, certs):
        r = perimeter_bound_check(extract_front(f), p, R, cert, lambda_hat)
        ratios.append(r.info["ratio"])
        rep.rows.extend(r.rows)
    rep.info["ratios"] = ratios
    return [rep]


def check_minimal_time(run: Run):
    mt = minimal_time(run.solution.traj)
    run.cache["minimal_time"] = mt
    return [lipschitz_check(mt, run.stats["c_lo"]), duality_check(mt, run.traj)]


def check_extremals(run: Run, count: int = 6, dt: float = 0.005):
    s = run.stats
    sv = SmoothedVelocity.from_provider(run.grid, run.solution.velocity, run.traj.times)
    M = 3 * s["C"] * s["c_hi"]
    omega = (lambda d: s["L_t"] * d)
    reps = {k: EstimateReport(k) for k in ("taylor_deviation", "extremal_speed", "adjoint_growth",
                                            "extremal_front_tracking")}
    exts = []
    for x, p in seed_extremals(run.traj.final, int(count)):
        ext = pontryagin_integrate(x, p, sv, run.scenario.T, dt=float(dt))
        exts.append(ext)
        for rep in (taylor_deviation_check(ext, M, omega), speed_bracket_check(ext, s["c_lo"], s["c_hi"], 1e-3),
                    adjoint_growth_check(ext, s["C"]), front_tracking_check(ext, run.traj)):
            reps[rep.check].rows.extend(rep.rows)
    run.cache["extremals"] = exts
    return list(reps.values())


def _green_samples(run: Run):
    r0 = front_radius(run.datum.values, run.grid)
    return [(0.0,) * run.grid.dim, (r0 + 0.2,) + (0.0,) * (run.grid.dim - 1),
            (0.0,) * (run.grid.dim - 1) + (r0 + 0.5,)]


def check_green(run: Run, x=None, t=(0.1, 0.25, 0.5), r=(0.025, 0.05, 0.1), lambda0: float = 1.0):
    _, certs = _certificates(run)
    x = _green_samples(run) if x is None else [tuple(map(float, p)) for p in x]
    t = [float(v) for v in t if v <= run.scenario.T + 1e-12]
    rep = lipschitz_in_r_check(run.solution.traj, x, t, [float(v) for v in r], float(lambda0),
                               certificate=certs or None)
    run.cache["lambda0_hat"] = rep.info["lambda0_hat"]
    return [rep]


def check_uniqueness(run: Run, seeds=("zero", "one"), tau: float = 0.05, lambda0: float | None = None):
    a, b = seeds
    res = uniqueness_experiment(run.config, a, b)
    lam = lambda0
    if run.model.kind == "fn" and lam is None:
        if "lambda0_hat" not in run.cache:
            check_green(run)
        lam = run.cache["lambda0_hat"]
    eta_bar = gradient_band(resample(res.sol_a.traj, run.scenario.record_times())).eta_bar
    const = contraction_constants(res.sol_a, run.datum, run.model, run.scenario.T, eta_bar=eta_bar,
                                  lambda0=lam)
    diag = contraction_diagnostics(res.sol_a, res.sol_b, float(tau), const)
    rep = contraction_report(diag, run.grid.h)
    run.cache["contraction"] = diag
    return [res.report, rep]


def check_regularity(run: Run, k_n: float | None = None):
    if run.model.kind != "fn":
        raise ScenarioError("the regularity check needs a heat-coupled (fn) model")
    return [regularity_report(run.solution.velocity.states, run.model, k_n)]


def check_classicality(run: Run, eps: float = 2.0, ratio_max: float = 2.0):
    return [classicality_check(run.traj, eps=float(eps), ratio_max=float(ratio_max))]


def check_difference_bound(run: Run, c2: float = 1.1):
    if run.model.kind != "constant":
        raise ScenarioError("difference_bound compares two constant velocities")
    c1 = run.model.c_hi
    other = ConstantVelocity(float(c2))
    t2 = solve(EikonalProblem(run.datum, other, run.scenario.T), run.scenario.record_times())
    return [difference_bound_check(run.traj, t2, lambda t: c1, other, 0.0, run.Du0_inf)]


def check_h3(run: Run):
    if run.model.kind != "dislocation":
        raise ScenarioError("the h3 check needs a dislocation model")
    return [run.model.validate_h3()]


CHECKS = {
    "finite_speed": check_finite_speed,
    "lipschitz_bound": check_lipschitz_bound,
    "gradient_band": check_gradient_band,
    "band_estimate": check_band_estimate,
    "cone": check_cone,
    "perimeter": check_perimeter,
    "minimal_time": check_minimal_time,
    "extremals": check_extremals,
    "green": check_green,
    "uniqueness": check_uniqueness,
    "regularity": check_regularity,
    "classicality": check_classicality,
    "difference_bound": check_difference_bound,
    "h3": check_h3,
}


def run_checks(run: Run, checks=None) -> list:
    out = []
    for name, params in (run.scenario.check_list() if checks is None else checks):
        try:
            fn = CHECKS[name]
        except KeyError:
            raise ScenarioError(f"unknown check {name!r}") from None
        try:
            inspect.signature(fn).bind(run, **params)
        except TypeError as exc:
            raise ScenarioError(f"bad parameters for check {name!r}: {exc}") from exc
        out.extend(fn(run, **params))
    return out
