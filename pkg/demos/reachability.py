# Minimal time v(x) and backward Pontryagin extremals for the dislocation toy.
from frontprop import builtin_scenario, minimal_time, pontryagin_integrate
from frontprop.checks import execute
from frontprop.reachability import SmoothedVelocity, lipschitz_check, seed_extremals

run = execute(builtin_scenario("S2"))
mt = minimal_time(run.solution.traj)
rep = lipschitz_check(mt, run.stats["c_lo"])
print(f"slope of v {rep.lhs:.3f}, bound 1/c_lo + 10h/c_lo^2 = {rep.rhs:.3f}")

vel = SmoothedVelocity.from_provider(run.grid, run.solution.velocity, run.traj.times)
for x, p in seed_extremals(run.traj.final, 4):
    ext = pontryagin_integrate(x, p, vel, run.scenario.T, dt=0.005)
    print("end", x.round(3), "-> start", ext.x[0].round(3), " |p(0)|", round(float((ext.p[0] ** 2).sum() ** 0.5), 4))
