# Constant unit speed from the unit disk: the front is a circle of radius 1 + t.
import numpy as np

from frontprop import ConstantVelocity, EikonalProblem, builtin_scenario, extract_front, solve

for h in (0.04, 0.02, 0.01):
    sc = builtin_scenario("S1").with_resolution(h)
    traj = solve(EikonalProblem(sc.build_datum(), ConstantVelocity(1.0), 1.0))
    pts = extract_front(traj.final).vertices
    r = np.linalg.norm(pts, axis=1)
    print(f"h={h:<5} mean radius {r.mean():.5f}  error {r.mean() - 2:+.5f}  spread {r.max() - r.min():.4f}")

# error halves with h: the scheme is first order
