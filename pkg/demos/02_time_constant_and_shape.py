# # Time constant and the shape of chemical balls
#
# Estimate mu along two directions, assemble the polygonal norm and compare
# the chemical ball of one large configuration with its norm ball.

from percolab.experiments import ExperimentPlan, run_experiment
from percolab.subadd import build_norm, estimate_mu
from percolab.experiments import signed_permutations

# ## mu along e1 and the diagonal
#
# h(ny)/n is fitted as mu + c sqrt(n|y|) log(1+n|y|)/n with c >= 0 and
# mu >= |y|_1.

rows = []
for y in [(1, 0), (1, 1)]:
    est = estimate_mu(y, [16, 32, 64, 128], 0.7, replicates=100, seed=1)
    print(f"mu{y} = {est.mu:.4f}  CI [{est.ci[0]:.4f}, {est.ci[1]:.4f}]  h(ny)/n = "
          + ", ".join(f"{v:.3f}" for v in est.h_over_n))
    rows += [(z, est.mu, est.ci) for z in signed_permutations(y)]

norm = build_norm(rows)
for z in [(1, 0), (0, 1), (1, 1), (2, 1), (3, -1)]:
    print(f"  norm{z} = {norm(z):.4f}")

# ## The corridor
#
# C is the smallest constant with no violations at the first radius; the
# later radii are the test.

rep = run_experiment(ExperimentPlan("shape", p=0.7, side=601, ts=(30, 60, 90), seed=3,
                                    norm=[[list(z), mu, list(ci)] for z, mu, ci in rows]))
print("C =", round(rep.fits["C"], 3))
for c in rep.cells:
    print(f"  t={c['t']:3d}  ball={c['ball_size']:6d}  violations={c['violations']:3d}  "
          f"fraction={c['fraction']:.2e}  without corridor={c['fraction_C0']:.3f}")
