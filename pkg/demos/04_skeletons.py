# # Skeletons of geodesics
#
# Greedy skeletons cut a path into blocks whose increments stay in the
# approximation set Q_x.  At p = 1 they have at most 2n + 1 vertices.

import numpy as np

from percolab.experiments import ExperimentPlan, run_experiment
from percolab.subadd import QxMembership, classify_increments, extract_skeleton, l1, l1_norm

# ## A toy predicate
#
# With Q = {|y|_1 <= 2} a straight path of five steps splits every two steps.

path = np.array([(i, 0) for i in range(6)])
print("indices:", extract_skeleton(path, lambda y: l1(y) <= 2).indices)

# ## The exact l1 case
#
# At p = 1 h and mu are both l1.

norm = l1_norm(2)
x = (6, 2)
member = QxMembership(norm, lambda y: float(l1(y)), x, C=0.5)
for n in (1, 2, 4):
    steps = [(1, 0)] * (6 * n) + [(0, 1)] * (2 * n)
    path = np.vstack([[0, 0], np.cumsum(steps, axis=0)])
    skel = extract_skeleton(path, member)
    cls = classify_increments(norm, x, 24.0, skel)
    print(f"n={n}: {len(skel)} skeleton vertices (bound {2 * n + 1}), long={cls.n_long}, short={cls.n_short}")

# ## Supercritical geodesics
#
# The experiment estimates mu and h, then counts skeleton vertices of
# geodesics from 0* to (n x)*.

rep = run_experiment(ExperimentPlan("skeleton", p=0.7, direction=(8, 0), ns=(4, 8), replicates=100, C=1.0,
                                    seed=16, h_replicates=100))
for c in rep.cells:
    print(f"n={c['n']}: mean {c['mean_skeleton']:.2f}, max {c['max_skeleton']}, bound {c['bound']}, "
          f"exceed {c['exceed_fraction']:.2%}")
