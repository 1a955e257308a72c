# Anatomy of a worst case: what the adversary does to a tiny dataset.
#
# Five samples on a line, a query at x0 = 0 with neighborhood radius 0.2 and
# transport budget 0.1. Run with `python demos/worst_case_anatomy.py`.

# %%
import numpy as np

from drlce import Dataset, GroundMetric, Query, SquaredScalar, build_local_scene, worst_case_loss
from drlce.robust_loss import worst_case_distribution

xs = np.array([[0.02], [-0.08], [0.15], [0.27], [0.6]])
ys = np.array([[0.1], [0.3], [0.9], [1.5], [4.0]])
data = Dataset(xs, ys)
metric = GroundMetric()
scene = build_local_scene(data, Query([0.0], gamma=0.2, rho=0.1), metric)

# Samples 0 and 1 sit deep inside (their whole budget stays inside), 2 and 3
# are in the ring (reachable, but moving them in costs part of the budget),
# and sample 4 is too far to matter.
print("members", scene.members, "inner", scene.inner_indices, "ring", scene.ring_indices)
print("response budgets", scene.radii)

# %%
# At a candidate estimate beta the adversary inflates each response to the
# worst point of its budget ball, then decides which ring samples to drag in.
loss = SquaredScalar()
for beta in (0.2, 0.5, 0.8):
    ev = worst_case_loss(scene, loss, beta)
    print(f"beta={beta}: v*={np.round(ev.v_values, 4)} alpha={ev.alpha.astype(int)} f={ev.f_value:.4f}")

# %%
# The worst case is an actual distribution: every sample moved at most rho.
q = worst_case_distribution(scene, data, loss, 0.5, metric)
print("moved by", np.round(q.displacement(data, metric), 4))
print("new covariates", q.xs[:, 0])
print("new responses ", q.ys[:, 0])
print("conditional loss", q.conditional_expected_loss(loss, 0.5), "= f(0.5)", worst_case_loss(scene, loss, 0.5).f_value)
