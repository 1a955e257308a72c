# Robust local estimates: mean, quantile and vector mean, and two sanity anchors.
#
# Run with `python demos/robust_estimation.py`.

# %%
import numpy as np

from drlce import (
    Dataset,
    GroundMetric,
    Query,
    SquaredScalar,
    SquaredVector,
    build_local_scene,
    chebyshev_closed_form,
    estimate,
    knn_mean,
    quantile_loss,
)
from drlce.experiments import SyntheticSpec, generate_synthetic

data = generate_synthetic(SyntheticSpec(N=100, seed=0))
metric = GroundMetric(covariate_norm=1)
x0 = [0.3]

# %%
# With no budget and the neighborhood set to the k-th neighbor distance the
# estimator is plain k-NN.
sol = estimate(data, Query(x0, gamma_rank=5, rho=0.0), metric, SquaredScalar())
print("rho = 0:", sol.beta, " 5-NN:", knn_mean(data, x0, metric, 5)[0])

# %%
# Growing the budget hedges against samples being shifted in or out.
for factor in (0.0, 0.0625, 0.125, 0.25, 0.5):
    sol = estimate(data, Query(x0, gamma_rank=5, rho_factor=factor), metric, SquaredScalar())
    print(f"rho = {factor:6.4f} gamma: beta = {sol.beta:.5f}, worst-case loss {sol.f_star:.5f}, "
          f"{sol.scene.size} relevant samples")
print("truth sin(3) =", np.sin(3.0))

# %%
# Quantiles use the pinball loss; quantile_loss(q) targets the q-quantile.
for q in (0.1, 0.5, 0.9):
    sol = estimate(data, Query(x0, gamma_rank=10, rho_factor=0.125), metric, quantile_loss(q))
    print(f"{q:.0%} quantile: {sol.beta:.4f}")

# %%
# With gamma = 0 the robust mean is the centre of the response hull.
scene = build_local_scene(data, Query(x0, gamma=0.0, rho=0.02), GroundMetric())
sol = estimate(data, Query(x0, gamma=0.0, rho=0.02), GroundMetric(), SquaredScalar())
print("golden section", sol.beta, " closed form", chebyshev_closed_form(scene))

# %%
# Vector responses are solved by subgradient descent.
rng = np.random.default_rng(1)
X = rng.uniform(size=(200, 2))
Y = np.stack([np.sin(4 * X[:, 0]), np.cos(4 * X[:, 1])], axis=1) + 0.1 * rng.normal(size=(200, 2))
vdata = Dataset(X, Y)
for ball, norm in (("2", 2), ("inf", "inf")):
    sol = estimate(vdata, Query([0.5, 0.5], gamma_rank=15, rho_factor=0.125),
                   GroundMetric(response_norm=norm), SquaredVector(ball))
    print(f"{ball}-ball: beta = {np.round(sol.beta_star, 4)} after {sol.iterations} iterations")
print("truth", np.round([np.sin(2.0), np.cos(2.0)], 4))
