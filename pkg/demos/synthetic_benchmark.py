# Local mean estimation near a density jump, against four baselines.
#
# Covariates are denser on [0, 0.3] and [0.7, 1]; around x0 = 0.3 a fixed
# neighborhood sees lopsided data. Each run draws 100 samples, tunes every
# method by leave-one-out cross-validation and estimates sin(10 x0).
# `python demos/synthetic_benchmark.py 100` reproduces the full benchmark
# (about two minutes); the default is a quick 10-run version.

# %%
import sys

import numpy as np

from drlce.experiments import METHODS, run_synthetic_experiment

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
rep = run_synthetic_experiment(runs=runs, progress=lambda r: print(f"\rrun {r + 1}/{runs}", end=""))
print()

# %%
print("x0    " + "".join(f"{m:>11s}" for m in METHODS))
for j, x in enumerate(rep.x0s):
    print(f"{x:.2f}  " + "".join(f"{rep.mae[m][j]:11.4f}" for m in METHODS))

# %%
print("\nMAE averaged over x0 in [0.28, 0.32]")
for m in METHODS:
    print(f"  {m:10s} {rep.window_mae(m):.4f}")

# %%
# Error distribution and type-p deviation on the window
t = np.array([0.02, 0.05, 0.1, 0.2])
print("\nP(|error| <= t) for t =", t)
for m in METHODS:
    print(f"  {m:10s} {np.round(rep.cdf(m, t), 3)}")
print("\ntype-p deviation, p =", rep.ps)
for m in METHODS:
    print(f"  {m:10s} {np.round(rep.type_p[m], 4)}")

# %%
print("\nmedian selected hyperparameters")
for m in METHODS:
    keys = rep.hyperparams[m][0].keys()
    print(f"  {m:10s}", {k: float(np.median([p[k] for p in rep.hyperparams[m]])) for k in keys})
