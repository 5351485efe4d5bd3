"""Stitching local GPs on a line.

A 1-d exponential-kernel field is split into 8 regions.  Without pseudo
observations every region predicts on its own and the curve jumps at each
split; one pseudo input per split glues the neighbours together.

Run: python demos/01_one_dimensional_stitching.py
"""

# %%
import numpy as np

from patchwork_kriging import KernelSpec, SimSpec, exact_gp_predict, fit, sample_gp_dataset

kernel = KernelSpec("exp", tau=10.0, rho=1.0, noise_var=1.0)
X, y, f_true = sample_gp_dataset(SimSpec(n=300, d=1, kernel=kernel, seed=11))

# %% fit the same partition with and without pseudo inputs
loose = fit(X, y, K=8, B=0, hyperparams=kernel, rng_seed=0)
glued = fit(X, y, K=8, B=1, hyperparams=kernel, rng_seed=0)
splits = np.sort(glued.bset.points[:, 0])
print("split locations:", np.round(splits, 3))

# %% jump of the predictive mean across each split
for name, model in [("B=0", loose), ("B=1", glued)]:
    bp = model.predict_on_boundary(glued.bset.points)
    gap = np.abs(bp.mean_k - bp.mean_l)
    print(f"{name}: largest jump across a split = {gap.max():.2e}")

# %% accuracy against the full GP on a dense grid
grid = np.linspace(0.0, 10.0, 2001)[:, None]
bench, _ = exact_gp_predict(kernel, X, y, grid)
for name, model in [("B=0", loose), ("B=1", glued)]:
    err = np.mean((model.predict(grid).mean - bench) ** 2)
    print(f"{name}: MSE to the full GP = {err:.4f}")
