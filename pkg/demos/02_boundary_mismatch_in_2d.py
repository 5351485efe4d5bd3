"""Boundary mismatch shrinks as pseudo inputs are added (2-d).

For a 2-d squared-exponential field with 16 regions the mean squared
mismatch (MSM) between neighbouring regions is measured at 200 interface
points, alongside the interior error against the full GP.

Run: python demos/02_boundary_mismatch_in_2d.py
"""

# %%
import numpy as np

from patchwork_kriging import (
    KernelSpec,
    SimSpec,
    benchmark_prediction_targets,
    evaluate_predictions,
    exact_gp_predict,
    fit,
    sample_gp_dataset,
)

kernel = KernelSpec("se", tau=10.0, rho=1.0, noise_var=1.0)
sim = SimSpec(n=2000, d=2, kernel=kernel, seed=5)
X, y, _ = sample_gp_dataset(sim)

# %% one set of test locations shared by every B
reference_model = fit(X, y, K=16, B=10, hyperparams=kernel, rng_seed=1)
targets = benchmark_prediction_targets(sim, reference_model.tree, reference_model.bset)
bench_i = exact_gp_predict(kernel, X, y, targets.interior)
bench_b = exact_gp_predict(kernel, X, y, targets.boundary)

# %%
print(" B   n_delta    I-MSE       MSM")
for B in (0, 1, 3, 5, 10):
    model = fit(X, y, K=16, B=B, hyperparams=kernel, rng_seed=1)
    pi = model.predict(targets.interior)
    pk = model.predict(targets.boundary, regions=targets.pairs[:, 0])
    pl = model.predict(targets.boundary, regions=targets.pairs[:, 1])
    rep = evaluate_predictions(
        interior=(*bench_i, pi.mean, pi.var),
        boundary=(*bench_b, (pk.mean, pk.var), (pl.mean, pl.var)),
    )
    print(f"{B:2d}   {model.n_delta:7d}   {rep.i_mse:.5f}   {rep.msm:.5f}")
