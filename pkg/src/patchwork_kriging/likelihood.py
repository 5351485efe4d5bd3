"""Negative log marginal likelihood of the augmented data and its optimizer.

The augmented vector is ``(y - mean(y), delta = 0)`` with the joint
covariance of :mod:`patchwork_kriging.model`.  Its log determinant splits as
``sum_k log|C_DD,k| + log|S|`` and the quadratic form reduces to
``y_c^T Q y_c`` with ``Q`` applied through the factored operators, so one
evaluation costs the same as one model fit.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, FitError, InputError, OptimizationError
from .kernels import HyperParams, KernelSpec
from .model import _as_hyperparams, _check_data, factorize_with_ladder

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class NLState:
    """One likelihood evaluation.

    ``value = (N + n_delta)/2 log(2 pi) + (logdet_CDD + logdet_schur)/2 + quadratic/2``;
    every term is ``inf`` when the factorization failed.
    """

    theta: np.ndarray
    value: float
    logdet_CDD: float
    logdet_schur: float
    quadratic: float
    delta_rel: float = 0.0

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))


def neg_log_marginal(hyperparams, tree, bset, X, y, n_jobs: int = 1) -> NLState:
    """Evaluate the negative log marginal likelihood for a fixed partition.

    Parameters
    ----------
    hyperparams : KernelSpec or HyperParams
    tree, bset
        Partition and pseudo inputs; these are not resampled.
    X, y
        Training data (``y`` is centered by its sample mean here).

    Returns
    -------
    NLState
        ``value`` is ``+inf`` if any factorization fails.
    """
    hp = _as_hyperparams(hyperparams)
    X, y = _check_data(X, y, tree.dim)
    theta = np.concatenate([s.to_log(with_noise=s.noise_var > 0) for s in hp.specs])
    try:
        aug, fac, _ = factorize_with_ladder(tree, bset, hp, X, y - np.mean(y))
    except FitError as exc:
        log.debug("likelihood evaluation failed: %s", exc)
        inf = float("inf")
        return NLState(theta, inf, inf, inf, inf)
    alpha, _ = fac.solve_data()
    quad = float(sum(r.y @ a for r, a in zip(aug.regions, alpha)))
    ld_blocks, ld_schur = fac.logdet()
    n = aug.n_data + aug.n_delta
    value = 0.5 * n * LOG_2PI + 0.5 * (ld_blocks + ld_schur) + 0.5 * quad
    return NLState(theta, float(value), float(ld_blocks), float(ld_schur), quad, aug.delta_rel)


@dataclass
class OptimizeResult:
    hyperparams: HyperParams
    state: NLState
    trace: list = field(repr=False)
    n_evals: int = 0

    def write_trace(self, fh) -> None:
        write_trace_csv(self.trace, fh)


class _BudgetExhausted(Exception):
    pass


def optimize_hyperparams(
    init,
    tree,
    bset,
    X,
    y,
    budget: int = 200,
    restarts: int = 3,
    seed: int = 0,
    n_jobs: int = 1,
) -> OptimizeResult:
    """Nelder-Mead search over ``log tau, log rho`` and, if the initial
    ``noise_var`` is positive, ``log noise_var``.

    The first run starts from ``init``; the remaining ``restarts - 1`` runs
    start from ``init`` perturbed by ``N(0, 0.5^2)`` in log space.  The total
    number of likelihood evaluations never exceeds ``budget``.

    Raises
    ------
    OptimizationError
        If no evaluation produced a finite value.
    """
    hp = _as_hyperparams(init)
    if not hp.shared:
        raise ConfigurationError("hyperparameter search supports one shared kernel only")
    if budget < 20:
        raise InputError(f"budget must be at least 20 evaluations, got {budget}")
    if restarts < 1:
        raise InputError("restarts must be at least 1")
    base: KernelSpec = hp.specs[0]
    with_noise = base.noise_var > 0
    x0 = base.to_log(with_noise=with_noise)
    rng = np.random.default_rng(seed)
    trace = []
    best = {"state": None}

    def objective(theta):
        if len(trace) >= budget:
            raise _BudgetExhausted
        try:
            spec = base.from_log(theta)
        except InputError:  # exp under/overflow to 0 or inf
            value = float("inf")
            state = None
        else:
            state = neg_log_marginal(spec, tree, bset, X, y, n_jobs=n_jobs)
            value = state.value
        trace.append((len(trace), *np.asarray(theta, dtype=float), value))
        if state is not None and state.finite:
            if best["state"] is None or value < best["state"].value:
                best["state"] = state
        return value if np.isfinite(value) else 1e300

    starts = [x0] + [x0 + rng.normal(0.0, 0.5, x0.size) for _ in range(restarts - 1)]
    for r, start in enumerate(starts):
        remaining = budget - len(trace)
        if remaining <= 0:
            break
        share = max(remaining // (len(starts) - r), 1)
        try:
            minimize(
                objective,
                start,
                method="Nelder-Mead",
                options={
                    "maxfev": share,
                    "xatol": 1e-3,
                    "fatol": 1e-6,
                    # scipy's default simplex is 5% of each coordinate, which
                    # collapses for log-parameters near zero
                    "initial_simplex": np.vstack([start, start + 0.5 * np.eye(start.size)]),
                },
            )
        except _BudgetExhausted:
            break
    state = best["state"]
    if state is None:
        raise OptimizationError(
            "every likelihood evaluation was infinite; try a smaller initial length-scale rho"
        )
    spec = base.from_log(state.theta)
    log.info("optimizer finished after %d evaluations, NL=%.6g", len(trace), state.value)
    return OptimizeResult(HyperParams(spec), state, trace, len(trace))


def write_trace_csv(trace, fh) -> None:
    """Write ``iteration, log_tau, log_rho[, log_noise_var], nl`` rows."""
    writer = csv.writer(fh)
    width = len(trace[0]) - 2 if trace else 2
    names = ["log_tau", "log_rho", "log_noise_var"][:width]
    writer.writerow(["iteration", *names, "nl"])
    for row in trace:
        writer.writerow([row[0], *(repr(float(v)) for v in row[1:])])
