"""Prediction-quality metrics for means, variances and boundary mismatch.

Boundary metrics are ``None`` when a model has no interfaces (a single
region): a mismatch of zero would wrongly suggest perfect continuity.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import InputError


def _vectors(*arrays, names):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    n = out[0].size
    for a, name in zip(out, names):
        if a.size != n:
            raise InputError(f"length mismatch: {names[0]} has {n} values, {name} has {a.size}")
    if n == 0:
        raise InputError("metrics need at least one value")
    return out


def mse(truth, pred) -> float:
    """Mean squared error ``mean((truth - pred)^2)``."""
    t, p = _vectors(truth, pred, names=("truth", "pred"))
    return float(np.mean((t - p) ** 2))


def nlpd(truth, means, variances) -> float:
    """Average negative log predictive density under independent Gaussians."""
    t, m, v = _vectors(truth, means, variances, names=("truth", "means", "variances"))
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        raise InputError(f"variance at index {bad[0]} is not positive ({v[bad[0]]!r})")
    return float(np.mean((t - m) ** 2 / (2.0 * v) + 0.5 * np.log(2.0 * np.pi * v)))


def boundary_metrics(benchmark_means, benchmark_vars, side_k, side_l):
    """Errors and two-sided mismatch on interface points.

    Parameters
    ----------
    benchmark_means, benchmark_vars : (T_B,) arrays
        Reference predictive moments at the boundary points.
    side_k, side_l : tuple of (means, vars)
        Predictions from the lower-id and higher-id region.

    Returns
    -------
    b_mse, msm, b_mse_var, msm_var : float
        Squared error of the lower-id side against the benchmark and mean
        squared difference between the two sides, for means then variances.
    """
    mk, vk = side_k
    ml, vl = side_l
    bm, bv, mk, vk, ml, vl = _vectors(
        benchmark_means, benchmark_vars, mk, vk, ml, vl,
        names=("benchmark_means", "benchmark_vars", "mean_k", "var_k", "mean_l", "var_l"),
    )
    return (
        float(np.mean((mk - bm) ** 2)),
        float(np.mean((mk - ml) ** 2)),
        float(np.mean((vk - bv) ** 2)),
        float(np.mean((vk - vl) ** 2)),
    )


@dataclass
class MetricReport:
    """Evaluation summary; fields that do not apply are ``None``."""

    T: int
    mse: float | None = None
    nlpd: float | None = None
    T_I: int | None = None
    i_mse: float | None = None
    i_mse_var: float | None = None
    T_B: int | None = None
    b_mse: float | None = None
    msm: float | None = None
    b_mse_var: float | None = None
    msm_var: float | None = None

    def __post_init__(self):
        for name in ("mse", "i_mse", "i_mse_var", "b_mse", "msm", "b_mse_var", "msm_var"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise InputError(f"{name} must be non-negative, got {value}")

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "MetricReport":
        return cls(**{k: d.get(k) for k in cls.field_names()})

    def csv_row(self) -> list:
        """Values in :meth:`field_names` order; absent metrics are empty strings."""
        return [
            "" if v is None else (repr(float(v)) if isinstance(v, float) else int(v))
            for v in self.to_dict().values()
        ]


def evaluate_predictions(
    truth=None,
    means=None,
    variances=None,
    interior=None,
    boundary=None,
) -> MetricReport:
    """Assemble a :class:`MetricReport` from whichever pieces are available.

    Parameters
    ----------
    truth, means, variances : arrays, optional
        Test responses and predictive moments (MSE, NLPD).
    interior : tuple, optional
        ``(bench_means, bench_vars, means, vars)`` at interior test points.
    boundary : tuple, optional
        ``(bench_means, bench_vars, (mean_k, var_k), (mean_l, var_l))``;
        ``None`` or zero points leave boundary metrics absent.
    """
    rep = {"T": 0}
    if truth is not None:
        rep["T"] = int(np.size(truth))
        rep["mse"] = mse(truth, means)
        if variances is not None:
            rep["nlpd"] = nlpd(truth, means, variances)
    if interior is not None:
        bm, bv, m, v = interior
        rep["T_I"] = int(np.size(bm))
        rep["i_mse"] = mse(bm, m)
        rep["i_mse_var"] = mse(bv, v)
    if boundary is not None and np.size(boundary[0]):
        bm, bv, sk, sl = boundary
        rep["T_B"] = int(np.size(bm))
        rep["b_mse"], rep["msm"], rep["b_mse_var"], rep["msm_var"] = boundary_metrics(bm, bv, sk, sl)
    return MetricReport(**rep)
