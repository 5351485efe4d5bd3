"""Synthetic Gaussian-process datasets and benchmark test locations.

Datasets are drawn exactly: inputs uniform in a box, latent values from the
Cholesky factor of the dense kernel matrix (jitter ``1e-10 * tau``), then
independent Gaussian noise.  CSV files use columns ``x1..xd, y`` and an
optional ``f_true``; every other column is treated as a feature on reading.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import InputError, SizeError
from .kernels import Family, KernelSpec
from .partition import SpatialTree, BoundarySet, project, sample_on_hyperplane

#: Largest dataset :func:`sample_gp_dataset` will draw densely.
MAX_SIM_N = 20000
SIM_JITTER_REL = 1e-10


@dataclass
class SimSpec:
    """Parameters of a synthetic dataset.

    ``lower``/``upper`` default to the box ``[0, 10]^d``.
    """

    n: int
    d: int
    kernel: KernelSpec
    seed: int
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"n must be a positive integer, got {self.n}")
        if int(self.d) != self.d or self.d < 1:
            raise InputError(f"d must be a positive integer, got {self.d}")
        self.n, self.d = int(self.n), int(self.d)
        self.lower = np.broadcast_to(
            np.asarray(0.0 if self.lower is None else self.lower, dtype=float), (self.d,)
        ).copy()
        self.upper = np.broadcast_to(
            np.asarray(10.0 if self.upper is None else self.upper, dtype=float), (self.d,)
        ).copy()
        if not np.all(self.lower < self.upper):
            raise InputError("box needs lower < upper on every axis")

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "kernel": self.kernel.to_dict(),
            "seed": int(self.seed),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "SimSpec":
        return cls(d["n"], d["d"], KernelSpec.from_dict(d["kernel"]), d["seed"], d["lower"], d["upper"])


def _kernel_matrix_inplace(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    # single n x n buffer; the generic cross_cov would allocate two
    C = cdist(X, X, "sqeuclidean")
    if spec.family is Family.SquaredExponential:
        C *= -0.5 / spec.rho**2
    else:
        np.sqrt(C, out=C)
        C *= -1.0 / spec.rho
    np.exp(C, out=C)
    C *= spec.tau
    return C


def sample_gp_at(kernel: KernelSpec, X, rng) -> np.ndarray:
    """One draw of the latent field ``f ~ N(0, c(X, X))`` at fixed inputs.

    Consumes ``len(X)`` standard normals from ``rng``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] > MAX_SIM_N:
        raise SizeError(f"dense sampling limited to n <= {MAX_SIM_N}, got {X.shape[0]}")
    z = rng.standard_normal(X.shape[0])
    C = _kernel_matrix_inplace(kernel, X)
    C[np.diag_indices_from(C)] += SIM_JITTER_REL * kernel.tau
    L = linalg.cholesky(C, lower=True, overwrite_a=True, check_finite=False)
    return L @ z


def sample_gp_dataset(spec: SimSpec):
    """Draw ``(X, y, f_true)`` for ``spec``.

    The random stream is consumed as: inputs, then standard normals for the
    latent field, then noise.
    """
    if spec.n > MAX_SIM_N:
        raise SizeError(f"dense sampling limited to n <= {MAX_SIM_N}, got {spec.n}")
    rng = np.random.default_rng(spec.seed)
    X = rng.uniform(spec.lower, spec.upper, size=(spec.n, spec.d))
    f = sample_gp_at(spec.kernel, X, rng)
    eps = rng.standard_normal(spec.n)
    y = f + np.sqrt(spec.kernel.noise_var) * eps
    return X, y, f


@dataclass
class BenchmarkTargets:
    interior: np.ndarray
    boundary: np.ndarray
    pairs: np.ndarray = field(default=None)
    nodes: np.ndarray = field(default=None)


def _near_hyperplane(tree: SpatialTree, X: np.ndarray, tol: float) -> np.ndarray:
    near = np.zeros(X.shape[0], dtype=bool)
    for node in tree.internal_nodes():
        on_path = tree.passes_through(node.node_id, X)
        near |= on_path & (np.abs(project(X, node.direction) - node.threshold) <= tol)
    return near


def benchmark_prediction_targets(
    spec: SimSpec,
    tree: SpatialTree,
    bset: BoundarySet | None = None,
    n_interior: int = 1000,
    n_boundary: int = 200,
    seed: int | None = None,
) -> BenchmarkTargets:
    """Interior and interface test locations for a fitted partition.

    Interior points are uniform in the box, off every splitting hyperplane.
    Boundary points are spread over the internal nodes with probability
    proportional to ``count ** ((d - 1) / d)`` (a proxy for the interface
    area), sampled uniformly on each hyperplane inside the node's region,
    and kept only if farther than ``1e-9`` times the box diameter from every
    pseudo input.  For one-dimensional inputs each interface is a single
    point, so the boundary set is one point per split and the exclusion
    does not apply.
    """
    rng = np.random.default_rng(spec.seed + 7919 if seed is None else seed)
    diam = float(np.linalg.norm(spec.upper - spec.lower))
    tol = 1e-9 * diam
    interior = np.zeros((0, spec.d))
    while interior.shape[0] < n_interior:
        cand = rng.uniform(spec.lower, spec.upper, size=(n_interior, spec.d))
        cand = cand[~_near_hyperplane(tree, cand, tol)]
        interior = np.vstack([interior, cand])[:n_interior]
    nodes = tree.internal_nodes()
    if not nodes or n_boundary == 0:
        if not nodes:
            warnings.warn("partition has a single region; no boundary test points", RuntimeWarning, stacklevel=2)
        return BenchmarkTargets(interior, np.zeros((0, spec.d)), np.zeros((0, 2), int), np.zeros(0, int))
    if spec.d == 1:
        pts = np.vstack([sample_on_hyperplane(tree, n.node_id, 1, rng) for n in nodes])
        owner = np.array([n.node_id for n in nodes])
    else:
        w = np.array([n.count ** ((spec.d - 1) / spec.d) for n in nodes], dtype=float)
        counts = rng.multinomial(n_boundary, w / w.sum())
        pseudo = cKDTree(bset.points) if bset is not None and len(bset) else None
        chunks, owners = [], []
        for node, c in zip(nodes, counts):
            got = np.zeros((0, spec.d))
            while got.shape[0] < c:
                cand = sample_on_hyperplane(tree, node.node_id, c - got.shape[0], rng)
                if pseudo is not None:
                    dist, _ = pseudo.query(cand)
                    cand = cand[dist > tol]
                got = np.vstack([got, cand])
            chunks.append(got)
            owners.append(np.full(c, node.node_id))
        pts, owner = np.vstack(chunks), np.concatenate(owners)
    k = np.array([tree.descend(tree.nodes[o].left, p[None])[0] for o, p in zip(owner, pts)], dtype=int)
    l = np.array([tree.descend(tree.nodes[o].right, p[None])[0] for o, p in zip(owner, pts)], dtype=int)
    return BenchmarkTargets(interior, pts, np.column_stack([k, l]), owner)


# ---------------------------------------------------------------------------
# CSV datasets


def write_dataset_csv(path, X, y, f_true=None, spec: SimSpec | None = None) -> None:
    """Write ``x1..xd, y[, f_true]`` with full float precision.

    When ``spec`` is given a sidecar ``<path>.json`` records it.
    """
    X = np.asarray(X, dtype=float)
    header = [f"x{j + 1}" for j in range(X.shape[1])] + ["y"]
    cols = [X, np.asarray(y, dtype=float)[:, None]]
    if f_true is not None:
        header.append("f_true")
        cols.append(np.asarray(f_true, dtype=float)[:, None])
    data = np.hstack(cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])
    if spec is not None:
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    f_true: np.ndarray | None
    features: list


def read_dataset_csv(path, require_y: bool = True) -> Dataset:
    """Read a headed numeric CSV; features are all columns but ``y``/``f_true``.

    Raises
    ------
    InputError
        On a missing ``y`` column, ragged rows or non-numeric cells; the
        message names the offending line.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file, expected a header row") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value") from None
    if require_y and "y" not in header:
        raise InputError(f"{path}: no 'y' column in header {header}")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0]) + 2
        raise InputError(f"{path}:{bad}: non-finite value")
    features = [h for h in header if h not in ("y", "f_true")]
    if not features:
        raise InputError(f"{path}: no feature columns")
    X = data[:, [header.index(h) for h in features]]
    y = data[:, header.index("y")] if "y" in header else None
    f = data[:, header.index("f_true")] if "f_true" in header else None
    return Dataset(X, y, f, features)
