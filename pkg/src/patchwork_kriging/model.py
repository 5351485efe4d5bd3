"""Patchwork kriging: local GPs stitched by zero-valued boundary differences.

Every region ``k`` carries an independent zero-mean GP ``f_k`` with kernel
``c_k``.  For each pseudo input ``x`` on the interface of regions ``k < l``
the difference ``f_k(x) - f_l(x)`` is observed to be exactly zero.  The
posterior of ``f_k(x*)`` given the responses and these pseudo-observations is
computed from the joint covariance::

    [ C_DD      C_Dd ]      C_DD  block diagonal, block k = c_k(X_k, X_k) + s2 I
    [ C_Dd^T    C_dd ]      C_Dd  sparse, region-k rows carry +/- c_k(X_k, P)
                            C_dd  sparse, nonzero only for pairs sharing a region

without ever forming an N x N matrix: ``C_DD`` is factorized block by block
and the Schur complement ``S = C_dd - C_Dd^T C_DD^{-1} C_Dd`` with a banded
Cholesky after reverse Cuthill-McKee reordering.

The pseudo-observations are exact, so by default ``C_dd`` carries no
diagonal inflation; any jitter there turns ``delta = 0`` into a noisy
observation and breaks the equality of the two sides at pseudo inputs.  Only
when ``C_dd`` or the Schur complement fails to factor is a jitter
``rel * (tau_k + tau_l) / 2`` added, escalating through
:data:`DELTA_JITTER_LADDER`.  The value used is stored on the model so the
dense reference routines can reproduce it.
"""

from __future__ import annotations

import io
import json
import logging
import struct
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import sparse_linalg as sl
from .errors import ConfigurationError, FactorizationError, FitError, InputError, StateError
from .kernels import HyperParams, KernelSpec, delta_jitter
from .partition import (
    MIN_LEAF_SIZE,
    BoundarySet,
    SpatialTree,
    build_tree,
    place_pseudo_points,
)

log = logging.getLogger(__name__)

#: Predictive variances down to ``-VAR_TOL * c(x*, x*)`` are treated as round-off.
VAR_TOL = 1e-8

#: Relative ``C_dd`` jitters tried in turn until factorization succeeds.
DELTA_JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)

#: Bytes of block Cholesky factors kept in memory.  Blocks beyond the budget
#: are refactored from the training data whenever they are needed, which
#: keeps peak memory near one block for very large ``N / K`` settings.
FACTOR_CACHE_BYTES = 1 << 30


@dataclass
class RegionData:
    region_id: int
    X: np.ndarray
    y: np.ndarray
    kernel: KernelSpec
    index: np.ndarray  # rows of the caller's training arrays


class DataBlocks:
    """Diagonal blocks ``c_k(X_k, X_k) + nugget I`` of ``C_DD``, built on demand."""

    def __init__(self, regions):
        self.regions = regions
        self.sizes = np.array([r.X.shape[0] for r in regions], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def block(self, k: int) -> np.ndarray:
        reg = self.regions[k]
        A = reg.kernel.cross_cov(reg.X, reg.X)
        A[np.diag_indices_from(A)] += reg.kernel.nugget
        return A

    def to_dense(self) -> np.ndarray:
        return sl.BlockDiag([self.block(k) for k in range(len(self))]).to_dense()


@dataclass
class AugmentedCov:
    """Structurally nonzero blocks of the joint covariance of ``(y, delta)``.

    ``cross[k] = (idx, G)``: pseudo-observations ``idx`` touch region ``k``
    and ``G = c_k(X_k, P[idx]) * sign`` is the corresponding block of
    ``C_Dd``.  ``delta`` already includes the jitter ``delta_rel`` on its
    diagonal.
    """

    regions: list
    data_blocks: DataBlocks
    cross: list
    delta: sl.SymSparse
    bset: BoundarySet
    delta_rel: float = 0.0

    @property
    def n_data(self) -> int:
        return self.data_blocks.n

    @property
    def n_delta(self) -> int:
        return self.delta.n

    def cross_dense(self) -> np.ndarray:
        """``C_Dd`` as a dense matrix, rows in region order."""
        out = np.zeros((self.n_data, self.n_delta))
        off = self.data_blocks.offsets
        for k, (idx, G) in enumerate(self.cross):
            out[off[k]:off[k + 1], idx] = G
        return out

    def to_dense(self) -> np.ndarray:
        """Full joint covariance, ``y`` (region order) first, then ``delta``."""
        C = self.cross_dense()
        return np.block([[self.data_blocks.to_dense(), C], [C.T, self.delta.to_dense()]])

    def y_ordered(self) -> np.ndarray:
        return np.concatenate([r.y for r in self.regions]) if self.regions else np.zeros(0)


def split_regions(tree: SpatialTree, hyperparams: HyperParams, X, y) -> list:
    K = tree.n_regions
    hyperparams.check(K)
    regions = []
    for k in range(K):
        idx = tree.members(k)
        if idx.size == 0:
            raise ConfigurationError(f"region {k} holds no training points")
        regions.append(RegionData(k, X[idx], y[idx], hyperparams[k], idx))
    return regions


def assemble(
    tree: SpatialTree, bset: BoundarySet, hyperparams, X, y, delta_rel: float = 0.0
) -> AugmentedCov:
    """Build ``C_DD``, ``C_Dd`` and ``C_dd`` from the partition and boundary set.

    ``C_dd`` is accumulated region by region: with ``s_i = +1`` when the
    region is the smaller index of pseudo-observation ``i``'s pair and ``-1``
    otherwise, region ``r`` contributes ``s_i s_j c_r(p_i, p_j)``, which
    reproduces the six-case covariance table of the difference processes.
    """
    hyperparams = _as_hyperparams(hyperparams)
    X, y = _check_data(X, y, tree.dim)
    if tree.labels.size != X.shape[0]:
        raise InputError("tree was built on a different number of training points")
    if len(bset) and bset.pairs.max() >= tree.n_regions:
        raise ConfigurationError("boundary set references regions outside the tree")
    regions = split_regions(tree, hyperparams, X, y)
    n = len(bset)
    cross = []
    rows, cols, vals = [], [], []
    for reg in regions:
        spec = reg.kernel
        idx, signs = bset.touching(reg.region_id)
        P = bset.points[idx]
        cross.append((idx, spec.cross_cov(reg.X, P) * signs))
        if idx.size:
            Cpp = spec.cross_cov(P, P) * np.outer(signs, signs)
            iu, ju = np.triu_indices(idx.size)
            rows.append(idx[iu])
            cols.append(idx[ju])
            vals.append(Cpp[iu, ju])
    if n and delta_rel > 0:
        jit = np.array(
            [delta_jitter(hyperparams[k], hyperparams[l], delta_rel) for k, l in bset.pairs]
        )
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(jit)
    delta = sl.SymSparse(
        n,
        np.concatenate(rows) if rows else [],
        np.concatenate(cols) if cols else [],
        np.concatenate(vals) if vals else [],
    )
    return AugmentedCov(regions, DataBlocks(regions), cross, delta, bset, float(delta_rel))


class _FactorCache:
    """First-come store of ``(L_k, W_k)`` pairs up to a byte budget.

    Nothing is evicted: region sweeps run in index order, so keeping the
    first blocks beats a least-recently-used policy, which would miss on
    every access of a sweep larger than the budget.
    """

    def __init__(self, budget: int):
        self.budget = int(budget)
        self.items = {}
        self.nbytes = 0

    def get(self, k):
        return self.items.get(k)

    def put(self, k, L, W) -> None:
        size = L.nbytes + W.nbytes
        if k not in self.items and self.nbytes + size <= self.budget:
            self.items[k] = (L, W)
            self.nbytes += size


def _factor_region(aug: AugmentedCov, k: int):
    """Cholesky factor ``L_k`` of data block ``k`` and ``W_k = L_k^{-1} G_k``."""
    A = aug.data_blocks.block(k)
    L, info = lapack.dpotrf(A, lower=1, clean=1, overwrite_a=1)
    if info != 0:
        raise FitError(f"data covariance block {k} is not positive definite") from FactorizationError(
            f"block {k} is not positive definite (pivot {info - 1})", pivot=int(info - 1), block=k
        )
    idx, G = aug.cross[k]
    W = solve_triangular(L, G, lower=True, check_finite=False) if idx.size else np.zeros((L.shape[0], 0))
    return L, W


@dataclass
class Factorization:
    """Factored form of the inverse joint covariance.

    Block factors ``L_k`` (Cholesky of data block ``k``) and
    ``W_k = L_k^{-1} G_k`` are served by :meth:`block_factor` from a bounded
    cache and recomputed when absent; ``schur`` factors
    ``S = C_dd - sum_k W_k^T W_k`` in reverse Cuthill-McKee order.
    """

    aug: AugmentedCov
    block_logdets: np.ndarray
    schur_matrix: sl.SymSparse
    schur: sl.BandedCholesky
    cache: _FactorCache = field(repr=False)
    rhs_white: list = field(default=None, repr=False)

    def block_factor(self, k: int):
        hit = self.cache.get(k)
        if hit is None:
            hit = _factor_region(self.aug, k)
            self.cache.put(k, *hit)
        return hit

    def logdet(self) -> tuple:
        return float(np.sum(self.block_logdets)), self.schur.logdet()

    def scatter_cross_t(self, vecs) -> np.ndarray:
        """``C_Dd^T v`` given ``v`` split per region."""
        out = np.zeros(self.aug.n_delta)
        for (idx, G), v in zip(self.aug.cross, vecs):
            if idx.size:
                out[idx] += G.T @ v
        return out

    def solve_data(self, y_parts=None):
        """Apply the inverse of ``C_DD - C_Dd C_dd^{-1} C_Dd^T`` to ``y``.

        Uses ``C_DD^{-1} + C_DD^{-1} C_Dd S^{-1} C_Dd^T C_DD^{-1}``; returns
        the per-region result and ``t = S^{-1} C_Dd^T C_DD^{-1} y``.  With
        ``y_parts=None`` the right-hand side given to :func:`factorize` is
        used, whose whitened form is already known.
        """
        n = self.aug.n_delta
        if y_parts is None:
            if self.rhs_white is None:
                raise StateError("no right-hand side was supplied at factorization")
            u = self.rhs_white
        else:
            u = [
                solve_triangular(self.block_factor(k)[0], yk, lower=True, check_finite=False)
                for k, yk in enumerate(y_parts)
            ]
        s = np.zeros(n)
        for k, (idx, _) in enumerate(self.aug.cross):
            if idx.size:
                s[idx] += self.block_factor(k)[1].T @ u[k]
        t = self.schur.solve(s) if n else np.zeros(0)
        alpha = []
        for k, (idx, _) in enumerate(self.aug.cross):
            L, W = self.block_factor(k)
            rhs = u[k] + W @ t[idx] if idx.size else u[k]
            alpha.append(solve_triangular(L, rhs, lower=True, trans="T", check_finite=False))
        return alpha, t


def factorize(aug: AugmentedCov, n_jobs: int = 1, rhs=None, cache_bytes: int = FACTOR_CACHE_BYTES) -> Factorization:
    """Factor the data blocks and the boundary Schur complement.

    Blocks are factored one at a time (``n_jobs`` at a time with threads);
    only their log determinants, the small ``W_k^T W_k`` corrections and, if
    ``rhs`` is given, ``L_k^{-1} rhs_k`` are kept, plus whatever factors fit
    in ``cache_bytes``.

    Raises
    ------
    FitError
        If a data block or the Schur complement is not positive definite.
    """
    K = len(aug.regions)
    cache = _FactorCache(cache_bytes)
    logdets = np.zeros(K)
    rhs_white = [None] * K if rhs is not None else None
    r0, c0, v0 = aug.delta.triplets()
    rows, cols, vals = [r0], [c0], [v0]

    def work(k):
        L, W = _factor_region(aug, k)
        u = solve_triangular(L, rhs[k], lower=True, check_finite=False) if rhs is not None else None
        corr = W.T @ W if W.shape[1] else None
        return k, L, W, u, corr

    def consume(result):
        k, L, W, u, corr = result
        logdets[k] = 2.0 * np.sum(np.log(np.diag(L)))
        if rhs_white is not None:
            rhs_white[k] = u
        idx = aug.cross[k][0]
        if corr is not None:
            iu, ju = np.triu_indices(idx.size)
            rows.append(idx[iu])
            cols.append(idx[ju])
            vals.append(-corr[iu, ju])
        cache.put(k, L, W)

    if n_jobs == 1 or K < 2:
        for k in range(K):
            consume(work(k))
    else:
        # LAPACK releases the GIL; batches bound the number of live factors
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            for b in range(0, K, n_jobs):
                for result in pool.map(work, range(b, min(b + n_jobs, K))):
                    consume(result)
    S = sl.SymSparse(aug.n_delta, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    try:
        schur = sl.chol_sparse(S, jitter=0.0, perm="rcm")
    except FactorizationError as exc:
        raise FitError(f"boundary Schur complement is not positive definite: {exc}") from exc
    return Factorization(aug, logdets, S, schur, cache, rhs_white)


def factorize_with_ladder(tree, bset, hyperparams, X, y_centered, n_jobs=1, timings=None,
                          ladder=DELTA_JITTER_LADDER, cache_bytes=FACTOR_CACHE_BYTES):
    """Assemble and factor, escalating the ``C_dd`` jitter until both the
    Schur complement and ``C_dd`` itself are positive definite.

    Returns ``(aug, factorization, delta_chol)``; the factorization holds
    the whitened ``y_centered`` for :meth:`Factorization.solve_data`.
    ``timings`` (if given) receives the cumulative ``assembly`` and
    ``factorization`` seconds; data blocks are built inside the
    factorization pass and counted there.
    """
    timings = {} if timings is None else timings
    timings.setdefault("assembly", 0.0)
    timings.setdefault("factorization", 0.0)
    last = None
    for rel in ladder:
        t0 = time.perf_counter()
        aug = assemble(tree, bset, hyperparams, X, y_centered, delta_rel=rel)
        t1 = time.perf_counter()
        timings["assembly"] += t1 - t0
        try:
            fac = factorize(aug, n_jobs=n_jobs, rhs=[r.y for r in aug.regions], cache_bytes=cache_bytes)
            try:
                delta_chol = sl.chol_sparse(aug.delta, jitter=0.0, perm=fac.schur.perm)
            except FactorizationError as exc:
                raise FitError(f"pseudo-observation covariance is not positive definite: {exc}") from exc
        except FitError as exc:
            timings["factorization"] += time.perf_counter() - t1
            if aug.n_delta == 0 or isinstance(exc.__cause__, FactorizationError) and exc.__cause__.block is not None:
                raise
            last = exc
            log.debug("factorization failed with C_dd jitter %g; escalating", rel)
            continue
        timings["factorization"] += time.perf_counter() - t1
        if rel > 0:
            log.info("pseudo-observation covariance needed relative jitter %g", rel)
        return aug, fac, delta_chol
    raise last


@dataclass
class Prediction:
    mean: np.ndarray
    var: np.ndarray
    region: np.ndarray


@dataclass
class BoundaryPrediction:
    """Predictions on interfaces; ``mean``/``var`` are from the lower-id side."""

    mean: np.ndarray
    var: np.ndarray
    mean_k: np.ndarray
    var_k: np.ndarray
    mean_l: np.ndarray
    var_l: np.ndarray
    pairs: np.ndarray


@dataclass
class PatchworkModel:
    """Fitted patchwork kriging predictor.

    Build with :func:`fit` or :meth:`from_partition`.  ``alpha[k]`` is
    region ``k``'s slice of ``Q y``; ``beta = C_dd^{-1} C_Dd^T Q y`` is
    obtained from ``delta_chol``, the banded Cholesky factor ``L`` of
    ``C_dd`` (``L L^T = C_dd`` in ``schur.perm`` order).
    """

    tree: SpatialTree
    bset: BoundarySet
    hyperparams: HyperParams
    mean_offset: float
    X: np.ndarray
    y: np.ndarray
    factorization: Factorization = field(repr=False)
    delta_chol: sl.BandedCholesky = field(repr=False)
    alpha: list = field(repr=False)
    beta: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    timings: dict = field(default_factory=dict)

    @classmethod
    def from_partition(cls, tree, bset, hyperparams, X, y, n_jobs=1, timings=None,
                       cache_bytes=FACTOR_CACHE_BYTES):
        """Fit on a fixed partition and pseudo-input set.

        ``cache_bytes`` bounds the memory spent on retained block factors.
        """
        hyperparams = _as_hyperparams(hyperparams)
        X, y = _check_data(X, y, tree.dim)
        timings = dict(timings or {})
        mu = float(np.mean(y))
        aug, fac, delta_chol = factorize_with_ladder(
            tree, bset, hyperparams, X, y - mu, n_jobs=n_jobs, timings=timings, cache_bytes=cache_bytes
        )
        t1 = time.perf_counter()
        alpha, t = fac.solve_data()
        beta = delta_chol.solve(fac.scatter_cross_t(alpha)) if aug.n_delta else np.zeros(0)
        timings["factorization"] += time.perf_counter() - t1
        log.debug(
            "fitted %d regions, %d pseudo-observations, Schur bandwidth %d",
            len(aug.regions), aug.n_delta, fac.schur.bandwidth,
        )
        return cls(tree, bset, hyperparams, mu, X, y, fac, delta_chol, alpha, beta, t, timings)

    @property
    def delta_rel(self) -> float:
        """Relative ``C_dd`` jitter that was needed to factor the model."""
        return self.factorization.aug.delta_rel

    @property
    def regions(self) -> list:
        return self.factorization.aug.regions

    @property
    def n_regions(self) -> int:
        return self.tree.n_regions

    @property
    def n_delta(self) -> int:
        return len(self.bset)

    def predict(self, X_star, regions=None, chunk: int | None = None) -> Prediction:
        """Posterior mean and variance of ``f_k`` at each row of ``X_star``.

        Parameters
        ----------
        X_star : (T, d) array
        regions : (T,) int array, optional
            Region whose local process is evaluated; defaults to routing
            ``X_star`` through the tree.  Passing the other side of an
            interface gives that side's prediction.
        """
        X_star = np.asarray(X_star, dtype=float)
        if X_star.ndim == 1:
            X_star = X_star.reshape(1, -1) if self.tree.dim > 1 else X_star[:, None]
        if X_star.ndim != 2 or X_star.shape[1] != self.tree.dim:
            raise InputError(f"expected points of dimension {self.tree.dim}, got {X_star.shape}")
        T = X_star.shape[0]
        if regions is None:
            regions = self.tree.route(X_star)
        regions = np.broadcast_to(np.asarray(regions, dtype=int), (T,)).copy()
        if T and (regions.min() < 0 or regions.max() >= self.n_regions):
            raise InputError("region id out of range")
        mean = np.empty(T)
        var = np.empty(T)
        n = self.n_delta
        if chunk is None:
            chunk = max(64, int(4_000_000 // max(n, 1)))
        for k in np.unique(regions):
            sel = np.flatnonzero(regions == k)
            for s in range(0, sel.size, chunk):
                part = sel[s:s + chunk]
                mean[part], var[part] = self._predict_region(int(k), X_star[part])
        prior = np.array([self.hyperparams[k].tau for k in regions])
        low = var < -VAR_TOL * prior
        if np.any(low):
            warnings.warn(
                f"{int(low.sum())} predictive variances below -{VAR_TOL} * prior; clamped to 0",
                RuntimeWarning,
                stacklevel=2,
            )
        np.maximum(var, 0.0, out=var)
        return Prediction(mean + self.mean_offset, var, regions)

    def _predict_region(self, k: int, Xs: np.ndarray):
        fac = self.factorization
        reg = fac.aug.regions[k]
        spec = reg.kernel
        idx, G = fac.aug.cross[k]
        a = spec.cross_cov(reg.X, Xs)
        mean = a.T @ self.alpha[k]
        L, W = fac.block_factor(k)
        Wa = solve_triangular(L, a, lower=True, check_finite=False)
        var = spec.tau - np.einsum("ij,ij->j", Wa, Wa)
        if idx.size:
            _, signs = self.bset.touching(k)
            b = spec.cross_cov(self.bset.points[idx], Xs) * signs[:, None]
            mean -= b.T @ self.beta[idx]
            h = W.T @ Wa - b
            pos = fac.schur.inv_perm[idx]
            start = int(pos.min())
            H = np.zeros((self.n_delta - start, Xs.shape[0]))
            H[pos - start] = h
            z = fac.schur.solve_lower_permuted(H, start=start)
            var -= np.einsum("ij,ij->j", z, z)
        return mean, var

    def predict_on_boundary(self, X_b, rtol: float = 1e-8) -> BoundaryPrediction:
        """Predict at interface points from both neighbouring regions.

        Raises
        ------
        InputError
            If a point lies on none of the tree's splitting hyperplanes.
        """
        node, k, l = self.tree.locate_boundary(X_b, rtol=rtol)
        if np.any(node < 0):
            bad = np.flatnonzero(node < 0)
            raise InputError(f"{bad.size} points are not on any region boundary (first: row {bad[0]})")
        X_b = self.tree._check(X_b)
        pk = self.predict(X_b, regions=k)
        pl = self.predict(X_b, regions=l)
        return BoundaryPrediction(
            pk.mean, pk.var, pk.mean, pk.var, pl.mean, pl.var, np.column_stack([k, l])
        )

    # persistence
    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "PatchworkModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def to_bytes(self) -> bytes:
        fac = self.factorization
        arrays = {
            "X": self.X,
            "y": self.y,
            "beta": self.beta,
            "t": self.t,
            "schur_factor": fac.schur.factor,
            "schur_perm": fac.schur.perm.astype(float),
            "delta_factor": self.delta_chol.factor,
            "block_logdet": fac.block_logdets,
        }
        for k in range(self.n_regions):
            arrays[f"alpha_{k}"] = self.alpha[k]
        manifest, blob, offset = [], io.BytesIO(), 0
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
            blob.write(arr.tobytes(order="C"))
            offset += arr.size
        header = {
            "format": "patchwork-kriging-bundle",
            "version": 2,
            "dtype": "<f8",
            "tree": self.tree.to_dict(),
            "boundary": self.bset.to_dict(),
            "hyperparams": self.hyperparams.to_list(),
            "mean_offset": self.mean_offset,
            "delta_rel": self.delta_rel,
            "arrays": manifest,
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        return _MAGIC + struct.pack("<Q", len(head)) + head + blob.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PatchworkModel":
        if not data.startswith(_MAGIC):
            raise InputError("not a patchwork kriging model bundle")
        (hlen,) = struct.unpack("<Q", data[len(_MAGIC):len(_MAGIC) + 8])
        start = len(_MAGIC) + 8
        header = json.loads(data[start:start + hlen].decode("utf-8"))
        flat = np.frombuffer(data[start + hlen:], dtype="<f8")
        arrays = {}
        for item in header["arrays"]:
            size = int(np.prod(item["shape"])) if item["shape"] else 1
            arrays[item["name"]] = flat[item["offset"]:item["offset"] + size].reshape(item["shape"]).copy()
        X, y = arrays["X"], arrays["y"]
        tree = SpatialTree.from_dict(header["tree"], X)
        bset = BoundarySet.from_dict(header["boundary"])
        hp = HyperParams.from_list(header["hyperparams"])
        mu = float(header["mean_offset"])
        aug = assemble(tree, bset, hp, X, y - mu, delta_rel=float(header.get("delta_rel", 0.0)))
        if header.get("version") != 2:
            raise InputError(f"unsupported bundle version {header.get('version')}")
        K = tree.n_regions
        perm = arrays["schur_perm"].astype(np.int64)
        schur = sl.BandedCholesky(np.asfortranarray(arrays["schur_factor"]), perm, 0.0)
        fac = Factorization(aug, arrays["block_logdet"], None, schur, _FactorCache(FACTOR_CACHE_BYTES))
        delta_chol = sl.BandedCholesky(np.asfortranarray(arrays["delta_factor"]), perm, 0.0)
        alpha = [arrays[f"alpha_{k}"] for k in range(K)]
        return cls(tree, bset, hp, mu, X, y, fac, delta_chol, alpha, arrays["beta"], arrays["t"])


_MAGIC = b"PWKRIG\x00\x01"


def _as_hyperparams(hp) -> HyperParams:
    if isinstance(hp, HyperParams):
        return hp
    if isinstance(hp, KernelSpec):
        return HyperParams(hp)
    return HyperParams(list(hp))


def _check_data(X, y, dim=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise InputError(f"X has shape {X.shape} but y has {y.size} values")
    if dim is not None and X.shape[1] != dim:
        raise InputError(f"expected {dim}-dimensional inputs, got {X.shape[1]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("training data contain non-finite values")
    return X, y


def fit(
    X,
    y,
    K: int,
    B: int,
    hyperparams,
    rng_seed: int,
    min_leaf_size: int = MIN_LEAF_SIZE,
    n_jobs: int = 1,
) -> PatchworkModel:
    """Partition the data, place pseudo inputs and fit the patchwork model.

    Parameters
    ----------
    X : (N, d) array
    y : (N,) array
        Responses; the sample mean is removed before fitting and added back
        to predictions.
    K : int
        Requested number of regions (rounded down to a power of two).
    B : int
        Pseudo inputs per splitting hyperplane (one when ``d == 1``).
    hyperparams : KernelSpec or HyperParams
    rng_seed : int
        Seed for pseudo-input placement.
    """
    X, y = _check_data(X, y)
    t0 = time.perf_counter()
    tree = build_tree(X, K, min_leaf_size=min_leaf_size)
    bset = place_pseudo_points(tree, B, rng_seed)
    timings = {"partition": time.perf_counter() - t0}
    return PatchworkModel.from_partition(tree, bset, hyperparams, X, y, n_jobs=n_jobs, timings=timings)


def predict(model: PatchworkModel, X_star, regions=None) -> Prediction:
    if not isinstance(model, PatchworkModel):
        raise StateError("predict needs a fitted PatchworkModel")
    return model.predict(X_star, regions=regions)


def predict_on_boundary(model: PatchworkModel, X_b) -> BoundaryPrediction:
    if not isinstance(model, PatchworkModel):
        raise StateError("predict_on_boundary needs a fitted PatchworkModel")
    return model.predict_on_boundary(X_b)
