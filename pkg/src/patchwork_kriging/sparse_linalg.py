"""Sparse symmetric storage, bandwidth-reducing ordering and Cholesky solves.

The boundary Schur complement is stored as a :class:`SymSparse`, reordered
with reverse Cuthill-McKee (:func:`rcm_order`) and factorized inside its
band with LAPACK's banded Cholesky (:func:`chol_sparse`).  The data
covariance is block diagonal and handled block by block
(:class:`BlockDiag`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve, lapack

from .errors import FactorizationError, InputError

#: Default relative jitter (times the mean diagonal) for :func:`chol_sparse`.
DEFAULT_JITTER_REL = 1e-8


class SymSparse:
    """Symmetric sparse matrix holding each off-diagonal entry once.

    Entries are kept as the upper triangle (``row <= col``) in compressed
    sparse column form; duplicates are summed and explicit zeros dropped.
    """

    def __init__(self, n: int, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (rows.size == cols.size == vals.size):
            raise InputError("rows, cols and vals must have the same length")
        if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
            raise InputError(f"entry index out of range for n={n}")
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        upper = sp.coo_matrix((vals, (lo, hi)), shape=(n, n)).tocsc()
        upper.sum_duplicates()
        upper.eliminate_zeros()
        upper.sort_indices()
        self.n = int(n)
        self.upper = upper

    @classmethod
    def from_dense(cls, A, tol: float = 0.0) -> "SymSparse":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"expected a square matrix, got shape {A.shape}")
        r, c = np.nonzero(np.triu(np.abs(A) > tol))
        return cls(A.shape[0], r, c, A[r, c])

    @property
    def nnz(self) -> int:
        return self.upper.nnz

    def triplets(self):
        coo = self.upper.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.copy()

    def to_dense(self) -> np.ndarray:
        U = self.upper.toarray()
        return U + U.T - np.diag(np.diag(U))

    def to_scipy(self) -> sp.csr_matrix:
        """Full symmetric matrix as a scipy CSR matrix."""
        U = self.upper
        return (U + U.T - sp.diags(U.diagonal())).tocsr()

    def diagonal(self) -> np.ndarray:
        return self.upper.diagonal()

    def graph(self) -> sp.csr_matrix:
        """Off-diagonal sparsity pattern as a symmetric boolean adjacency matrix."""
        r, c, _ = self.triplets()
        off = r != c
        r, c = r[off], c[off]
        data = np.ones(2 * r.size, dtype=bool)
        return sp.csr_matrix(
            (data, (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(self.n, self.n)
        )

    def permute(self, perm) -> "SymSparse":
        """Return ``P A P^T`` where row ``i`` of the result is row ``perm[i]`` of A."""
        inv = inverse_permutation(perm)
        r, c, v = self.triplets()
        return SymSparse(self.n, inv[r], inv[c], v)

    def __repr__(self):
        return f"SymSparse(n={self.n}, nnz={self.nnz}, bandwidth={bandwidth(self)})"


def inverse_permutation(perm) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv


def is_permutation(perm, n: int) -> bool:
    perm = np.asarray(perm)
    return perm.shape == (n,) and np.array_equal(np.sort(perm), np.arange(n))


def bandwidth(A, perm=None) -> int:
    """Largest ``|i - j|`` over stored nonzeros, optionally after ``perm``."""
    if isinstance(A, SymSparse):
        r, c, _ = A.triplets()
    else:
        coo = sp.coo_matrix(A)
        r, c = coo.row, coo.col
    if r.size == 0:
        return 0
    if perm is not None:
        inv = inverse_permutation(perm)
        r, c = inv[r], inv[c]
    return int(np.max(np.abs(r - c)))


def _as_graph(A) -> sp.csr_matrix:
    if isinstance(A, SymSparse):
        return A.graph()
    G = sp.csr_matrix(A, dtype=bool)
    G = (G + G.T).tocsr()
    G.setdiag(False)
    G.eliminate_zeros()
    return G


def _bfs_levels(indptr, indices, start, degree):
    """Breadth-first order and levels from ``start``, neighbours by degree."""
    level = np.full(degree.size, -1, dtype=np.int64)
    level[start] = 0
    order = [int(start)]
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        nbrs = indices[indptr[v]:indptr[v + 1]]
        fresh = nbrs[level[nbrs] < 0]
        if fresh.size:
            fresh = fresh[np.lexsort((fresh, degree[fresh]))]
            level[fresh] = level[v] + 1
            order.extend(fresh.tolist())
    return np.array(order, dtype=np.int64), level


def _pseudo_peripheral(indptr, indices, root, degree):
    # George & Liu: restart from a min-degree vertex of the last level
    # until the eccentricity stops growing
    order, level = _bfs_levels(indptr, indices, root, degree)
    ecc = level[order[-1]]
    while True:
        last = order[level[order] == ecc]
        cand = int(last[np.lexsort((last, degree[last]))[0]])
        order2, level2 = _bfs_levels(indptr, indices, cand, degree)
        ecc2 = level2[order2[-1]]
        if ecc2 <= ecc:
            return root
        root, order, level, ecc = cand, order2, level2, ecc2


def rcm_order(A) -> np.ndarray:
    """Reverse Cuthill-McKee ordering of the graph of off-diagonal nonzeros.

    Each connected component is ordered by breadth-first search from a
    pseudo-peripheral start vertex, visiting neighbours by increasing degree,
    and the concatenated order is reversed.  If that does not strictly
    reduce the bandwidth the identity is returned instead, so the result
    never widens the band.

    Returns
    -------
    perm : (n,) int array
        ``perm[i]`` is the original index placed at position ``i``.
    """
    G = _as_graph(A)
    n = G.shape[0]
    identity = np.arange(n)
    if n == 0 or G.nnz == 0:
        return identity
    indptr, indices = G.indptr, G.indices
    degree = np.diff(indptr)
    seen = np.zeros(n, dtype=bool)
    order = []
    for root in range(n):
        if seen[root]:
            continue
        start = _pseudo_peripheral(indptr, indices, root, degree)
        comp, _ = _bfs_levels(indptr, indices, start, degree)
        seen[comp] = True
        order.extend(comp)
    perm = np.array(order[::-1], dtype=np.int64)
    if bandwidth(G, perm) < bandwidth(G):
        return perm
    return identity


@dataclass
class BandedCholesky:
    """Cholesky factor of ``P (A + jitter I) P^T`` in LAPACK lower band storage.

    ``factor[i - j, j] = L[i, j]`` for ``0 <= i - j <= bandwidth``.
    """

    factor: np.ndarray
    perm: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.factor.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.factor.shape[0] - 1

    @property
    def inv_perm(self) -> np.ndarray:
        return inverse_permutation(self.perm)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.factor[0]))) if self.n else 0.0

    def solve(self, b) -> np.ndarray:
        """``(A + jitter I)^{-1} b`` in the original ordering."""
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return b.copy()
        vec = b.ndim == 1
        B = b.reshape(self.n, -1)[self.perm]
        x, info = lapack.dpbtrs(self.factor, B, lower=1)
        if info != 0:
            raise FactorizationError(f"banded solve failed (info={info})")
        out = np.empty_like(x)
        out[self.perm] = x
        return out.ravel() if vec else out

    def solve_lower_permuted(self, B, start: int = 0) -> np.ndarray:
        """Solve ``L z = b`` for a right-hand side already in permuted order.

        ``B`` holds rows ``start:`` of ``b``; the rows above are taken to be
        zero, so only the trailing block ``L[start:, start:]`` is used and
        ``z[start:]`` is returned.
        """
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.n - start:
            raise InputError(f"expected {self.n - start} rows, got {B.shape[0]}")
        if B.shape[0] == 0:
            return B.copy()
        vec = B.ndim == 1
        z, info = lapack.dtbtrs(self.factor[:, start:], B.reshape(B.shape[0], -1), uplo="L")
        if info != 0:
            raise FactorizationError(f"triangular banded solve failed (info={info})")
        return z.ravel() if vec else z

    def solve_lower(self, b) -> np.ndarray:
        """``L^{-1} P b``; the result stays in permuted order."""
        b = np.asarray(b, dtype=float)
        return self.solve_lower_permuted(b[self.perm])

    def dense_factor(self) -> np.ndarray:
        """Dense lower-triangular ``L`` (permuted ordering)."""
        n, p = self.n, self.bandwidth
        L = np.zeros((n, n))
        for off in range(p + 1):
            L[np.arange(off, n), np.arange(n - off)] = self.factor[off, : n - off]
        return L

    def reconstruct(self) -> np.ndarray:
        """``L L^T`` mapped back to the original ordering."""
        L = self.dense_factor()
        M = L @ L.T
        inv = self.inv_perm
        return M[np.ix_(inv, inv)]


def banded_lower(A: SymSparse, perm) -> tuple:
    """Lower band storage of ``P A P^T`` and its bandwidth."""
    inv = inverse_permutation(perm)
    r, c, v = A.triplets()
    i, j = inv[r], inv[c]
    hi, lo = np.maximum(i, j), np.minimum(i, j)
    p = int((hi - lo).max()) if hi.size else 0
    ab = np.zeros((p + 1, A.n), order="F")
    ab[hi - lo, lo] = v
    return ab, p


def chol_sparse(A: SymSparse, jitter: float | None = None, perm="rcm") -> BandedCholesky:
    """Cholesky factorization of a symmetric sparse matrix inside its band.

    Parameters
    ----------
    A : SymSparse
    jitter : float, optional
        Added to the diagonal before factorizing.  Defaults to ``1e-8`` times
        the mean diagonal.
    perm : "rcm", None or array
        Symmetric reordering: reverse Cuthill-McKee (default), identity, or
        an explicit permutation.

    Raises
    ------
    FactorizationError
        On a non-positive pivot; ``pivot`` holds its index in A's ordering.
    """
    n = A.n
    if jitter is None:
        jitter = DEFAULT_JITTER_REL * float(np.mean(A.diagonal())) if n else 0.0
    if isinstance(perm, str) and perm == "rcm":
        perm = rcm_order(A)
    elif perm is None:
        perm = np.arange(n)
    perm = np.asarray(perm, dtype=np.int64)
    if not is_permutation(perm, n):
        raise InputError("perm is not a permutation of range(n)")
    ab, _ = banded_lower(A, perm)
    ab[0] += jitter
    if n == 0:
        return BandedCholesky(ab, perm, float(jitter))
    c, info = lapack.dpbtrf(ab, lower=1)
    if info > 0:
        pivot = int(perm[info - 1])
        raise FactorizationError(
            f"matrix not positive definite: non-positive pivot at index {pivot}", pivot=pivot
        )
    if info < 0:
        raise FactorizationError(f"dpbtrf argument error (info={info})")
    return BandedCholesky(np.asfortranarray(c), perm, float(jitter))


class BlockDiag:
    """Block-diagonal symmetric matrix given by its dense diagonal blocks."""

    def __init__(self, blocks):
        self.blocks = [np.asarray(b, dtype=float) for b in blocks]
        for k, b in enumerate(self.blocks):
            if b.ndim != 2 or b.shape[0] != b.shape[1]:
                raise InputError(f"block {k} is not square: shape {b.shape}")
        self.sizes = np.array([b.shape[0] for b in self.blocks], dtype=int)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for k, b in enumerate(self.blocks):
            s = slice(self.offsets[k], self.offsets[k + 1])
            out[s, s] = b
        return out

    def factor(self) -> "BlockCholesky":
        factors = []
        for k, b in enumerate(self.blocks):
            if b.shape[0] == 0:
                factors.append(b.copy())
                continue
            c, info = lapack.dpotrf(b, lower=1, clean=1)
            if info != 0:
                raise FactorizationError(
                    f"block {k} is not positive definite (pivot {info - 1})",
                    pivot=int(info - 1),
                    block=k,
                )
            factors.append(c)
        return BlockCholesky(factors, self.offsets)


@dataclass
class BlockCholesky:
    """Lower Cholesky factors of each diagonal block."""

    factors: list
    offsets: np.ndarray

    def solve_block(self, k: int, Y) -> np.ndarray:
        if self.factors[k].shape[0] == 0:
            return np.asarray(Y, dtype=float).copy()
        return cho_solve((self.factors[k], True), Y, check_finite=False)

    def solve(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if Y.shape[0] != self.offsets[-1]:
            raise InputError(f"Y has {Y.shape[0]} rows, matrix has {self.offsets[-1]}")
        out = np.empty_like(Y)
        for k in range(len(self.factors)):
            s = slice(self.offsets[k], self.offsets[k + 1])
            out[s] = self.solve_block(k, Y[s])
        return out

    def logdet(self) -> float:
        return float(sum(2.0 * np.sum(np.log(np.diag(c))) for c in self.factors))


def blockdiag_chol_solve(C: BlockDiag, Y) -> np.ndarray:
    """``C^{-1} Y`` computed one block at a time."""
    return C.factor().solve(Y)


def write_matrix_market(A: SymSparse, fh) -> None:
    """Write ``A`` in MatrixMarket coordinate symmetric format (1-based, lower)."""
    r, c, v = A.triplets()
    fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
    fh.write(f"{A.n} {A.n} {r.size}\n")
    for i, j, x in sorted(zip(c, r, v)):
        fh.write(f"{i + 1} {j + 1} {float(x)!r}\n")


def read_matrix_market(fh) -> SymSparse:
    header = fh.readline()
    if not header.startswith("%%MatrixMarket"):
        raise InputError("missing MatrixMarket banner")
    line = fh.readline()
    while line.startswith("%"):
        line = fh.readline()
    n, _, nnz = (int(t) for t in line.split())
    rows, cols, vals = [], [], []
    for _ in range(nnz):
        i, j, x = fh.readline().split()
        rows.append(int(i) - 1)
        cols.append(int(j) - 1)
        vals.append(float(x))
    return SymSparse(n, rows, cols, vals)
