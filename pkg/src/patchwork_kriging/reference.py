"""Dense, deliberately naive oracles for small problems.

Nothing here exploits sparsity.  The augmented joint covariance is built
from scratch by expanding every entry of ``(f_*, y, delta)`` as a linear
combination of local-process evaluations ("atoms") and summing kernel values
over shared regions, so it does not reuse the sign bookkeeping of
:mod:`patchwork_kriging.model`.  Diagonal conventions do match the model:
data blocks get ``noise_var`` (or ``1e-8 * tau`` when that is zero) and the
pseudo-observation block gets ``delta_rel * (tau_k + tau_l) / 2``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import InputError, SizeError
from .kernels import HyperParams, KernelSpec

#: Guardrail on the number of training points for :func:`exact_gp_predict`.
MAX_EXACT_N = 5000
#: Guardrail on ``N + n_delta`` for the augmented-joint routines.
MAX_JOINT_DIM = 2000

LOG_2PI = np.log(2.0 * np.pi)


def _points(X, d=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if d in (None, 1) else X.reshape(1, -1)
    if d is not None and X.shape[1] != d:
        raise InputError(f"expected {d}-dimensional points, got {X.shape[1]}")
    return X


def exact_gp_predict(spec: KernelSpec, X, y, X_star, center: bool = True, max_n: int = MAX_EXACT_N):
    """Full GP posterior mean and variance at ``X_star``.

    Parameters
    ----------
    spec : KernelSpec
    X : (N, d) array
    y : (N,) array
    X_star : (T, d) array
    center : bool
        Subtract the sample mean of ``y`` before conditioning and add it
        back afterwards (zero-mean prior on the residual).  With
        ``center=False`` the prior mean is exactly zero.
    max_n : int
        Refuse to run above this many training points.

    Returns
    -------
    mean, var : (T,) arrays
    """
    y = np.asarray(y, dtype=float).ravel()
    X = _points(X) if y.size else np.zeros((0, _points(X_star).shape[1]))
    X_star = _points(X_star, X.shape[1])
    N = y.size
    if X.shape[0] != N:
        raise InputError(f"X has {X.shape[0]} rows but y has {N} values")
    if N > max_n:
        raise SizeError(f"exact GP limited to {max_n} points, got {N}")
    mu = float(np.mean(y)) if (center and N) else 0.0
    if N == 0:
        return np.full(X_star.shape[0], mu), spec.diag(X_star)
    C = spec.cross_cov(X, X)
    C[np.diag_indices_from(C)] += spec.nugget
    c = spec.cross_cov(X, X_star)
    cf = linalg.cho_factor(C, lower=True, check_finite=False)
    mean = mu + c.T @ linalg.cho_solve(cf, y - mu, check_finite=False)
    w = linalg.solve_triangular(cf[0], c, lower=True, check_finite=False)
    var = spec.diag(X_star) - np.einsum("ij,ij->j", w, w)
    return mean, var


def naive_gp_predict(spec: KernelSpec, X, y, X_star, center: bool = True):
    """Textbook conditioning with an explicit matrix inverse (test oracle only)."""
    X, X_star = _points(X), _points(X_star)
    y = np.asarray(y, dtype=float)
    mu = float(np.mean(y)) if center else 0.0
    Kinv = np.linalg.inv(spec.cross_cov(X, X) + spec.nugget * np.eye(len(y)))
    c = spec.cross_cov(X, X_star)
    mean = mu + c.T @ Kinv @ (y - mu)
    var = np.array([spec.tau - c[:, j] @ Kinv @ c[:, j] for j in range(c.shape[1])])
    return mean, var


# ---------------------------------------------------------------------------
# atom expansion of the augmented joint


def _atoms(tree, bset, X):
    """One list of ``(region, point, coefficient)`` per entry of ``(y, delta)``.

    Data entries come in region order (``tree.members``) and pseudo entries
    in ``bset`` order.  Returns the atom lists, the row order of ``y`` and
    the number of data entries.
    """
    X = _points(X, tree.dim)
    entries, order = [], []
    for k in range(tree.n_regions):
        idx = tree.members(k)
        order.append(idx)
        entries.extend([[(k, X[i], 1.0)] for i in idx])
    for p, (k, l) in zip(bset.points, bset.pairs):
        entries.append([(int(k), p, 1.0), (int(l), p, -1.0)])
    order = np.concatenate(order) if order else np.zeros(0, dtype=int)
    return entries, order


def _cov(hp, atoms_a, atoms_b):
    total = 0.0
    for ra, pa, ca in atoms_a:
        for rb, pb, cb in atoms_b:
            if ra == rb:
                total += ca * cb * hp[ra].eval(pa, pb)
    return total


def _joint(tree, bset, hp, X, delta_rel):
    entries, order = _atoms(tree, bset, X)
    n = len(entries)
    if n > MAX_JOINT_DIM:
        raise SizeError(f"dense augmented joint limited to dimension {MAX_JOINT_DIM}, got {n}")
    N = order.size
    S = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            S[i, j] = S[j, i] = _cov(hp, entries[i], entries[j])
    for i in range(N):
        S[i, i] += hp[entries[i][0][0]].nugget
    for i in range(N, n):
        (k, _, _), (l, _, _) = entries[i]
        S[i, i] += delta_rel * 0.5 * (hp[k].tau + hp[l].tau)
    return S, entries, order


def augmented_joint(tree, bset, hyperparams, X, delta_rel: float = 0.0) -> np.ndarray:
    """Dense covariance of ``(y, delta)``, data in region order then pseudo rows."""
    return _joint(tree, bset, _hp(hyperparams), X, delta_rel)[0]


def _hp(h) -> HyperParams:
    if isinstance(h, HyperParams):
        return h
    if isinstance(h, KernelSpec):
        return HyperParams(h)
    return HyperParams(list(h))


def _target_cov(hp, entries, X_star, regions):
    """Covariances of ``f_{regions[j]}(X_star[j])`` with every joint entry."""
    A = np.empty((len(entries), X_star.shape[0]))
    for j, (x, k) in enumerate(zip(X_star, regions)):
        star = [(int(k), x, 1.0)]
        A[:, j] = [_cov(hp, e, star) for e in entries]
    return A


def dense_augmented_predict(
    tree, bset, hyperparams, X, y, X_star, regions=None, delta_rel: float = 0.0, order: str = "joint"
):
    """Condition ``f_k(x*)`` on ``y`` and ``delta = 0`` with dense algebra.

    Parameters
    ----------
    regions : int array, optional
        Which local process to predict; defaults to routing ``X_star``.
    delta_rel : float
        Relative jitter on the pseudo-observation diagonal (match the model's
        ``delta_rel``).
    order : {"joint", "reverse"}
        ``"joint"`` conditions on ``(y, delta)`` in one Cholesky solve;
        ``"reverse"`` first conditions ``(f_*, delta)`` on ``y`` and then the
        result on ``delta = 0``.
    """
    hp = _hp(hyperparams)
    hp.check(tree.n_regions)
    X = _points(X, tree.dim)
    y = np.asarray(y, dtype=float).ravel()
    X_star = _points(X_star, tree.dim)
    if regions is None:
        regions = tree.route(X_star)
    regions = np.broadcast_to(np.asarray(regions, dtype=int), (X_star.shape[0],))
    Sigma, entries, row_order = _joint(tree, bset, hp, X, delta_rel)
    mu = float(np.mean(y))
    N = row_order.size
    z = np.concatenate([y[row_order] - mu, np.zeros(len(entries) - N)])
    A = _target_cov(hp, entries, X_star, regions)
    prior = np.array([hp[k].tau for k in regions])
    if order == "joint":
        cf = linalg.cho_factor(Sigma, lower=True, check_finite=False)
        mean = A.T @ linalg.cho_solve(cf, z, check_finite=False)
        W = linalg.solve_triangular(cf[0], A, lower=True, check_finite=False)
        var = prior - np.einsum("ij,ij->j", W, W)
    elif order == "reverse":
        D, P = slice(0, N), slice(N, None)
        cf = linalg.cho_factor(Sigma[D, D], lower=True, check_finite=False)
        Ky = linalg.cho_solve(cf, Sigma[D, P], check_finite=False)
        Ka = linalg.cho_solve(cf, A[D], check_finite=False)
        # moments of (f_*, delta) given y
        m_star = A[D].T @ linalg.cho_solve(cf, z[D], check_finite=False)
        m_delta = Sigma[P, D] @ linalg.cho_solve(cf, z[D], check_finite=False)
        C_dd = Sigma[P, P] - Sigma[P, D] @ Ky
        C_sd = A[P].T - A[D].T @ Ky
        C_ss = prior - np.einsum("ij,ij->j", A[D], Ka)
        if C_dd.shape[0]:
            gf = linalg.cho_factor(C_dd, lower=True, check_finite=False)
            mean = m_star + C_sd @ linalg.cho_solve(gf, -m_delta, check_finite=False)
            W = linalg.solve_triangular(gf[0], C_sd.T, lower=True, check_finite=False)
            var = C_ss - np.einsum("ij,ij->j", W, W)
        else:
            mean, var = m_star, C_ss
    else:
        raise InputError(f"order must be 'joint' or 'reverse', got {order!r}")
    return mean + mu, var


def algorithm_predict(tree, bset, hyperparams, X, y, X_star, regions=None, delta_rel: float = 0.0):
    """Literal dense version of the precompute-then-predict recipe.

    ``Q`` is formed explicitly as ``C_DD^{-1} + C_DD^{-1} C S^{-1} C^T C_DD^{-1}``,
    ``L = chol(C_dd)``, ``V = L^{-1} C^T`` and ``w_* = L^{-1} c_{*d}``; then
    ``mean = (c_{*D} - w_*^T V) Q y`` and
    ``var = c_{**} - w_*^T w_* - (c_{*D} - w_*^T V) Q (c_{*D} - w_*^T V)^T``.
    """
    hp = _hp(hyperparams)
    X = _points(X, tree.dim)
    y = np.asarray(y, dtype=float).ravel()
    X_star = _points(X_star, tree.dim)
    if regions is None:
        regions = tree.route(X_star)
    regions = np.broadcast_to(np.asarray(regions, dtype=int), (X_star.shape[0],))
    Sigma, entries, row_order = _joint(tree, bset, hp, X, delta_rel)
    N = row_order.size
    mu = float(np.mean(y))
    yc = y[row_order] - mu
    C_DD, C, C_dd = Sigma[:N, :N], Sigma[:N, N:], Sigma[N:, N:]
    A = _target_cov(hp, entries, X_star, regions)
    c_D, c_d = A[:N], A[N:]
    C_DD_inv = np.linalg.inv(C_DD)
    prior = np.array([hp[k].tau for k in regions])
    if C_dd.shape[0] == 0:
        Q = C_DD_inv
        r = c_D.T
        return mu + r @ Q @ yc, prior - np.einsum("ij,jk,ik->i", r, Q, r)
    S = C_dd - C.T @ C_DD_inv @ C
    Q = C_DD_inv + C_DD_inv @ C @ np.linalg.inv(S) @ C.T @ C_DD_inv
    L = np.linalg.cholesky(C_dd)
    V = linalg.solve_triangular(L, C.T, lower=True)
    w = linalg.solve_triangular(L, c_d, lower=True)
    r = c_D.T - w.T @ V
    mean = mu + r @ Q @ yc
    var = prior - np.einsum("ij,ij->j", w, w) - np.einsum("ij,jk,ik->i", r, Q, r)
    return mean, var


def dense_nl(tree, bset, hyperparams, X, y, delta_rel: float = 0.0) -> float:
    """Negative log density of the joint Gaussian at ``(y - mean(y), 0)``.

    Returns ``inf`` when the joint covariance is not positive definite.
    """
    hp = _hp(hyperparams)
    Sigma, entries, row_order = _joint(tree, bset, hp, _points(X, tree.dim), delta_rel)
    y = np.asarray(y, dtype=float).ravel()
    n = len(entries)
    z = np.concatenate([y[row_order] - np.mean(y), np.zeros(n - row_order.size)])
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return float("inf")
    u = linalg.solve_triangular(L, z, lower=True)
    return float(0.5 * n * LOG_2PI + np.sum(np.log(np.diag(L))) + 0.5 * u @ u)
