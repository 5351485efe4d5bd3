import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import rel_err, toy_data
from patchwork_kriging import reference
from patchwork_kriging.errors import ConfigurationError, FitError, InputError, StateError
from patchwork_kriging.kernels import HyperParams, KernelSpec
from patchwork_kriging.model import (
    PatchworkModel,
    assemble,
    factorize,
    fit,
    predict,
    predict_on_boundary,
)
from patchwork_kriging.partition import BoundarySet, SpatialTree, build_tree, place_pseudo_points


def hetero(K):
    """Distinct kernels per region so sign or region mix-ups change values."""
    return HyperParams([KernelSpec("se", 1.0 + k, 0.8 + 0.3 * k, 0.1 * (k + 1)) for k in range(K)])


@pytest.fixture(scope="module")
def small():
    X, y = toy_data(60, seed=1)
    spec = KernelSpec("se", 2.0, 1.5, 0.05)
    return X, y, spec, fit(X, y, 4, 3, spec, 7)


class TestAssemble:
    def test_delta_diagonal_is_sum_of_region_variances(self):
        X, y = toy_data(80, seed=2)
        tree = build_tree(X, 4)
        bset = place_pseudo_points(tree, 3, 0)
        hp = hetero(4)
        D = assemble(tree, bset, hp, X, y).delta.to_dense()
        for i, (k, l) in enumerate(bset.pairs):
            assert D[i, i] == pytest.approx(hp[k].tau + hp[l].tau, rel=1e-14)

    def test_disjoint_pairs_uncorrelated(self):
        X, y = toy_data(200, seed=3)
        tree = build_tree(X, 8)
        bset = place_pseudo_points(tree, 3, 1)
        D = assemble(tree, bset, hetero(8), X, y).delta.to_dense()
        for i, (k, l) in enumerate(bset.pairs):
            for j, (u, v) in enumerate(bset.pairs):
                if not {k, l} & {u, v}:
                    assert D[i, j] == 0.0

    def test_sign_table(self):
        X, y = toy_data(120, seed=4)
        tree = build_tree(X, 4)
        bset = place_pseudo_points(tree, 4, 2)
        hp = hetero(4)
        D = assemble(tree, bset, hp, X, y).delta.to_dense()
        P = bset.points
        for i, (k, l) in enumerate(bset.pairs):
            for j, (u, v) in enumerate(bset.pairs):
                c = lambda r: hp[r].eval(P[i], P[j])  # noqa: E731
                if (k, l) == (u, v):
                    want = c(k) + c(l)
                elif k == u:
                    want = c(k)
                elif l == v:
                    want = c(l)
                elif k == v:
                    want = -c(k)
                elif l == u:
                    want = -c(l)
                else:
                    want = 0.0
                assert D[i, j] == pytest.approx(want, rel=1e-13, abs=1e-15)

    def test_cross_block_signs(self):
        X, y = toy_data(80, seed=5)
        tree = build_tree(X, 4)
        bset = place_pseudo_points(tree, 3, 3)
        hp = hetero(4)
        aug = assemble(tree, bset, hp, X, y)
        C = aug.cross_dense()
        off = aug.data_blocks.offsets
        for k, reg in enumerate(aug.regions):
            for j, (u, v) in enumerate(bset.pairs):
                col = C[off[k]:off[k + 1], j]
                base = hp[k].cross_cov(reg.X, bset.points[j:j + 1])[:, 0]
                want = base if k == u else (-base if k == v else 0.0 * base)
                assert_allclose(col, want, rtol=1e-14)

    def test_matches_atom_expansion(self):
        X, y = toy_data(30, seed=6)
        tree = build_tree(X, 2)
        bset = place_pseudo_points(tree, 3, 4)
        hp = hetero(2)
        dense = assemble(tree, bset, hp, X, y).to_dense()
        assert_allclose(dense, reference.augmented_joint(tree, bset, hp, X), rtol=1e-13, atol=1e-15)

    def test_data_block_nugget(self):
        X, y = toy_data(40, seed=7)
        tree = build_tree(X, 2)
        spec = KernelSpec("exp", 3.0, 1.0, 0.0)
        aug = assemble(tree, BoundarySet.empty(2), spec, X, y)
        assert_allclose(np.diag(aug.data_blocks.block(0)), 3.0 + 3e-8)

    def test_empty_region(self):
        X, y = toy_data(40, seed=8)
        tree = build_tree(X, 2)
        lopsided = SpatialTree.from_dict(tree.to_dict(), X[tree.labels == 0])
        with pytest.raises((ConfigurationError, InputError)):
            assemble(lopsided, BoundarySet.empty(2), KernelSpec(), X[tree.labels == 0], y[tree.labels == 0])
        lopsided.labels = np.zeros(40, dtype=int)
        with pytest.raises(ConfigurationError):
            assemble(lopsided, BoundarySet.empty(2), KernelSpec(), X, y)

    def test_wrong_kernel_count(self):
        X, y = toy_data(40, seed=8)
        tree = build_tree(X, 4)
        with pytest.raises(ConfigurationError):
            assemble(tree, BoundarySet.empty(2), hetero(3), X, y)

    def test_schur_sparsity(self):
        X, y = toy_data(400, seed=9)
        tree = build_tree(X, 16)
        bset = place_pseudo_points(tree, 3, 5)
        fac = factorize(assemble(tree, bset, KernelSpec("se", 1.0, 1.0, 0.1), X, y))
        S = fac.schur_matrix.to_dense()
        for i, (k, l) in enumerate(bset.pairs):
            for j, (u, v) in enumerate(bset.pairs):
                if not {k, l} & {u, v}:
                    assert S[i, j] == 0.0
        assert fac.schur.bandwidth <= fac.schur_matrix.n


class TestReductions:
    @pytest.mark.parametrize("fam", ["se", "exp"])
    def test_single_region_is_exact_gp(self, fam):
        X, y = toy_data(150, seed=10)
        spec = KernelSpec(fam, 2.0, 1.2, 0.1)
        Xs = np.random.default_rng(10).uniform(0, 10, (40, 2))
        p = fit(X, y, 1, 5, spec, 0).predict(Xs)
        m, v = reference.exact_gp_predict(spec, X, y, Xs)
        assert rel_err(p.mean, m) <= 1e-8
        assert rel_err(p.var, v) <= 1e-8

    def test_zero_b_is_independent_locals(self):
        X, y = toy_data(200, seed=11)
        spec = KernelSpec("se", 2.0, 1.0, 0.1)
        model = fit(X, y, 4, 0, spec, 0)
        Xs = np.random.default_rng(11).uniform(0, 10, (50, 2))
        p = model.predict(Xs)
        for k in range(4):
            sel = p.region == k
            idx = model.tree.members(k)
            m, v = reference.exact_gp_predict(spec, X[idx], y[idx] - y.mean(), Xs[sel], center=False)
            assert_allclose(p.mean[sel], m + y.mean(), rtol=1e-10)
            assert_allclose(p.var[sel], v, rtol=1e-10, atol=1e-12)

    def test_noiseless_interpolation(self):
        X = np.arange(10.0)[:, None]
        y = np.sin(X[:, 0])
        spec = KernelSpec("se", 1.0, 0.5, 0.0)
        p = fit(X, y, 1, 0, spec, 0, min_leaf_size=1).predict(X[3:4])
        assert p.mean[0] == pytest.approx(y[3], abs=1e-7)
        assert abs(p.var[0]) <= 1e-8


class TestOracle:
    def test_small_instance(self, small):
        X, y, spec, model = small
        Xs = np.random.default_rng(12).uniform(0, 10, (20, 2))
        p = model.predict(Xs)
        m, v = reference.dense_augmented_predict(model.tree, model.bset, spec, X, y, Xs)
        assert rel_err(p.mean, m) <= 1e-8
        assert rel_err(p.var, v) <= 1e-8

    def test_both_sides_match_oracle(self, small):
        X, y, spec, model = small
        Xs = np.random.default_rng(13).uniform(0, 10, (12, 2))
        for k in range(4):
            p = model.predict(Xs, regions=k)
            m, v = reference.dense_augmented_predict(model.tree, model.bset, spec, X, y, Xs, regions=k)
            assert rel_err(p.mean, m) <= 1e-8 and rel_err(p.var, v) <= 1e-8

    def test_heterogeneous_kernels(self):
        X, y = toy_data(160, seed=14)
        hp = hetero(4)
        model = fit(X, y, 4, 4, hp, 2)
        Xs = np.random.default_rng(14).uniform(0, 10, (25, 2))
        p = model.predict(Xs)
        m, v = reference.dense_augmented_predict(model.tree, model.bset, hp, X, y, Xs)
        assert rel_err(p.mean, m) <= 1e-8 and rel_err(p.var, v) <= 1e-8

    @settings(max_examples=12, deadline=None)
    @given(
        st.sampled_from([40, 90, 150]),
        st.sampled_from([2, 4]),
        st.sampled_from([0, 1, 3, 5]),
        st.sampled_from(["se", "exp"]),
        st.integers(0, 2**31),
    )
    def test_oracle_property(self, N, K, B, fam, seed):
        X, y = toy_data(N, seed=seed % 1000)
        spec = KernelSpec(fam, 10.0, 1.0, 1.0)
        model = fit(X, y, K, B, spec, seed)
        Xs = np.random.default_rng(seed).uniform(0, 10, (15, 2))
        p = model.predict(Xs)
        m, v = reference.dense_augmented_predict(
            model.tree, model.bset, spec, X, y, Xs, delta_rel=model.delta_rel
        )
        assert rel_err(p.mean, m) <= 1e-8 and rel_err(p.var, v) <= 1e-8


class TestWoodbury:
    def test_q_operator_equals_direct_inverse(self, small):
        X, y, spec, model = small
        fac = model.factorization
        aug = fac.aug
        N = aug.n_data
        off = aug.data_blocks.offsets
        E = np.eye(N)
        cols = []
        for j in range(N):
            alpha, _ = fac.solve_data([E[off[k]:off[k + 1], j] for k in range(len(off) - 1)])
            cols.append(np.concatenate(alpha))
        Q = np.column_stack(cols)
        C = aug.cross_dense()
        direct = np.linalg.inv(aug.data_blocks.to_dense() - C @ np.linalg.solve(aug.delta.to_dense(), C.T))
        assert np.linalg.norm(Q - direct) <= 1e-8 * np.linalg.norm(direct)
        assert_allclose(Q, Q.T, rtol=1e-9, atol=1e-12)
        probes = np.random.default_rng(0).normal(size=(N, 10))
        assert np.all(np.einsum("ij,ij->j", probes, Q @ probes) > 0)

    def test_logdet_split(self, small):
        X, y, spec, model = small
        ld_blocks, ld_schur = model.factorization.logdet()
        full = model.factorization.aug.to_dense()
        assert ld_blocks + ld_schur == pytest.approx(np.linalg.slogdet(full)[1], rel=1e-10)

    def test_beta_equals_t(self, small):
        _, _, _, model = small
        assert_allclose(model.beta, model.t, rtol=1e-6, atol=1e-8 * np.abs(model.t).max())


class TestBoundary:
    def test_sides_agree_at_pseudo_points(self):
        X, y = toy_data(400, seed=15)
        spec = KernelSpec("se", 10.0, 1.0, 1.0)
        model = fit(X, y, 8, 5, spec, 1)
        bp = model.predict_on_boundary(model.bset.points)
        assert np.all(np.abs(bp.mean_k - bp.mean_l) <= 1e-6 * (1 + np.abs(bp.mean_k)))
        assert np.all(np.abs(bp.var_k - bp.var_l) <= 1e-6 * (1 + bp.var_k))
        assert_array_equal(bp.pairs, model.bset.pairs)
        assert_array_equal(bp.mean, bp.mean_k)

    def test_zero_b_sides_differ(self):
        X, y = toy_data(200, seed=16)
        spec = KernelSpec("se", 2.0, 1.0, 0.1)
        ref_model = fit(X, y, 4, 3, spec, 0)
        model = PatchworkModel.from_partition(ref_model.tree, BoundarySet.empty(2), spec, X, y)
        bp = model.predict_on_boundary(ref_model.bset.points)
        assert np.max(np.abs(bp.mean_k - bp.mean_l)) > 1e-3
        assert_array_equal(bp.mean, bp.mean_k)

    def test_off_boundary_rejected(self, small):
        _, _, _, model = small
        with pytest.raises(InputError):
            model.predict_on_boundary(model.X[:3])

    def test_wrappers(self, small):
        _, _, _, model = small
        assert_allclose(predict(model, model.X[:4]).mean, model.predict(model.X[:4]).mean)
        predict_on_boundary(model, model.bset.points[:2])
        with pytest.raises(StateError):
            predict(None, model.X[:4])
        with pytest.raises(StateError):
            predict_on_boundary("model", model.X[:4])


class TestPredict:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from(["se", "exp"]), st.sampled_from([0, 2, 5]))
    def test_variance_bounds(self, seed, fam, B):
        X, y = toy_data(120, seed=seed % 997)
        spec = KernelSpec(fam, 3.0, 0.7, 0.01)
        model = fit(X, y, 4, B, spec, seed)
        Xs = np.vstack([np.random.default_rng(seed).uniform(-1, 11, (40, 2)), X[:10], model.bset.points])
        p = model.predict(Xs)
        assert np.all(p.var >= 0.0)
        assert np.all(p.var <= spec.tau + 1e-8)

    def test_chunking_and_jobs_do_not_change_results(self, small):
        X, y, spec, model = small
        Xs = np.random.default_rng(17).uniform(0, 10, (30, 2))
        a = model.predict(Xs)
        b = model.predict(Xs, chunk=7)
        c = fit(X, y, 4, 3, spec, 7, n_jobs=2).predict(Xs)
        assert_allclose(b.mean, a.mean, rtol=1e-13)
        assert_allclose(c.mean, a.mean, rtol=0)
        assert_allclose(c.var, a.var, rtol=0)

    def test_input_checks(self, small):
        _, _, _, model = small
        with pytest.raises(InputError):
            model.predict(np.zeros((2, 3)))
        with pytest.raises(InputError):
            model.predict(np.zeros((2, 2)), regions=9)
        with pytest.raises(InputError):
            fit(np.zeros((10, 2)), np.zeros(9), 1, 0, KernelSpec(), 0)
        with pytest.raises(InputError):
            fit(np.full((10, 1), np.nan), np.zeros(10), 1, 0, KernelSpec(), 0)

    def test_single_point_input(self, small):
        _, _, _, model = small
        p = model.predict(np.array([5.0, 5.0]))
        assert p.mean.shape == (1,)

    def test_constant_response(self):
        X, _ = toy_data(80, seed=18)
        model = fit(X, np.full(80, 3.0), 4, 3, KernelSpec("se", 1.0, 1.0, 0.1), 0)
        assert_allclose(model.predict(X[:5]).mean, 3.0, atol=1e-12)

    def test_timings_recorded(self, small):
        _, _, _, model = small
        assert {"partition", "assembly", "factorization"} <= set(model.timings)


class TestDeterminismAndPersistence:
    def test_bit_identical_refit(self):
        X, y = toy_data(150, seed=19)
        spec = KernelSpec("exp", 2.0, 1.0, 0.1)
        assert fit(X, y, 4, 3, spec, 5).to_bytes() == fit(X, y, 4, 3, spec, 5).to_bytes()

    def test_round_trip(self, small, tmp_path):
        X, y, spec, model = small
        path = tmp_path / "m.pwk"
        model.save(path)
        back = PatchworkModel.load(path)
        Xs = np.random.default_rng(20).uniform(0, 10, (25, 2))
        a, b = model.predict(Xs), back.predict(Xs)
        assert_allclose(b.mean, a.mean, rtol=0, atol=0)
        assert_allclose(b.var, a.var, rtol=0, atol=0)
        assert back.hyperparams == model.hyperparams
        assert back.to_bytes() == model.to_bytes()

    def test_rejects_foreign_bytes(self):
        with pytest.raises(InputError):
            PatchworkModel.from_bytes(b"not a model")


class TestJitterLadder:
    def test_duplicate_pseudo_points_escalate(self):
        X, y = toy_data(100, seed=21)
        spec = KernelSpec("se", 1.0, 1.0, 1e-6)
        tree = build_tree(X, 2)
        base = place_pseudo_points(tree, 3, 0)
        dup = BoundarySet(
            np.vstack([base.points, base.points[:1]]),
            np.vstack([base.pairs, base.pairs[:1]]),
            np.concatenate([base.nodes, base.nodes[:1]]),
        )
        model = PatchworkModel.from_partition(tree, dup, spec, X, y)
        assert model.delta_rel > 0
        Xs = np.random.default_rng(21).uniform(0, 10, (10, 2))
        p = model.predict(Xs)
        m, v = reference.dense_augmented_predict(tree, dup, spec, X, y, Xs, delta_rel=model.delta_rel)
        assert rel_err(p.mean, m) <= 1e-6

    def test_default_has_no_delta_jitter(self, small):
        assert small[3].delta_rel == 0.0

    def test_data_block_failure_is_fit_error(self, monkeypatch):
        X, y = toy_data(40, seed=22)
        from patchwork_kriging.model import DataBlocks

        calls = {"n": 0}

        def indefinite(self, k):
            calls["n"] += 1
            return -np.eye(self.sizes[k])

        monkeypatch.setattr(DataBlocks, "block", indefinite)
        with pytest.raises(FitError, match="block 0"):
            fit(X, y, 2, 2, KernelSpec(), 0)
        assert calls["n"] == 1  # no jitter escalation for data blocks


class TestFactorCache:
    def test_uncached_matches_cached(self):
        X, y = toy_data(200, seed=23)
        spec = KernelSpec("exp", 2.0, 1.0, 0.1)
        tree = build_tree(X, 8)
        bset = place_pseudo_points(tree, 3, 0)
        full = PatchworkModel.from_partition(tree, bset, spec, X, y)
        lean = PatchworkModel.from_partition(tree, bset, spec, X, y, cache_bytes=0)
        assert lean.factorization.cache.nbytes == 0
        Xs = np.random.default_rng(23).uniform(0, 10, (40, 2))
        a, b = full.predict(Xs), lean.predict(Xs)
        assert_array_equal(a.mean, b.mean)
        assert_array_equal(a.var, b.var)
        assert full.to_bytes() == lean.to_bytes()

    def test_partial_budget(self):
        X, y = toy_data(200, seed=24)
        model = fit(X, y, 4, 2, KernelSpec(), 0)
        size = model.factorization.cache.nbytes // 4
        tree, bset = model.tree, model.bset
        part = PatchworkModel.from_partition(tree, bset, KernelSpec(), X, y, cache_bytes=2 * size + 10)
        assert len(part.factorization.cache.items) == 2
        assert_array_equal(part.predict(X[:20]).mean, model.predict(X[:20]).mean)
