import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from patchwork_kriging.errors import ConfigurationError, InputError
from patchwork_kriging.kernels import Family, HyperParams, KernelSpec, cross_cov, delta_jitter

finite = st.floats(-50, 50, allow_nan=False)
families = st.sampled_from(["se", "exp"])
positive = st.floats(1e-3, 1e3)


class TestEval:
    def test_zero_distance_is_tau(self):
        assert KernelSpec("se", 10.0, 1.0).eval([3.7], [3.7]) == 10.0

    def test_exponential_unit_distance(self):
        # 10 * exp(-1) by hand
        assert KernelSpec("exp", 10.0, 1.0).eval([0.0], [1.0]) == pytest.approx(3.6787944117144233, rel=1e-15)

    def test_squared_exponential_value(self):
        v = KernelSpec("se", 2.0, 0.5).eval([0.0, 0.0], [0.3, 0.4])
        assert v == pytest.approx(2.0 * math.exp(-0.25 / (2 * 0.25)))

    def test_far_field_underflows(self):
        v = KernelSpec("se", 10.0, 0.1).eval([0.0, 0.0], [5.0, 5.0])
        assert 0.0 <= v < 1e-300

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            KernelSpec().eval([0.0, 1.0], [0.0])

    @given(families, positive, positive, st.lists(finite, min_size=2, max_size=2),
           st.lists(finite, min_size=2, max_size=2))
    def test_symmetric_and_bounded(self, fam, tau, rho, a, b):
        spec = KernelSpec(fam, tau, rho)
        v = spec.eval(a, b)
        assert v == spec.eval(b, a)
        assert 0.0 <= v <= tau

    @given(families, positive, st.floats(0.0, 10.0), st.floats(0.0, 10.0))
    def test_monotone_in_distance(self, fam, rho, r1, r2):
        spec = KernelSpec(fam, 1.0, rho)
        lo, hi = sorted([r1, r2])
        assert spec.eval([0.0], [lo]) >= spec.eval([0.0], [hi])


class TestValidation:
    @pytest.mark.parametrize("kw", [dict(tau=0.0), dict(rho=-1.0), dict(noise_var=-1e-3), dict(tau=np.inf)])
    def test_rejects_bad_parameters(self, kw):
        with pytest.raises(InputError):
            KernelSpec("se", **kw)

    def test_family_aliases(self):
        assert Family.parse("RBF") is Family.SquaredExponential
        assert Family.parse("exponential") is Family.Exponential
        with pytest.raises(InputError):
            Family.parse("matern")

    def test_nugget_falls_back_to_jitter(self):
        assert KernelSpec("se", 4.0, 1.0, 0.0).nugget == pytest.approx(4e-8)
        assert KernelSpec("se", 4.0, 1.0, 0.5).nugget == 0.5

    def test_delta_jitter(self):
        a, b = KernelSpec("se", 2.0), KernelSpec("se", 4.0)
        assert delta_jitter(a, b) == pytest.approx(3e-8)
        assert delta_jitter(a, b, rel=1e-12) == pytest.approx(3e-12)


class TestCrossCov:
    def test_single_point(self):
        assert_allclose(cross_cov(KernelSpec("se", 10.0), [[1.0, 2.0]], [[1.0, 2.0]]), [[10.0]])

    def test_duplicate_inputs_rank_one(self):
        C = KernelSpec("se", 10.0).cross_cov([[1.0], [1.0]], [[1.0], [1.0]])
        assert_allclose(C, np.full((2, 2), 10.0))
        assert np.linalg.matrix_rank(C) == 1

    @pytest.mark.parametrize("fam", ["se", "exp"])
    def test_matches_entrywise_loop(self, fam):
        rng = np.random.default_rng(1)
        X1, X2 = rng.normal(size=(5, 2)), rng.normal(size=(3, 2))
        spec = KernelSpec(fam, 3.0, 0.7)
        loop = np.array([[spec.eval(a, b) for b in X2] for a in X1])
        assert_allclose(spec.cross_cov(X1, X2), loop, rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            KernelSpec().cross_cov(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_empty(self):
        assert KernelSpec().cross_cov(np.zeros((0, 2)), np.zeros((3, 2))).shape == (0, 3)

    @settings(max_examples=30, deadline=None)
    @given(families, st.integers(1, 40), st.integers(1, 3), st.integers(0, 2**31))
    def test_jittered_gram_is_positive_definite(self, fam, n, d, seed):
        spec = KernelSpec(fam, 10.0, 1.0)
        X = np.random.default_rng(seed).uniform(0, 3, (n, d))
        X = np.vstack([X, X[:1]])  # include an exact duplicate
        C = spec.cross_cov(X, X)
        assert_allclose(C, C.T)
        np.linalg.cholesky(C + spec.jitter * np.eye(len(X)))


class TestSerialization:
    def test_json_round_trip(self):
        spec = KernelSpec("exp", 10.0, 0.3, 1.5)
        d = json.loads(spec.to_json())
        assert set(d) == {"family", "tau", "rho", "noise_var"}
        assert KernelSpec.from_json(spec.to_json()) == spec

    def test_missing_field(self):
        with pytest.raises(InputError):
            KernelSpec.from_dict({"family": "se", "tau": 1.0})

    def test_log_round_trip(self):
        spec = KernelSpec("se", 10.0, 0.3, 1.5)
        assert_allclose(spec.to_log(), np.log([10.0, 0.3, 1.5]))
        back = spec.from_log(spec.to_log())
        assert back.tau == pytest.approx(10.0) and back.noise_var == pytest.approx(1.5)
        assert spec.from_log(spec.to_log(with_noise=False)).noise_var == 1.5


class TestHyperParams:
    def test_shared(self):
        hp = HyperParams(KernelSpec("se", 10.0))
        assert hp.shared and hp[5].tau == 10.0
        assert hp.expand(3) == [hp[0]] * 3

    def test_length_must_match(self):
        hp = HyperParams([KernelSpec(), KernelSpec()])
        hp.check(2)
        with pytest.raises(ConfigurationError):
            hp.check(4)

    def test_rejects_non_specs(self):
        with pytest.raises(InputError):
            HyperParams([])
        with pytest.raises(InputError):
            HyperParams(["se"])

    def test_list_round_trip(self):
        hp = HyperParams([KernelSpec("se", 1.0), KernelSpec("exp", 2.0, 3.0, 0.1)])
        assert HyperParams.from_list(hp.to_list()) == hp
