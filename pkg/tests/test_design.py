import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linmed.design import (
    Design,
    approx_design,
    bh_spanner,
    bh_spanner_reference,
    design_augmented,
    design_cap,
)
from linmed.errors import DesignError, InvalidArgument

RTOL = 1e-9


def direct_leverages(A, probs):
    """a^T V(pi)^+ a by a dense pseudo-inverse, as an independent oracle."""
    V = (A * probs[:, None]).T @ A
    return np.einsum("ij,jk,ik->i", A, np.linalg.pinv(V, hermitian=True), A)


def ball(rng, K, d):
    X = rng.standard_normal((K, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X * rng.random((K, 1)) ** (1.0 / d)


class TestSpanner:
    def test_small_sets_return_everything(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        assert bh_spanner(A) == [0, 1, 2]

    def test_contains_basis(self):
        rng = np.random.default_rng(0)
        d = 5
        A = np.vstack([np.eye(d), 0.5 * ball(rng, 3 * d, d)])
        idx = bh_spanner(A)
        assert len(idx) <= 2 * d
        assert np.linalg.matrix_rank(A[idx]) == d

    def test_identical_arms(self):
        A = np.tile([0.3, 0.4, 0.0], (10, 1))
        assert bh_spanner(A) == [0]

    def test_rank_deficient_subspace(self):
        rng = np.random.default_rng(1)
        basis = np.linalg.qr(rng.standard_normal((6, 2)))[0].T  # 2-dim subspace of R^6
        A = rng.uniform(-0.4, 0.4, (30, 2)) @ basis
        idx = bh_spanner(A)
        assert len(idx) <= 4
        assert np.linalg.matrix_rank(A[idx], tol=1e-9) == 2

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            bh_spanner(np.zeros((0, 2)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2**31 - 1))
    def test_compiled_matches_reference(self, d, K, seed):
        A = ball(np.random.default_rng(seed), K, d)
        assert bh_spanner(A) == bh_spanner_reference(A)


class TestApproxDesign:
    def test_standard_basis(self):
        design, report = approx_design(np.eye(2))
        np.testing.assert_allclose(design.dense(), [0.5, 0.5])
        assert report.max_leverage == pytest.approx(2.0, rel=RTOL)

    def test_scaled_basis(self):
        design, report = approx_design(np.array([[0.3, 0.0], [0.0, 0.9]]))
        np.testing.assert_allclose(design.dense(), [0.5, 0.5])
        assert report.max_leverage == pytest.approx(2.0, rel=RTOL)

    def test_single_arm(self):
        design, report = approx_design(np.array([[0.6, 0.8]]))
        assert design.weights == {0: 1.0}
        assert report.tau == 1
        assert report.max_leverage == pytest.approx(1.0, rel=RTOL)
        assert report.effective_rank == 1

    @pytest.mark.parametrize("d", range(1, 9))
    def test_orthogonal_bases_are_uniform(self, d):
        rng = np.random.default_rng(d)
        Q = np.linalg.qr(rng.standard_normal((d, d)))[0]
        A = Q.T * rng.uniform(0.1, 1.0, (d, 1))
        design, report = approx_design(A)
        np.testing.assert_allclose(design.dense(), np.full(d, 1.0 / d), atol=1e-12)
        np.testing.assert_allclose(direct_leverages(A, design.dense()).max(), d, rtol=1e-9)
        assert report.max_leverage == pytest.approx(d, rel=RTOL)

    def test_certificate_against_dense_oracle(self):
        rng = np.random.default_rng(7)
        for d, K in [(2, 30), (4, 50), (7, 120), (10, 200)]:
            A = ball(rng, K, d)
            design, report = approx_design(A)
            lev = direct_leverages(A, design.dense())
            assert lev.max() <= report.tau * (1 + RTOL)
            assert report.max_leverage == pytest.approx(lev.max(), rel=1e-8)
            assert design.support_size <= report.tau <= design_cap(d)

    def test_compiled_matches_numpy(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            A = ball(rng, 60, 5)
            d1, r1 = approx_design(A)
            d2, r2 = approx_design(A, compiled=False)
            np.testing.assert_array_equal(r1.counts, r2.counts)
            assert r1.max_leverage == pytest.approx(r2.max_leverage, rel=1e-9)

    def test_scale_invariance(self):
        A = ball(np.random.default_rng(9), 40, 4)
        d1, r1 = approx_design(A)
        d2, r2 = approx_design(0.37 * A)
        np.testing.assert_array_equal(r1.counts, r2.counts)
        np.testing.assert_allclose(d1.dense(), d2.dense())

    def test_rank_deficient(self):
        rng = np.random.default_rng(10)
        basis = np.linalg.qr(rng.standard_normal((5, 3)))[0].T
        A = ball(rng, 25, 3) @ basis
        design, report = approx_design(A)
        assert report.effective_rank == 3
        lev = direct_leverages(A, design.dense())
        assert lev.max() <= report.tau * (1 + RTOL)
        assert report.max_leverage >= 3.0 * (1 - RTOL)  # no design beats the rank

    def test_all_zero(self):
        with pytest.raises(InvalidArgument):
            approx_design(np.zeros((3, 2)))

    def test_cap_exceeded(self):
        A = ball(np.random.default_rng(4), 50, 5)
        with pytest.raises(DesignError) as info:
            approx_design(A, cap=5)
        assert info.value.report.tau >= 5

    def test_cap_formula(self):
        assert design_cap(1) == 16
        assert design_cap(4) == math.ceil(64 * (1 + math.log(4)))

    def test_weights_sum_to_one(self):
        design, _ = approx_design(ball(np.random.default_rng(12), 80, 6))
        assert sum(design.weights.values()) == pytest.approx(1.0)
        assert isinstance(design, Design)


class TestAugmented:
    def test_unit_weights_match_plain_design(self):
        A = ball(np.random.default_rng(13), 20, 3)
        plain, _ = approx_design(A)
        aug = design_augmented(A, np.ones(20), ver=0)
        np.testing.assert_allclose(aug.dense(), plain.dense())

    def test_ver1_filters(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.6]])
        f = np.array([1.0, math.exp(-2), math.exp(-2)])
        assert design_augmented(A, f, ver=1).weights == {0: 1.0}

    def test_ver0_rescaling(self):
        A = np.eye(2)
        design = design_augmented(A, np.array([1.0, 0.25]), ver=0)
        np.testing.assert_allclose(design.dense(), [0.5, 0.5])
        _, report = approx_design(np.array([[1.0, 0.0], [0.0, 0.5]]))
        assert report.max_leverage == pytest.approx(2.0)

    def test_ver0_drops_tiny_weights(self):
        A = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        design = design_augmented(A, np.array([1.0, 1e-13, 1.0]), ver=0)
        assert 1 not in design.weights
        assert sum(design.weights.values()) == pytest.approx(1.0)

    def test_ver1_empty(self):
        with pytest.raises(InvalidArgument):
            design_augmented(np.eye(2), np.array([0.1, 0.1]), ver=1)

    def test_bad_inputs(self):
        with pytest.raises(InvalidArgument):
            design_augmented(np.eye(2), np.array([1.0, 0.0]), ver=0)
        with pytest.raises(InvalidArgument):
            design_augmented(np.eye(2), np.array([1.0, 1.0]), ver=2)
        with pytest.raises(InvalidArgument):
            design_augmented(np.eye(2), np.array([1.0]), ver=0)

    def test_zero_arms_fall_back_to_uniform(self):
        A = np.zeros((3, 2))
        design = design_augmented(A, np.ones(3), ver=0)
        np.testing.assert_allclose(design.dense(), np.full(3, 1 / 3))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 25), st.integers(0, 2**31 - 1), st.sampled_from([0, 1]))
    def test_always_a_distribution(self, d, K, seed, ver):
        rng = np.random.default_rng(seed)
        A = ball(rng, K, d)
        f = np.exp(-rng.exponential(3.0, K))
        f[rng.integers(K)] = 1.0
        probs = design_augmented(A, f, ver).dense()
        assert probs.min() >= 0
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
