import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from longnet.tensor import (TuckerFactors, frobenius_norm, mode_refold, mode_unfold,
                            sigma_r, tucker_assemble, two_to_inf_norm)


def naive_unfold(t, mode):
    """Triple-loop evaluation of the cyclic index law."""
    n = t.shape
    k = mode - 1
    out = np.zeros((n[k], t.size // n[k]))
    for i1 in range(n[0]):
        for i2 in range(n[1]):
            for i3 in range(n[2]):
                idx = (i1, i2, i3)
                col = idx[(k + 1) % 3] + n[(k + 1) % 3] * idx[(k + 2) % 3]
                out[idx[k], col] = t[i1, i2, i3]
    return out


class TestModeUnfold:
    def test_degenerate_scalar(self):
        t = np.array([[[3.5]]])
        assert mode_unfold(t, 1) == pytest.approx(np.array([[3.5]]))

    def test_index_law_2x2x2(self):
        # t[i,j,k] = (i+1) + 2*j + 4*k in 1-based terms
        t = np.fromfunction(lambda i, j, k: (i + 1) + 2 * j + 4 * k, (2, 2, 2))
        m = mode_unfold(t, 1)
        # column for (j=2, k=2) in 1-based indexing is 1 + 2*(2-1) = 3 (0-based)
        assert m[0, 3] == 7.0
        np.testing.assert_array_equal(m, naive_unfold(t, 1))

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_matches_naive_loop(self, mode):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((3, 4, 5))
        np.testing.assert_array_equal(mode_unfold(t, mode), naive_unfold(t, mode))

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError):
            mode_unfold(np.zeros((2, 2, 2)), 4)

    @given(st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5)),
           st.integers(1, 3), st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_refold_roundtrip(self, dims, mode, seed):
        t = np.random.default_rng(seed).standard_normal(dims)
        np.testing.assert_array_equal(mode_refold(mode_unfold(t, mode), dims, mode), t)

    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_frobenius_preserved(self, mode):
        t = np.random.default_rng(7).standard_normal((4, 3, 6))
        assert frobenius_norm(mode_unfold(t, mode)) == pytest.approx(frobenius_norm(t))


class TestTuckerAssemble:
    def test_rank_one(self):
        s = np.array([[[2.0]]])
        u = np.array([[1.0], [2.0]])
        v = np.array([[3.0], [0.5]])
        w = np.array([[1.0], [-1.0], [0.25]])
        m = tucker_assemble(TuckerFactors(s, u, v, w))
        expected = 2.0 * u[:, 0, None, None] * v[None, :, 0, None] * w[None, None, :, 0]
        np.testing.assert_allclose(m, expected)

    def test_identity_factors(self):
        rng = np.random.default_rng(1)
        s = rng.standard_normal((3, 3, 3))
        eye = np.eye(3)
        np.testing.assert_allclose(tucker_assemble(TuckerFactors(s, eye, eye, eye)), s)

    def test_matches_quadruple_loop(self):
        rng = np.random.default_rng(2)
        s = rng.standard_normal((3, 3, 3))
        u, v, w = (rng.standard_normal((3, 3)) for _ in range(3))
        m = tucker_assemble(TuckerFactors(s, u, v, w))
        naive = np.zeros((3, 3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    for a in range(3):
                        for b in range(3):
                            for c in range(3):
                                naive[i, j, k] += s[a, b, c] * u[i, a] * v[j, b] * w[k, c]
        assert frobenius_norm(m - naive) / frobenius_norm(naive) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            TuckerFactors(np.zeros((2, 2, 2)), np.zeros((4, 3)), np.zeros((4, 2)), np.zeros((4, 2)))

    def test_rank_exceeds_dim(self):
        with pytest.raises(ValueError):
            TuckerFactors(np.zeros((3, 1, 1)), np.zeros((2, 3)), np.zeros((2, 1)), np.zeros((2, 1)))


class TestNorms:
    def test_frobenius_zero(self):
        assert frobenius_norm(np.zeros((2, 3, 4))) == 0.0

    def test_frobenius_ones(self):
        assert frobenius_norm(np.ones((2, 2, 2))) == pytest.approx(np.sqrt(8.0))

    def test_sigma_r_gram_oracle(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((6, 4))
        gram_eigs = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
        for r in range(1, 5):
            assert sigma_r(m, r) == pytest.approx(np.sqrt(gram_eigs[r - 1]), abs=1e-10)

    def test_sigma_r_out_of_range(self):
        with pytest.raises(ValueError):
            sigma_r(np.ones((3, 2)), 3)

    def test_two_to_inf_identity(self):
        assert two_to_inf_norm(np.eye(3)) == 1.0

    def test_two_to_inf_345(self):
        assert two_to_inf_norm(np.array([[3.0, 4.0], [0.0, 1.0]])) == 5.0

    def test_two_to_inf_row_loop(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((7, 3))
        assert two_to_inf_norm(m) == max(np.sqrt(row @ row) for row in m)
