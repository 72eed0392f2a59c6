from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from visco_emc import tensors as T
from visco_emc.errors import SingularTensorError

from conftest import random_spd, random_sym


def loop_ddot(A, B):
    return sum(A[i, j] * B[i, j] for i in range(3) for j in range(3))


def loop_apply(T4, A):
    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    out[i, j] += T4[i, j, k, l] * A[k, l]
    return out


def random_minor_sym4(rng):
    X = rng.standard_normal((3, 3, 3, 3))
    return 0.25 * (X + X.transpose(1, 0, 2, 3) + X.transpose(0, 1, 3, 2) + X.transpose(1, 0, 3, 2))


class TestInverse:
    def test_identity(self):
        np.testing.assert_allclose(T.sym_inverse(T.identity2()), T.identity2())

    def test_diagonal(self):
        A = np.array([2.0, 4.0, 8.0, 0, 0, 0])
        np.testing.assert_allclose(T.sym_inverse(A), [0.5, 0.25, 0.125, 0, 0, 0])

    def test_random_spd_against_loop_product(self, rng):
        for _ in range(50):
            A = random_spd(rng, 0.5)
            Ainv = T.to_matrix(T.sym_inverse(A))
            Am = T.to_matrix(A)
            prod = np.array([[sum(Am[i, k] * Ainv[k, j] for k in range(3)) for j in range(3)] for i in range(3)])
            np.testing.assert_allclose(prod, np.eye(3), atol=1e-13 * np.linalg.cond(Am))

    def test_singular_raises(self):
        with pytest.raises(SingularTensorError):
            T.sym_inverse(np.array([1.0, 1.0, 0.0, 0, 0, 0]))

    def test_batched(self, rng):
        A = np.stack([random_spd(rng) for _ in range(7)])
        np.testing.assert_allclose(T.to_matrix(A) @ T.to_matrix(T.sym_inverse(A)), np.broadcast_to(np.eye(3), (7, 3, 3)), atol=1e-12)


class TestContractions:
    def test_ddot_identity(self):
        assert T.ddot(T.identity2(), T.identity2()) == 3.0

    def test_ddot_loop_oracle(self, rng):
        for _ in range(100):
            A, B = random_sym(rng), random_sym(rng)
            ref = loop_ddot(T.to_matrix(A), T.to_matrix(B))
            assert T.ddot(A, B) == pytest.approx(ref, rel=1e-14, abs=1e-14)

    def test_rank4_identity(self, rng):
        A = random_sym(rng)
        np.testing.assert_allclose(T.rank4_apply(T.identity4(), A), A, rtol=1e-15)

    def test_rank4_dyad(self, rng):
        A, B, C = random_sym(rng), random_sym(rng), random_sym(rng)
        np.testing.assert_allclose(T.rank4_apply(T.dyad(B, C), A), B * T.ddot(C, A), rtol=1e-13)

    def test_rank4_loop_oracle(self, rng):
        for _ in range(100):
            T4 = random_minor_sym4(rng)
            A = random_sym(rng)
            ref = loop_apply(T4, T.to_matrix(A))
            got = T.to_matrix(T.rank4_apply(T.from_full4(T4), A))
            np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-13 * np.abs(ref).max())

    def test_full4_roundtrip(self, rng):
        T4 = random_minor_sym4(rng)
        np.testing.assert_allclose(T.to_full4(T.from_full4(T4)), T4, rtol=0, atol=1e-15)

    def test_identity4_full(self):
        d = np.eye(3)
        full = 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
        np.testing.assert_array_equal(T.to_full4(T.identity4()), full)

    def test_compose_and_transpose(self, rng):
        A4, B4 = random_minor_sym4(rng), random_minor_sym4(rng)
        ref = np.einsum("ijmn,mnkl->ijkl", A4, B4)
        np.testing.assert_allclose(T.to_full4(T.rank4_compose(T.from_full4(A4), T.from_full4(B4))), ref, atol=1e-12)
        X = random_sym(rng)
        np.testing.assert_allclose(
            T.to_matrix(T.rank4_tapply(T.from_full4(A4), X)),
            np.einsum("ij,ijkl->kl", T.to_matrix(X), A4),
            atol=1e-12,
        )

    def test_odot(self, rng):
        A, B = random_sym(rng), random_sym(rng)
        Am, Bm = T.to_matrix(A), T.to_matrix(B)
        half = 0.5 * (np.einsum("ik,jl->ijkl", Am, Bm) + np.einsum("il,jk->ijkl", Am, Bm))
        ref = 0.5 * (half + half.transpose(1, 0, 2, 3))
        np.testing.assert_allclose(T.to_full4(T.odot(A, B)), ref, atol=1e-14)
        # dC^{-1} = -C^{-1} dC C^{-1} is expressed by odot(C^{-1}, C^{-1})
        Ci = T.sym_inverse(T.gram(np.eye(3) + 0.1 * rng.standard_normal((3, 3))))
        X = random_sym(rng)
        np.testing.assert_allclose(
            T.to_matrix(T.rank4_apply(T.odot(Ci, Ci), X)), T.to_matrix(Ci) @ T.to_matrix(X) @ T.to_matrix(Ci), atol=1e-13
        )

    def test_gram(self, rng):
        F = rng.standard_normal((4, 3, 3))
        np.testing.assert_allclose(T.to_matrix(T.gram(F)), np.swapaxes(F, -1, -2) @ F, atol=1e-14)

    def test_det(self, rng):
        A = random_sym(rng)
        assert T.det(A) == pytest.approx(np.linalg.det(T.to_matrix(A)), rel=1e-12)


finite = st.floats(-10, 10, allow_nan=False).filter(lambda x: x == 0 or abs(x) > 1e-100)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 6, elements=finite))
def test_norm_square_nonnegative(A):
    val = T.ddot(A, A)
    assert val >= 0
    if val == 0:
        assert np.all(A == 0)


@settings(max_examples=200, deadline=None)
@given(arrays(float, (3, 3), elements=st.floats(-0.4, 0.4)))
def test_inverse_involution(X):
    A = T.gram(np.eye(3) + X) + 0.1 * T.identity2()
    np.testing.assert_allclose(T.sym_inverse(T.sym_inverse(A)), A, rtol=1e-12, atol=1e-12)
