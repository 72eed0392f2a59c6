"""Symmetric rank-2 / rank-4 tensor algebra on six-component storage.

Storage convention (used everywhere in the package):

* ``SymTensor2`` is an array of shape ``(..., 6)`` holding the plain
  components ``(A11, A22, A33, A12, A23, A13)``.  No factor of two is folded
  into the shear slots.
* ``SymTensor4`` is an array of shape ``(..., 6, 6)`` holding the plain
  components ``T[I, K] = T_ijkl`` where ``I <-> (ij)`` and ``K <-> (kl)``
  follow the same ordering.  Minor symmetries are structural; major symmetry
  is not assumed.
* Because every shear slot stands for two entries of the full 3x3 tensor,
  contractions over a stored index carry the weights ``W = (1, 1, 1, 2, 2, 2)``:

  - ``A : B = sum_I W_I A_I B_I``
  - ``(T : A)_I = sum_K T_IK W_K A_K``
  - ``(T : U)_IK = sum_M T_IM W_M U_MK``

All functions broadcast over leading batch dimensions.  Full 3x3 and
3x3x3x3 arrays are reached through :func:`to_matrix` / :func:`from_matrix`
and :func:`to_full4` / :func:`from_full4`.
"""

from __future__ import annotations

import numpy as np

from .errors import SingularTensorError

SymTensor2 = np.ndarray
SymTensor4 = np.ndarray
Tensor2 = np.ndarray

#: Row/column index of each stored slot in the full 3x3 tensor.
VOIGT_I = np.array([0, 1, 2, 0, 1, 0])
VOIGT_J = np.array([0, 1, 2, 1, 2, 2])
#: Contraction weights of the stored slots.
W = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
#: Map full (i, j) -> stored slot.
SLOT = np.array([[0, 3, 5], [3, 1, 4], [5, 4, 2]])

#: Threshold below which :func:`sym_inverse` refuses to invert.
DET_EPS = 1e-300

_I2 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
_I4 = np.diag([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])


def identity2() -> SymTensor2:
    """Second-order identity ``I``."""
    return _I2.copy()


def identity4() -> SymTensor4:
    """Symmetric fourth-order identity ``(d_ik d_jl + d_il d_jk)/2``."""
    return _I4.copy()


def from_matrix(M: Tensor2) -> SymTensor2:
    """Symmetric part of a full ``(..., 3, 3)`` tensor in stored form."""
    M = np.asarray(M, dtype=float)
    return 0.5 * (M[..., VOIGT_I, VOIGT_J] + M[..., VOIGT_J, VOIGT_I])


def to_matrix(A: SymTensor2) -> Tensor2:
    """Full ``(..., 3, 3)`` tensor from stored form."""
    A = np.asarray(A, dtype=float)
    return A[..., SLOT]


def from_full4(T: np.ndarray) -> SymTensor4:
    """Stored form of a full ``(..., 3, 3, 3, 3)`` tensor, minor-symmetrised."""
    T = np.asarray(T, dtype=float)
    i, j = VOIGT_I[:, None], VOIGT_J[:, None]
    k, l = VOIGT_I[None, :], VOIGT_J[None, :]
    return 0.25 * (T[..., i, j, k, l] + T[..., j, i, k, l] + T[..., i, j, l, k] + T[..., j, i, l, k])


def to_full4(T: SymTensor4) -> np.ndarray:
    """Full ``(..., 3, 3, 3, 3)`` tensor from stored form."""
    T = np.asarray(T, dtype=float)
    return T[..., SLOT[:, :, None, None], SLOT[None, None, :, :]]


def trace(A: SymTensor2) -> np.ndarray:
    return A[..., 0] + A[..., 1] + A[..., 2]


def ddot(A: SymTensor2, B: SymTensor2) -> np.ndarray:
    """Double contraction ``A : B``."""
    return np.einsum("...i,...i->...", A * W, B)


def norm(A: SymTensor2) -> np.ndarray:
    """Frobenius norm ``sqrt(A : A)``."""
    return np.sqrt(ddot(A, A))


def det(A: SymTensor2) -> np.ndarray:
    a, b, c, d, e, f = (A[..., k] for k in range(6))
    # | a d f |
    # | d b e |
    # | f e c |
    return a * (b * c - e * e) - d * (d * c - e * f) + f * (d * e - b * f)


def sym_inverse(A: SymTensor2) -> SymTensor2:
    """Inverse of a symmetric tensor via cofactors.

    Raises
    ------
    SingularTensorError
        If ``|det A| < 1e-300`` anywhere in the batch.
    """
    A = np.asarray(A, dtype=float)
    dt = det(A)
    if np.any(~(np.abs(dt) >= DET_EPS)):
        raise SingularTensorError("symmetric tensor is singular (|det| < 1e-300)")
    return sym_cofactor(A) / dt[..., None]


def sym_cofactor(A: SymTensor2) -> SymTensor2:
    """Cofactor ``det(A) A^{-1}``, defined also for singular ``A``."""
    A = np.asarray(A, dtype=float)
    a, b, c, d, e, f = (A[..., k] for k in range(6))
    out = np.empty_like(A)
    out[..., 0] = b * c - e * e
    out[..., 1] = a * c - f * f
    out[..., 2] = a * b - d * d
    out[..., 3] = f * e - d * c
    out[..., 4] = d * f - a * e
    out[..., 5] = d * e - b * f
    return out


def sym_square(A: SymTensor2) -> SymTensor2:
    """``A . A`` (matrix product), which is again symmetric."""
    M = to_matrix(A)
    return from_matrix(M @ M)


def gram(F: Tensor2) -> SymTensor2:
    """``F^T F`` in stored form."""
    F = np.asarray(F, dtype=float)
    return np.einsum("...ki,...ki->...i", F[..., :, VOIGT_I], F[..., :, VOIGT_J])


def dyad(A: SymTensor2, B: SymTensor2) -> SymTensor4:
    """``A (x) B`` with ``(A (x) B) : X = A (B : X)``."""
    return A[..., :, None] * B[..., None, :]


def odot(A: SymTensor2, B: SymTensor2) -> SymTensor4:
    """Minor-symmetrised product; for ``A = B`` this is ``(A_ik A_jl + A_il A_jk) / 2``."""
    Am, Bm = to_matrix(A), to_matrix(B)
    i, j = VOIGT_I[:, None], VOIGT_J[:, None]
    k, l = VOIGT_I[None, :], VOIGT_J[None, :]
    return 0.25 * (
        Am[..., i, k] * Bm[..., j, l] + Am[..., i, l] * Bm[..., j, k]
        + Bm[..., i, k] * Am[..., j, l] + Bm[..., i, l] * Am[..., j, k]
    )


def rank4_apply(T: SymTensor4, A: SymTensor2) -> SymTensor2:
    """``T : A``, i.e. ``sum_kl T_ijkl A_kl``."""
    return np.matmul(T, (A * W)[..., None])[..., 0]


def rank4_tapply(T: SymTensor4, A: SymTensor2) -> SymTensor2:
    """``A : T``, i.e. ``sum_ij A_ij T_ijkl`` (application of the major transpose)."""
    return np.matmul((A * W)[..., None, :], T)[..., 0, :]


def rank4_compose(T: SymTensor4, U: SymTensor4) -> SymTensor4:
    """``T : U`` with ``(T : U)_ijkl = sum_mn T_ijmn U_mnkl``."""
    return np.matmul(np.asarray(T) * W, U)


def rank4_transpose(T: SymTensor4) -> SymTensor4:
    """Major transpose ``T_klij``."""
    return np.swapaxes(T, -1, -2)
