"""Deformation measures at a material point and step-pair quantities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensors as T
from .errors import NonPositiveJacobianError

_EYE = np.eye(3)


def det3(F: np.ndarray) -> np.ndarray:
    """Determinant of a batch of general 3x3 tensors."""
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def cofactor3(F: np.ndarray) -> np.ndarray:
    """Cofactor ``det(F) F^{-T}`` of a batch of 3x3 tensors."""
    c = np.empty_like(F)
    c[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
    c[..., 0, 1] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
    c[..., 0, 2] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
    c[..., 1, 0] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
    c[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
    c[..., 1, 2] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
    c[..., 2, 0] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
    c[..., 2, 1] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
    c[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return c


def _check_jacobian(J: np.ndarray) -> None:
    if np.any(~(J > 0.0)):
        raise NonPositiveJacobianError(f"non-positive Jacobian (min J = {np.min(J):.3e})")


@dataclass(frozen=True)
class DeformationState:
    """``F``, ``J = det F``, ``C = F^T F``, ``C^{-1}`` and ``Ctilde = J^{-2/3} C``."""

    F: np.ndarray
    J: np.ndarray
    C: np.ndarray
    Cinv: np.ndarray
    Ctilde: np.ndarray


def deformation_from_grad(gradU) -> DeformationState:
    """Build a :class:`DeformationState` from a displacement gradient.

    Raises
    ------
    NonPositiveJacobianError
        If ``det(I + gradU) <= 0``.
    """
    F = _EYE + np.asarray(gradU, dtype=float)
    J = det3(F)
    _check_jacobian(J)
    C = T.gram(F)
    return DeformationState(F=F, J=J, C=C, Cinv=T.sym_inverse(C), Ctilde=J[..., None] ** (-2.0 / 3.0) * C)


def unimodular(C: np.ndarray) -> np.ndarray:
    """``det(C)^{-1/3} C``."""
    d = T.det(C)
    _check_jacobian(d)
    return d[..., None] ** (-1.0 / 3.0) * C


def unimodular_increment(C, Z):
    """``unimodular(C + 2Z) - unimodular(C)`` evaluated without cancellation.

    Uses the exact expansion ``det(A + B) = det A + cof A : B + A : cof B + det B``
    and ``log1p``/``expm1`` for the change of the scaling factor, so the
    result is accurate relative to ``|Z|`` even when ``|Z|`` is tiny.
    """
    C = np.asarray(C, dtype=float)
    B = 2.0 * np.asarray(Z, dtype=float)
    d0 = T.det(C)
    _check_jacobian(d0)
    dd = T.ddot(T.sym_cofactor(C), B) + T.ddot(C, T.sym_cofactor(B)) + T.det(B)
    a0 = d0 ** (-1.0 / 3.0)
    da = a0 * np.expm1(-np.log1p(dd / d0) / 3.0)
    return (a0 + da)[..., None] * B + da[..., None] * C


@dataclass(frozen=True)
class StepPair:
    """Strain measures of one time step ``t_n -> t_{n+1}``.

    ``C_half`` is the arithmetic mean of the end-point tensors (not
    ``F_half^T F_half``, which is kept separately as ``C_mid`` for the
    mid-point comparator).  ``Ctilde_half`` is scaled by ``det(C_half)^{-1/3}``.
    """

    C_n: np.ndarray
    C_np1: np.ndarray
    C_half: np.ndarray
    Ctilde_half: np.ndarray
    Z: np.ndarray
    Ctilde_n: np.ndarray
    Ctilde_np1: np.ndarray
    F_half: np.ndarray | None = None
    J_half: np.ndarray | None = None
    C_mid: np.ndarray | None = None
    dCtilde: np.ndarray | None = None  # Ctilde_np1 - Ctilde_n without cancellation

    @classmethod
    def from_C(cls, C_n, C_np1, F_half=None, Z=None) -> "StepPair":
        """Build from the end-point tensors.

        ``Z`` may be passed when ``(C_np1 - C_n)/2`` is known more accurately
        than the difference of the end points (e.g. from ``F_half^T grad D``).
        """
        C_n = np.asarray(C_n, dtype=float)
        C_np1 = np.asarray(C_np1, dtype=float)
        Z = 0.5 * (C_np1 - C_n) if Z is None else np.asarray(Z, dtype=float)
        C_half = 0.5 * (C_n + C_np1)
        J_half = C_mid = None
        if F_half is not None:
            F_half = np.asarray(F_half, dtype=float)
            J_half = det3(F_half)
            _check_jacobian(J_half)
            C_mid = T.gram(F_half)
        return cls(
            C_n=C_n,
            C_np1=C_np1,
            C_half=C_half,
            Ctilde_half=unimodular(C_half),
            Z=Z,
            Ctilde_n=unimodular(C_n),
            Ctilde_np1=unimodular(C_np1),
            F_half=F_half,
            J_half=J_half,
            C_mid=C_mid,
            dCtilde=unimodular_increment(C_n, Z),
        )


def step_pair(state_n: DeformationState, state_np1: DeformationState, F_half=None) -> StepPair:
    """Pair two deformation states into the quantities used by one time step."""
    pair = StepPair.from_C(state_n.C, state_np1.C, F_half)
    # keep the end-point Ctilde computed from J = det F
    return StepPair(
        C_n=pair.C_n,
        C_np1=pair.C_np1,
        C_half=pair.C_half,
        Ctilde_half=pair.Ctilde_half,
        Z=pair.Z,
        Ctilde_n=state_n.Ctilde,
        Ctilde_np1=state_np1.Ctilde,
        F_half=pair.F_half,
        J_half=pair.J_half,
        C_mid=pair.C_mid,
        dCtilde=pair.dCtilde,
    )


def projection_tensor(C) -> np.ndarray:
    """``P = II - (1/3) C^{-1} (x) C`` so that ``P : A = A - (C : A) C^{-1} / 3``."""
    C = np.asarray(C, dtype=float)
    return T.identity4() - T.dyad(T.sym_inverse(C), C) / 3.0


def project(C, A, Cinv=None) -> np.ndarray:
    """``P(C) : A`` without forming the fourth-order tensor."""
    if Cinv is None:
        Cinv = T.sym_inverse(C)
    return A - (T.ddot(C, A) / 3.0)[..., None] * Cinv
