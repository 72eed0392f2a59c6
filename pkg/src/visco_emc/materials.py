"""Mooney-Rivlin equilibrium response with HS / MIPC viscoelastic branches.

Every function broadcasts over leading batch dimensions of its tensor
arguments (see :mod:`visco_emc.tensors` for the storage convention).
``Gammas`` arguments are sequences with one internal-variable tensor per
branch, in the order of ``MaterialParams.branches``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import tensors as T
from .kinematics import project, unimodular

HS = "HS"
MIPC = "MIPC"
BRANCH_KINDS = (HS, MIPC)


@dataclass(frozen=True)
class EquilibriumModel:
    """Mooney-Rivlin isochoric energy ``c1/2 (I1 - 3) + c2/2 (I2 - 3)``."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (self.c1 >= 0 and self.c2 >= 0 and self.c1 + self.c2 > 0):
            raise ValueError(f"Mooney-Rivlin constants need c1, c2 >= 0 and c1 + c2 > 0 (got {self.c1}, {self.c2})")


@dataclass(frozen=True)
class ViscoBranch:
    """One non-equilibrium branch.

    Parameters
    ----------
    kind : {"HS", "MIPC"}
    mu : float
        Branch shear modulus.
    eta : float
        Branch viscosity; ``eta / mu`` is the relaxation time.
    beta_inf : float
        Energy ratio of the MIPC branch (ignored for HS).
    S_hat0 : tuple of 6 floats, optional
        Reference fictitious stress.  ``None`` means "the branch stress at the
        undeformed state", which makes ``Q = 0`` initially for a body at rest.
    """

    kind: str
    mu: float
    eta: float
    beta_inf: float = 1.0
    S_hat0: tuple | None = None

    def __post_init__(self):
        if self.kind not in BRANCH_KINDS:
            raise ValueError(f"unknown branch kind {self.kind!r}; expected one of {BRANCH_KINDS}")
        if not self.mu > 0:
            raise ValueError(f"branch mu must be > 0 (got {self.mu})")
        if not self.eta > 0:
            raise ValueError(f"branch eta must be > 0 (got {self.eta})")
        if self.kind == MIPC and not self.beta_inf > 0:
            raise ValueError(f"MIPC beta_inf must be > 0 (got {self.beta_inf})")
        if self.S_hat0 is not None:
            object.__setattr__(self, "S_hat0", tuple(float(x) for x in np.asarray(self.S_hat0).reshape(6)))

    @property
    def tau(self) -> float:
        return self.eta / self.mu

    def s_hat0(self) -> np.ndarray:
        return np.zeros(6) if self.S_hat0 is None else np.asarray(self.S_hat0)


@dataclass(frozen=True)
class MaterialParams:
    """Density, equilibrium model and ordered list of branches.

    Branches without an explicit ``S_hat0`` get ``S_alpha(I)`` on
    construction (rest start with ``Gamma_0 = I`` and ``Q_0 = 0``).
    """

    rho0: float
    equilibrium: EquilibriumModel
    branches: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError(f"rho0 must be > 0 (got {self.rho0})")
        resolved = []
        for b in self.branches:
            if b.S_hat0 is None:
                _, S, _ = branch_eval(T.identity2(), b, self.equilibrium)
                b = replace(b, S_hat0=tuple(S))
            resolved.append(b)
        object.__setattr__(self, "branches", tuple(resolved))

    @property
    def m(self) -> int:
        return len(self.branches)


def isochoric_invariants(Ctilde):
    """``(I1, I2)`` of ``Ctilde``."""
    Ctilde = np.asarray(Ctilde, dtype=float)
    I1 = T.trace(Ctilde)
    I2 = 0.5 * (I1 * I1 - T.ddot(Ctilde, Ctilde))
    return I1, I2


def equilibrium_eval(Ctilde, eq: EquilibriumModel):
    """Equilibrium energy and fictitious stress ``2 dG/dCtilde``."""
    Ctilde = np.asarray(Ctilde, dtype=float)
    I1, I2 = isochoric_invariants(Ctilde)
    G = 0.5 * eq.c1 * (I1 - 3.0) + 0.5 * eq.c2 * (I2 - 3.0)
    S = (eq.c1 + eq.c2 * I1)[..., None] * T.identity2() - eq.c2 * Ctilde
    return G, S


def equilibrium_dstress(eq: EquilibriumModel) -> np.ndarray:
    """``d S_inf / d Ctilde = c2 (I (x) I - II)``; constant for Mooney-Rivlin."""
    I = T.identity2()
    return eq.c2 * (T.dyad(I, I) - T.identity4())


def branch_dstress(b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """``d S_alpha / d Ctilde`` (constant for both branch kinds)."""
    if b.kind == HS:
        return b.mu * T.identity4()
    return b.beta_inf * equilibrium_dstress(eq)


def branch_eval(Ctilde, b: ViscoBranch, eq: EquilibriumModel):
    """Branch energy ``G_alpha``, fictitious stress and its derivative in ``Ctilde``."""
    Ctilde = np.asarray(Ctilde, dtype=float)
    if b.kind == HS:
        E = 0.5 * (Ctilde - T.identity2())
        return b.mu * T.ddot(E, E), b.mu * (Ctilde - T.identity2()), branch_dstress(b, eq)
    G, S = equilibrium_eval(Ctilde, eq)
    return b.beta_inf * G, b.beta_inf * S, branch_dstress(b, eq)


def branch_stress(Ctilde, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """Fictitious branch stress only."""
    if b.kind == HS:
        return b.mu * (np.asarray(Ctilde, dtype=float) - T.identity2())
    return b.beta_inf * equilibrium_eval(Ctilde, eq)[1]


def conjugate_Q(Ctilde, Gamma, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """``Q = S_alpha(Ctilde) - S_hat0 - mu (Gamma - I)``."""
    return branch_stress(Ctilde, b, eq) - b.s_hat0() - b.mu * (np.asarray(Gamma, dtype=float) - T.identity2())


def upsilon(Ctilde, Gamma, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """Configurational free energy ``|Q|^2 / (4 mu)``."""
    Q = conjugate_Q(Ctilde, Gamma, b, eq)
    return T.ddot(Q, Q) / (4.0 * b.mu)


def noneq_fictitious_stress(Ctilde, Gamma, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """``(1/mu) dS_alpha/dCtilde : Q``."""
    Q = conjugate_Q(Ctilde, Gamma, b, eq)
    if b.kind == HS:
        return Q
    return T.rank4_apply(branch_dstress(b, eq), Q) / b.mu


def fictitious_stress(Ctilde, Gammas: Sequence, mat: MaterialParams) -> np.ndarray:
    """Total fictitious stress ``S_inf + sum_alpha S_neq^alpha``."""
    _, S = equilibrium_eval(Ctilde, mat.equilibrium)
    for b, G in zip(mat.branches, Gammas, strict=True):
        S = S + noneq_fictitious_stress(Ctilde, G, b, mat.equilibrium)
    return S


def iso_pk2(C, Gammas: Sequence, mat: MaterialParams) -> np.ndarray:
    """Isochoric second Piola-Kirchhoff stress ``det(C)^{-1/3} P(C) : S_fict``."""
    C = np.asarray(C, dtype=float)
    a = T.det(C) ** (-1.0 / 3.0)
    Sf = fictitious_stress(a[..., None] * C, Gammas, mat)
    return a[..., None] * project(C, Sf)


def gibbs_iso(Ctilde, Gammas: Sequence, mat: MaterialParams) -> np.ndarray:
    """``G_iso = G_inf + sum_alpha Upsilon_alpha``."""
    G, _ = equilibrium_eval(Ctilde, mat.equilibrium)
    for b, Gam in zip(mat.branches, Gammas, strict=True):
        G = G + upsilon(Ctilde, Gam, b, mat.equilibrium)
    return G


def gibbs_iso_increment(Ctilde, dCtilde, Gammas: Sequence, mat: MaterialParams) -> np.ndarray:
    """``G_iso(Ctilde + dCtilde, Gammas) - G_iso(Ctilde, Gammas)`` without cancellation.

    Both energies are polynomial in ``Ctilde``; the difference is written as
    products with ``dCtilde`` so its rounding error scales with the increment.
    """
    Ct0 = np.asarray(Ctilde, dtype=float)
    dCt = np.asarray(dCtilde, dtype=float)
    Ct1 = Ct0 + dCt
    eq = mat.equilibrium
    I = T.identity2()
    dI1 = T.trace(dCt)
    dI2 = 0.5 * ((T.trace(Ct0) + T.trace(Ct1)) * dI1 - T.ddot(Ct0 + Ct1, dCt))
    dG = 0.5 * eq.c1 * dI1 + 0.5 * eq.c2 * dI2
    for b, Gam in zip(mat.branches, Gammas, strict=True):
        if b.kind == HS:
            dQ = b.mu * dCt
        else:
            dQ = b.beta_inf * eq.c2 * (dI1[..., None] * I - dCt)
        Q0 = conjugate_Q(Ct0, Gam, b, eq)
        dG = dG + T.ddot(2.0 * Q0 + dQ, dQ) / (4.0 * b.mu)
    return dG


def fictitious_tangent(mat: MaterialParams) -> np.ndarray:
    """``2 dS_fict/dCtilde`` at fixed internal variables (constant for this model family)."""
    eq = mat.equilibrium
    Ct = 2.0 * equilibrium_dstress(eq)
    for b in mat.branches:
        D = branch_dstress(b, eq)
        Ct = Ct + 2.0 * T.rank4_compose(D, D) / b.mu
    return Ct


def iso_tangent(C, Gammas: Sequence, mat: MaterialParams, S_iso=None) -> np.ndarray:
    """``2 dS_iso/dC`` holding the internal variables fixed.

    Uses the standard decomposition
    ``a^2 P : Cf : P^T + (2/3) a (C : Sf) (Cinv . Cinv - Cinv (x) Cinv / 3)
    - (2/3) (Cinv (x) S + S (x) Cinv)`` with ``a = det(C)^{-1/3}``.
    """
    C = np.asarray(C, dtype=float)
    Cinv = T.sym_inverse(C)
    a = T.det(C) ** (-1.0 / 3.0)
    Sf = fictitious_stress(a[..., None] * C, Gammas, mat)
    if S_iso is None:
        S_iso = a[..., None] * project(C, Sf, Cinv)
    return _iso_tangent_from(C, Cinv, a, Sf, S_iso, fictitious_tangent(mat))


def _iso_tangent_from(C, Cinv, a, Sf, S_iso, Cf):
    P = T.identity4() - T.dyad(Cinv, C) / 3.0
    PCP = T.rank4_compose(T.rank4_compose(P, Cf), T.rank4_transpose(P))
    tr = (a * T.ddot(C, Sf))[..., None, None]
    Ptil = T.odot(Cinv, Cinv) - T.dyad(Cinv, Cinv) / 3.0
    return (
        (a * a)[..., None, None] * PCP
        + (2.0 / 3.0) * tr * Ptil
        - (2.0 / 3.0) * (T.dyad(Cinv, S_iso) + T.dyad(S_iso, Cinv))
    )


__all__ = [
    "HS",
    "MIPC",
    "EquilibriumModel",
    "ViscoBranch",
    "MaterialParams",
    "isochoric_invariants",
    "equilibrium_eval",
    "equilibrium_dstress",
    "branch_eval",
    "branch_dstress",
    "branch_stress",
    "conjugate_Q",
    "upsilon",
    "noneq_fictitious_stress",
    "fictitious_stress",
    "iso_pk2",
    "gibbs_iso",
    "fictitious_tangent",
    "iso_tangent",
    "unimodular",
]
