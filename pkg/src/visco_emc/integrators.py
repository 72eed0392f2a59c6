"""Time-discrete constitutive integration.

Two energy-consistent schemes and a mid-point comparator are provided:

* ``Scheme1``: the internal variables are advanced with the fictitious branch
  stress at ``t_n``; the discrete-gradient correction of the stress uses
  ``Gamma_{n+1}`` in the energy difference.
* ``Scheme2``: the branch stress is averaged over the step, which makes the
  update depend on ``C_{n+1}``; the energy difference uses ``Gamma_{n+1/2}``.
* ``Midpoint``: stress at ``F_{n+1/2}^T F_{n+1/2}`` with the Scheme-2 update
  and no correction.

All operations broadcast over leading batch dimensions (one entry per
quadrature point); tangents are returned as ``2 dS/dC_{n+1}`` in the storage
convention of :mod:`visco_emc.tensors`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import tensors as T
from .errors import UnsupportedSchemeError
from .kinematics import StepPair, project, unimodular_increment
from .materials import (
    MaterialParams,
    ViscoBranch,
    EquilibriumModel,
    _iso_tangent_from,
    branch_dstress,
    branch_stress,
    conjugate_Q,
    fictitious_stress,
    fictitious_tangent,
    gibbs_iso,
    gibbs_iso_increment,
    iso_pk2,
    upsilon,
)

Z_CUT = 1e-10


class SchemeKind(str, Enum):
    SCHEME1 = "1"
    SCHEME2 = "2"
    MIDPOINT = "mp"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "1": cls.SCHEME1, "scheme1": cls.SCHEME1, "s1": cls.SCHEME1,
            "2": cls.SCHEME2, "scheme2": cls.SCHEME2, "s2": cls.SCHEME2,
            "mp": cls.MIDPOINT, "midpoint": cls.MIDPOINT,
        }
        try:
            return aliases[key]
        except KeyError:
            raise UnsupportedSchemeError(f"unknown scheme {value!r}; use 1, 2 or mp") from None


def _factor(dt: float, b: ViscoBranch) -> float:
    return dt / (b.eta + 0.5 * b.mu * dt)


def _gamma_update(S_drive, Gamma_n, dt, b):
    Gamma_n = np.asarray(Gamma_n, dtype=float)
    return _factor(dt, b) * (
        S_drive - b.s_hat0() + (b.eta / dt - 0.5 * b.mu) * Gamma_n + b.mu * T.identity2()
    )


def update_gamma_s1(Ctilde_n, Gamma_n, dt: float, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """Internal-variable update driven by the branch stress at ``t_n``."""
    return _gamma_update(branch_stress(Ctilde_n, b, eq), Gamma_n, dt, b)


def update_gamma_s2(Ctilde_n, Ctilde_np1, Gamma_n, dt: float, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """Internal-variable update driven by the step-averaged branch stress."""
    S_avg = 0.5 * (branch_stress(Ctilde_n, b, eq) + branch_stress(Ctilde_np1, b, eq))
    return _gamma_update(S_avg, Gamma_n, dt, b)


def q_alg(scheme, Ctilde_n, Ctilde_np1, Gamma_n, Gamma_np1, b: ViscoBranch, eq: EquilibriumModel) -> np.ndarray:
    """Algorithmic conjugate variable of Scheme-1 or Scheme-2."""
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.MIDPOINT:
        raise UnsupportedSchemeError("q_alg is defined for Scheme-1 and Scheme-2 only")
    S = branch_stress(Ctilde_n, b, eq)
    if scheme is SchemeKind.SCHEME2:
        S = 0.5 * (S + branch_stress(Ctilde_np1, b, eq))
    G_half = 0.5 * (np.asarray(Gamma_n, dtype=float) + np.asarray(Gamma_np1, dtype=float))
    return S - b.s_hat0() - b.mu * (G_half - T.identity2())


def enhancement_coefficient(dG, S_half, Z, z_cut: float = Z_CUT):
    """Scalar ``(dG - S_half : Z) / |Z|^2`` and the activity mask ``|Z| >= z_cut``."""
    z2 = T.ddot(Z, Z)
    active = np.sqrt(z2) >= z_cut
    N = dG - T.ddot(S_half, Z)
    phi = np.where(active, N / np.where(active, z2, 1.0), 0.0)
    return phi, active


@dataclass
class AlgStressResult:
    """Output of :func:`algorithmic_stress`.

    ``G_iso_plus`` / ``G_iso_minus`` are the two energies whose difference
    drives the correction (``NaN`` for the mid-point comparator).  The
    tangent fields are filled only when requested.
    """

    S_alg: np.ndarray
    Gammas_np1: list
    enhancement_active: np.ndarray
    G_iso_plus: np.ndarray
    G_iso_minus: np.ndarray
    Z_norm: np.ndarray
    S_half: np.ndarray
    S_enh: np.ndarray
    tangent: np.ndarray | None = None
    tangent_mid: np.ndarray | None = None


def _mid_stress(C_h, Gammas_half, mat):
    Cinv = T.sym_inverse(C_h)
    a = T.det(C_h) ** (-1.0 / 3.0)
    Sf = fictitious_stress(a[..., None] * C_h, Gammas_half, mat)
    return a[..., None] * project(C_h, Sf, Cinv), Sf, a, Cinv


def evaluate_step(
    scheme,
    pair: StepPair,
    Gammas_n: Sequence,
    dt: float,
    mat: MaterialParams,
    z_cut: float = Z_CUT,
    with_tangent: bool = False,
) -> AlgStressResult:
    """Algorithmic stress (and optionally its consistent tangent) for one step."""
    scheme = SchemeKind.parse(scheme)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    eq = mat.equilibrium
    Ct_n, Ct_np1 = pair.Ctilde_n, pair.Ctilde_np1
    Gammas_n = [np.asarray(g, dtype=float) for g in Gammas_n]
    if len(Gammas_n) != mat.m:
        raise ValueError(f"expected {mat.m} internal variables, got {len(Gammas_n)}")

    Gnp1, Ghalf, dS_branch = [], [], []
    for b, Gn in zip(mat.branches, Gammas_n):
        Sn = branch_stress(Ct_n, b, eq)
        if scheme is SchemeKind.SCHEME1:
            g = _gamma_update(Sn, Gn, dt, b)
            dS_branch.append(None)
        else:
            Snp1 = branch_stress(Ct_np1, b, eq)
            g = _gamma_update(0.5 * (Sn + Snp1), Gn, dt, b)
            dS_branch.append(Snp1 - Sn)
        Gnp1.append(g)
        Ghalf.append(0.5 * (Gn + g))

    if scheme is SchemeKind.MIDPOINT:
        if pair.C_mid is None:
            raise ValueError("the mid-point comparator needs F_half in the step pair")
        C_h = pair.C_mid
    else:
        C_h = pair.C_half
    S_h, Sf_h, a_h, Cinv_h = _mid_stress(C_h, Ghalf, mat)
    Z = pair.Z
    Z_norm = T.norm(Z)

    if scheme is SchemeKind.MIDPOINT:
        active = np.zeros(Z_norm.shape, dtype=bool)
        phi = np.zeros(Z_norm.shape)
        G_plus = G_minus = np.full(Z_norm.shape, np.nan)
        G_star = Ghalf
    else:
        G_star = Gnp1 if scheme is SchemeKind.SCHEME1 else Ghalf
        G_minus = gibbs_iso(Ct_n, G_star, mat)
        dCt = pair.dCtilde if pair.dCtilde is not None else unimodular_increment(pair.C_n, Z)
        dG = gibbs_iso_increment(Ct_n, dCt, G_star, mat)
        G_plus = G_minus + dG
        phi, active = enhancement_coefficient(dG, S_h, Z, z_cut)
    S_enh = phi[..., None] * Z
    res = AlgStressResult(
        S_alg=S_h + S_enh,
        Gammas_np1=Gnp1,
        enhancement_active=active,
        G_iso_plus=G_plus,
        G_iso_minus=G_minus,
        Z_norm=Z_norm,
        S_half=S_h,
        S_enh=S_enh,
    )
    if not with_tangent:
        return res

    Cf = fictitious_tangent(mat)
    Ch_tan = _iso_tangent_from(C_h, Cinv_h, a_h, Sf_h, S_h, Cf)
    batch = Z_norm.shape
    KG = np.zeros(batch + (6, 6))
    GG = []
    if scheme is not SchemeKind.SCHEME1 and mat.m:
        C_np1 = pair.C_np1
        Cinv_np1 = T.sym_inverse(C_np1)
        a_np1 = T.det(C_np1) ** (-1.0 / 3.0)
        PT_np1 = T.rank4_transpose(T.identity4() - T.dyad(Cinv_np1, C_np1) / 3.0)
        P_h = T.identity4() - T.dyad(Cinv_h, C_h) / 3.0
        for b in mat.branches:
            D = branch_dstress(b, eq)
            # d Gamma_{n+1} / d C_{n+1}
            dG = (0.5 * _factor(dt, b)) * a_np1[..., None, None] * T.rank4_compose(D, PT_np1)
            GG.append(dG)
            # d S_half / d Gamma_half = -a_h P_h : D ; Gamma_half moves by half of Gamma_{n+1}
            KG = KG - 0.5 * a_h[..., None, None] * T.rank4_compose(T.rank4_compose(P_h, D), dG)

    if scheme is SchemeKind.MIDPOINT:
        res.tangent = 2.0 * KG
        res.tangent_mid = Ch_tan
        return res

    tan = 0.5 * Ch_tan + 2.0 * KG
    if np.any(active):
        z2 = T.ddot(Z, Z)
        inv_z2 = np.where(active, 1.0 / np.where(active, z2, 1.0), 0.0)
        S_star = iso_pk2(pair.C_np1, G_star, mat)
        g = S_star - 0.5 * T.rank4_tapply(Ch_tan, Z) - S_h
        if scheme is SchemeKind.SCHEME2:
            g = g - 2.0 * T.rank4_tapply(KG, Z)
            for dG, dS in zip(GG, dS_branch):
                g = g - 0.5 * T.rank4_tapply(dG, dS)
        enh = phi[..., None, None] * (T.identity4() - 2.0 * inv_z2[..., None, None] * T.dyad(Z, Z))
        enh = enh + T.dyad(inv_z2[..., None] * Z, g)
        tan = tan + np.where(active[..., None, None], enh, 0.0)
    res.tangent = tan
    return res


def algorithmic_stress(scheme, pair: StepPair, Gammas_n, dt, mat, z_cut: float = Z_CUT) -> AlgStressResult:
    """Algorithmic second Piola-Kirchhoff stress and updated internal variables."""
    return evaluate_step(scheme, pair, Gammas_n, dt, mat, z_cut)


def algorithmic_tangent(scheme, pair: StepPair, Gammas_n, dt, mat, z_cut: float = Z_CUT) -> np.ndarray:
    """``2 dS_alg / dC_{n+1}``.

    For the mid-point comparator the stress also depends on
    ``F_half^T F_half``; this function returns only the part through
    ``C_{n+1}`` (the internal-variable chain).  Use :func:`evaluate_step`
    with ``with_tangent=True`` to obtain ``tangent_mid`` as well.
    """
    return evaluate_step(scheme, pair, Gammas_n, dt, mat, z_cut, with_tangent=True).tangent


def stress_enhancement(scheme, pair: StepPair, Gammas_n, Gammas_np1, mat, z_cut: float = Z_CUT) -> np.ndarray:
    """Stress correction for prescribed (not updated) internal variables at both ends of a step."""
    scheme = SchemeKind.parse(scheme)
    if scheme is SchemeKind.MIDPOINT:
        raise UnsupportedSchemeError("the mid-point comparator has no stress correction")
    Ghalf = [0.5 * (np.asarray(a) + np.asarray(b)) for a, b in zip(Gammas_n, Gammas_np1)]
    S_h = _mid_stress(pair.C_half, Ghalf, mat)[0]
    G_star = Gammas_np1 if scheme is SchemeKind.SCHEME1 else Ghalf
    dG = gibbs_iso(pair.Ctilde_np1, G_star, mat) - gibbs_iso(pair.Ctilde_n, G_star, mat)
    phi, _ = enhancement_coefficient(dG, S_h, pair.Z, z_cut)
    return phi[..., None] * pair.Z


def physical_dissipation(Gammas_n, Gammas_np1, dt: float, mat: MaterialParams) -> np.ndarray:
    """``(1/2) sum_alpha eta |(Gamma_{n+1} - Gamma_n)/dt|^2`` (a power)."""
    out = 0.0
    for b, g0, g1 in zip(mat.branches, Gammas_n, Gammas_np1, strict=True):
        r = (np.asarray(g1) - np.asarray(g0)) / dt
        out = out + 0.5 * b.eta * T.ddot(r, r)
    return np.asarray(out)


def directionality_residual(scheme, pair: StepPair, Gammas_n, result: AlgStressResult, dt, mat):
    """Residual and round-off scale of ``Z : S_alg = dG_iso + dt D_phy``.

    Returns ``(residual, scale)``; ``scale`` collects the magnitudes of the
    terms that are subtracted so that ``|residual| / scale`` measures the
    identity at round-off level.
    """
    lhs = T.ddot(pair.Z, result.S_alg)
    G1 = gibbs_iso(pair.Ctilde_np1, result.Gammas_np1, mat)
    G0 = gibbs_iso(pair.Ctilde_n, Gammas_n, mat)
    diss = dt * physical_dissipation(Gammas_n, result.Gammas_np1, dt, mat)
    r = lhs - (G1 - G0 + diss)
    scale = np.abs(lhs) + np.abs(G1) + np.abs(G0) + np.abs(diss)
    return r, scale


@dataclass
class MaterialPointTrajectory:
    t: np.ndarray
    Gammas: np.ndarray  # (n_steps+1, m, 6)
    Q: np.ndarray  # (n_steps+1, m, 6), continuum conjugate variable at each time
    S_alg: np.ndarray  # (n_steps, 6)
    upsilon: np.ndarray  # (n_steps+1, m)
    G_iso: np.ndarray  # (n_steps+1,)
    D_phy: np.ndarray  # (n_steps,)
    directionality: np.ndarray  # (n_steps,) residuals
    directionality_scale: np.ndarray
    enhancement_active: np.ndarray


def material_point_run(
    path: Callable[[float], np.ndarray],
    schedule,
    scheme,
    mat: MaterialParams,
    z_cut: float = Z_CUT,
    Gammas0=None,
) -> MaterialPointTrajectory:
    """Drive the constitutive update along a prescribed deformation history.

    ``path(t)`` returns the deformation gradient ``F(t)`` (3x3); the mid-point
    comparator uses ``(F(t_n) + F(t_{n+1}))/2``.
    """
    from .kinematics import deformation_from_grad, step_pair

    scheme = SchemeKind.parse(scheme)
    t = np.asarray(schedule, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise ValueError("schedule must be a strictly increasing 1-D time grid")
    eye = np.eye(3)

    def state(ti):
        F = np.asarray(path(ti), dtype=float)
        if F.shape != (3, 3) or not np.all(np.isfinite(F)):
            raise ValueError(f"invalid path sample at t={ti}")
        return F, deformation_from_grad(F - eye)

    n = t.size - 1
    m = mat.m
    eq = mat.equilibrium
    Gam = [T.identity2() for _ in range(m)] if Gammas0 is None else [np.asarray(g, float) for g in Gammas0]
    Gs = np.empty((n + 1, m, 6))
    Qs = np.empty((n + 1, m, 6))
    Ups = np.empty((n + 1, m))
    Gi = np.empty(n + 1)
    S = np.empty((n, 6))
    D = np.empty(n)
    rd = np.empty(n)
    sd = np.empty(n)
    act = np.empty(n, dtype=bool)

    F0, s0 = state(t[0])

    def record(k, st, G):
        for a, (b, g) in enumerate(zip(mat.branches, G)):
            Gs[k, a] = g
            Qs[k, a] = conjugate_Q(st.Ctilde, g, b, eq)
            Ups[k, a] = upsilon(st.Ctilde, g, b, eq)
        Gi[k] = gibbs_iso(st.Ctilde, G, mat)

    record(0, s0, Gam)
    for k in range(n):
        dt = t[k + 1] - t[k]
        F1, s1 = state(t[k + 1])
        pair = step_pair(s0, s1, 0.5 * (F0 + F1))
        res = evaluate_step(scheme, pair, Gam, dt, mat, z_cut)
        S[k] = res.S_alg
        D[k] = physical_dissipation(Gam, res.Gammas_np1, dt, mat)
        rd[k], sd[k] = directionality_residual(scheme, pair, Gam, res, dt, mat)
        act[k] = res.enhancement_active
        Gam = res.Gammas_np1
        record(k + 1, s1, Gam)
        F0, s0 = F1, s1
    return MaterialPointTrajectory(t, Gs, Qs, S, Ups, Gi, D, rd, sd, act)
