"""Residuals and consistent tangent of the mixed (U, V, P) formulation.

One time step ``t_n -> t_{n+1}`` is written in terms of the unknowns
``V_{n+1}``, ``P_{n+1}`` and the displacement increment ``D = U_{n+1} - U_n``.
Mid-point quantities are ``F_half = I + grad(U_n + D/2)``,
``V_half = (V_n + V_{n+1})/2`` and ``P_half = (P_n + P_{n+1})/2``.

Momentum residual, per test function ``W``::

    int W . rho0 (V_{n+1} - V_n)/dt + (F_half^T grad W) : S_alg
        - J_half P_half grad W : F_half^{-T} - W . rho0 B
        + gamma J_half (grad W : F_half^{-T}) (grad V_half : F_half^{-T})
    - int_{Gamma_H} W . H

Mass residual, per pressure test function ``Q``::

    int Q J_half grad V_half : F_half^{-T}

Tangent blocks are derivatives with respect to ``V_{n+1}`` and ``P_{n+1}``
with ``dD = (dt/2) dV`` chained in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import tensors as T
from ..errors import NonPositiveJacobianError
from ..integrators import SchemeKind, Z_CUT, evaluate_step
from ..kinematics import StepPair, cofactor3, det3, unimodular, unimodular_increment
from ..materials import MaterialParams, conjugate_Q, gibbs_iso, gibbs_iso_increment
from .loads import LoadSpec
from .space import TaylorHoodSpace

_EYE = np.eye(3)
# selection matrix mapping a full (k, l) index pair onto symmetric slot K, both orders
_SEL = np.zeros((9, 6))
for _K, (_k, _l) in enumerate(zip(T.VOIGT_I, T.VOIGT_J)):
    _SEL[3 * _k + _l, _K] += 1.0
    _SEL[3 * _l + _k, _K] += 1.0
_SELW = _SEL * T.W


@dataclass
class FieldState:
    """Nodal displacement ``U (n, 3)``, velocity ``V (n, 3)`` and pressure ``P (n_p,)``."""

    U: np.ndarray
    V: np.ndarray
    P: np.ndarray

    def copy(self) -> "FieldState":
        return FieldState(self.U.copy(), self.V.copy(), self.P.copy())

    @classmethod
    def zeros(cls, space: TaylorHoodSpace) -> "FieldState":
        return cls(np.zeros((space.n_nodes, 3)), np.zeros((space.n_nodes, 3)), np.zeros(space.n_pressure))


class QPState:
    """Internal variables at quadrature points, shape ``(m, n_elem, n_qp, 6)``.

    ``committed`` holds the values at ``t_n`` and changes only through
    :meth:`commit`; ``trial`` holds the latest Newton iterate.
    """

    def __init__(self, m: int, n_elem: int, n_qp: int):
        self.committed = np.broadcast_to(T.identity2(), (m, n_elem, n_qp, 6)).copy()
        self.trial = self.committed.copy()

    def commit(self):
        self.committed = self.trial.copy()

    def copy(self) -> "QPState":
        out = QPState.__new__(QPState)
        out.committed = self.committed.copy()
        out.trial = self.trial.copy()
        return out


@dataclass
class Evaluation:
    """Everything computed at one Newton iterate."""

    Rm: np.ndarray  # (n_vel,)  Dirichlet rows zeroed
    Rp: np.ndarray  # (n_p,)
    K: sp.csc_matrix | None
    Gammas_np1: np.ndarray
    Ctilde_np1: np.ndarray
    J_half: np.ndarray
    div_half: np.ndarray
    f_ext: np.ndarray  # (n_vel,) traction plus body force at t_mid
    blocks: tuple | None = None


class MixedAssembler:
    """Assembly of the Q2/Q1 mixed system for a given material, scheme and loading."""

    def __init__(
        self,
        space: TaylorHoodSpace,
        mat: MaterialParams,
        loads: LoadSpec | None = None,
        scheme=SchemeKind.SCHEME2,
        gamma: float = 0.0,
        z_cut: float = Z_CUT,
    ):
        self.space = space
        self.mat = mat
        self.loads = loads or LoadSpec()
        self.scheme = SchemeKind.parse(scheme)
        if gamma < 0:
            raise ValueError("gamma must be >= 0")
        self.gamma = float(gamma)
        self.z_cut = z_cut
        sp_ = space
        self.M = sp_.scalar_mass(mat.rho0).tocsr()
        self.mass_rowsum = np.asarray(self.M.sum(axis=1)).ravel()
        Me = mat.rho0 * np.einsum("eq,qa,qb->eab", sp_.wdV, sp_.N2, sp_.N2)
        self._Mkron = np.einsum("eab,ij->eaibj", Me, _EYE).reshape(-1, 81, 81)
        self.traction_weights = {name: sp_.face_data(name).node_weights for name in self.loads.tractions}
        fixed = np.zeros(sp_.n_dofs, dtype=bool)
        for name, comps in self.loads.dirichlet.items():
            nodes = sp_.face_data(name).nodes
            for c, on in enumerate(comps):
                if on:
                    fixed[3 * nodes + c] = True
        self.fixed = fixed
        self.fixed_vel = fixed[: sp_.n_vel].reshape(-1, 3)
        self._dNt = sp_.dN.transpose(0, 2, 1, 3).reshape(sp_.n_elements, 27, 3 * sp_.n_qp)
        self._build_pattern()
        self._step_cache = None

    # ------------------------------------------------------------------ helpers
    def grad(self, nodal: np.ndarray) -> np.ndarray:
        """Reference gradient ``(n_elem, n_qp, 3, 3)`` of a nodal vector field."""
        Ue = nodal[self.space.conn]  # (E, 27, 3)
        return np.matmul(Ue.transpose(0, 2, 1)[:, None], self.space.dN)

    def external_force(self, t: float) -> np.ndarray:
        f = np.zeros((self.space.n_nodes, 3))
        for name, load in self.loads.tractions.items():
            f += self.traction_weights[name][:, None] * load(t)[None, :]
        if self.loads.body is not None:
            f += self.mass_rowsum[:, None] * self.loads.body(t)[None, :]
        return f.ravel()

    def surface_traction_vector(self, t: float) -> np.ndarray:
        """Assembled ``int W . H(t) dGamma`` over all traction sets."""
        f = np.zeros((self.space.n_nodes, 3))
        for name, load in self.loads.tractions.items():
            f += self.traction_weights[name][:, None] * load(t)[None, :]
        return f.ravel()

    def _build_pattern(self):
        sp_ = self.space
        E = sp_.n_elements
        nv, N = sp_.n_vel, sp_.n_dofs
        vd, pd = sp_.vdofs, nv + sp_.pconn
        rows = np.concatenate(
            [
                np.broadcast_to(vd[:, :, None], (E, 81, 81)).ravel(),
                np.broadcast_to(vd[:, :, None], (E, 81, 8)).ravel(),
                np.broadcast_to(pd[:, :, None], (E, 8, 81)).ravel(),
            ]
        )
        cols = np.concatenate(
            [
                np.broadcast_to(vd[:, None, :], (E, 81, 81)).ravel(),
                np.broadcast_to(pd[:, None, :], (E, 81, 8)).ravel(),
                np.broadcast_to(vd[:, None, :], (E, 8, 81)).ravel(),
            ]
        )
        fixed_ids = np.nonzero(self.fixed)[0]
        keep = ~(self.fixed[rows] | self.fixed[cols])
        keys = np.concatenate([cols[keep] * N + rows[keep], fixed_ids * N + fixed_ids])
        ukeys, inv = np.unique(keys, return_inverse=True)
        nnz = len(ukeys)
        emap = np.full(rows.size, nnz, dtype=np.int64)
        emap[keep] = inv[: keep.sum()]
        self._emap = emap
        self._diag_map = inv[keep.sum():]
        self._nnz = nnz
        self._indices = (ukeys % N).astype(np.int32)
        colidx = ukeys // N
        self._indptr = np.searchsorted(colidx, np.arange(N + 1)).astype(np.int32)

    # ---------------------------------------------------------------- evaluation
    def begin_step(self, Y_n: FieldState):
        """Cache quantities that depend only on the state at ``t_n``."""
        gU = self.grad(Y_n.U)
        F_n = _EYE + gU
        self._step_cache = dict(id=id(Y_n), F_n=F_n, C_n=T.gram(F_n), gV_n=self.grad(Y_n.V))

    def evaluate(
        self,
        Y_n: FieldState,
        V1: np.ndarray,
        P1: np.ndarray,
        D: np.ndarray,
        Gammas_n: np.ndarray,
        dt: float,
        t_mid: float,
        with_tangent: bool = False,
    ) -> Evaluation:
        """Residuals (and optionally the condensed Jacobian) at one iterate."""
        if self._step_cache is None or self._step_cache["id"] != id(Y_n):
            self.begin_step(Y_n)
        cache = self._step_cache
        sp_ = self.space
        E, Q = sp_.n_elements, sp_.n_qp
        dN, w = sp_.dN, sp_.wdV
        gamma = self.gamma

        gD = self.grad(D)
        F1 = cache["F_n"] + gD
        Fh = cache["F_n"] + 0.5 * gD
        J1 = det3(F1)
        Jh = det3(Fh)
        if np.any(J1 <= 0) or np.any(Jh <= 0):
            raise NonPositiveJacobianError("element inversion during the Newton iteration")
        # (C_{n+1} - C_n)/2 = sym(F_half^T grad D), free of cancellation
        Z = T.from_matrix(np.matmul(np.swapaxes(Fh, -1, -2), gD))
        C1 = cache["C_n"] + 2.0 * Z
        mid = self.scheme is SchemeKind.MIDPOINT
        pair = StepPair.from_C(cache["C_n"], C1, Fh if mid else None, Z=Z)
        Gn = [Gammas_n[a] for a in range(self.mat.m)]
        res = evaluate_step(self.scheme, pair, Gn, dt, self.mat, self.z_cut, with_tangent=with_tangent)
        Gnp1 = np.stack(res.Gammas_np1) if self.mat.m else np.zeros((0, E, Q, 6))
        Sm = T.to_matrix(res.S_alg)

        cof = cofactor3(Fh)  # J F^{-T}
        Finv = np.swapaxes(cof, -1, -2) / Jh[..., None, None]
        Jb = np.matmul(dN, np.swapaxes(cof, -1, -2))  # (E,Q,27,3): sum_K dN_K cof_iK
        Ph = sp_.N1 @ (0.5 * (Y_n.P + P1))[sp_.pconn].T  # (Q, E)
        Ph = Ph.T
        gVh = 0.5 * (cache["gV_n"] + self.grad(V1))
        div = np.sum(gVh * np.swapaxes(Finv, -1, -2), axis=(-2, -1))

        FS = np.matmul(Fh, Sm)  # (E,Q,3,3)
        fe = np.matmul(self._dNt, (FS * w[..., None, None]).transpose(0, 1, 3, 2).reshape(E, 3 * Q, 3))
        fe += np.matmul((w * (gamma * div - Ph))[:, None, :], Jb.reshape(E, Q, 81)).reshape(E, 27, 3)
        Rm = np.bincount(sp_.vdofs.ravel(), weights=fe.ravel(), minlength=sp_.n_vel)
        Rm += (self.M @ (V1 - Y_n.V)).ravel() / dt
        f_ext = self.external_force(t_mid)
        Rm -= f_ext
        Rm[self.fixed[: sp_.n_vel]] = 0.0
        Rp = np.bincount(sp_.pconn.ravel(), weights=((w * Jh * div) @ sp_.N1).ravel(), minlength=sp_.n_pressure)

        out = Evaluation(Rm, Rp, None, Gnp1, pair.Ctilde_np1, Jh, div, f_ext)
        if not with_tangent:
            return out


        def qsum(L, R):
            """sum_q L[e,q,x,k] R[e,q,y,k] -> (E, X, Y)."""
            X, Y, k = L.shape[2], R.shape[2], L.shape[3]
            return np.matmul(L.transpose(0, 2, 1, 3).reshape(E, X, Q * k), R.transpose(0, 1, 3, 2).reshape(E, Q * k, Y))

        def material(FL, Tan, FR, coef):
            """sum_q coef w (F_L^T grad W) : Tan : (F_R^T grad dV), written with full indices."""
            Tf = (_SELW @ Tan @ _SELW.T).reshape(E, Q, 3, 27)  # k, (l m n)
            X = np.matmul(FL, Tf).reshape(E, Q, 3, 3, 3, 3)  # i l m n
            X = np.matmul(X.transpose(0, 1, 2, 3, 5, 4), np.swapaxes(FR, -1, -2)[:, :, None, None])  # i l n j
            A_ = X.transpose(0, 1, 3, 2, 5, 4).reshape(E, Q, 3, 27)  # l, (i j n)
            Y = np.matmul(dN, A_).reshape(E, Q, 27, 9, 3).transpose(0, 2, 3, 1, 4).reshape(E, 243, Q * 3)
            K = np.matmul(Y, (dN * (coef * w)[..., None, None]).transpose(0, 1, 3, 2).reshape(E, Q * 3, 27))
            return K.reshape(E, 27, 3, 3, 27).transpose(0, 1, 2, 4, 3).reshape(E, 81, 81)

        Kuu = material(Fh, res.tangent, F1, 0.25)
        if mid:
            Kuu += material(Fh, res.tangent_mid, Fh, 0.125)
        # geometric stiffness from the F_half pairing
        SdN = np.matmul(dN, Sm)  # (E,Q,27,3), S symmetric
        G = qsum(dN * w[..., None, None], SdN)
        K5 = Kuu.reshape(E, 27, 3, 27, 3)
        for i in range(3):
            K5[:, :, i, :, i] += 0.5 * G
        JbF = Jb.reshape(E, Q, 1, 81)
        bF = (Jb / Jh[..., None, None]).reshape(E, Q, 1, 81)

        def outer(L, R, c):
            """sum_q c L_x R_y for flat (E,Q,1,X) arrays."""
            return np.matmul((L[:, :, 0, :] * c[..., None]).transpose(0, 2, 1), R[:, :, 0, :])

        M1 = outer(JbF, bF, w * 0.5 * (gamma * div - Ph))
        Kuu += M1 - M1.reshape(E, 27, 3, 27, 3).transpose(0, 1, 4, 3, 2).reshape(E, 81, 81)
        Lh = np.matmul(gVh, Finv)
        lb = np.matmul(Jb / Jh[..., None, None], Lh).reshape(E, Q, 1, 81)
        if gamma:
            Kuu += outer(JbF, lb, -0.5 * gamma * w)
            Kvv = outer(JbF, bF, 0.5 * gamma * w) + self._Mkron / dt
        else:
            Kvv = self._Mkron / dt
        Kvp = -0.5 * np.matmul((Jb.reshape(E, Q, 81) * w[..., None]).transpose(0, 2, 1), sp_.N1)
        Kpv = -np.swapaxes(Kvp, 1, 2)
        Kpu = 0.5 * np.matmul(
            sp_.N1.T[None], (w[..., None] * (div[..., None] * JbF[:, :, 0, :] - Jh[..., None] * lb[:, :, 0, :]))
        )
        A = Kvv + 0.5 * dt * Kuu
        Cb = Kpv + 0.5 * dt * Kpu
        out.K = self._to_csc(A, Kvp, Cb)
        out.blocks = (A, Kvp, Cb)
        return out

    def _to_csc(self, A, B, Cb):
        vals = np.concatenate([A.ravel(), B.ravel(), Cb.ravel()])
        data = np.bincount(self._emap, weights=vals, minlength=self._nnz + 1)[: self._nnz]
        data[self._diag_map] += 1.0
        N = self.space.n_dofs
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(N, N))

    # ----------------------------------------------------------- public wrappers
    def assemble_residuals(self, Y_new: FieldState, Y_old: FieldState, qpstate: QPState, dt: float, t_mid: float):
        """``(Rp, Rm)`` at the iterate ``Y_new``; updates ``qpstate.trial``."""
        ev = self.evaluate(Y_old, Y_new.V, Y_new.P, Y_new.U - Y_old.U, qpstate.committed, dt, t_mid)
        qpstate.trial = ev.Gammas_np1
        return ev.Rp, ev.Rm

    def assemble_tangent(self, Y_new: FieldState, Y_old: FieldState, qpstate: QPState, dt: float, t_mid: float):
        """Sparse blocks ``(A, B, Cb)`` with Dirichlet rows/columns condensed (unit diagonal in ``A``)."""
        ev = self.evaluate(Y_old, Y_new.V, Y_new.P, Y_new.U - Y_old.U, qpstate.committed, dt, t_mid, with_tangent=True)
        K = ev.K.tocsr()
        nv = self.space.n_vel
        return K[:nv, :nv], K[:nv, nv:], K[nv:, :nv]

    # ------------------------------------------------------------ diagnostics
    def kinetic_energy(self, V: np.ndarray) -> float:
        return 0.5 * float(np.sum(V * (self.M @ V)))

    def potential_energy(self, U: np.ndarray, Gammas: np.ndarray) -> float:
        F = _EYE + self.grad(U)
        J = det3(F)
        Ct = (J[..., None] ** (-2.0 / 3.0)) * T.gram(F)
        return float(np.sum(self.space.wdV * gibbs_iso(Ct, [Gammas[a] for a in range(self.mat.m)], self.mat)))

    def kinetic_increment(self, V_n: np.ndarray, V_np1: np.ndarray) -> float:
        """``K(V_{n+1}) - K(V_n)`` as ``(V1 - V0) . M (V1 + V0) / 2``."""
        return 0.5 * float(np.sum((V_np1 - V_n) * (self.M @ (V_np1 + V_n))))

    def potential_increment(self, U_n, U_np1, Gammas_n, Gammas_np1) -> float:
        """``Pot(U_{n+1}, Gammas_{n+1}) - Pot(U_n, Gammas_n)`` without cancellation.

        The strain part goes through the exact increment of the unimodular
        strain, the internal-variable part through ``Q`` being affine in
        ``Gamma``; the rounding error scales with the step, not with the
        absolute energy.
        """
        F_n = _EYE + self.grad(U_n)
        gD = self.grad(U_np1 - U_n)
        Z = T.from_matrix(np.matmul(np.swapaxes(F_n + 0.5 * gD, -1, -2), gD))
        C_n = T.gram(F_n)
        Ct0 = unimodular(C_n)
        G1 = [Gammas_np1[a] for a in range(self.mat.m)]
        dG = gibbs_iso_increment(Ct0, unimodular_increment(C_n, Z), G1, self.mat)
        for a, b in enumerate(self.mat.branches):
            Q0 = conjugate_Q(Ct0, Gammas_n[a], b, self.mat.equilibrium)
            Q1 = conjugate_Q(Ct0, Gammas_np1[a], b, self.mat.equilibrium)
            # |Q1|^2 - |Q0|^2 with Q1 - Q0 = -mu (Gamma1 - Gamma0)
            dG = dG - 0.25 * T.ddot(Gammas_np1[a] - Gammas_n[a], Q0 + Q1)
        return float(np.sum(self.space.wdV * dG))

    def linear_momentum(self, V: np.ndarray) -> np.ndarray:
        return self.mass_rowsum @ V

    def angular_momentum(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        phi = self.space.X + U
        return np.cross(phi, self.M @ V).sum(axis=0)

    def div_velocity_norm(self, U: np.ndarray, V: np.ndarray) -> float:
        """``||div_x v||`` in L2 over the current configuration."""
        F = _EYE + self.grad(U)
        J = det3(F)
        Finv = np.swapaxes(cofactor3(F), -1, -2) / J[..., None, None]
        d = np.einsum("eqiK,eqKi->eq", self.grad(V), Finv)
        return float(np.sqrt(np.sum(self.space.wdV * J * d * d)))
