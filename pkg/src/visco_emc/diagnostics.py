"""Energy budgets, momenta, divergence norms and temporal convergence studies.

All integrals use the assembly quadrature and the same algorithmic
quantities as the residual, so the discrete energy identity can be checked
at solver precision rather than at discretization error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensors as T
from .errors import ConvergenceError
from .fem.assembly import FieldState, MixedAssembler
from .integrators import physical_dissipation
from .kinematics import cofactor3, det3
from .materials import conjugate_Q

_EYE = np.eye(3)


@dataclass
class EnergyBudget:
    """Energy accounting of one step ``t_n -> t_{n+1}``.

    ``H``, ``K`` and ``Pot`` refer to ``t_{n+1}``; the rates ``D_phy``,
    ``D_num`` and ``P_ext`` are step averages.  ``dH`` is the energy change
    summed from increments rather than as ``H - H_prev``: the absolute
    energies carry rounding of order ``eps * c1 * volume`` from the
    invariants sitting near 3, which would swamp a round-off level balance.
    """

    H: float
    K: float
    Pot: float
    D_phy: float
    D_num: float
    P_ext: float
    balance_residual: float
    H_prev: float
    dt: float
    dH: float

    @property
    def scale(self) -> float:
        """Largest energy quantity exchanged in the step."""
        return max(abs(self.dH), self.D_phy * self.dt, self.D_num * self.dt, abs(self.P_ext) * self.dt)


@dataclass
class MomentumRecord:
    L: np.ndarray
    Jm: np.ndarray


def _budget(assembler, Y_n, Y_np1, G_n, G_np1, dt, J_h, div_h, f_ext, pot_n, pot_np1):
    K0 = assembler.kinetic_energy(Y_n.V)
    K1 = assembler.kinetic_energy(Y_np1.V)
    dH = assembler.kinetic_increment(Y_n.V, Y_np1.V) + assembler.potential_increment(Y_n.U, Y_np1.U, G_n, G_np1)
    w = assembler.space.wdV
    mat = assembler.mat
    D_phy = float(np.sum(w * physical_dissipation(list(G_n), list(G_np1), dt, mat))) if mat.m else 0.0
    D_num = float(assembler.gamma * np.sum(w * J_h * div_h * div_h))
    P_ext = float(f_ext @ (0.5 * (Y_n.V + Y_np1.V)).ravel())
    H0, H1 = K0 + pot_n, K1 + pot_np1
    return EnergyBudget(H1, K1, pot_np1, D_phy, D_num, P_ext, dH + (D_phy + D_num - P_ext) * dt, H0, dt, dH)


def energy_budget(
    assembler: MixedAssembler,
    Y_n: FieldState,
    Y_np1: FieldState,
    Gammas_n,
    Gammas_np1,
    dt: float,
    t_mid: float,
) -> EnergyBudget:
    """Budget of a step recomputed from the two end states."""
    Fh = _EYE + assembler.grad(0.5 * (Y_n.U + Y_np1.U))
    J_h = det3(Fh)
    Finv = np.swapaxes(cofactor3(Fh), -1, -2) / J_h[..., None, None]
    div_h = np.einsum("eqiK,eqKi->eq", assembler.grad(0.5 * (Y_n.V + Y_np1.V)), Finv)
    return _budget(
        assembler,
        Y_n,
        Y_np1,
        Gammas_n,
        Gammas_np1,
        dt,
        J_h,
        div_h,
        assembler.external_force(t_mid),
        assembler.potential_energy(Y_n.U, Gammas_n),
        assembler.potential_energy(Y_np1.U, Gammas_np1),
    )


def energy_budget_from_eval(assembler, Y_n, Y_np1, Gammas_n, ev, dt, pot_n=None) -> EnergyBudget:
    """Budget of an accepted step reusing the converged evaluation."""
    if pot_n is None:
        pot_n = assembler.potential_energy(Y_n.U, Gammas_n)
    G1 = ev.Gammas_np1
    # same evaluation path as pot_n, so a restarted run reproduces the budget bit for bit
    pot1 = assembler.potential_energy(Y_np1.U, G1)
    return _budget(assembler, Y_n, Y_np1, Gammas_n, G1, dt, ev.J_half, ev.div_half, ev.f_ext, pot_n, pot1)


def momenta(assembler: MixedAssembler, Y: FieldState) -> MomentumRecord:
    """Linear momentum ``int rho0 V`` and angular momentum ``int (X + U) x rho0 V``."""
    return MomentumRecord(assembler.linear_momentum(Y.V), assembler.angular_momentum(Y.U, Y.V))


def div_velocity_norm(assembler: MixedAssembler, Y: FieldState) -> float:
    """L2 norm of the spatial velocity divergence over the current configuration."""
    return assembler.div_velocity_norm(Y.U, Y.V)


CSV_COLUMNS = [
    "step",
    "t",
    "K",
    "Pot",
    "H",
    "D_phy",
    "D_num",
    "P_ext",
    "balance_residual",
    "energy_scale",
    "Lx",
    "Ly",
    "Lz",
    "Jx",
    "Jy",
    "Jz",
    "divnorm",
    "newton_iters",
    "residual",
    "rk_max",
    "v_scale",
]


def step_record(assembler: MixedAssembler, report, budget: EnergyBudget, Y: FieldState) -> dict:
    """One CSV row of per-step diagnostics."""
    mom = momenta(assembler, Y)
    return {
        "step": report.step,
        "t": report.t,
        "K": budget.K,
        "Pot": budget.Pot,
        "H": budget.H,
        "D_phy": budget.D_phy,
        "D_num": budget.D_num,
        "P_ext": budget.P_ext,
        "balance_residual": budget.balance_residual,
        "energy_scale": budget.scale,
        "Lx": mom.L[0],
        "Ly": mom.L[1],
        "Lz": mom.L[2],
        "Jx": mom.Jm[0],
        "Jy": mom.Jm[1],
        "Jz": mom.Jm[2],
        "divnorm": div_velocity_norm(assembler, Y),
        "newton_iters": report.iterations,
        "residual": report.residual_norms[-1],
        "rk_max": report.rk_max,
        "v_scale": report.v_scale,
    }


class CSVWriter:
    """Streams diagnostics rows to a CSV file."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        fresh = not (append and self.path.exists())
        self._fh = self.path.open("w" if fresh else "a", newline="")
        self._w = csv.DictWriter(self._fh, fieldnames=CSV_COLUMNS)
        if fresh:
            self._w.writeheader()

    def write(self, row: dict):
        self._w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(rows: Sequence[dict], path) -> None:
    with CSVWriter(path) as w:
        for r in rows:
            w.write(r)


def read_csv(path) -> dict:
    """Column-oriented read of a diagnostics CSV."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in (rows[0].keys() if rows else CSV_COLUMNS)}


# --------------------------------------------------------------------------- convergence


@dataclass
class RateTable:
    """Errors per field and step size, with least-squares log-log slopes."""

    dts: list
    errors: dict  # field -> list of errors aligned with dts
    slopes: dict
    failed: dict = field(default_factory=dict)  # dt -> message

    def format(self) -> str:
        names = list(self.errors)
        lines = ["dt".rjust(12) + "".join(n.rjust(14) for n in names)]
        for i, dt in enumerate(self.dts):
            lines.append(f"{dt:12.4e}" + "".join(f"{self.errors[n][i]:14.4e}" for n in names))
        lines.append("slope".rjust(12) + "".join(f"{self.slopes[n]:14.3f}" for n in names))
        for dt, msg in self.failed.items():
            lines.append(f"excluded dt={dt:g}: {msg}")
        return "\n".join(lines)


def fit_slope(dts, errors) -> float:
    dts, errors = np.asarray(dts, float), np.asarray(errors, float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(dts[ok]), np.log(errors[ok]), 1)[0])


def field_error(a, b) -> float:
    """Relative l2 difference, normalized by the reference."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    ref = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (ref if ref > 0 else 1.0))


def convergence_study(
    run: Callable[[float], dict],
    dt_list: Sequence[float],
    dt_overkill: float | None = None,
    reference: dict | None = None,
) -> RateTable:
    """Temporal convergence against an overkill solution.

    ``run(dt)`` returns a mapping field name -> array at the probe time.
    The reference is ``run(dt_overkill)`` unless ``reference`` is supplied
    (e.g. computed once with a higher-order scheme).  Runs that raise
    :class:`ConvergenceError` are excluded and reported.
    """
    if reference is None:
        if dt_overkill is None:
            raise ValueError("need dt_overkill or reference")
        if dt_list and dt_overkill > min(dt_list):
            raise ValueError("overkill step must not exceed the smallest study step")
        reference = run(dt_overkill)
    dts, errs, failed = [], {k: [] for k in reference}, {}
    for dt in dt_list:
        try:
            out = run(dt)
        except ConvergenceError as exc:
            failed[dt] = str(exc)
            continue
        dts.append(dt)
        for k in reference:
            errs[k].append(field_error(out[k], reference[k]))
    return RateTable(dts, errs, {k: fit_slope(dts, v) for k, v in errs.items()}, failed)


def fem_probe_runner(make_assembler: Callable[[], MixedAssembler], t_probe: float, scheme=None, gamma: float = 0.0, **solver_kw):
    """``run(dt)`` for :func:`convergence_study` driving the FEM solver to ``t_probe``.

    Returned fields: ``U``, ``V``, ``P`` (nodal) and ``Gamma1``, ``Q1``
    (first branch, all quadrature points).
    """
    from .solver import SolverConfig, run_simulation

    def run(dt):
        asm = make_assembler()
        n = int(round(t_probe / dt))
        if abs(n * dt - t_probe) > 1e-9 * t_probe:
            raise ValueError(f"dt={dt} does not divide the probe time {t_probe}")
        cfg = SolverConfig(dt=dt, T=t_probe, gamma=gamma, scheme=scheme or asm.scheme, **solver_kw)
        res = run_simulation(asm, cfg, n_steps=n, diagnostics=False)
        Y, qp = res.state, res.qp
        out = {"U": Y.U, "V": Y.V, "P": Y.P}
        if asm.mat.m:
            F = _EYE + asm.grad(Y.U)
            Ct = det3(F)[..., None] ** (-2.0 / 3.0) * T.gram(F)
            b = asm.mat.branches[0]
            out["Gamma1"] = qp.committed[0]
            out["Q1"] = conjugate_Q(Ct, qp.committed[0], b, asm.mat.equilibrium)
        return out

    return run


def material_point_runner(path, scheme, mat, t_probe: float, **kw):
    """``run(dt)`` for :func:`convergence_study` on a single material point (fields ``Gamma1``, ``Q1``).

    The algorithmic stress is left out: it approximates the stress at the step
    mid-point, so its value "at" the probe time carries a ``dt/2`` offset.
    """
    from .integrators import material_point_run

    def run(dt):
        n = int(round(t_probe / dt))
        traj = material_point_run(path, np.linspace(0.0, t_probe, n + 1), scheme, mat, **kw)
        return {"Gamma1": traj.Gammas[-1][0], "Q1": traj.Q[-1][0]}

    return run


def budget_table(records: Sequence[dict]) -> dict:
    """Summary statistics of the per-step balance residuals."""
    res = np.array([abs(r["balance_residual"]) for r in records])
    scale = np.array([r["energy_scale"] for r in records])
    return {
        "max_abs": float(res.max(initial=0.0)),
        "median_abs": float(np.median(res)) if res.size else 0.0,
        "max_rel": float((res / np.maximum(scale, np.finfo(float).tiny)).max(initial=0.0)),
        "max_scale": float(scale.max(initial=0.0)),
    }


def as_dict(obj) -> dict:
    return asdict(obj)


def hysteresis_area(x: np.ndarray, y: np.ndarray) -> float:
    """Signed area enclosed by the closed polyline ``(x, y)`` (shoelace)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_finite_record(r: dict) -> bool:
    return all(math.isfinite(float(v)) for v in r.values())


def isochoric_shear_path(amplitude: float = 0.3, omega: float = 2 * math.pi):
    """Smooth volume-preserving path ``F(t) = I + a sin(w t) e1 (x) e2 + a (1 - cos(w t)) e2 (x) e3``.

    Both shears are upper triangular with unit diagonal, so ``det F = 1``.
    """

    def F(t):
        s, c = math.sin(omega * t), 1.0 - math.cos(omega * t)
        return np.array([[1.0, amplitude * s, 0.0], [0.0, 1.0, amplitude * c], [0.0, 0.0, 1.0]])

    return F


def _random_step(rng, mat, F_scale=0.25, step_scale=0.15, gamma_scale=0.2):
    from .kinematics import StepPair

    def rand_F(scale):
        while True:
            F = _EYE + scale * rng.standard_normal((3, 3))
            if np.linalg.det(F) > 0.2:
                return F

    F0 = rand_F(F_scale)
    while True:
        F1 = F0 + step_scale * rng.standard_normal((3, 3))
        if np.linalg.det(F1) > 0.2:
            break
    pair = StepPair.from_C(T.gram(F0), T.gram(F1), 0.5 * (F0 + F1))
    Gn = []
    for _ in mat.branches:
        A = gamma_scale * rng.standard_normal((3, 3))
        Gn.append(T.identity2() + T.from_matrix(0.5 * (A + A.T)))
    return pair, Gn, float(10 ** rng.uniform(-3, 0))


def tangent_check(scheme, mat, samples: int = 100, seed: int = 0, h: float = 1e-6) -> float:
    """Worst relative mismatch between the consistent tangent and central differences.

    Random admissible steps; the mismatch is the max-norm difference over the
    max-norm of the finite-difference Jacobian (``2 dS/dC_{n+1}``, or
    ``2 dS/dC_mid`` for the mid-point comparator).
    """
    from .integrators import SchemeKind, evaluate_step
    from .kinematics import StepPair

    scheme = SchemeKind.parse(scheme)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        pair, Gn, dt = _random_step(rng, mat)
        res = evaluate_step(scheme, pair, Gn, dt, mat, with_tangent=True)
        fd = np.zeros((6, 6))
        for K in range(6):
            e = np.zeros(6)
            e[K] = h
            if scheme is SchemeKind.MIDPOINT:
                # perturb C_mid = F_half^T F_half through a Cholesky factor F' = L^T
                Cm = pair.C_mid
                Lp, Lm = np.linalg.cholesky(T.to_matrix(Cm + e)).T, np.linalg.cholesky(T.to_matrix(Cm - e)).T
                Sp = evaluate_step(scheme, StepPair.from_C(pair.C_n, pair.C_np1, Lp), Gn, dt, mat).S_alg
                Sm = evaluate_step(scheme, StepPair.from_C(pair.C_n, pair.C_np1, Lm), Gn, dt, mat).S_alg
            else:
                Sp = evaluate_step(scheme, StepPair.from_C(pair.C_n, pair.C_np1 + e, pair.F_half), Gn, dt, mat).S_alg
                Sm = evaluate_step(scheme, StepPair.from_C(pair.C_n, pair.C_np1 - e, pair.F_half), Gn, dt, mat).S_alg
            fd[:, K] = (Sp - Sm) / (2 * h) / T.W[K]
        fd *= 2
        tan = res.tangent_mid if scheme is SchemeKind.MIDPOINT else res.tangent
        worst = max(worst, float(np.abs(tan - fd).max() / max(np.abs(fd).max(), np.finfo(float).tiny)))
    return worst


def global_tangent_check(mat, scheme, seed: int = 0, gamma: float = 0.0, dt: float = 0.05) -> float:
    """Block Jacobian of the assembled residual against central differences.

    One-element unit cube, clamped bottom and loaded top, at a random
    non-equilibrium iterate; returns the worst entry mismatch relative to the
    largest finite-difference entry over the free dofs.
    """
    from .fem import LoadSpec, TaylorHoodSpace, VectorLoad, generate_box_mesh

    rng = np.random.default_rng(seed)
    sp_ = TaylorHoodSpace(generate_box_mesh((1.0, 1.0, 1.0), (1, 1, 1)))
    loads = LoadSpec(tractions={"zmax": VectorLoad.parse("hat(2.5, 5) * (100, 0, 50)")}, dirichlet={"zmin": (True, True, True)})
    A = MixedAssembler(sp_, mat, loads, scheme, gamma=gamma)
    n, npr = sp_.n_nodes, sp_.n_pressure
    # displacement/velocity scales sized to the stiffness so strains stay moderate
    Y = FieldState(0.05 * rng.standard_normal((n, 3)), 0.3 * rng.standard_normal((n, 3)), np.zeros(npr))
    Y.U[A.fixed_vel] = 0.0
    Y.V[A.fixed_vel] = 0.0
    G = np.empty((mat.m, sp_.n_elements, sp_.n_qp, 6))
    for a in range(mat.m):
        B = 0.02 * rng.standard_normal((3, 3))
        G[a] = T.identity2() + T.from_matrix(0.5 * (B + B.T))
    modulus = mat.equilibrium.c1 + mat.equilibrium.c2 + sum(b.mu for b in mat.branches)
    V1 = Y.V + 0.2 * rng.standard_normal((n, 3))
    V1[A.fixed_vel] = 0.0
    P1 = 0.01 * modulus * rng.standard_normal(npr)
    D = dt * 0.5 * (Y.V + V1)
    A.begin_step(Y)
    K = A.evaluate(Y, V1, P1, D, G, dt, 0.3, with_tangent=True).K.toarray()

    def R(x):
        v, p = x[: 3 * n].reshape(n, 3), x[3 * n :]
        e = A.evaluate(Y, v, p, D + 0.5 * dt * (v - V1), G, dt, 0.3)
        return np.concatenate([e.Rm, e.Rp])

    x0 = np.concatenate([V1.ravel(), P1])
    free = np.nonzero(~A.fixed)[0]
    Kfd = np.zeros((len(x0), len(free)))
    for c, j in enumerate(free):
        h = 1e-6 * (1.0 if j < 3 * n else 1e-3 * modulus)
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        Kfd[:, c] = (R(xp) - R(xm)) / (2 * h)
    Kf, Kd = K[np.ix_(free, free)], Kfd[free]
    return float(np.abs(Kf - Kd).max() / np.abs(Kd).max())
