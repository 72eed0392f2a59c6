from __future__ import annotations

import math

import numpy as np
import pytest

from visco_emc import diagnostics as dg
from visco_emc.errors import ConvergenceError
from visco_emc.fem import LoadSpec, MixedAssembler, TaylorHoodSpace, VectorLoad, generate_box_mesh
from visco_emc.solver import SolverConfig, initial_state, run_simulation

from conftest import lblock_material


def free_cube(scheme="2", gamma=0.0, divs=(1, 1, 1), load="hat(0.25, 0.5) * (-250, 100, -300)"):
    sp_ = TaylorHoodSpace(generate_box_mesh((1.0, 1.0, 1.0), divs))
    loads = LoadSpec(tractions={"zmax": VectorLoad.parse(load)}) if load else LoadSpec()
    return MixedAssembler(sp_, lblock_material(), loads, scheme, gamma=gamma)


@pytest.fixture(scope="module")
def neumann_run():
    A = free_cube(gamma=50.0)
    res = run_simulation(A, SolverConfig(dt=0.05, T=1.0, gamma=50.0))
    return A, res


class TestBudget:
    def test_balance_and_signs(self, neumann_run):
        _, res = neumann_run
        scale = max(r["energy_scale"] for r in res.records)
        assert scale > 0
        for r in res.records:
            assert abs(r["balance_residual"]) <= 1e-9 * scale
            assert r["D_phy"] >= 0 and r["D_num"] >= 0
            assert r["H"] == pytest.approx(r["K"] + r["Pot"])

    def test_recomputed_budget_matches(self):
        A = free_cube()
        cfg = SolverConfig(dt=0.05, T=0.2)
        res = run_simulation(A, cfg, n_steps=3)
        Y_n, qp_n = res.state.copy(), res.qp.copy()
        more = run_simulation(A, cfg, Y_n.copy(), res.qp, res.t, res.step, n_steps=1)
        b = dg.energy_budget(A, Y_n, more.state, qp_n.committed, more.qp.committed, cfg.dt, res.t + 0.5 * cfg.dt)
        r = more.records[0]
        assert b.H == pytest.approx(r["H"], rel=1e-12)
        assert b.D_phy == pytest.approx(r["D_phy"], rel=1e-12)
        assert abs(b.balance_residual - r["balance_residual"]) <= 1e-13 * b.scale

    def test_increments_match_differences(self, rng):
        A = free_cube(load=None)
        n = A.space.n_nodes
        U0, U1 = 0.05 * rng.standard_normal((n, 3)), 0.05 * rng.standard_normal((n, 3))
        V0, V1 = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
        shape = (A.mat.m, A.space.n_elements, A.space.n_qp, 6)
        G0 = np.broadcast_to(np.eye(3)[[0, 1, 2, 0, 1, 0], [0, 1, 2, 1, 2, 2]], shape) + 0.05 * rng.standard_normal(shape)
        G1 = G0 + 0.05 * rng.standard_normal(shape)
        dP = A.potential_energy(U1, G1) - A.potential_energy(U0, G0)
        assert A.potential_increment(U0, U1, G0, G1) == pytest.approx(dP, rel=1e-10)
        dK = A.kinetic_energy(V1) - A.kinetic_energy(V0)
        assert A.kinetic_increment(V0, V1) == pytest.approx(dK, rel=1e-12)

    def test_increment_resolves_tiny_steps(self, rng):
        """Linear in the step size down to steps where the plain difference is pure round-off."""
        A = free_cube(load=None)
        n = A.space.n_nodes
        U0, dU = 0.05 * rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
        G = np.zeros((A.mat.m, A.space.n_elements, A.space.n_qp, 6))
        G[..., :3] = 1.0
        slope = [A.potential_increment(U0, U0 + s * dU, G, G) / s for s in (1e-9, 1e-11)]
        assert slope[1] == pytest.approx(slope[0], rel=1e-6)

    def test_momentum_after_loads(self, neumann_run):
        A, res = neumann_run
        free = [r for r in res.records if r["t"] > 0.5 + 1e-9]
        L0 = np.array([free[0][k] for k in ("Lx", "Ly", "Lz")])
        J0 = np.array([free[0][k] for k in ("Jx", "Jy", "Jz")])
        for r in free:
            assert np.abs(np.array([r["Lx"], r["Ly"], r["Lz"]]) - L0).max() <= 1e-10 * np.abs(L0).max()
            assert np.abs(np.array([r["Jx"], r["Jy"], r["Jz"]]) - J0).max() <= 1e-10 * np.abs(J0).max()
        # the impulse of the load is the final linear momentum: int_0^0.5 hat = 0.0625 per unit area
        np.testing.assert_allclose(L0, 0.0625 * np.array([-250, 100, -300]), rtol=1e-10)

    def test_spinning_body_momenta(self):
        A = free_cube(load=None)
        Y = initial_state(A, velocity=(0.1, 0.0, 0.0), angular_velocity=(0.0, 0.0, 0.3))
        m = dg.momenta(A, Y)
        rho = A.mat.rho0
        np.testing.assert_allclose(m.L, rho * (np.array([0.1, 0, 0]) + np.cross([0, 0, 0.3], [0.5, 0.5, 0.5])), atol=1e-12)


class TestCSV:
    def test_round_trip(self, tmp_path, neumann_run):
        _, res = neumann_run
        dg.write_csv(res.records, tmp_path / "h.csv")
        back = dg.read_csv(tmp_path / "h.csv")
        assert list(back) == dg.CSV_COLUMNS
        np.testing.assert_array_equal(back["H"], [r["H"] for r in res.records])
        np.testing.assert_array_equal(back["step"], np.arange(1, len(res.records) + 1))

    def test_append(self, tmp_path, neumann_run):
        _, res = neumann_run
        with dg.CSVWriter(tmp_path / "h.csv") as w:
            w.write(res.records[0])
        with dg.CSVWriter(tmp_path / "h.csv", append=True) as w:
            w.write(res.records[1])
        assert len(dg.read_csv(tmp_path / "h.csv")["t"]) == 2


class TestRates:
    def test_fit_slope_exact(self):
        dts = [0.1, 0.05, 0.025]
        assert dg.fit_slope(dts, [3 * d**2 for d in dts]) == pytest.approx(2.0)

    def test_field_error(self):
        assert dg.field_error(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)
        assert dg.field_error(np.zeros(3), np.zeros(3)) == 0.0

    def test_study_synthetic(self):
        def run(dt):
            if dt == 0.3:
                raise ConvergenceError("boom")
            return {"a": np.array([1.0 + dt**2]), "b": np.array([2.0 + dt])}

        tab = dg.convergence_study(run, [0.3, 0.1, 0.05, 0.025], dt_overkill=1e-6)
        assert tab.dts == [0.1, 0.05, 0.025]
        assert tab.slopes["a"] == pytest.approx(2.0, abs=1e-3) and tab.slopes["b"] == pytest.approx(1.0, abs=1e-3)
        assert 0.3 in tab.failed and "excluded" in tab.format()

    def test_overkill_must_be_smallest(self):
        with pytest.raises(ValueError):
            dg.convergence_study(lambda dt: {"a": np.zeros(1)}, [0.1], dt_overkill=0.2)

    def test_material_point_scheme2_rates(self):
        path = dg.isochoric_shear_path(0.3, 2 * math.pi)
        mat = lblock_material("MIPC")
        ref = dg.material_point_runner(path, "2", mat, 0.1)(1e-5)
        tab = dg.convergence_study(dg.material_point_runner(path, "2", mat, 0.1), [4e-3, 2e-3, 1e-3], reference=ref)
        for k in ("Gamma1", "Q1"):
            assert tab.slopes[k] == pytest.approx(2.0, abs=0.15)


def test_isochoric_path():
    F = dg.isochoric_shear_path(0.4, 3.0)
    for t in (0.0, 0.3, 1.7):
        assert np.linalg.det(F(t)) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(F(0.0), np.eye(3))


def test_hysteresis_area():
    x = np.array([0.0, 1.0, 1.0, 0.0])
    y = np.array([0.0, 0.0, 2.0, 2.0])
    assert dg.hysteresis_area(x, y) == pytest.approx(2.0)
    assert dg.hysteresis_area(x[::-1], y[::-1]) == pytest.approx(-2.0)
    t = np.linspace(0, 2 * np.pi, 2001)[:-1]
    assert dg.hysteresis_area(np.cos(t), 0.5 * np.sin(t)) == pytest.approx(0.5 * np.pi, rel=1e-5)


def test_budget_table():
    recs = [{"balance_residual": -2e-12, "energy_scale": 1.0}, {"balance_residual": 1e-12, "energy_scale": 0.5}]
    t = dg.budget_table(recs)
    assert t["max_abs"] == 2e-12 and t["max_rel"] == pytest.approx(2e-12) and t["max_scale"] == 1.0


@pytest.mark.parametrize("scheme", ["1", "2", "mp"])
def test_tangent_check_passes(scheme):
    assert dg.tangent_check(scheme, lblock_material("MIPC"), samples=5, seed=1) <= 1e-6
