from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visco_emc import diagnostics as dg
from visco_emc.errors import MeshError
from visco_emc.fem import (
    FieldState,
    LBlockDims,
    LoadSpec,
    MixedAssembler,
    QPState,
    TaylorHoodSpace,
    VectorLoad,
    generate_box_mesh,
    generate_lblock_mesh,
    read_mesh,
    shape_functions,
    write_mesh,
)
from visco_emc.fem.loads import TimeFunction

from conftest import lblock_material, shear_material

Q1 = np.array([-1.0, 1.0])
Q2 = np.array([-1.0, 0.0, 1.0])

pts = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array)


@settings(max_examples=50, deadline=None)
@given(pts)
def test_partition_of_unity(x):
    for nodes in (Q1, Q2):
        N, dN = shape_functions(nodes, x[None, :])
        assert abs(N.sum() - 1.0) < 1e-14
        assert np.abs(dN.sum(axis=1)).max() < 1e-13


def test_q2_reproduces_quadratics(rng):
    nodes = np.stack(np.meshgrid(Q2, Q2, Q2, indexing="ij")[::-1], axis=-1).reshape(-1, 3)
    poly = lambda X: 1 + X[:, 0] * X[:, 1] - 2 * X[:, 2] ** 2 + X[:, 0] ** 2 * X[:, 1] ** 2 * X[:, 2]  # noqa: E731
    x = rng.uniform(-1, 1, (20, 3))
    N, dN = shape_functions(Q2, x)
    np.testing.assert_allclose(N @ poly(nodes), poly(x), atol=1e-13)
    # d/dx of the polynomial
    dpx = x[:, 1] + 2 * x[:, 0] * x[:, 1] ** 2 * x[:, 2]
    np.testing.assert_allclose(dN[:, :, 0] @ poly(nodes), dpx, atol=1e-12)


class TestMeshes:
    def test_box(self):
        m = generate_box_mesh((2.0, 3.0, 4.0), (2, 3, 1))
        assert m.n_elements == 6
        assert len(m.vertices) == 3 * 4 * 2
        assert sorted(m.face_sets) == ["xmax", "xmin", "ymax", "ymin", "zmax", "zmin"]
        assert m.volume() == pytest.approx(24.0)
        assert len(m.face_sets["zmax"]) == 6 and len(m.face_sets["xmin"]) == 3

    def test_zero_division(self):
        with pytest.raises((MeshError, ValueError)):
            generate_box_mesh((1, 1, 1), (0, 1, 1))
        with pytest.raises(MeshError):
            generate_lblock_mesh(divisions=(3, 0, 6, 11))

    def test_lblock_default(self):
        m = generate_lblock_mesh()
        d = LBlockDims()
        assert m.n_elements == 180
        assert m.volume() == pytest.approx(d.volume())
        sp_ = TaylorHoodSpace(m)
        assert sp_.face_data("H1").area == pytest.approx(d.a * d.t)
        assert sp_.face_data("H2").area == pytest.approx(d.a * d.t)
        assert np.allclose(sp_.X[sp_.face_data("H1").nodes, 0], d.Lx)
        assert np.allclose(sp_.X[sp_.face_data("H2").nodes, 1], d.Ly)

    def test_space_counts(self):
        sp_ = TaylorHoodSpace(generate_box_mesh((1, 1, 1), (2, 1, 1)))
        assert sp_.n_nodes == 5 * 3 * 3
        assert sp_.n_pressure == 3 * 2 * 2
        assert sp_.wdV.sum() == pytest.approx(1.0)
        # pressure node sits on the matching vertex
        np.testing.assert_allclose(sp_.X[sp_.pressure_nodes], sp_.mesh.vertices[sp_.pressure_vertices])

    def test_face_areas(self):
        sp_ = TaylorHoodSpace(generate_box_mesh((2.0, 3.0, 5.0), (2, 2, 3)))
        assert sp_.face_data("zmax").area == pytest.approx(6.0)
        assert sp_.face_data("xmin").area == pytest.approx(15.0)
        assert sp_.face_data("ymax").node_weights.sum() == pytest.approx(10.0)
        with pytest.raises(MeshError):
            sp_.face_data("top")

    def test_file_round_trip(self, tmp_path):
        m = generate_lblock_mesh(divisions=(1, 1, 2, 2))
        write_mesh(m, tmp_path / "m.txt")
        r = read_mesh(tmp_path / "m.txt")
        np.testing.assert_array_equal(r.vertices, m.vertices)
        np.testing.assert_array_equal(r.elements, m.elements)
        assert {k: v.tolist() for k, v in r.face_sets.items()} == {k: v.tolist() for k, v in m.face_sets.items()}

    def test_malformed_file(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("2 1 0\n0 0 0\n1 1 1\n0 1 2 3\n")
        with pytest.raises(MeshError):
            read_mesh(p)
        p.write_text("")
        with pytest.raises(MeshError):
            read_mesh(p)


class TestLoads:
    def test_hat(self):
        f = TimeFunction.parse("hat(2.5, 5)")
        assert [f(t) for t in (-1, 0, 1, 2.5, 3.75, 5, 7)] == [0, 0, 1, 2.5, 1.25, 0, 0]
        assert f.support_end() == 5

    def test_parse_round_trip(self):
        v = VectorLoad.parse("sin(6.895e3, 0.1) * (1, 0, 0)")
        assert VectorLoad.parse(str(v)) == v
        np.testing.assert_allclose(v(np.pi / 0.2), [6.895e3, 0, 0])

    @pytest.mark.parametrize("bad", ["hat(5, 2.5)", "sin(1)", "cos(1, 2)", "hat(1,2) * (1, 2)", "nonsense"])
    def test_bad(self, bad):
        with pytest.raises(ValueError):
            VectorLoad.parse(bad if "*" in bad else bad + " * (1, 0, 0)")


def _box_assembler(mat=None, loads=None, scheme="2", gamma=0.0, divs=(1, 1, 1)):
    sp_ = TaylorHoodSpace(generate_box_mesh((1.0, 1.0, 1.0), divs))
    return MixedAssembler(sp_, mat or lblock_material(), loads, scheme, gamma=gamma)


def _random_state(A, rng, scale=0.05):
    n = A.space.n_nodes
    return FieldState(scale * rng.standard_normal((n, 3)), scale * rng.standard_normal((n, 3)), rng.standard_normal(A.space.n_pressure))


class TestAssembly:
    def test_mass_and_momenta(self):
        A = _box_assembler(divs=(2, 1, 1))
        rho = A.mat.rho0
        v = np.array([0.3, -0.2, 0.5])
        V = np.broadcast_to(v, (A.space.n_nodes, 3)).copy()
        assert A.kinetic_energy(V) == pytest.approx(0.5 * rho * v @ v)
        np.testing.assert_allclose(A.linear_momentum(V), rho * v)
        # rigid spin about the centroid: J = I w with I = m/6 for a unit cube
        w = np.array([0.0, 0.0, 2.0])
        Vr = np.cross(w, A.space.X - 0.5)
        np.testing.assert_allclose(A.angular_momentum(np.zeros_like(Vr), Vr), rho / 6 * w, atol=1e-12)

    def test_div_norm(self):
        A = _box_assembler()
        U = np.zeros((A.space.n_nodes, 3))
        V = np.zeros_like(U)
        V[:, 0] = A.space.X[:, 0]
        assert A.div_velocity_norm(U, V) == pytest.approx(1.0)
        # rigid rotation is divergence free in any configuration
        Vr = np.cross([0.3, -1.0, 0.2], A.space.X)
        assert A.div_velocity_norm(0.1 * A.space.X, Vr) < 1e-13

    def test_traction_total_force(self):
        loads = LoadSpec(tractions={"zmax": VectorLoad.parse("hat(2.5, 5) * (-250, 100, -300)")})
        sp_ = TaylorHoodSpace(generate_box_mesh((2.0, 3.0, 1.0), (2, 2, 1)))
        A = MixedAssembler(sp_, lblock_material(), loads)
        f = A.external_force(1.0).reshape(-1, 3)
        np.testing.assert_allclose(f.sum(axis=0), 6.0 * np.array([-250, 100, -300]))

    def test_rest_residual_zero(self):
        A = _box_assembler(loads=LoadSpec(dirichlet={"zmin": (True, True, True)}))
        Y = FieldState.zeros(A.space)
        qp = QPState(A.mat.m, A.space.n_elements, A.space.n_qp)
        A.begin_step(Y)
        ev = A.evaluate(Y, Y.V, Y.P, Y.U, qp.committed, 0.1, 0.05)
        assert np.abs(ev.Rm).max() < 1e-10 and np.abs(ev.Rp).max() == 0.0

    def test_rigid_velocity_constraint_residual(self, rng):
        A = _box_assembler()
        Y = FieldState.zeros(A.space)
        qp = QPState(A.mat.m, A.space.n_elements, A.space.n_qp)
        w = np.array([0.0, 0.4, 0.1])
        V = np.broadcast_to([0.1, 0.2, -0.3], Y.V.shape) + np.cross(w, A.space.X)
        dt = 1e-3
        A.begin_step(Y)
        ev = A.evaluate(Y, V, Y.P, 0.5 * dt * V, qp.committed, dt, 0.5 * dt)
        # V_n = 0 so v_half = V/2 with gradient W/2 (skew); F_half = I + (dt/4) W, hence
        # J div = det(F_h) tr(W/2 F_h^-1) exactly;
        # each trilinear pressure function integrates to 1/8 on the unit cube
        W = np.cross(np.eye(3), w).T
        Fh = np.eye(3) + 0.25 * dt * W
        expected = np.linalg.det(Fh) * np.trace(0.5 * W @ np.linalg.inv(Fh)) / 8
        np.testing.assert_allclose(ev.Rp, expected, rtol=1e-10)

    def test_translation_no_constraint_residual(self):
        A = _box_assembler()
        Y = FieldState.zeros(A.space)
        qp = QPState(A.mat.m, A.space.n_elements, A.space.n_qp)
        V = np.broadcast_to([0.1, 0.2, -0.3], Y.V.shape).copy()
        A.begin_step(Y)
        ev = A.evaluate(Y, V, Y.P, 0.05 * V, qp.committed, 0.1, 0.05)
        assert np.abs(ev.Rp).max() < 1e-15

    @pytest.mark.parametrize("scheme", ["1", "2", "mp"])
    def test_internal_force_balances(self, rng, scheme):
        # pure Neumann, no loads, V_{n+1} = V_n: Rm is the internal force, which
        # has zero resultant and zero moment about the origin at x_{n+1/2}
        A = _box_assembler(scheme=scheme, gamma=10.0, divs=(2, 1, 1))
        Y = _random_state(A, rng)
        G = np.stack([np.broadcast_to([1.02, 0.99, 1.0, 0.01, 0.0, 0.02], (A.space.n_elements, A.space.n_qp, 6))])
        dt = 0.05
        D = dt * Y.V
        A.begin_step(Y)
        ev = A.evaluate(Y, Y.V, Y.P + 5.0, D, G, dt, 0.3)
        f = ev.Rm.reshape(-1, 3)
        scale = np.abs(f).max()
        assert np.abs(f.sum(axis=0)).max() < 1e-12 * scale
        x_half = A.space.X + Y.U + 0.5 * D
        assert np.abs(np.cross(x_half, f).sum(axis=0)).max() < 1e-12 * scale

    def test_grad_div_power(self, rng):
        # (Rm(gamma) - Rm(0)) . V_{n+1/2} = gamma * int J_{n+1/2} (div v_{n+1/2})^2
        A0 = _box_assembler(gamma=0.0)
        A1 = _box_assembler(gamma=7.5)
        Y = _random_state(A0, rng)
        G = np.ones((1, A0.space.n_elements, A0.space.n_qp, 1)) * np.array([1, 1, 1, 0, 0, 0.0])
        V1 = Y.V + 0.01 * rng.standard_normal(Y.V.shape)
        dt = 0.1
        D = 0.5 * dt * (Y.V + V1)
        evs = []
        for A in (A0, A1):
            A.begin_step(Y)
            evs.append(A.evaluate(Y, V1, Y.P, D, G, dt, 0.05))
        Vh = 0.5 * (Y.V + V1).ravel()
        lhs = (evs[1].Rm - evs[0].Rm) @ Vh
        rhs = 7.5 * np.sum(A1.space.wdV * evs[1].J_half * evs[1].div_half**2)
        assert lhs == pytest.approx(rhs, rel=1e-10)
        assert rhs > 0

    def test_dirichlet_rows(self, rng):
        A = _box_assembler(loads=LoadSpec(dirichlet={"zmin": (True, True, True), "zmax": (False, True, True)}))
        Y = _random_state(A, rng)
        Y.U[A.fixed_vel] = 0.0
        Y.V[A.fixed_vel] = 0.0
        qp = QPState(A.mat.m, A.space.n_elements, A.space.n_qp)
        A.begin_step(Y)
        ev = A.evaluate(Y, Y.V, Y.P, 0.1 * Y.V, qp.committed, 0.1, 0.05, with_tangent=True)
        fixed = np.nonzero(A.fixed)[0]
        assert np.all(ev.Rm[fixed] == 0.0)
        K = ev.K.tocsr()
        for i in fixed[:10]:
            row = K.getrow(i)
            assert row.nnz == 1 and row[0, i] == 1.0
        assert A.fixed_vel[A.space.face_data("zmax").nodes, 0].sum() == 0

    @pytest.mark.parametrize("scheme", ["1", "2", "mp"])
    def test_global_tangent_fd(self, scheme):
        assert dg.global_tangent_check(shear_material(), scheme, seed=3, gamma=1e3) <= 1e-5

    def test_assemble_blocks_shapes(self, rng):
        A = _box_assembler()
        Y = _random_state(A, rng, 0.01)
        qp = QPState(A.mat.m, A.space.n_elements, A.space.n_qp)
        A.begin_step(Y)
        Rp, Rm = A.assemble_residuals(Y, Y, qp, 0.1, 0.05)
        Ab, B, Cb = A.assemble_tangent(Y, Y, qp, 0.1, 0.05)
        nv, npr = A.space.n_vel, A.space.n_pressure
        assert Rm.shape == (nv,) and Rp.shape == (npr,)
        assert Ab.shape == (nv, nv) and B.shape == (nv, npr) and Cb.shape == (npr, nv)
        assert qp.trial.shape == qp.committed.shape
