from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from visco_emc import cli
from visco_emc.config import BUNDLED, eval_expr, parse_config, parse_config_text, serialize_config
from visco_emc.errors import ConfigError, MeshError
from visco_emc.fem import FieldState, TaylorHoodSpace, generate_box_mesh, generate_lblock_mesh
from visco_emc.integrators import SchemeKind
from visco_emc.output import ProbeSet, write_fields

meshio = pytest.importorskip("meshio")

SMALL = """
[mesh]
kind = box
lengths = 1, 1, 1
divisions = 1, 1, 1

[material]
rho0 = 1000
E = 25000
c1 = E/6
c2 = E/6

[branch.1]
kind = MIPC
mu = c1
eta = 0.1*mu
beta_inf = 0.5

[loads]
traction.zmax = hat(2.5, 5) * (-250, 100, -300)
dirichlet.zmin = xyz

[solver]
dt = 0.05
T = 0.2

[output]
probes = 0.5 0.5 1; 0.25 0.25 0.25
"""


class TestBundled:
    def test_shear_test(self):
        c = parse_config("shear_test")
        E = 625.72e3
        assert c.material.rho0 == 1000
        assert c.material.equilibrium.c1 == pytest.approx(E / 6) and c.material.equilibrium.c2 == pytest.approx(E / 6)
        (b,) = c.material.branches
        assert (b.kind, b.mu, b.eta) == ("HS", 536.224e3, pytest.approx(0.5 * 536.224e3))
        assert c.solver.dt == 0.01 and c.solver.T == 100
        assert c.loads.dirichlet == {"zmin": (True, True, True), "zmax": (False, True, True)}
        assert c.output.probes == ((0.025, 0.025, 0.05),)
        np.testing.assert_allclose(c.loads.tractions["zmax"](np.pi / 0.2), [6.895e3, 0, 0])

    def test_lblock(self):
        c = parse_config("lblock")
        E = 25000.0
        (b,) = c.material.branches
        assert b.mu == pytest.approx(E / 6) and b.eta == pytest.approx(0.1 * E / 6) and b.beta_inf == 1
        assert c.solver.n_steps == 1000
        assert c.output.snapshots == (5, 10, 20, 40, 50, 60, 80, 100)
        assert c.loads.dirichlet == {}
        np.testing.assert_allclose(c.loads.tractions["H1"](2.5), 2.5 * np.array([-250, 100, -300]))
        np.testing.assert_allclose(c.loads.tractions["H2"](2.5), 2.5 * np.array([150, -250, 350]))
        assert c.mesh.build().n_elements == 180

    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_run_one_step(self, name, tmp_path):
        code = cli.main(["run", name, "--steps", "1", "--out", str(tmp_path), "-q"])
        assert code == 0
        rows = list(csv.DictReader((tmp_path / "history.csv").open()))
        assert len(rows) == 1 and rows[0]["step"] == "1"


class TestParse:
    def test_round_trip_bundled(self):
        for name in BUNDLED:
            c = parse_config(name)
            assert parse_config_text(serialize_config(c)) == c

    def test_round_trip_small(self):
        c = parse_config_text(SMALL)
        again = parse_config_text(serialize_config(c))
        assert again == c
        assert serialize_config(again) == serialize_config(c)

    @settings(max_examples=25, deadline=None)
    @given(
        dt=st.floats(1e-4, 1.0),
        gamma=st.floats(0, 1e6),
        mu=st.floats(1.0, 1e6),
        ratio=st.floats(1e-3, 10),
        scheme=st.sampled_from(["1", "2", "mp"]),
        comps=st.sampled_from(["xyz", "yz", "x", "none"]),
    )
    def test_round_trip_property(self, dt, gamma, mu, ratio, scheme, comps):
        text = SMALL.replace("dt = 0.05", f"dt = {dt!r}\ngamma = {gamma!r}\nscheme = {scheme}")
        text = text.replace("mu = c1", f"mu = {mu!r}").replace("eta = 0.1*mu", f"eta = {ratio!r}*mu")
        text = text.replace("dirichlet.zmin = xyz", f"dirichlet.zmin = {comps}")
        c = parse_config_text(text)
        assert c.solver.scheme is SchemeKind.parse(scheme)
        assert parse_config_text(serialize_config(c)) == c

    def test_min_corrections(self):
        c = parse_config_text(SMALL.replace("T = 0.2", "T = 0.2\nmin_corrections = 2"))
        assert c.solver.min_corrections == 2
        assert parse_config_text(serialize_config(c)) == c
        with pytest.raises(ConfigError, match="min_corrections"):
            parse_config_text(SMALL.replace("T = 0.2", "T = 0.2\nl_max = 1\nmin_corrections = 3"))

    def test_empty_lists_required(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text("")
        msg = str(exc.value)
        for key in ("kind", "rho0", "c1", "c2", "dt", "T"):
            assert key in msg

    def test_all_errors_collected(self):
        text = SMALL.replace("rho0 = 1000", "rho0 = -1").replace("kind = MIPC", "kind = Maxwell")
        text = text.replace("dt = 0.05", "dt = 0.05\nfoo = 1").replace("traction.zmax", "traction.top")
        with pytest.raises(ConfigError) as exc:
            parse_config_text(text)
        errs = exc.value.errors
        assert any("rho0" in e for e in errs)
        assert any("Maxwell" in e for e in errs)
        assert any("'foo'" in e for e in errs)
        assert len(errs) >= 3

    def test_unknown_surface_set(self):
        with pytest.raises(ConfigError, match="top"):
            parse_config_text(SMALL.replace("traction.zmax", "traction.top"))

    def test_bad_load_and_section(self):
        with pytest.raises(ConfigError) as exc:
            parse_config_text(SMALL.replace("hat(2.5, 5)", "hat(5, 2.5)") + "\n[extra]\na = 1\n")
        assert any("extra" in e for e in exc.value.errors) and any("traction.zmax" in e for e in exc.value.errors)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "nope.cfg")

    def test_mesh_file(self, tmp_path):
        from visco_emc.fem import write_mesh

        write_mesh(generate_box_mesh((1, 1, 1), (1, 1, 1)), tmp_path / "m.txt")
        text = SMALL.replace("kind = box\nlengths = 1, 1, 1\ndivisions = 1, 1, 1", "kind = file\npath = m.txt")
        (tmp_path / "c.cfg").write_text(text)
        c = parse_config(tmp_path / "c.cfg")
        assert c.mesh.build().n_elements == 1


class TestExpr:
    def test_arithmetic(self):
        assert eval_expr("E/6 + 2**3 - -1", {"E": 12.0}) == 11.0

    @pytest.mark.parametrize("bad", ["__import__('os')", "E.real", "[1]", "1/0", "x", "1 +"])
    def test_rejected(self, bad):
        with pytest.raises(ValueError):
            eval_expr(bad, {"E": 1.0})


class TestVTK:
    def test_rest_snapshot(self, tmp_path):
        sp_ = TaylorHoodSpace(generate_box_mesh((1, 1, 1), (2, 1, 1)))
        write_fields(sp_, FieldState.zeros(sp_), tmp_path / "r.vtk", 0.0)
        m = meshio.read(tmp_path / "r.vtk")
        assert len(m.points) == sp_.n_nodes
        assert np.all(m.point_data["U"] == 0) and np.all(m.point_data["V"] == 0)

    def test_round_trip_values(self, tmp_path, rng):
        sp_ = TaylorHoodSpace(generate_lblock_mesh(divisions=(1, 1, 2, 2)))
        Y = FieldState(rng.standard_normal((sp_.n_nodes, 3)), rng.standard_normal((sp_.n_nodes, 3)), rng.standard_normal(sp_.n_pressure))
        write_fields(sp_, Y, tmp_path / "f.vtk", 1.5)
        m = meshio.read(tmp_path / "f.vtk")
        np.testing.assert_array_equal(m.points, sp_.X)
        np.testing.assert_array_equal(m.point_data["U"], Y.U)
        np.testing.assert_array_equal(m.point_data["V"], Y.V)
        np.testing.assert_array_equal(m.point_data["P"].ravel()[sp_.pressure_nodes], Y.P)
        (block,) = m.cells
        assert block.type == "hexahedron27" and len(block.data) == sp_.n_elements

    def test_cell_geometry(self, tmp_path):
        # VTK corners 0-3 are the bottom face counter-clockwise, 4-7 the top, 26 the centre
        sp_ = TaylorHoodSpace(generate_box_mesh((2.0, 3.0, 4.0), (1, 1, 1)))
        write_fields(sp_, FieldState.zeros(sp_), tmp_path / "c.vtk")
        m = meshio.read(tmp_path / "c.vtk")
        c = m.points[m.cells[0].data[0]]
        np.testing.assert_allclose(c[:4], [[0, 0, 0], [2, 0, 0], [2, 3, 0], [0, 3, 0]])
        np.testing.assert_allclose(c[4:8, 2], 4.0)
        np.testing.assert_allclose(c[26], [1.0, 1.5, 2.0])
        np.testing.assert_allclose(c[8], [1.0, 0, 0])
        np.testing.assert_allclose(c[16], [0, 0, 2.0])


def test_probe_outside_mesh():
    sp_ = TaylorHoodSpace(generate_lblock_mesh(divisions=(1, 1, 1, 1)))
    with pytest.raises(MeshError):
        ProbeSet(sp_, [(8.0, 8.0, 1.0)])  # the notch of the L


class TestCommands:
    def write(self, tmp_path, text=SMALL):
        p = tmp_path / "c.cfg"
        p.write_text(text)
        return str(p)

    def test_run_outputs(self, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["run", self.write(tmp_path), "--out", str(out), "-q"])
        assert code == 0
        assert (out / "history.csv").exists() and (out / "restart.npz").exists()
        rows = list(csv.DictReader((out / "probes.csv").open()))
        assert len(rows) == 5 and "p1_P" in rows[0] and "traction_zmax_z" in rows[0]
        assert float(rows[2]["traction_zmax_z"]) == pytest.approx(-300 * 0.1)
        assert parse_config(out / "config.cfg") == parse_config(self.write(tmp_path))

    def test_restart_continues(self, tmp_path):
        cfg = self.write(tmp_path)
        cli.main(["run", cfg, "--out", str(tmp_path / "a"), "-q"])
        cli.main(["run", cfg, "--out", str(tmp_path / "b"), "-q", "--T", "0.1"])
        cli.main(["run", cfg, "--out", str(tmp_path / "b"), "-q", "--restart", str(tmp_path / "b" / "restart.npz")])
        a = list(csv.DictReader((tmp_path / "a" / "history.csv").open()))
        b = list(csv.DictReader((tmp_path / "b" / "history.csv").open()))
        assert a == b

    def test_snapshots(self, tmp_path):
        text = SMALL.replace("probes = 0.5 0.5 1; 0.25 0.25 0.25", "snapshots = 0, 0.1")
        cli.main(["run", self.write(tmp_path, text), "--out", str(tmp_path), "-q"])
        assert len(sorted(tmp_path.glob("fields_t*.vtk"))) == 2

    def test_overrides(self, tmp_path):
        out = tmp_path / "o"
        cli.main(["run", self.write(tmp_path), "--out", str(out), "-q", "--dt", "0.1", "--scheme", "mp", "--gamma", "5"])
        c = parse_config(out / "config.cfg")
        assert (c.solver.dt, c.solver.scheme, c.solver.gamma) == (0.1, SchemeKind.MIDPOINT, 5.0)

    def test_exit_config_error(self, tmp_path, capsys):
        assert cli.main(["run", self.write(tmp_path, "[mesh]\nkind = box\n")]) == 2
        assert "configuration errors" in capsys.readouterr().err
        assert cli.main(["run", self.write(tmp_path), "--dt", "-1", "--out", str(tmp_path)]) == 2

    def test_exit_nonconvergence(self, tmp_path):
        text = SMALL.replace("T = 0.2", "T = 0.2\nl_max = 1\ntol_R = 1e-30\ntol_A = 1e-30")
        assert cli.main(["run", self.write(tmp_path, text), "--out", str(tmp_path), "-q"]) == 3

    def test_verify_tangent(self, tmp_path, capsys):
        assert cli.main(["verify-tangent", "--samples", "3", "--out", str(tmp_path)]) == 0
        assert capsys.readouterr().out.count("PASS") == 3
        assert cli.main(["verify-tangent", "--samples", "3", "--tol", "1e-30", "--out", str(tmp_path)]) == 4

    def test_material_point(self, tmp_path, capsys):
        code = cli.main(["material-point", "--scheme", "2", "--dts", "1e-2,5e-3,2.5e-3", "--overkill", "1e-4", "--out", str(tmp_path)])
        assert code == 0
        rows = list(csv.reader((tmp_path / "rates.csv").open()))
        slopes = dict(zip(rows[0][1:], map(float, rows[-1][1:])))
        assert slopes["Gamma1"] == pytest.approx(2.0, abs=0.15)

    def test_converge(self, tmp_path):
        code = cli.main(["converge", self.write(tmp_path), "--dts", "2e-2,1e-2", "--overkill", "2.5e-3", "--out", str(tmp_path), "-q"])
        assert code == 0
        assert "slope" in (tmp_path / "rates.txt").read_text()

    def test_bad_cli_values(self):
        with pytest.raises(SystemExit):
            cli.main(["run", "lblock", "--scheme", "7"])
        with pytest.raises(SystemExit):
            cli.main(["material-point", "--dts", "a,b"])
