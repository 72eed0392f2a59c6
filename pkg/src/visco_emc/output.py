"""Field snapshots (legacy ASCII VTK) and point probes."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import MeshError
from .fem.assembly import FieldState
from .fem.basis import local_node_ijk, shape_functions
from .fem.space import TaylorHoodSpace

Q1_NODES = np.array([-1.0, 1.0])
Q2_NODES = np.array([-1.0, 0.0, 1.0])

# VTK_TRIQUADRATIC_HEXAHEDRON (29) node order as lattice coordinates
_VTK27_IJK = [
    (0, 0, 0), (2, 0, 0), (2, 2, 0), (0, 2, 0), (0, 0, 2), (2, 0, 2), (2, 2, 2), (0, 2, 2),
    (1, 0, 0), (2, 1, 0), (1, 2, 0), (0, 1, 0), (1, 0, 2), (2, 1, 2), (1, 2, 2), (0, 1, 2),
    (0, 0, 1), (2, 0, 1), (2, 2, 1), (0, 2, 1),
    (0, 1, 1), (2, 1, 1), (1, 0, 1), (1, 2, 1), (1, 1, 0), (1, 1, 2),
    (1, 1, 1),
]
VTK27_FROM_LEX = np.array([i + 3 * j + 9 * k for i, j, k in _VTK27_IJK])
VTK_TRIQUADRATIC_HEXAHEDRON = 29


def nodal_pressure(space: TaylorHoodSpace, P: np.ndarray) -> np.ndarray:
    """Trilinear pressure evaluated at the Q2 nodes (exact, since Q1 is a subspace of Q2)."""
    ref = Q2_NODES[local_node_ijk(3)]
    N1, _ = shape_functions(Q1_NODES, ref)  # (27, 8)
    out = np.empty(space.n_nodes)
    out[space.conn] = np.asarray(P)[space.pconn] @ N1.T
    return out


def _rows(a) -> list:
    return [" ".join("%.17g" % v for v in row) for row in np.asarray(a, dtype=float)]


def write_fields(space: TaylorHoodSpace, Y: FieldState, path, t: float | None = None) -> Path:
    """Legacy ASCII VTK unstructured grid on the reference mesh with point data U, V and P."""
    path = Path(path)
    X = space.X
    conn = space.conn[:, VTK27_FROM_LEX]
    ne = conn.shape[0]
    lines = ["# vtk DataFile Version 3.0", f"visco-emc snapshot t={float(t or 0.0):.17g}", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(X)} double")
    lines += _rows(X)
    lines.append(f"CELLS {ne} {ne * 28}")
    lines += ["27 " + " ".join(str(int(a)) for a in row) for row in conn]
    lines.append(f"CELL_TYPES {ne}")
    lines += [str(VTK_TRIQUADRATIC_HEXAHEDRON)] * ne
    lines.append(f"POINT_DATA {len(X)}")
    for name, arr in (("U", Y.U), ("V", Y.V)):
        lines.append(f"VECTORS {name} double")
        lines += _rows(np.asarray(arr).reshape(-1, 3))
    lines += ["SCALARS P double 1", "LOOKUP_TABLE default"]
    lines += _rows(nodal_pressure(space, Y.P)[:, None])
    path.write_text("\n".join(lines) + "\n")
    return path


class ProbeSet:
    """Evaluate U, V and P at fixed reference points.

    Each point is located once (inverse trilinear map by Newton's method);
    evaluation afterwards is a dot product with the stored shape values.
    """

    def __init__(self, space: TaylorHoodSpace, points):
        self.space = space
        self.points = np.asarray(points, dtype=float).reshape(-1, 3)
        self.elem = np.empty(len(self.points), dtype=np.int64)
        self.N2 = np.empty((len(self.points), 27))
        self.N1 = np.empty((len(self.points), 8))
        for k, x in enumerate(self.points):
            e, xi = self._locate(x)
            self.elem[k] = e
            self.N2[k] = shape_functions(Q2_NODES, xi[None, :])[0][0]
            self.N1[k] = shape_functions(Q1_NODES, xi[None, :])[0][0]

    def _locate(self, x):
        mesh = self.space.mesh
        verts = mesh.vertices[mesh.elements]  # (E, 8, 3)
        tol = 1e-9 * max(np.ptp(mesh.vertices, axis=0).max(), 1.0)
        lo, hi = verts.min(axis=1) - tol, verts.max(axis=1) + tol
        cands = np.nonzero(np.all((x >= lo) & (x <= hi), axis=1))[0]
        for e in cands:
            xi = np.zeros(3)
            for _ in range(30):
                G, dG = shape_functions(Q1_NODES, xi[None, :])
                r = G[0] @ verts[e] - x
                J = verts[e].T @ dG[0]
                step = np.linalg.solve(J, r)
                xi -= step
                if np.abs(step).max() < 1e-14:
                    break
            if np.all(np.abs(xi) <= 1 + 1e-8):
                return int(e), np.clip(xi, -1.0, 1.0)
        raise MeshError(f"probe point {tuple(x)} lies outside the mesh")

    def evaluate(self, Y: FieldState) -> dict:
        conn = self.space.conn[self.elem]  # (k, 27)
        U = np.einsum("ka,kai->ki", self.N2, Y.U[conn])
        V = np.einsum("ka,kai->ki", self.N2, Y.V[conn])
        P = np.einsum("ka,ka->k", self.N1, Y.P[self.space.pconn[self.elem]])
        return {"U": U, "V": V, "P": P}

    def columns(self) -> list:
        cols = []
        for k in range(len(self.points)):
            cols += [f"p{k}_U{c}" for c in "xyz"] + [f"p{k}_V{c}" for c in "xyz"] + [f"p{k}_P"]
        return cols

    def row(self, Y: FieldState) -> list:
        v = self.evaluate(Y)
        out = []
        for k in range(len(self.points)):
            out += list(v["U"][k]) + list(v["V"][k]) + [v["P"][k]]
        return out
