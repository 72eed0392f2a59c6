"""Q2/Q1 Taylor-Hood space on a hexahedral mesh and the quadrature data it needs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import MeshError
from .basis import (
    Q1_NODES_1D,
    Q2_NODES_1D,
    QuadratureRule,
    face_local_nodes,
    face_points,
    local_node_ijk,
    shape_functions,
)
from .mesh import HexMesh

#: Quadrature points per direction (volume and faces).
N_GAUSS = 4


def _support_vertices():
    """For each Q2 local node, the local hex8 vertices spanning its entity (vertex/edge/face/cell)."""
    choice = {0: (0,), 1: (0, 1), 2: (1,)}
    out = []
    for i, j, k in local_node_ijk(3):
        out.append(sorted(a + 2 * b + 4 * c for a in choice[i] for b in choice[j] for c in choice[k]))
    return out


@dataclass
class FaceData:
    """Per-node integral of the shape functions over one face set."""

    name: str
    node_weights: np.ndarray  # (n_nodes,) : integral of N_A over the set
    area: float
    nodes: np.ndarray  # Q2 nodes on the set


class TaylorHoodSpace:
    """Triquadratic velocity/displacement and trilinear pressure on a hex mesh.

    Attributes
    ----------
    X : (n_nodes, 3) reference coordinates of the Q2 nodes.
    conn : (n_elem, 27) Q2 connectivity (lexicographic local order).
    pconn : (n_elem, 8) pressure dof of each element vertex.
    dN : (n_elem, n_qp, 27, 3) reference-configuration gradients at quadrature points.
    wdV : (n_elem, n_qp) quadrature weight times Jacobian.
    N2, N1 : shape values at quadrature points for the two spaces.
    """

    def __init__(self, mesh: HexMesh, n_gauss: int = N_GAUSS):
        self.mesh = mesh
        ne = mesh.n_elements
        if ne == 0:
            raise MeshError("mesh has no elements")
        support = _support_vertices()
        keys: dict = {}
        conn = np.empty((ne, 27), dtype=np.int64)
        for e, verts in enumerate(mesh.elements):
            for a, sv in enumerate(support):
                key = frozenset(int(verts[s]) for s in sv)
                idx = keys.get(key)
                if idx is None:
                    idx = keys[key] = len(keys)
                conn[e, a] = idx
        self.conn = conn
        self.n_nodes = len(keys)

        # Q2 node coordinates through the trilinear geometric map
        ref = Q2_NODES_1D[local_node_ijk(3)]
        G, _ = shape_functions(Q1_NODES_1D, ref)  # (27, 8)
        X = np.empty((self.n_nodes, 3))
        X[conn] = np.einsum("av,evi->eai", G, mesh.vertices[mesh.elements])
        self.X = X

        used = np.unique(mesh.elements)
        pmap = -np.ones(len(mesh.vertices), dtype=np.int64)
        pmap[used] = np.arange(len(used))
        self.pconn = pmap[mesh.elements]
        self.n_pressure = len(used)
        self.pressure_vertices = used
        # Q2 node sitting on each pressure vertex
        vert_node = np.empty(len(used), dtype=np.int64)
        corner_local = [a for a, sv in enumerate(support) if len(sv) == 1]
        for a in corner_local:
            vert_node[self.pconn[:, support[a][0]]] = conn[:, a]
        self.pressure_nodes = vert_node

        self.rule = QuadratureRule.gauss(n_gauss)
        pts, w = self.rule.tensor3()
        self.qp_ref = pts
        self.N2, dN2 = shape_functions(Q2_NODES_1D, pts)
        self.N1, _ = shape_functions(Q1_NODES_1D, pts)
        _, dG = shape_functions(Q1_NODES_1D, pts)
        Jg = np.einsum("evi,qvj->eqij", mesh.vertices[mesh.elements], dG)
        detJ = np.linalg.det(Jg)
        if np.any(detJ <= 0):
            raise MeshError("non-positive geometric Jacobian at a quadrature point")
        self.wdV = detJ * w[None, :]
        self.dN = np.einsum("qam,eqmk->eqak", dN2, np.linalg.inv(Jg))
        self.n_qp = len(w)
        self.n_vel = 3 * self.n_nodes
        self.n_dofs = self.n_vel + self.n_pressure
        self.vdofs = (3 * conn[:, :, None] + np.arange(3)[None, None, :]).reshape(ne, 81)
        self._faces: dict = {}

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]

    def scalar_mass(self, rho0: float = 1.0) -> sp.csr_matrix:
        """Consistent scalar mass matrix ``int rho0 N_A N_B``."""
        Me = rho0 * np.einsum("eq,qa,qb->eab", self.wdV, self.N2, self.N2)
        rows = np.broadcast_to(self.conn[:, :, None], Me.shape).ravel()
        cols = np.broadcast_to(self.conn[:, None, :], Me.shape).ravel()
        return sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(self.n_nodes, self.n_nodes))

    def face_data(self, name: str) -> FaceData:
        if name in self._faces:
            return self._faces[name]
        if name not in self.mesh.face_sets:
            raise MeshError(f"unknown surface set {name!r}; known sets: {sorted(self.mesh.face_sets)}")
        pts2, w2 = QuadratureRule.gauss(self.rule.n).tensor2()
        weights = np.zeros(self.n_nodes)
        area = 0.0
        nodes = set()
        verts = self.mesh.vertices[self.mesh.elements]
        for e, f in self.mesh.face_sets[name]:
            pts, others = face_points(int(f), pts2)
            N2, _ = shape_functions(Q2_NODES_1D, pts)
            _, dG = shape_functions(Q1_NODES_1D, pts)
            Jg = np.einsum("vi,qvj->qij", verts[e], dG)
            dA = np.linalg.norm(np.cross(Jg[:, :, others[0]], Jg[:, :, others[1]]), axis=1) * w2
            np.add.at(weights, self.conn[e], N2.T @ dA)
            area += dA.sum()
            nodes.update(self.conn[e, face_local_nodes(3, int(f))].tolist())
        fd = FaceData(name, weights, float(area), np.array(sorted(nodes), dtype=np.int64))
        self._faces[name] = fd
        return fd

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolation ``func(X) -> (n, 3)`` onto the Q2 space."""
        return np.asarray(func(self.X), dtype=float).reshape(self.n_nodes, 3)

    def qp_coordinates(self) -> np.ndarray:
        """Reference coordinates of all quadrature points, ``(n_elem, n_qp, 3)``."""
        return np.einsum("qa,eai->eqi", self.N2, self.X[self.conn])
