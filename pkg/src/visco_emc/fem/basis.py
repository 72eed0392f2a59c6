"""Tensor-product Lagrange bases on the reference hexahedron ``[-1, 1]^3``.

Local numbering is lexicographic with the first coordinate fastest:
node ``(i, j, k)`` has index ``i + n*j + n*n*k`` where ``n`` is the number of
nodes per direction (3 for the triquadratic space, 2 for the trilinear one).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Q2_NODES_1D = np.array([-1.0, 0.0, 1.0])
Q1_NODES_1D = np.array([-1.0, 1.0])


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre points and weights per direction."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, n: int) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(x, w)

    @property
    def n(self) -> int:
        return self.points.size

    def tensor3(self):
        """Points ``(n^3, 3)`` and weights ``(n^3,)`` of the product rule (first coordinate fastest)."""
        x = self.points
        Z, Y, X = np.meshgrid(x, x, x, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        w = self.weights
        W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
        return pts, W

    def tensor2(self):
        x = self.points
        V, U = np.meshgrid(x, x, indexing="ij")
        w = self.weights
        return np.stack([U.ravel(), V.ravel()], axis=1), (w[:, None] * w[None, :]).ravel()


def lagrange_1d(nodes: np.ndarray, x: np.ndarray):
    """Values and derivatives of the 1-D Lagrange polynomials on ``nodes`` at ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    x = np.asarray(x, dtype=float)
    n = nodes.size
    L = np.ones((x.size, n))
    dL = np.zeros((x.size, n))
    for a in range(n):
        others = [b for b in range(n) if b != a]
        denom = np.prod([nodes[a] - nodes[b] for b in others])
        for b in others:
            L[:, a] *= x - nodes[b]
        for c in others:
            term = np.ones(x.size)
            for b in others:
                if b != c:
                    term *= x - nodes[b]
            dL[:, a] += term
        L[:, a] /= denom
        dL[:, a] /= denom
    return L, dL


def shape_functions(nodes_1d: np.ndarray, pts: np.ndarray):
    """Tensor-product shape functions and reference gradients.

    Parameters
    ----------
    nodes_1d : array
        1-D node positions.
    pts : array, shape (n_pts, 3)

    Returns
    -------
    N : array, shape (n_pts, n_nodes)
    dN : array, shape (n_pts, n_nodes, 3)
    """
    pts = np.atleast_2d(pts)
    Lx, dLx = lagrange_1d(nodes_1d, pts[:, 0])
    Ly, dLy = lagrange_1d(nodes_1d, pts[:, 1])
    Lz, dLz = lagrange_1d(nodes_1d, pts[:, 2])
    n = nodes_1d.size
    # node index i + n*j + n*n*k
    N = np.einsum("pk,pj,pi->pkji", Lz, Ly, Lx).reshape(len(pts), n**3)
    dN = np.stack(
        [
            np.einsum("pk,pj,pi->pkji", Lz, Ly, dLx).reshape(len(pts), n**3),
            np.einsum("pk,pj,pi->pkji", Lz, dLy, Lx).reshape(len(pts), n**3),
            np.einsum("pk,pj,pi->pkji", dLz, Ly, Lx).reshape(len(pts), n**3),
        ],
        axis=-1,
    )
    return N, dN


def local_node_ijk(n: int) -> np.ndarray:
    """``(n^3, 3)`` integer lattice coordinates of the local nodes."""
    k, j, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    return np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)


#: Local faces as (axis, side): 0: x=-1, 1: x=+1, 2: y=-1, 3: y=+1, 4: z=-1, 5: z=+1.
FACES = [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)]


def face_local_nodes(n: int, face: int) -> np.ndarray:
    """Local node indices lying on a face of the reference cube."""
    axis, side = FACES[face]
    ijk = local_node_ijk(n)
    target = 0 if side < 0 else n - 1
    return np.nonzero(ijk[:, axis] == target)[0]


def face_points(face: int, pts2: np.ndarray) -> np.ndarray:
    """Embed 2-D face quadrature points into 3-D reference coordinates."""
    axis, side = FACES[face]
    others = [d for d in range(3) if d != axis]
    pts = np.zeros((len(pts2), 3))
    pts[:, axis] = side
    pts[:, others[0]] = pts2[:, 0]
    pts[:, others[1]] = pts2[:, 1]
    return pts, others
