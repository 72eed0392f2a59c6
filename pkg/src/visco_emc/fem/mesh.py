"""Hexahedral meshes: generators and the ASCII reader/writer.

Element vertices use lexicographic local order ``v = i + 2 j + 4 k`` with
``(i, j, k)`` the corner of the reference cube (0 for -1, 1 for +1).  Local
faces are numbered 0..5 as x-, x+, y-, y+, z-, z+.

ASCII format::

    <n_vertices> <n_elements> <n_set_lines>
    x y z                     (n_vertices lines)
    v0 v1 v2 v3 v4 v5 v6 v7   (n_elements lines, 0-based, lexicographic order)
    set <name> face <elem> <localface>   (n_set_lines lines)

Blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import MeshError
from .basis import FACES, Q1_NODES_1D, shape_functions


@dataclass
class HexMesh:
    vertices: np.ndarray  # (nv, 3)
    elements: np.ndarray  # (ne, 8) int
    face_sets: dict = field(default_factory=dict)  # name -> (k, 2) int array of (elem, localface)
    vertex_sets: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.elements = np.asarray(self.elements, dtype=np.int64).reshape(-1, 8)
        self.face_sets = {k: np.asarray(v, dtype=np.int64).reshape(-1, 2) for k, v in self.face_sets.items()}
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= len(self.vertices)):
            raise MeshError("element connectivity references a missing vertex")
        for name, faces in self.face_sets.items():
            if faces.size and (faces[:, 0].min() < 0 or faces[:, 0].max() >= self.n_elements or faces[:, 1].min() < 0 or faces[:, 1].max() > 5):
                raise MeshError(f"face set {name!r} references a missing element or face")
        self._check_orientation()

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def _check_orientation(self):
        if not self.n_elements:
            return
        # corners and centre of every element must have a positive Jacobian
        pts = np.array([[x, y, z] for z in (-1, 0, 1) for y in (-1, 0, 1) for x in (-1, 0, 1)], dtype=float)
        _, dN = shape_functions(Q1_NODES_1D, pts)
        X = self.vertices[self.elements]  # (ne, 8, 3)
        J = np.einsum("eai,paj->epij", X, dN)
        if np.any(np.linalg.det(J) <= 0):
            raise MeshError("mesh has elements with non-positive Jacobian (check vertex order)")

    def volume(self) -> float:
        from .basis import QuadratureRule

        pts, w = QuadratureRule.gauss(2).tensor3()
        _, dN = shape_functions(Q1_NODES_1D, pts)
        J = np.einsum("eai,paj->epij", self.vertices[self.elements], dN)
        return float(np.sum(np.linalg.det(J) * w))


def _structured(lengths, divisions, origin=(0.0, 0.0, 0.0)):
    lengths = np.asarray(lengths, dtype=float).reshape(3)
    divisions = np.asarray(divisions, dtype=np.int64).reshape(3)
    if np.any(divisions <= 0):
        raise MeshError(f"division counts must be positive (got {tuple(divisions)})")
    if np.any(lengths <= 0):
        raise MeshError(f"box lengths must be positive (got {tuple(lengths)})")
    axes = [origin[d] + np.linspace(0.0, lengths[d], divisions[d] + 1) for d in range(3)]
    return axes


def generate_box_mesh(lengths, divisions, origin=(0.0, 0.0, 0.0)) -> HexMesh:
    """Structured box mesh with face sets ``xmin, xmax, ymin, ymax, zmin, zmax``."""
    ax = _structured(lengths, divisions, origin)
    nx, ny, nz = (len(a) for a in ax)
    Z, Y, X = np.meshgrid(ax[2], ax[1], ax[0], indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def vid(i, j, k):
        return i + nx * (j + ny * k)

    elems, where = [], []
    for k in range(nz - 1):
        for j in range(ny - 1):
            for i in range(nx - 1):
                elems.append([vid(i + a, j + b, k + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)])
                where.append((i, j, k))
    where = np.array(where)
    sets = {}
    names = ["xmin", "xmax", "ymin", "ymax", "zmin", "zmax"]
    last = [nx - 2, ny - 2, nz - 2]
    for f, (axis, side) in enumerate(FACES):
        target = 0 if side < 0 else last[axis]
        e = np.nonzero(where[:, axis] == target)[0]
        sets[names[f]] = np.stack([e, np.full_like(e, f)], axis=1)
    return HexMesh(verts, np.array(elems), sets)


@dataclass(frozen=True)
class LBlockDims:
    """L-shaped profile in the x-y plane extruded along z.

    The profile is the union of a corner square ``[0, a]^2``, an x-arm
    ``[a, Lx] x [0, a]`` and a y-arm ``[0, a] x [a, Ly]``; thickness ``t``.
    """

    a: float = 3.0
    Lx: float = 9.0
    Ly: float = 14.0
    t: float = 3.0

    def volume(self) -> float:
        return self.t * (self.a * self.a + self.a * (self.Lx - self.a) + self.a * (self.Ly - self.a))


def generate_lblock_mesh(dims: LBlockDims | None = None, divisions=(3, 3, 6, 11)) -> HexMesh:
    """L-block as a union of three boxes.

    ``divisions = (n_a, n_t, n_x, n_y)``: elements across the arm width,
    through the thickness, along the x-arm beyond the corner and along the
    y-arm beyond the corner.  The defaults give 180 elements.  Face sets
    ``H1`` (end of the x-arm, ``x = Lx``) and ``H2`` (end of the y-arm,
    ``y = Ly``) carry the loads.
    """
    dims = dims or LBlockDims()
    n_a, n_t, n_x, n_y = (int(v) for v in divisions)
    if min(n_a, n_t, n_x, n_y) <= 0:
        raise MeshError(f"division counts must be positive (got {tuple(divisions)})")
    if not (dims.a > 0 and dims.t > 0 and dims.Lx > dims.a and dims.Ly > dims.a):
        raise MeshError(f"degenerate L-block dimensions {dims}")
    xs = np.concatenate([np.linspace(0, dims.a, n_a + 1), np.linspace(dims.a, dims.Lx, n_x + 1)[1:]])
    ys = np.concatenate([np.linspace(0, dims.a, n_a + 1), np.linspace(dims.a, dims.Ly, n_y + 1)[1:]])
    zs = np.linspace(0, dims.t, n_t + 1)
    nx, ny = len(xs), len(ys)
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    grid = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def gid(i, j, k):
        return i + nx * (j + ny * k)

    elems = []
    where = []
    for k in range(n_t):
        for j in range(ny - 1):
            for i in range(nx - 1):
                if i >= n_a and j >= n_a:
                    continue
                elems.append([gid(i + a, j + b, k + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)])
                where.append((i, j, k))
    elems = np.array(elems)
    used = np.unique(elems)
    remap = -np.ones(len(grid), dtype=np.int64)
    remap[used] = np.arange(len(used))
    where = np.array(where)
    sets = {
        "H1": _faces(where, 0, nx - 2, 1),
        "H2": _faces(where, 1, ny - 2, 3),
        "zmin": _faces(where, 2, 0, 4),
        "zmax": _faces(where, 2, n_t - 1, 5),
    }
    return HexMesh(grid[used], remap[elems], sets)


def _faces(where, axis, value, face):
    e = np.nonzero(where[:, axis] == value)[0]
    return np.stack([e, np.full_like(e, face)], axis=1)


def read_mesh(path) -> HexMesh:
    """Read the ASCII hexahedral mesh format described in the module docstring."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    try:
        nv, ne, ns = (int(x) for x in lines[0].split())
        verts = np.array([[float(x) for x in ln.split()] for ln in lines[1 : 1 + nv]])
        elems = np.array([[int(x) for x in ln.split()] for ln in lines[1 + nv : 1 + nv + ne]])
    except ValueError as exc:
        raise MeshError(f"{path}: malformed header, vertex or element line ({exc})") from None
    if verts.shape != (nv, 3) or elems.shape != (ne, 8):
        raise MeshError(f"{path}: expected {nv} vertices and {ne} elements")
    sets: dict = {}
    for ln in lines[1 + nv + ne : 1 + nv + ne + ns]:
        tok = ln.split()
        if len(tok) != 5 or tok[0] != "set" or tok[2] != "face":
            raise MeshError(f"{path}: bad set line {ln!r}")
        sets.setdefault(tok[1], []).append((int(tok[3]), int(tok[4])))
    if len(lines) != 1 + nv + ne + ns:
        raise MeshError(f"{path}: expected {ns} set lines")
    return HexMesh(verts, elems, {k: np.array(v) for k, v in sets.items()})


def write_mesh(mesh: HexMesh, path) -> None:
    rows = [f"{len(mesh.vertices)} {mesh.n_elements} {sum(len(v) for v in mesh.face_sets.values())}"]
    rows += [" ".join(repr(float(c)) for c in x) for x in mesh.vertices]
    rows += [" ".join(str(int(v)) for v in e) for e in mesh.elements]
    for name, faces in mesh.face_sets.items():
        rows += [f"set {name} face {int(e)} {int(f)}" for e, f in faces]
    Path(path).write_text("\n".join(rows) + "\n")
