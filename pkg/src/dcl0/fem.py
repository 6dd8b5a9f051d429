"""P1 triangular finite elements on the unit square (or imported meshes).

Provides the structured crossed-diagonal triangulation, plain-text mesh and
nodal-field I/O, and the assembly of the stiffness matrix, mass matrix and
load vector together with the element/patch measure vectors needed by the
discrete largest-K machinery.  Dirichlet rows/columns are eliminated; vectors
crossing module boundaries are full length with zeros on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TriMesh",
    "FemSystem",
    "MeshFormatError",
    "build_structured_mesh",
    "import_mesh",
    "export_mesh",
    "read_field",
    "write_field",
    "assemble",
    "w_of",
]


class MeshFormatError(ValueError):
    """Raised for malformed mesh/field files or invalid mesh data."""


@dataclass
class TriMesh:
    """Conforming triangulation: node coordinates, triangle connectivity,
    boundary node set and a nominal mesh size."""

    nodes: np.ndarray           # (N, 2) coordinates
    triangles: np.ndarray       # (m, 3) node indices, positive orientation
    boundary_nodes: np.ndarray  # sorted indices of nodes on the boundary
    h_target: float

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]


def _signed_areas(nodes, triangles):
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _boundary_nodes(triangles, num_nodes):
    # boundary edges belong to exactly one triangle
    edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                            triangles[:, [2, 0]]])
    edges.sort(axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return np.unique(uniq[counts == 1])


def _validate(nodes, triangles, h_target):
    num_nodes = nodes.shape[0]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= num_nodes):
        raise MeshFormatError("triangle refers to a node index out of range")
    for row in triangles:
        if len(set(row.tolist())) != 3:
            raise MeshFormatError(f"degenerate triangle with repeated node: {row}")
    areas = _signed_areas(nodes, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshFormatError(
            f"triangle {bad} has non-positive area {areas[bad]:g}; "
            "nodes must be ordered counterclockwise")
    referenced = np.unique(triangles)
    if referenced.size != num_nodes:
        raise MeshFormatError("mesh contains nodes not used by any triangle")
    return TriMesh(nodes=nodes, triangles=triangles,
                   boundary_nodes=_boundary_nodes(triangles, num_nodes),
                   h_target=h_target)


def build_structured_mesh(n: int) -> TriMesh:
    """Uniform n x n grid on the unit square, each cell split along the
    lower-left to upper-right diagonal: (n+1)^2 nodes, 2 n^2 triangles."""
    if n < 2:
        raise ValueError("need at least a 2 x 2 grid")
    coords = np.arange(n + 1) / n
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (n + 1) + i

    tris = np.empty((2 * n * n, 3), dtype=int)
    t = 0
    for j in range(n):
        for i in range(n):
            v00, v10 = nid(i, j), nid(i + 1, j)
            v01, v11 = nid(i, j + 1), nid(i + 1, j + 1)
            tris[t] = (v00, v10, v11)
            tris[t + 1] = (v00, v11, v01)
            t += 2
    return _validate(nodes, tris, h_target=1.0 / n)


def export_mesh(mesh: TriMesh, path):
    with open(path, "w") as fh:
        fh.write(f"nodes {mesh.num_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.num_triangles}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def import_mesh(path) -> TriMesh:
    """Read a mesh in the plain-text format written by :func:`export_mesh`."""
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            raise MeshFormatError(f"expected '{word}' at token {pos}")
        pos += 1

    def take(count, dtype):
        nonlocal pos
        if pos + count > len(tokens):
            raise MeshFormatError("file ended prematurely")
        try:
            out = np.array(tokens[pos:pos + count], dtype=dtype)
        except ValueError as exc:
            raise MeshFormatError(f"bad value near token {pos}: {exc}") from exc
        pos += count
        return out

    expect("nodes")
    num_nodes = int(take(1, int)[0])
    nodes = take(2 * num_nodes, float).reshape(num_nodes, 2)
    expect("triangles")
    num_tris = int(take(1, int)[0])
    tris = take(3 * num_tris, int).reshape(num_tris, 3)
    if pos != len(tokens):
        raise MeshFormatError("trailing data after triangle list")
    diam = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        d = np.linalg.norm(nodes[tris[:, a]] - nodes[tris[:, b]], axis=1)
        diam = max(diam, float(d.max())) if d.size else diam
    return _validate(nodes, tris, h_target=diam)


def write_field(path, values):
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        fh.write(f"field {values.size}\n")
        for v in values:
            fh.write(f"{float(v)!r}\n")


def read_field(path):
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2 or tokens[0] != "field":
        raise MeshFormatError("field file must start with 'field N'")
    count = int(tokens[1])
    if len(tokens) != 2 + count:
        raise MeshFormatError(f"field file announces {count} values, "
                              f"found {len(tokens) - 2}")
    return np.array(tokens[2:], dtype=float)


@dataclass
class FemSystem:
    """Assembled P1 system with Dirichlet degrees of freedom eliminated.

    ``A``/``M``/``b`` act on the free (interior) degrees of freedom;
    the ``*_full`` variants keep every node for diagnostics.  ``incidence``
    is the element-by-node 0/1 matrix, ``elem_measure`` the triangle areas,
    ``patch_measure`` per node the total area of its incident triangles, and
    ``basis_integral`` the integral of each nodal basis function (one third
    of the patch measure for triangles).
    """

    mesh: TriMesh
    A: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray
    A_full: sp.csr_matrix
    M_full: sp.csr_matrix
    b_full: np.ndarray
    incidence: sp.csr_matrix
    elem_measure: np.ndarray
    patch_measure: np.ndarray
    basis_integral: np.ndarray
    free_nodes: np.ndarray
    node_to_free: np.ndarray
    _stiffness_lu: object = field(default=None, repr=False)

    @property
    def num_free(self):
        return self.free_nodes.size

    def restrict(self, v):
        """Full-length nodal vector -> free-dof vector."""
        v = np.asarray(v, dtype=float)
        if v.size != self.mesh.num_nodes:
            raise ValueError("expected a full-length nodal vector")
        return v[self.free_nodes]

    def expand(self, v_free):
        """Free-dof vector -> full-length nodal vector (zeros on boundary)."""
        v_free = np.asarray(v_free, dtype=float)
        if v_free.size != self.num_free:
            raise ValueError("expected a free-dof vector")
        out = np.zeros(self.mesh.num_nodes)
        out[self.free_nodes] = v_free
        return out

    def stiffness_solve(self, rhs):
        """Solve ``A x = rhs`` on the free dofs with a cached factorization."""
        if self._stiffness_lu is None:
            self._stiffness_lu = spla.splu(self.A.tocsc())
        return self._stiffness_lu.solve(np.asarray(rhs, dtype=float))


def assemble(mesh: TriMesh, g=None) -> FemSystem:
    """Assemble stiffness, mass and load for ``-laplace u = g`` with
    homogeneous Dirichlet data.

    Stiffness and mass use the exact P1 element integrals; the load uses the
    three-point edge-midpoint rule (exact for quadratic integrands).
    """
    nodes, tris = mesh.nodes, mesh.triangles
    num_nodes, m = mesh.num_nodes, mesh.num_triangles
    areas = _signed_areas(nodes, tris)
    if np.any(areas <= 0.0):
        raise MeshFormatError("degenerate element in mesh")

    p = nodes[tris]                       # (m, 3, 2)
    # gradients of the three barycentric basis functions on each triangle
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    grads = np.stack([e0 @ rot.T, e1 @ rot.T, e2 @ rot.T], axis=1)
    grads /= (2.0 * areas)[:, None, None]

    a_loc = np.einsum("tid,tjd->tij", grads, grads) * areas[:, None, None]
    m_loc = (np.ones((3, 3)) + np.eye(3))[None, :, :] * (areas / 12.0)[:, None, None]

    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    A_full = sp.coo_matrix((a_loc.ravel(), (rows, cols)),
                           shape=(num_nodes, num_nodes)).tocsr()
    M_full = sp.coo_matrix((m_loc.ravel(), (rows, cols)),
                           shape=(num_nodes, num_nodes)).tocsr()

    b_full = np.zeros(num_nodes)
    if g is not None:
        mid01 = 0.5 * (p[:, 0] + p[:, 1])
        mid12 = 0.5 * (p[:, 1] + p[:, 2])
        mid20 = 0.5 * (p[:, 2] + p[:, 0])
        g01 = np.asarray(g(mid01[:, 0], mid01[:, 1]), dtype=float)
        g12 = np.asarray(g(mid12[:, 0], mid12[:, 1]), dtype=float)
        g20 = np.asarray(g(mid20[:, 0], mid20[:, 1]), dtype=float)
        scale = areas / 6.0
        b_loc = np.stack([(g01 + g20) * scale, (g01 + g12) * scale,
                          (g12 + g20) * scale], axis=1)
        np.add.at(b_full, tris.ravel(), b_loc.ravel())

    elem_idx = np.repeat(np.arange(m), 3)
    incidence = sp.coo_matrix((np.ones(3 * m), (elem_idx, tris.ravel())),
                              shape=(m, num_nodes)).tocsr()
    patch_measure = incidence.T @ areas
    basis_integral = patch_measure / 3.0

    free = np.setdiff1d(np.arange(num_nodes), mesh.boundary_nodes)
    node_to_free = np.full(num_nodes, -1)
    node_to_free[free] = np.arange(free.size)
    A = A_full[free][:, free].tocsr()
    M = M_full[free][:, free].tocsr()
    return FemSystem(mesh=mesh, A=A, M=M, b=b_full[free],
                     A_full=A_full, M_full=M_full, b_full=b_full,
                     incidence=incidence, elem_measure=areas,
                     patch_measure=patch_measure, basis_integral=basis_integral,
                     free_nodes=free, node_to_free=node_to_free)


def w_of(u, system: FemSystem):
    """Per-element sum of the absolute nodal values, ``incidence @ |u|``."""
    u = np.asarray(u, dtype=float)
    if u.size != system.mesh.num_nodes:
        raise ValueError("expected a full-length nodal vector")
    return system.incidence @ np.abs(u)
