"""Simplicial meshes of the unit square and cube.

Builds the structured level-0 partitions (4-triangle crisscross square,
6-tetrahedron Kuhn cube), refines them uniformly (red refinement; Bey's rule
with shortest interior-octahedron diagonal in 3D), and locates points inside
cells via barycentric coordinates.  All meshes are immutable after
construction and all operations are pure.
"""

from __future__ import annotations

import itertools
import sys

import numpy as np

from .exceptions import NotFound

#: barycentric tolerance for accepting a point as inside a cell
LOCATE_TOL = 1e-10


class Mesh:
    """Conforming simplicial partition of the unit square or cube.

    Attributes
    ----------
    dim : int
        Spatial dimension, 2 or 3.
    vertices : (nv, dim) float array
        Vertex coordinates in [0, 1]^dim.
    cells : (nc, dim+1) int array
        Vertex indices per cell, oriented so the signed volume is positive.
    boundary_vertex_flags : (nv,) bool array
        True for vertices lying on the domain boundary.
    boundary_facets : (nf, dim) int array
        Vertex tuples of facets shared by exactly one cell.
    h_max, h_min : float
        Largest / smallest cell diameter.
    """

    def __init__(self, dim, vertices, cells):
        vertices = np.ascontiguousarray(vertices, dtype=float)
        cells = np.ascontiguousarray(cells, dtype=np.int64)
        if vertices.shape[1] != dim or cells.shape[1] != dim + 1:
            raise ValueError("inconsistent vertex/cell shapes for dim=%d" % dim)
        self.dim = dim
        self.vertices = vertices
        self.cells = _orient_positive(vertices, cells)

        # affine cell geometry, cached for assembly and point location
        v0 = vertices[self.cells[:, 0]]                       # (nc, d)
        jac = (vertices[self.cells[:, 1:]]
               - v0[:, None, :]).transpose(0, 2, 1)           # (nc, d, d)
        self.cell_origins = v0
        self.jacobians = jac
        self.jacobian_dets = np.linalg.det(jac)
        self.inverse_jacobians = np.linalg.inv(jac)
        self.cell_volumes = self.jacobian_dets / _factorial(dim)

        diam = _cell_diameters(vertices, self.cells)
        self.h_max = float(diam.max())
        self.h_min = float(diam.min())

        self.boundary_facets = _boundary_facets(self.cells, dim)
        flags = np.zeros(len(vertices), dtype=bool)
        flags[self.boundary_facets.ravel()] = True
        self.boundary_vertex_flags = flags

        for arr in (self.vertices, self.cells, self.boundary_facets,
                    self.boundary_vertex_flags, self.cell_origins,
                    self.jacobians, self.jacobian_dets,
                    self.inverse_jacobians, self.cell_volumes):
            arr.flags.writeable = False

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def edges(self):
        """Unique edges as a sorted (ne, 2) array of vertex index pairs."""
        d = self.dim
        pairs = list(itertools.combinations(range(d + 1), 2))
        e = self.cells[:, pairs].reshape(-1, 2)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def __repr__(self):
        return ("Mesh(dim=%d, vertices=%d, cells=%d, h_max=%.4g)"
                % (self.dim, self.num_vertices, self.num_cells, self.h_max))


def _factorial(n):
    out = 1
    for k in range(2, n + 1):
        out *= k
    return out


def _orient_positive(vertices, cells):
    """Swap the last two vertices of negatively oriented cells."""
    cells = cells.copy()
    v0 = vertices[cells[:, 0]]
    jac = (vertices[cells[:, 1:]] - v0[:, None, :]).transpose(0, 2, 1)
    neg = np.linalg.det(jac) < 0
    cells[neg, -2], cells[neg, -1] = (cells[neg, -1].copy(),
                                      cells[neg, -2].copy())
    return cells


def _cell_diameters(vertices, cells):
    d1 = cells.shape[1]
    diam = np.zeros(len(cells))
    for i, j in itertools.combinations(range(d1), 2):
        e = np.linalg.norm(vertices[cells[:, i]] - vertices[cells[:, j]],
                           axis=1)
        np.maximum(diam, e, out=diam)
    return diam


def _boundary_facets(cells, dim):
    """Facets incident to exactly one cell, as sorted vertex tuples."""
    subsets = list(itertools.combinations(range(dim + 1), dim))
    facets = np.sort(cells[:, subsets].reshape(-1, dim), axis=1)
    uniq, counts = np.unique(facets, axis=0, return_counts=True)
    return uniq[counts == 1]


def build_unit_mesh(dim, level):
    """Structured mesh of (0,1)^dim after ``level`` uniform refinements.

    Level 0 is the 4-triangle crisscross square (both diagonals, center
    vertex) or the 6-tetrahedron Kuhn subdivision of the cube.
    """
    if dim not in (2, 3):
        raise ValueError("dim must be 2 or 3, got %r" % (dim,))
    if level < 0:
        raise ValueError("level must be >= 0")
    if dim == 2:
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0],
                             [0.0, 1.0], [0.5, 0.5]])
        cells = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    else:
        vertices = np.array(list(itertools.product([0.0, 1.0], repeat=3)))
        # vertex index from bit pattern (x fastest): (x,y,z) -> 4x+2y+z
        def vid(p):
            return int(4 * p[0] + 2 * p[1] + p[2])

        cells = []
        for perm in itertools.permutations(range(3)):
            p = np.zeros(3)
            path = [vid(p)]
            for axis in perm:
                p[axis] = 1.0
                path.append(vid(p))
            cells.append(path)
        cells = np.array(cells)
    mesh = Mesh(dim, vertices, cells)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def refine_uniform(mesh):
    """One uniform red refinement (2D: 4 children, 3D: Bey's 8 children)."""
    verts = mesh.vertices
    cells = mesh.cells
    edges = mesh.edges()
    edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
    midpoints = 0.5 * (verts[edges[:, 0]] + verts[edges[:, 1]])
    new_verts = np.vstack([verts, midpoints])
    nv = len(verts)

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        return nv + edge_index[key]

    new_cells = []
    if mesh.dim == 2:
        for a, b, c in cells:
            a, b, c = int(a), int(b), int(c)
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_cells += [[a, ab, ca], [ab, b, bc], [ca, bc, c],
                          [ab, bc, ca]]
    else:
        for cell in cells:
            v = [int(x) for x in cell]
            m = {(i, j): mid(v[i], v[j])
                 for i, j in itertools.combinations(range(4), 2)}
            # four corner children
            new_cells += [
                [v[0], m[0, 1], m[0, 2], m[0, 3]],
                [m[0, 1], v[1], m[1, 2], m[1, 3]],
                [m[0, 2], m[1, 2], v[2], m[2, 3]],
                [m[0, 3], m[1, 3], m[2, 3], v[3]],
            ]
            new_cells += _octahedron_children(m, new_verts)
    return Mesh(mesh.dim, new_verts, np.array(new_cells))


# opposite midpoint pairs of the interior octahedron, keyed by local edges
_OCT_DIAGONALS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))


def _octahedron_children(m, verts):
    """Split the interior octahedron along its shortest diagonal.

    Ties (equal lengths within 1e-12 relative) break toward the diagonal
    whose sorted global vertex pair is lexicographically smallest.
    """
    best = None
    for ea, eb in _OCT_DIAGONALS:
        p, q = m[ea], m[eb]
        length = np.linalg.norm(verts[p] - verts[q])
        key = (length, min(p, q), max(p, q))
        if best is None or _diag_less(key, best[0]):
            best = (key, ea, eb)
    _, ea, eb = best
    p, q = m[ea], m[eb]
    ring_edges = [e for pair in _OCT_DIAGONALS if pair != (ea, eb)
                  for e in pair]
    # order the ring so consecutive midpoints are octahedron-adjacent
    # (non-opposite): opposite pairs are (r0, r2) and (r1, r3) as gathered
    r = [m[ring_edges[0]], m[ring_edges[2]], m[ring_edges[1]],
         m[ring_edges[3]]]
    return [[p, q, r[i], r[(i + 1) % 4]] for i in range(4)]


def _diag_less(key_a, key_b):
    la, lb = key_a[0], key_b[0]
    if abs(la - lb) > 1e-12 * max(la, lb):
        return la < lb
    return key_a[1:] < key_b[1:]


def locate_point(mesh, x):
    """Locate ``x`` in the mesh.

    Returns ``(cell_index, barycentric)`` where the barycentric coordinates
    are nonnegative up to roundoff, sum to one, and reproduce ``x`` through
    the cell vertices.  Points on shared faces resolve to the lowest
    incident cell index.  Raises :class:`NotFound` for points outside the
    domain beyond tolerance 1e-10.
    """
    cell, bary = _locate_batch(mesh, np.asarray(x, dtype=float)[None, :])
    return int(cell[0]), bary[0]


def locate_points(mesh, points):
    """Vectorized :func:`locate_point` for an (n, dim) array of points."""
    return _locate_batch(mesh, np.asarray(points, dtype=float))


def _locate_batch(mesh, pts):
    # reference coordinates of every point w.r.t. every cell: an exhaustive
    # scan is O(nc*d^2) per point and deterministic
    rel = pts[:, None, :] - mesh.cell_origins[None, :, :]     # (np, nc, d)
    ref = np.einsum("cde,pce->pcd", mesh.inverse_jacobians, rel)
    lam0 = 1.0 - ref.sum(axis=2)
    inside = (ref.min(axis=2) >= -LOCATE_TOL) & (lam0 >= -LOCATE_TOL)
    cells = np.where(inside.any(axis=1), inside.argmax(axis=1), -1)
    if (cells < 0).any():
        bad = pts[cells < 0][0]
        raise NotFound("point %s lies outside the mesh" % (bad,))
    sel = ref[np.arange(len(pts)), cells]                      # (np, d)
    bary = np.concatenate([1.0 - sel.sum(axis=1, keepdims=True), sel],
                          axis=1)
    return cells, bary


def dump_mesh(mesh, stream=None):
    """Plain-text mesh dump: one vertex per line, then one cell per line."""
    stream = stream if stream is not None else sys.stdout
    stream.write("vertices %d\n" % mesh.num_vertices)
    for v in mesh.vertices:
        stream.write(" ".join("%.17g" % c for c in v) + "\n")
    stream.write("cells %d\n" % mesh.num_cells)
    for c in mesh.cells:
        stream.write(" ".join(str(int(i)) for i in c) + "\n")
