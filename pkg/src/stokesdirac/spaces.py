"""Taylor-Hood and mini velocity-pressure spaces.

Scalar velocity nodes are vertices plus edge midpoints (Taylor-Hood) or
vertices plus one interior bubble per cell (mini); pressure is continuous P1
on vertices.  Vector velocity DOFs interleave components: the DOF of scalar
node ``s`` and component ``k`` is ``s * dim + k``.  Edge nodes are numbered
globally by sorted vertex pair, so DOF maps are deterministic and shared
consistently across neighboring cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .mesh import Mesh, locate_point, locate_points

TAYLOR_HOOD = "TaylorHood"
MINI = "Mini"


class VelocityPressureSpace:
    """DOF maps and basis evaluators for a velocity-pressure pair."""

    def __init__(self, mesh: Mesh, family: str):
        if family not in (TAYLOR_HOOD, MINI):
            raise ValueError("unknown family %r" % (family,))
        self.mesh = mesh
        self.family = family
        d = mesh.dim
        nv = mesh.num_vertices
        nc = mesh.num_cells

        if family == TAYLOR_HOOD:
            edges = mesh.edges()
            edge_ids = {(int(a), int(b)): nv + k
                        for k, (a, b) in enumerate(edges)}
            self.num_scalar_nodes = nv + len(edges)
            coords = np.vstack([mesh.vertices,
                                0.5 * (mesh.vertices[edges[:, 0]]
                                       + mesh.vertices[edges[:, 1]])])
            local_edges = _local_edges(d)
            cell_dofs = np.empty((nc, d + 1 + len(local_edges)),
                                 dtype=np.int64)
            cell_dofs[:, :d + 1] = mesh.cells
            for j, (li, lj) in enumerate(local_edges):
                a = mesh.cells[:, li]
                b = mesh.cells[:, lj]
                lo, hi = np.minimum(a, b), np.maximum(a, b)
                cell_dofs[:, d + 1 + j] = [edge_ids[(int(x), int(y))]
                                           for x, y in zip(lo, hi)]
            # an edge midpoint lies on the boundary iff its edge is a facet
            # edge of the boundary
            bnd_scalar = np.zeros(self.num_scalar_nodes, dtype=bool)
            bnd_scalar[:nv] = mesh.boundary_vertex_flags
            for facet in mesh.boundary_facets:
                for li in range(d):
                    for lj in range(li + 1, d):
                        a, b = int(facet[li]), int(facet[lj])
                        key = (a, b) if a < b else (b, a)
                        bnd_scalar[edge_ids[key]] = True
        else:
            self.num_scalar_nodes = nv + nc
            bary = mesh.vertices[mesh.cells].mean(axis=1)
            coords = np.vstack([mesh.vertices, bary])
            cell_dofs = np.hstack([mesh.cells,
                                   nv + np.arange(nc)[:, None]])
            bnd_scalar = np.zeros(self.num_scalar_nodes, dtype=bool)
            bnd_scalar[:nv] = mesh.boundary_vertex_flags

        self.scalar_node_coords = coords
        self.cell_scalar_dofs = cell_dofs
        self.boundary_scalar_mask = bnd_scalar
        self.n_velocity_dofs = d * self.num_scalar_nodes
        self.n_pressure_dofs = nv
        self.cell_pressure_dofs = mesh.cells

        scalars = np.flatnonzero(bnd_scalar)
        self.boundary_velocity_dofs = (scalars[:, None] * d
                                       + np.arange(d)).ravel()
        for arr in (self.scalar_node_coords, self.cell_scalar_dofs,
                    self.boundary_scalar_mask, self.boundary_velocity_dofs):
            arr.flags.writeable = False

    @property
    def num_local_scalar(self):
        return self.cell_scalar_dofs.shape[1]

    def velocity_dofs_on_cell(self, c):
        """Global velocity DOF indices of cell ``c`` (scalar-major order)."""
        d = self.mesh.dim
        return (self.cell_scalar_dofs[c][:, None] * d + np.arange(d)).ravel()

    def tabulate_velocity(self, ref_points):
        """Scalar velocity shapes at reference points.

        Returns ``(values, ref_grads)`` of shapes (nq, nloc) and
        (nq, nloc, dim); gradients are w.r.t. reference coordinates.
        """
        return _tabulate(self.family, self.mesh.dim, ref_points)

    def tabulate_pressure(self, ref_points):
        """P1 pressure shapes; same conventions as :meth:`tabulate_velocity`."""
        return _tabulate_p1(self.mesh.dim, ref_points)

    def __repr__(self):
        return ("VelocityPressureSpace(%s, dim=%d, n_u=%d, n_p=%d)"
                % (self.family, self.mesh.dim, self.n_velocity_dofs,
                   self.n_pressure_dofs))


def build_space(mesh, family=TAYLOR_HOOD):
    """Build a :class:`VelocityPressureSpace` over ``mesh``."""
    return VelocityPressureSpace(mesh, family)


def _local_edges(d):
    import itertools
    return list(itertools.combinations(range(d + 1), 2))


def _tabulate_p1(d, ref_points):
    ref = np.atleast_2d(np.asarray(ref_points, dtype=float))
    nq = ref.shape[0]
    lam = np.concatenate([1.0 - ref.sum(axis=1, keepdims=True), ref], axis=1)
    grads = np.zeros((nq, d + 1, d))
    grads[:, 0, :] = -1.0
    for i in range(d):
        grads[:, i + 1, i] = 1.0
    return lam, grads


def _tabulate(family, d, ref_points):
    lam, dlam = _tabulate_p1(d, ref_points)
    nq = lam.shape[0]
    if family == TAYLOR_HOOD:
        edges = _local_edges(d)
        vals = np.empty((nq, d + 1 + len(edges)))
        grads = np.empty((nq, d + 1 + len(edges), d))
        vals[:, :d + 1] = lam * (2.0 * lam - 1.0)
        grads[:, :d + 1, :] = (4.0 * lam - 1.0)[:, :, None] * dlam
        for j, (i, k) in enumerate(edges):
            vals[:, d + 1 + j] = 4.0 * lam[:, i] * lam[:, k]
            grads[:, d + 1 + j, :] = 4.0 * (lam[:, i, None] * dlam[:, k]
                                            + lam[:, k, None] * dlam[:, i])
    else:
        scale = float((d + 1) ** (d + 1))     # bubble equals 1 at barycenter
        vals = np.empty((nq, d + 2))
        grads = np.empty((nq, d + 2, d))
        vals[:, :d + 1] = lam
        grads[:, :d + 1, :] = dlam
        bubble = scale * lam.prod(axis=1)
        vals[:, d + 1] = bubble
        gb = np.zeros((nq, d))
        for i in range(d + 1):
            others = scale * np.prod(np.delete(lam, i, axis=1), axis=1)
            gb += others[:, None] * dlam[:, i, :]
        grads[:, d + 1, :] = gb
    return vals, grads


@dataclass
class FEFunction:
    """A coefficient vector bound to one component of a space."""

    space: VelocityPressureSpace
    component: str                     # "velocity" or "pressure"
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expected = (self.space.n_velocity_dofs
                    if self.component == "velocity"
                    else self.space.n_pressure_dofs)
        if self.coeffs.shape != (expected,):
            raise ValueError("coefficient vector has length %d, expected %d"
                             % (self.coeffs.size, expected))

    def __call__(self, x):
        return eval_fe_function(self, x)


@dataclass
class ControlField:
    """Piecewise-constant vector field, one value per cell."""

    mesh: Mesh
    values: np.ndarray                 # (nc, dim)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_cells, self.mesh.dim):
            raise ValueError("control shape %s does not match mesh"
                             % (self.values.shape,))

    def is_admissible(self, lower, upper, tol=0.0):
        return (np.all(self.values >= np.asarray(lower) - tol)
                and np.all(self.values <= np.asarray(upper) + tol))


def eval_basis(space, cell, ref_point):
    """Shape values and physical gradients on one cell.

    Returns ``(v_vals, v_grads, p_vals, p_grads)`` with gradients mapped to
    physical coordinates through the cell's affine map.
    """
    ref = np.asarray(ref_point, dtype=float)[None, :]
    inv_j = space.mesh.inverse_jacobians[cell]
    v_vals, v_ref = space.tabulate_velocity(ref)
    p_vals, p_ref = space.tabulate_pressure(ref)
    return (v_vals[0], v_ref[0] @ inv_j, p_vals[0], p_ref[0] @ inv_j)


def eval_fe_function(u, x):
    """Point evaluation of an FE function; vector-valued for velocity."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return _eval_points(u, x[None, :])[0]
    return _eval_points(u, x)


def _eval_points(u, pts):
    space = u.space
    d = space.mesh.dim
    cells, bary = locate_points(space.mesh, pts)
    ref = bary[:, 1:]
    if u.component == "velocity":
        vals, _ = space.tabulate_velocity(ref)
        out = np.empty((len(pts), d))
        for k, (c, row) in enumerate(zip(cells, vals)):
            dofs = space.cell_scalar_dofs[c]
            coeffs = u.coeffs.reshape(-1, d)[dofs]       # (nloc, d)
            out[k] = row @ coeffs
        return out
    vals, _ = space.tabulate_pressure(ref)
    out = np.empty(len(pts))
    for k, (c, row) in enumerate(zip(cells, vals)):
        out[k] = row @ u.coeffs[space.cell_pressure_dofs[c]]
    return out


def interpolate_boundary(space, g):
    """Nodal interpolation of ``g`` on the boundary velocity DOFs.

    Returns values aligned with ``space.boundary_velocity_dofs``.  ``g``
    maps an (n, dim) point array to (n, dim) values (or is None for zero).
    """
    dofs = space.boundary_velocity_dofs
    if g is None:
        return np.zeros(len(dofs))
    d = space.mesh.dim
    nodes = np.flatnonzero(space.boundary_scalar_mask)
    vals = np.asarray(g(space.scalar_node_coords[nodes]), dtype=float)
    if vals.shape != (len(nodes), d):
        raise ValueError("boundary data returned shape %s" % (vals.shape,))
    return vals.ravel()


def interpolate_velocity(space, g):
    """Nodal/bubble-free interpolation of a smooth field into the space.

    Vertex and edge nodes take point values; mini bubble coefficients are
    set to zero (exact only for fields the P1 part reproduces).
    """
    d = space.mesh.dim
    coeffs = np.zeros((space.num_scalar_nodes, d))
    if space.family == TAYLOR_HOOD:
        coeffs[:] = np.asarray(g(space.scalar_node_coords), dtype=float)
    else:
        nv = space.mesh.num_vertices
        coeffs[:nv] = np.asarray(g(space.scalar_node_coords[:nv]),
                                 dtype=float)
    return FEFunction(space, "velocity", coeffs.ravel())


def interpolate_pressure(space, g):
    """Vertex interpolation of a scalar field into the pressure space."""
    vals = np.asarray(g(space.mesh.vertices), dtype=float)
    return FEFunction(space, "pressure", vals)


def interpolate_cellwise_constant(mesh, f, rule):
    """Cellwise L2 projection onto piecewise-constant vector fields.

    Per-cell value is the quadrature average (1/|T|) int_T f.
    """
    pts = quad.physical_points(mesh, rule)
    nc, nq, d = pts.shape
    vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(nc, nq, d)
    avg = np.einsum("cqd,q->cd", vals, rule.weights)
    avg *= (mesh.jacobian_dets / mesh.cell_volumes)[:, None]
    return ControlField(mesh, avg)


def cell_averages(space, velocity_coeffs, rule):
    """Cell averages of a discrete velocity field (the Pi_L2 projection)."""
    mesh = space.mesh
    vals, _ = space.tabulate_velocity(rule.reference_points)  # (nq, nloc)
    d = mesh.dim
    coeffs = np.asarray(velocity_coeffs, dtype=float).reshape(-1, d)
    per_cell = coeffs[space.cell_scalar_dofs]                 # (nc, nloc, d)
    integ = np.einsum("qn,cnd,q->cd", vals, per_cell, rule.weights)
    integ *= (mesh.jacobian_dets / mesh.cell_volumes)[:, None]
    return integ
