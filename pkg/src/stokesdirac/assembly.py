"""Assembly of the Stokes bilinear forms and load vectors.

Matrices (velocity stiffness/mass, pressure-divergence coupling, control
coupling, pressure-mean constraint) are assembled exactly with a quadrature
rule matched to the integrand degree.  Right-hand sides accept callbacks and
are integrated with whatever rule the caller provides (the experiments use
the degree-19/14 rules).  Per-cell contributions are accumulated through
sorted COO triplets, so assembly is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import quadrature as quad
from .exceptions import PointOnBoundary
from .mesh import locate_points
from .spaces import MINI, TAYLOR_HOOD, VelocityPressureSpace

#: quadrature degree that integrates all matrix entries exactly
MATRIX_RULE_DEGREE = {
    (TAYLOR_HOOD, 2): 4, (TAYLOR_HOOD, 3): 4,
    (MINI, 2): 6, (MINI, 3): 8,
}

BOUNDARY_TOL = 1e-10


@dataclass
class SaddleSystem:
    """Sparse blocks of the discrete Stokes saddle problem.

    A : velocity stiffness, int grad(w):grad(v)
    B : pressure-divergence coupling, -int q div(v), shape (n_p, n_u)
    M : velocity mass
    C : control coupling (n_u, dim*nc); C @ u.ravel() is the load of a
        piecewise-constant control u
    constraint_row : pressure integration weights enforcing mean zero
    """

    space: VelocityPressureSpace
    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    C: sp.csr_matrix
    constraint_row: np.ndarray


class _CellBasis:
    """Tabulated basis data shared by the matrix assembly loops."""

    def __init__(self, space, rule):
        mesh = space.mesh
        self.rule = rule
        self.v_vals, v_ref = space.tabulate_velocity(rule.reference_points)
        self.p_vals, p_ref = space.tabulate_pressure(rule.reference_points)
        # physical gradients per cell: (nc, nq, nloc, d)
        self.v_grads = np.einsum("qnd,cde->cqne", v_ref,
                                 mesh.inverse_jacobians)
        self.p_grads = np.einsum("qnd,cde->cqne", p_ref,
                                 mesh.inverse_jacobians)
        self.wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]


def assemble_forms(space, rule=None):
    """Assemble all :class:`SaddleSystem` blocks on ``space``.

    With ``rule=None`` a rule exact for every matrix integrand is chosen.
    """
    mesh = space.mesh
    d = mesh.dim
    if rule is None:
        rule = quad.rule_simplex(d, MATRIX_RULE_DEGREE[(space.family, d)])
    basis = _CellBasis(space, rule)
    nloc = space.num_local_scalar
    nc = mesh.num_cells

    # scalar element matrices
    k_el = np.einsum("cq,cqnd,cqmd->cnm", basis.wdet, basis.v_grads,
                     basis.v_grads)
    m_el = np.einsum("cq,qn,qm->cnm", basis.wdet, basis.v_vals, basis.v_vals)

    A = _vector_from_scalar(space, k_el)
    M = _vector_from_scalar(space, m_el)

    # B[p, (n,k)] = -int psi_p d_k phi_n
    b_el = -np.einsum("cq,qp,cqnk->cpnk", basis.wdet, basis.p_vals,
                      basis.v_grads)
    rows = np.repeat(space.cell_pressure_dofs.ravel(), nloc * d)
    vdofs = (space.cell_scalar_dofs[:, :, None] * d
             + np.arange(d)).reshape(nc, nloc * d)
    cols = np.tile(vdofs[:, None, :], (1, d + 1, 1)).ravel()
    B = sp.coo_matrix((b_el.reshape(nc, d + 1, nloc * d).ravel(),
                       (rows, cols)),
                      shape=(space.n_pressure_dofs,
                             space.n_velocity_dofs)).tocsr()

    C = assemble_control_coupling(space, rule, _basis=basis)

    constraint = np.zeros(space.n_pressure_dofs)
    p_int = np.einsum("cq,qp->cp", basis.wdet, basis.p_vals)
    np.add.at(constraint, space.cell_pressure_dofs.ravel(), p_int.ravel())
    return SaddleSystem(space=space, A=A, B=B, M=M, C=C,
                        constraint_row=constraint)


def _vector_from_scalar(space, el):
    """Expand scalar element matrices to the d-component vector space."""
    d = space.mesh.dim
    nc, nloc, _ = el.shape
    sdofs = space.cell_scalar_dofs
    rows, cols, data = [], [], []
    for k in range(d):
        vd = sdofs * d + k
        rows.append(np.repeat(vd, nloc, axis=1).ravel())
        cols.append(np.tile(vd, (1, nloc)).ravel())
        data.append(el.ravel())
    n = space.n_velocity_dofs
    return sp.coo_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def assemble_load_l2(space, f, rule):
    """Load vector with entries int f . phi for a callback ``f``.

    ``f`` maps (n, dim) points to (n, dim) values.
    """
    pts = quad.physical_points(space.mesh, rule)
    nc, nq, d = pts.shape
    vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(nc, nq, d)
    return load_from_cell_values(space, vals, rule)


def load_from_cell_values(space, vals, rule):
    """Load vector from integrand values at the rule's points, (nc, nq, d)."""
    mesh = space.mesh
    d = mesh.dim
    v_vals, _ = space.tabulate_velocity(rule.reference_points)
    wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]
    cell_loads = np.einsum("cq,qn,cqk->cnk", wdet, v_vals, vals)
    out = np.zeros(space.n_velocity_dofs)
    dofs = (space.cell_scalar_dofs[:, :, None] * d + np.arange(d))
    np.add.at(out, dofs.ravel(), cell_loads.ravel())
    return out


def assemble_load_dirac(space, points, amplitudes):
    """Load vector of sum_t <F_t delta_t, v>.

    Entries are F_{t,k} * phi(t) on the velocity DOFs of the cell containing
    t (lowest-index cell on interfaces).  Rejects points within 1e-10 of the
    boundary of the unit box.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    _check_interior(points)
    P = point_load_matrix(space, points)
    return P @ amplitudes.ravel()


def point_load_matrix(space, points):
    """Sparse (n_u, l*dim) matrix of Dirac loads / point evaluations.

    Column (t, k) is the load of a unit force e_k at point t; equivalently
    ``P.T @ y`` stacks the velocity values y(t) of a coefficient vector y.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mesh = space.mesh
    d = mesh.dim
    cells, bary = locate_points(mesh, points)
    vals, _ = space.tabulate_velocity(bary[:, 1:])   # (l, nloc)
    rows, cols, data = [], [], []
    for j, (c, row) in enumerate(zip(cells, vals)):
        sdofs = space.cell_scalar_dofs[c]
        for k in range(d):
            rows.append(sdofs * d + k)
            cols.append(np.full(len(sdofs), j * d + k))
            data.append(row)
    return sp.coo_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(space.n_velocity_dofs,
                                len(points) * d)).tocsr()


def _check_interior(points):
    margin = np.minimum(points, 1.0 - points).min()
    if margin <= BOUNDARY_TOL:
        raise PointOnBoundary("Dirac point within %.1e of the boundary"
                              % (BOUNDARY_TOL,))


def assemble_control_coupling(space, rule=None, _basis=None):
    """Sparse C with C @ u.ravel() the load of a piecewise-constant u."""
    mesh = space.mesh
    d = mesh.dim
    if _basis is None:
        if rule is None:
            rule = quad.rule_simplex(
                d, MATRIX_RULE_DEGREE[(space.family, d)])
        _basis = _CellBasis(space, rule)
    # int_T phi_n per cell
    phi_int = np.einsum("cq,qn->cn", _basis.wdet, _basis.v_vals)
    nc, nloc = phi_int.shape
    rows, cols, data = [], [], []
    for k in range(d):
        rows.append((space.cell_scalar_dofs * d + k).ravel())
        cols.append(np.repeat(np.arange(nc) * d + k, nloc))
        data.append(phi_int.ravel())
    return sp.coo_matrix((np.concatenate(data),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(space.n_velocity_dofs, nc * d)).tocsr()
