"""Simplex quadrature rules and mesh integration.

Rules are conical products of Gauss-Jacobi lines (the collapsed-coordinate
construction): exact to any requested total degree with strictly positive
weights and strictly interior points.  Positivity matters here because the
error integrands of the studies are singular at the Dirac points, where
mixed-sign rules can produce negative cell sums.  Supported exactness caps:
degree 19 on triangles, degree 14 on tetrahedra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .exceptions import Unsupported

DEGREE_CAPS = {2: 19, 3: 14}


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on the reference d-simplex conv{0, e_1, ..., e_d}.

    ``points`` hold barycentric coordinates, shape (nq, dim+1); ``weights``
    sum to the reference simplex volume 1/dim!.  ``degree`` is the certified
    polynomial exactness.
    """

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def reference_points(self):
        """Reference coordinates (nq, dim): barycentric minus lambda_0."""
        return self.points[:, 1:]


def rule_simplex(dim, degree):
    """Conical-product rule exact for polynomials of total degree ``degree``.

    Raises :class:`Unsupported` above the caps (19 in 2D, 14 in 3D).
    """
    if dim not in DEGREE_CAPS:
        raise ValueError("dim must be 2 or 3")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if degree > DEGREE_CAPS[dim]:
        raise Unsupported("degree %d exceeds the supported cap %d for dim=%d"
                          % (degree, DEGREE_CAPS[dim], dim))
    n = max(1, -(-(degree + 1) // 2))        # Gauss: n nodes, degree 2n-1
    lines = [_jacobi_line(n, dim - 1 - k) for k in range(dim)]
    ref = _conical_points(lines, dim)
    weights = _conical_weights(lines)
    points = np.concatenate(
        [1.0 - ref.sum(axis=1, keepdims=True), ref], axis=1)
    points.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(dim=dim, degree=max(degree, 2 * n - 1),
                          points=points, weights=weights)


def _jacobi_line(n, alpha):
    """Nodes/weights for int_0^1 (1-t)^alpha f(t) dt."""
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def _conical_points(lines, dim):
    grids = np.meshgrid(*[t for t, _ in lines], indexing="ij")
    xi = [g.ravel() for g in grids]
    ref = np.empty((xi[0].size, dim))
    shrink = np.ones_like(xi[0])
    for k in range(dim):
        ref[:, k] = xi[k] * shrink
        shrink = shrink * (1.0 - xi[k])
    return ref


def _conical_weights(lines):
    w = lines[0][1]
    for _, wk in lines[1:]:
        w = np.multiply.outer(w, wk)
    return w.ravel()


def physical_points(mesh, rule):
    """Quadrature points mapped to every cell, shape (nc, nq, dim)."""
    ref = rule.reference_points
    return (mesh.cell_origins[:, None, :]
            + np.einsum("cde,qe->cqd", mesh.jacobians, ref))


def integrate(mesh, rule, f):
    """Integrate a callback over the mesh.

    ``f`` maps an (n, dim) point array to (n,) values (scalar integrands).
    Cells are summed in index order for reproducibility.
    """
    if rule.dim != mesh.dim:
        raise ValueError("rule dimension does not match mesh dimension")
    pts = physical_points(mesh, rule)
    nc, nq, d = pts.shape
    vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(nc, nq)
    per_cell = vals @ rule.weights * mesh.jacobian_dets
    return float(per_cell.sum())
