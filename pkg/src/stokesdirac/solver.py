"""Direct solution of the Stokes saddle-point system.

The solved system is the bordered one

    [[A, B^T, 0], [B, 0, c], [0, c^T, 0]] [y; p; mu] = [F; G; 0],

with c the pressure-mean constraint row, so the pressure is the mean-zero
representative of the L2/R quotient and incompatible divergence data are
absorbed by the scalar multiplier.  The border is handled analytically
rather than factorized: testing the divergence block against the constant
pressure gives mu = 1^T(G - B_bd g)/|Omega| in closed form, after which the
remaining singular saddle block is factorized once with one pressure DOF
pinned (sparse LU with partial pivoting; pinning keeps the factor sparse,
the bordered row would be dense) and the computed pressure is shifted to
exact mean zero.  The result equals the bordered solution identically.
Dirichlet velocity DOFs are eliminated symmetrically, their contributions
moving to the right-hand side at solve time, and every solve performs one
step of iterative refinement.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystem
from .spaces import FEFunction


class Factorization:
    """Reusable factorization of the reduced, pinned saddle matrix."""

    def __init__(self, system, boundary_dofs):
        space = system.space
        self.system = system
        self.space = space
        n_u = space.n_velocity_dofs
        n_p = space.n_pressure_dofs
        self.n_u, self.n_p = n_u, n_p
        self.constraint = np.asarray(system.constraint_row, dtype=float)
        self.omega = float(self.constraint.sum()) if n_p else 1.0

        boundary_dofs = np.asarray(boundary_dofs, dtype=np.int64)
        self.boundary_dofs = boundary_dofs
        mask = np.ones(n_u, dtype=bool)
        mask[boundary_dofs] = False
        self.interior_dofs = np.flatnonzero(mask)
        self.n_int = len(self.interior_dofs)
        self.last_residual = 0.0
        self.last_multiplier = 0.0

        if n_p > 0:
            K = sp.bmat([[system.A, system.B.T], [system.B, None]],
                        format="csc")
        else:
            K = sp.csc_matrix(system.A)
        keep = np.concatenate([self.interior_dofs,
                               np.arange(n_u, n_u + n_p)])
        self.keep = keep
        K_csc = K[keep][:, keep]
        self.K_boundary = K[keep][:, boundary_dofs]

        if self.n_int + n_p == 0:
            self.lu = None
            self.K_pinned = None
            return

        self.pin = self.n_int if n_p > 0 else None
        if self.pin is not None:
            coo = K_csc.tocoo()
            drop = (coo.row == self.pin) | (coo.col == self.pin)
            rows = np.concatenate([coo.row[~drop], [self.pin]])
            cols = np.concatenate([coo.col[~drop], [self.pin]])
            data = np.concatenate([coo.data[~drop], [1.0]])
            K_csc = sp.coo_matrix((data, (rows, cols)),
                                  shape=K_csc.shape).tocsc()
        self.K_pinned = K_csc
        try:
            self.lu = spla.splu(K_csc)
        except RuntimeError as exc:      # SuperLU reports exact singularity
            raise SingularSystem(str(exc)) from None
        if not np.all(np.isfinite(self.lu.U.diagonal())):
            raise SingularSystem("non-finite pivot in LU factors")

    def solve(self, velocity_load, pressure_load=None, boundary_values=None):
        """Solve for (velocity, pressure) FEFunctions.

        ``boundary_values`` aligns with the eliminated DOFs (zero if None);
        ``pressure_load`` is the right-hand side of the divergence rows.
        """
        n_u, n_p = self.n_u, self.n_p
        rhs = np.zeros(n_u + n_p)
        rhs[:n_u] = velocity_load
        if pressure_load is not None:
            rhs[n_u:] = pressure_load
        if boundary_values is None:
            boundary_values = np.zeros(len(self.boundary_dofs))
        else:
            boundary_values = np.asarray(boundary_values, dtype=float)

        velocity = np.zeros(n_u)
        velocity[self.boundary_dofs] = boundary_values
        if self.lu is None:
            self.last_residual = 0.0
            return (FEFunction(self.space, "velocity", velocity),
                    FEFunction(self.space, "pressure", np.zeros(n_p)))

        reduced = rhs[self.keep] - self.K_boundary @ boundary_values
        if n_p > 0:
            mu = float(reduced[self.n_int:].sum()) / self.omega
            reduced[self.n_int:] -= mu * self.constraint
            reduced[self.pin] = 0.0
            self.last_multiplier = mu
        x = self.lu.solve(reduced)
        # one step of iterative refinement tightens the residual well past
        # the 1e-9 gate
        resid = reduced - self.K_pinned @ x
        x = x + self.lu.solve(resid)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("solve produced non-finite values")
        resid = reduced - self.K_pinned @ x
        scale = max(float(np.abs(reduced).max()), 1.0)
        self.last_residual = float(np.abs(resid).max()) / scale

        velocity[self.interior_dofs] = x[:self.n_int]
        pressure = x[self.n_int:]
        if n_p > 0:
            pressure = pressure - (self.constraint @ pressure) / self.omega
        return (FEFunction(self.space, "velocity", velocity),
                FEFunction(self.space, "pressure", pressure))


def factorize(system, boundary_dofs, boundary_values=None):
    """Factor the reduced saddle matrix; boundary values are per-solve."""
    return Factorization(system, boundary_dofs)


def solve(fact, velocity_load, pressure_load=None, boundary_values=None):
    """Solve with a prepared :class:`Factorization`."""
    return fact.solve(velocity_load, pressure_load, boundary_values)
