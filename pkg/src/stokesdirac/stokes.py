"""Forward and adjoint Stokes solves on a fixed space.

One :class:`StokesSolver` per space assembles the saddle blocks, eliminates
the boundary velocity DOFs and factorizes once; every forward solve, every
tracking adjoint (Dirac right-hand side) and every desired-state adjoint
(L2 right-hand side) reuses that factorization.  The adjoint problems carry
a -b(w, r) pressure sign; since the stiffness form is symmetric, they are
solved with the forward matrix and the returned adjoint pressure is negated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import assembly, quadrature as quad
from .solver import Factorization
from .spaces import ControlField, FEFunction, interpolate_boundary

#: quadrature degree used for callback right-hand sides (per dimension)
LOAD_RULE_DEGREE = {2: 19, 3: 14}


@dataclass
class StokesRHS:
    """Momentum right-hand side; the present loads add up.

    l2_load : callback (n, d) -> (n, d), integrated with the load rule
    control : piecewise-constant field, applied through the coupling matrix
    dirac   : (points, amplitudes) pair of (l, d) arrays
    """

    l2_load: Optional[Callable] = None
    control: Optional[ControlField] = None
    dirac: Optional[tuple] = None

    def any_load(self):
        return (self.l2_load is not None or self.control is not None
                or self.dirac is not None)


class StokesSolver:
    """Assembled system + factorization + load rule for one space."""

    def __init__(self, space, system=None, load_degree=None):
        self.space = space
        self.system = system if system is not None \
            else assembly.assemble_forms(space)
        self.fact = Factorization(self.system, space.boundary_velocity_dofs)
        degree = load_degree if load_degree is not None \
            else LOAD_RULE_DEGREE[space.mesh.dim]
        self.load_rule = quad.rule_simplex(space.mesh.dim, degree)

    # -- loads ------------------------------------------------------------

    def load_vector(self, rhs):
        if not rhs.any_load():
            raise ValueError("StokesRHS carries no load")
        out = np.zeros(self.space.n_velocity_dofs)
        if rhs.l2_load is not None:
            out += assembly.assemble_load_l2(self.space, rhs.l2_load,
                                             self.load_rule)
        if rhs.control is not None:
            out += self.system.C @ rhs.control.values.ravel()
        if rhs.dirac is not None:
            points, amplitudes = rhs.dirac
            out += assembly.assemble_load_dirac(self.space, points,
                                                amplitudes)
        return out

    def boundary_values(self, bc):
        if bc is None:
            return None
        if callable(bc):
            return interpolate_boundary(self.space, bc)
        return np.asarray(bc, dtype=float)

    # -- solves -----------------------------------------------------------

    def solve_forward(self, rhs, bc=None):
        """Galerkin solution of the forward Stokes problem."""
        load = rhs if isinstance(rhs, np.ndarray) else self.load_vector(rhs)
        return self.fact.solve(load, boundary_values=self.boundary_values(bc))

    def solve_adjoint_tracking(self, y, points, targets, bc=None):
        """Adjoint solve with Dirac amplitudes y(t) - y_t.

        ``y`` is the discrete state velocity (FEFunction or coefficient
        vector).  The returned pressure carries the adjoint sign.
        """
        coeffs = y.coeffs if isinstance(y, FEFunction) else np.asarray(y)
        P = assembly.point_load_matrix(self.space, points)
        amplitudes = (P.T @ coeffs).reshape(len(np.atleast_2d(points)), -1) \
            - np.atleast_2d(targets)
        z, r = self.fact.solve(P @ amplitudes.ravel(),
                               boundary_values=self.boundary_values(bc))
        return z, _flip_pressure(r), amplitudes

    def solve_adjoint_desired(self, y, y_omega, bc=None):
        """Adjoint solve with L2 load y - y_omega (desired-state tracking)."""
        coeffs = y.coeffs if isinstance(y, FEFunction) else np.asarray(y)
        load = self.system.M @ coeffs - assembly.assemble_load_l2(
            self.space, y_omega, self.load_rule)
        z, r = self.fact.solve(load,
                               boundary_values=self.boundary_values(bc))
        return z, _flip_pressure(r)


def _flip_pressure(p):
    return FEFunction(p.space, "pressure", -p.coeffs)


def solve_stokes(space, rhs, bc=None, solver=None):
    """One-off forward solve (builds a solver unless one is passed)."""
    solver = solver or StokesSolver(space)
    return solver.solve_forward(rhs, bc)


def solve_adjoint_tracking(space, y, points, targets, bc=None, solver=None):
    """One-off tracking adjoint; returns (z, r) with the adjoint sign."""
    solver = solver or StokesSolver(space)
    z, r, _ = solver.solve_adjoint_tracking(y, points, targets, bc)
    return z, r


def solve_adjoint_desired(space, y, y_omega, bc=None, solver=None):
    """One-off desired-state adjoint; returns (z, r) with the adjoint sign."""
    solver = solver or StokesSolver(space)
    return solver.solve_adjoint_desired(y, y_omega, bc)
