"""Box-constrained optimal control solvers.

Two problems are covered, both solved with a Newton-type primal-dual active
set strategy (PDAS) driven by a single factorization per mesh:

* pointwise tracking with a piecewise-constant control (fully discrete) or
  with the control left undiscretized (variational discretization, where the
  control is implicitly the clamp of the scaled discrete adjoint at
  quadrature points);
* point-source amplitude control, where the control lives in R^(d*l) and
  each PDAS step is a dense solve with the exactly assembled reduced
  Hessian.

The tracking PDAS solves its inactive-set equation
``lam*u + Pi_L2 z(u) = 0`` by conjugate gradients on the reduced Hessian
``lam*I + Pi_L2 S* S``; every Hessian application is one forward plus one
adjoint solve reusing the factorization.  CG runs in the control-space L2
inner product (cell-volume weights), where that operator is self-adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import assembly, quadrature as quad
from .exceptions import MaxIterExceeded, MismatchedPoints
from .manufactured import project_interval
from .spaces import ControlField, FEFunction, cell_averages
from .stokes import StokesSolver

CG_TOL = 1e-12
CG_MAX_ITER = 200
OBJECTIVE_SLACK = 1e-12
#: objective guard disarms once steps are this small: in the terminal phase
#: the paper's J converges to its limit from below at roundoff scale
GUARD_STEP = 1e-6


@dataclass
class BoxConstraint:
    """Componentwise bounds; arrays broadcast against control values."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if not np.all(self.lower < self.upper):
            raise ValueError("box requires lower < upper componentwise")


@dataclass
class AmplitudeSet:
    """Point-source amplitudes: one vector per source point."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.points.shape != self.values.shape:
            raise ValueError("points/values shapes differ")


@dataclass
class VariationalControl:
    """Implicit control q(x) = clamp(-z_h(x)/lam) of the semidiscrete scheme.

    ``values`` caches q at the quadrature points of ``rule`` on every cell,
    shape (nc, nq, d); ``at_points`` evaluates q anywhere.
    """

    space: object
    rule: object
    z: FEFunction
    box: BoxConstraint
    lam: float
    values: np.ndarray

    def at_points(self, x):
        zvals = np.atleast_2d(self.z(x))
        return project_interval(-zvals / self.lam, self.box.lower,
                                self.box.upper)


@dataclass
class OCPSolution:
    """Converged discrete optimality system."""

    y: FEFunction
    p: FEFunction
    z: FEFunction
    r: FEFunction
    control: object
    objective: float
    iterations: int
    vi_residual: float
    active_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)


def project_box(v, box):
    """Componentwise clamp onto [box.lower, box.upper]."""
    return project_interval(np.asarray(v, dtype=float), box.lower, box.upper)


# ---------------------------------------------------------------------------
# shared workspace

class TrackingWorkspace:
    """Per-level operators for the tracking problem (both schemes)."""

    def __init__(self, space, spec, solver=None):
        self.space = space
        self.spec = spec
        self.solver = solver if solver is not None else StokesSolver(space)
        self.rule = self.solver.load_rule
        self.f_load = assembly.assemble_load_l2(space, spec.forcing,
                                                self.rule)
        self.state_bc = self.solver.boundary_values(spec.state_bc)
        self.adjoint_bc = self.solver.boundary_values(spec.adjoint_bc)
        self.P = assembly.point_load_matrix(space, spec.points)
        self.targets = np.atleast_2d(spec.targets)
        self.box = BoxConstraint(spec.box_lower, spec.box_upper)
        self.lam = spec.lam
        self.volumes = space.mesh.cell_volumes
        d = space.mesh.dim
        # flat weights of the control-space L2 inner product
        self.weights = np.repeat(self.volumes, d)
        self.avg_rule = quad.rule_simplex(d, 4)

        # quadrature tables for the variational scheme
        self.v_vals, _ = space.tabulate_velocity(self.rule.reference_points)
        self.wdet = (self.rule.weights[None, :]
                     * space.mesh.jacobian_dets[:, None])

    # -- basic solves -------------------------------------------------------

    def state(self, control_load, homogeneous=False):
        load = self.f_load + control_load if not homogeneous \
            else control_load
        bc = None if homogeneous else self.state_bc
        return self.solver.fact.solve(load, boundary_values=bc)

    def adjoint(self, y, homogeneous=False):
        """Tracking adjoint; pressure sign already flipped."""
        amps = (self.P.T @ y.coeffs).reshape(self.targets.shape)
        if not homogeneous:
            amps = amps - self.targets
        bc = None if homogeneous else self.adjoint_bc
        z, r = self.solver.fact.solve(self.P @ amps.ravel(),
                                      boundary_values=bc)
        return z, FEFunction(self.space, "pressure", -r.coeffs), amps

    def cell_average(self, z):
        """Pi_L2 of a velocity field as a flat (nc*d,) vector."""
        return cell_averages(self.space, z.coeffs, self.avg_rule).ravel()

    def velocity_at_quad(self, coeffs):
        """Velocity field values at the load-rule points, (nc, nq, d)."""
        d = self.space.mesh.dim
        per_cell = coeffs.reshape(-1, d)[self.space.cell_scalar_dofs]
        return np.einsum("qn,cnd->cqd", self.v_vals, per_cell)

    def tracking_misfit(self, amps):
        return 0.5 * float((amps ** 2).sum())


# ---------------------------------------------------------------------------
# fully discrete scheme

def solve_tracking_fully_discrete(space, spec, tol=1e-10, max_iter=50,
                                  workspace=None):
    """PDAS for the fully discrete tracking problem.

    The control is piecewise constant; at convergence every cell/component
    satisfies u = clamp(-Pi_L2 z / lam) and the active sets of two
    consecutive iterations coincide.
    """
    ws = workspace if workspace is not None \
        else TrackingWorkspace(space, spec)
    lam, box = ws.lam, ws.box
    nc = space.mesh.num_cells
    d = space.mesh.dim
    lower = np.broadcast_to(box.lower, (nc, d)).ravel()
    upper = np.broadcast_to(box.upper, (nc, d)).ravel()

    def evaluate(u_flat):
        y, p = ws.state(ws.solver.system.C @ u_flat)
        z, r, amps = ws.adjoint(y)
        mu = -ws.cell_average(z) / lam
        obj = (ws.tracking_misfit(amps)
               + 0.5 * lam * float(ws.weights @ u_flat ** 2))
        vi = float(np.abs(u_flat - np.clip(mu, lower, upper)).max())
        return dict(y=y, p=p, z=z, r=r, mu=mu, obj=obj, vi=vi)

    u = np.clip(np.zeros(nc * d), lower, upper)
    sol = evaluate(u)
    history, objectives = [], [sol["obj"]]
    prev_sets = None

    for iteration in range(1, max_iter + 1):
        act_lo = sol["mu"] < lower
        act_hi = sol["mu"] > upper
        sets = (act_lo.tobytes(), act_hi.tobytes())
        history.append((int(act_lo.sum()), int(act_hi.sum())))
        if sets == prev_sets and sol["vi"] <= tol:
            return _tracking_solution(ws, u, sol, iteration - 1, history,
                                      objectives)
        u_new = _pdas_step(ws, act_lo, act_hi, lower, upper)
        sol_new = evaluate(u_new)
        # the objective guard starts with the second accepted iterate (with
        # exact inhomogeneous traces imposed, the optimality system is the
        # KKT system of a shifted quadratic and J may rise once from u^0)
        # and disarms for terminal-phase steps below GUARD_STEP
        step = float(np.abs(u_new - u).max())
        if (iteration > 1 and step > GUARD_STEP
                and sol_new["obj"] > sol["obj"] + OBJECTIVE_SLACK):
            u_new, sol_new = _damped_fallback(ws, evaluate, u, sol, lower,
                                              upper)
        u, sol = u_new, sol_new
        objectives.append(sol["obj"])
        prev_sets = sets
    if sol["vi"] <= tol:
        return _tracking_solution(ws, u, sol, max_iter, history, objectives)
    raise MaxIterExceeded(
        "PDAS did not converge in %d iterations (vi residual %.3e)"
        % (max_iter, sol["vi"]),
        info=dict(active_history=history, vi_residual=sol["vi"],
                  objective_history=objectives))


def _tracking_solution(ws, u_flat, sol, iterations, history, objectives):
    control = ControlField(ws.space.mesh,
                           u_flat.reshape(-1, ws.space.mesh.dim))
    return OCPSolution(y=sol["y"], p=sol["p"], z=sol["z"], r=sol["r"],
                       control=control, objective=sol["obj"],
                       iterations=iterations, vi_residual=sol["vi"],
                       active_history=history,
                       objective_history=objectives)


def _pdas_step(ws, act_lo, act_hi, lower, upper):
    """Solve the equality-constrained subproblem of one PDAS iteration."""
    lam = ws.lam
    inactive = ~(act_lo | act_hi)
    u_active = np.zeros_like(lower)
    u_active[act_lo] = lower[act_lo]
    u_active[act_hi] = upper[act_hi]
    if not inactive.any():
        return u_active

    # affine part: g0 from data (f, boundary lifts, targets), plus the
    # linear response to the frozen active entries
    y0, _ = ws.state(ws.solver.system.C @ u_active)
    z0, _, _ = ws.adjoint(y0)
    g0 = ws.cell_average(z0)

    def apply_K(x_inactive):
        xfull = np.zeros_like(lower)
        xfull[inactive] = x_inactive
        y_lin, _ = ws.state(ws.solver.system.C @ xfull, homogeneous=True)
        z_lin, _, _ = ws.adjoint(y_lin, homogeneous=True)
        return ws.cell_average(z_lin)[inactive]

    rhs = -g0[inactive]
    w = ws.weights[inactive]
    u_inactive = _weighted_cg(apply_K, rhs, w, lam)
    u = u_active
    u[inactive] = u_inactive
    return u


def _weighted_cg(apply_K, rhs, w, lam, tol=CG_TOL, max_iter=CG_MAX_ITER):
    """CG for (lam*I + K) x = rhs, self-adjoint in the w-inner product."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rr = float(w @ (r * r))
    norm0 = np.sqrt(rr)
    if norm0 == 0.0:
        return x
    for _ in range(max_iter):
        Kp = lam * p + apply_K(p)
        alpha = rr / float(w @ (p * Kp))
        x += alpha * p
        r -= alpha * Kp
        rr_new = float(w @ (r * r))
        if np.sqrt(rr_new) <= tol * max(1.0, norm0):
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def _damped_fallback(ws, evaluate, u, sol, lower, upper):
    """Damped fixed-point step, halving until the objective decreases.

    Returns the undamped anchor if no step length helps; the caller keeps
    iterating from there.
    """
    target = np.clip(sol["mu"], lower, upper)
    theta = 1.0
    for _ in range(20):
        u_try = u + theta * (target - u)
        sol_try = evaluate(u_try)
        if sol_try["obj"] <= sol["obj"] + OBJECTIVE_SLACK:
            return u_try, sol_try
        theta *= 0.5
    return u, sol


def solve_tracking_unconstrained(space, spec, workspace=None):
    """Reference solve ignoring the box (oracle for wide-bound tests)."""
    ws = workspace if workspace is not None \
        else TrackingWorkspace(space, spec)
    y0, _ = ws.state(ws.solver.system.C @ np.zeros(ws.weights.size))
    z0, _, _ = ws.adjoint(y0)
    g0 = ws.cell_average(z0)

    def apply_K(x):
        y_lin, _ = ws.state(ws.solver.system.C @ x, homogeneous=True)
        z_lin, _, _ = ws.adjoint(y_lin, homogeneous=True)
        return ws.cell_average(z_lin)

    u = _weighted_cg(apply_K, -g0, ws.weights, ws.lam)
    return ControlField(space.mesh, u.reshape(-1, space.mesh.dim))


# ---------------------------------------------------------------------------
# variational discretization

def solve_tracking_variational(space, spec, tol=1e-10, max_iter=50,
                               workspace=None):
    """Fixed-point solve of the semidiscrete (variational) scheme.

    The control never gets its own DOFs: the state load is assembled from
    clamp(-z_h/lam) evaluated at the load-rule quadrature points, and the
    iteration stops when q changes by at most ``tol`` at every point.
    """
    ws = workspace if workspace is not None \
        else TrackingWorkspace(space, spec)
    lam, box = ws.lam, ws.box
    nc = space.mesh.num_cells
    nq = len(ws.rule.weights)
    d = space.mesh.dim

    def control_norm_sq(q):
        return float(np.einsum("cq,cqd->", ws.wdet, q ** 2))

    def state_for(q):
        load = assembly.load_from_cell_values(ws.space, q, ws.rule)
        y, p = ws.state(load)
        z, r, amps = ws.adjoint(y)
        obj = ws.tracking_misfit(amps) + 0.5 * lam * control_norm_sq(q)
        return dict(y=y, p=p, z=z, r=r, obj=obj)

    q = np.broadcast_to(project_interval(np.zeros(d), box.lower, box.upper),
                        (nc, nq, d)).copy()
    sol = state_for(q)
    objectives = [sol["obj"]]
    delta = np.inf
    for iteration in range(1, max_iter + 1):
        z_vals = ws.velocity_at_quad(sol["z"].coeffs)
        q_new = project_interval(-z_vals / lam, box.lower, box.upper)
        delta = float(np.abs(q_new - q).max())
        sol_new = state_for(q_new)
        if (iteration > 1 and delta > GUARD_STEP
                and sol_new["obj"] > sol["obj"] + OBJECTIVE_SLACK):
            theta = 1.0
            while theta > 1e-8:
                theta *= 0.5
                q_try = q + theta * (q_new - q)
                sol_try = state_for(q_try)
                if sol_try["obj"] <= sol["obj"] + OBJECTIVE_SLACK:
                    q_new, sol_new = q_try, sol_try
                    delta = float(np.abs(q_new - q).max())
                    break
        q, sol = q_new, sol_new
        objectives.append(sol["obj"])
        if delta <= tol:
            control = VariationalControl(space=ws.space, rule=ws.rule,
                                         z=sol["z"], box=box, lam=lam,
                                         values=q)
            vi = _variational_vi(ws, sol["z"], q)
            return OCPSolution(y=sol["y"], p=sol["p"], z=sol["z"],
                               r=sol["r"], control=control,
                               objective=sol["obj"], iterations=iteration,
                               vi_residual=vi,
                               objective_history=objectives)
    raise MaxIterExceeded(
        "variational fixed point did not converge in %d iterations "
        "(last delta %.3e)" % (max_iter, delta),
        info=dict(delta=delta, objective_history=objectives))


def _variational_vi(ws, z, q):
    z_vals = ws.velocity_at_quad(z.coeffs)
    clamp = project_interval(-z_vals / ws.lam, ws.box.lower, ws.box.upper)
    return float(np.abs(q - clamp).max())


# ---------------------------------------------------------------------------
# point-source amplitude control

class PointSourceWorkspace:
    """Per-level operators for the point-source problem."""

    def __init__(self, space, spec, solver=None):
        self.space = space
        self.spec = spec
        self.solver = solver if solver is not None else StokesSolver(space)
        self.rule = self.solver.load_rule
        self.P = assembly.point_load_matrix(space, spec.points)
        self.state_bc = self.solver.boundary_values(spec.state_bc)
        self.adjoint_bc = self.solver.boundary_values(spec.adjoint_bc)
        self.box = BoxConstraint(spec.box_lower, spec.box_upper)
        self.lam = spec.lam
        self.points = spec.points
        self.n = self.P.shape[1]
        self.y_omega_load = assembly.assemble_load_l2(space, spec.y_omega,
                                                      self.rule)
        # desired-state norm data for objective evaluation
        self.v_vals, _ = space.tabulate_velocity(self.rule.reference_points)
        self.wdet = (self.rule.weights[None, :]
                     * space.mesh.jacobian_dets[:, None])
        pts = quad.physical_points(space.mesh, self.rule)
        self.y_omega_vals = np.asarray(
            spec.y_omega(pts.reshape(-1, space.mesh.dim)),
            dtype=float).reshape(pts.shape)

        # dense reduced Hessian lam*I + W^T M W from unit-amplitude solves
        M = self.solver.system.M
        W = np.empty((space.n_velocity_dofs, self.n))
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = 1.0
            w, _ = self.solver.fact.solve(self.P @ e)
            W[:, j] = w.coeffs
        self.W = W
        self.gram = W.T @ (M @ W)
        self.hessian = self.lam * np.eye(self.n) + self.gram

        # affine part: adjoint evaluations at zero amplitudes
        y0, _ = self.solver.fact.solve(np.zeros(space.n_velocity_dofs),
                                       boundary_values=self.state_bc)
        z0, _ = self._adjoint_raw(y0)
        self.c = (self.P.T @ z0.coeffs)
        self.y0 = y0

    def _adjoint_raw(self, y):
        load = self.solver.system.M @ y.coeffs - self.y_omega_load
        z, r = self.solver.fact.solve(load, boundary_values=self.adjoint_bc)
        return z, FEFunction(self.space, "pressure", -r.coeffs)

    def solve_state(self, amplitudes):
        return self.solver.fact.solve(self.P @ amplitudes.ravel(),
                                      boundary_values=self.state_bc)

    def objective(self, y, amplitudes):
        d = self.space.mesh.dim
        per_cell = y.coeffs.reshape(-1, d)[self.space.cell_scalar_dofs]
        yvals = np.einsum("qn,cnd->cqd", self.v_vals, per_cell)
        misfit = float(np.einsum("cq,cqd->", self.wdet,
                                 (yvals - self.y_omega_vals) ** 2))
        return 0.5 * misfit + 0.5 * self.lam * float((amplitudes ** 2).sum())


def solve_point_source_ocp(space, spec, tol=1e-10, max_iter=50,
                           workspace=None):
    """PDAS on the d*l amplitude variables with dense reduced Hessian."""
    ws = workspace if workspace is not None \
        else PointSourceWorkspace(space, spec)
    lam, box = ws.lam, ws.box
    l = len(ws.points)
    d = space.mesh.dim
    lower = np.broadcast_to(box.lower, (l, d)).ravel()
    upper = np.broadcast_to(box.upper, (l, d)).ravel()

    U = np.clip(np.zeros(ws.n), lower, upper)
    history = []
    prev_sets = None
    iteration = 0
    for iteration in range(1, max_iter + 1):
        mu = -(ws.c + ws.gram @ U) / lam
        act_lo = mu < lower
        act_hi = mu > upper
        sets = (act_lo.tobytes(), act_hi.tobytes())
        history.append((int(act_lo.sum()), int(act_hi.sum())))
        vi = float(np.abs(U - np.clip(mu, lower, upper)).max())
        if sets == prev_sets and vi <= tol:
            break
        U_new = np.zeros(ws.n)
        U_new[act_lo] = lower[act_lo]
        U_new[act_hi] = upper[act_hi]
        inactive = ~(act_lo | act_hi)
        if inactive.any():
            H_II = ws.hessian[np.ix_(inactive, inactive)]
            rhs = -ws.c[inactive] - ws.gram[np.ix_(
                inactive, ~inactive)] @ U_new[~inactive]
            U_new[inactive] = np.linalg.solve(H_II, rhs)
        U = U_new
        prev_sets = sets
    else:
        raise MaxIterExceeded(
            "point-source PDAS did not converge in %d iterations"
            % max_iter, info=dict(active_history=history))

    amplitudes = U.reshape(l, d)
    y, p = ws.solve_state(amplitudes)
    z, r = ws._adjoint_raw(y)
    z_at = (ws.P.T @ z.coeffs)
    vi = float(np.abs(U - np.clip(-z_at / lam, lower, upper)).max())
    control = AmplitudeSet(points=ws.points, values=amplitudes)
    return OCPSolution(y=y, p=p, z=z, r=r, control=control,
                       objective=ws.objective(y, amplitudes),
                       iterations=iteration, vi_residual=vi,
                       active_history=history)


# ---------------------------------------------------------------------------
# optimality diagnostics

def check_discrete_vi(solution, spec, space=None):
    """Max KKT defect of a solution against its projection formula."""
    lam = spec.lam
    control = solution.control
    if isinstance(control, ControlField):
        sp_ = solution.z.space
        mu = -cell_averages(sp_, solution.z.coeffs,
                            quad.rule_simplex(sp_.mesh.dim, 4)) / lam
        clamp = project_interval(mu, spec.box_lower, spec.box_upper)
        return float(np.abs(control.values - clamp).max())
    if isinstance(control, VariationalControl):
        z_vals = np.einsum(
            "qn,cnd->cqd",
            control.space.tabulate_velocity(
                control.rule.reference_points)[0],
            solution.z.coeffs.reshape(-1, control.space.mesh.dim)[
                control.space.cell_scalar_dofs])
        clamp = project_interval(-z_vals / lam, spec.box_lower,
                                 spec.box_upper)
        return float(np.abs(control.values - clamp).max())
    if isinstance(control, AmplitudeSet):
        zt = np.atleast_2d(solution.z(control.points))
        clamp = project_interval(-zt / lam, spec.box_lower, spec.box_upper)
        return float(np.abs(control.values - clamp).max())
    raise TypeError("unknown control type %r" % type(control))


def optimality_certificate(solution, spec, n_directions=200, seed=0):
    """Smallest sampled directional-derivative value at the solution.

    Draws admissible directions v and returns min over samples of
    (z + lam*u, v - u) in the control inner product; nonnegative (up to
    roundoff) certifies the discrete variational inequality.
    """
    rng = np.random.default_rng(seed)
    lam = spec.lam
    control = solution.control
    lo, hi = spec.box_lower, spec.box_upper
    worst = np.inf
    if isinstance(control, ControlField):
        mesh = control.mesh
        sp_ = solution.z.space
        zbar = cell_averages(sp_, solution.z.coeffs,
                             quad.rule_simplex(mesh.dim, 4))
        grad = zbar + lam * control.values              # (nc, d)
        vols = mesh.cell_volumes[:, None]
        for _ in range(n_directions):
            v = rng.uniform(lo, hi, size=control.values.shape)
            val = float((vols * grad * (v - control.values)).sum())
            worst = min(worst, val)
        return worst
    if isinstance(control, AmplitudeSet):
        zt = np.atleast_2d(solution.z(control.points))
        grad = zt + lam * control.values
        for _ in range(n_directions):
            v = rng.uniform(lo, hi, size=control.values.shape)
            val = float((grad * (v - control.values)).sum())
            worst = min(worst, val)
        return worst
    if isinstance(control, VariationalControl):
        space = control.space
        v_vals, _ = space.tabulate_velocity(control.rule.reference_points)
        z_vals = np.einsum(
            "qn,cnd->cqd", v_vals,
            solution.z.coeffs.reshape(-1, space.mesh.dim)[
                space.cell_scalar_dofs])
        wdet = (control.rule.weights[None, :]
                * space.mesh.jacobian_dets[:, None])
        grad = z_vals + lam * control.values
        for _ in range(n_directions):
            v = rng.uniform(lo, hi, size=space.mesh.dim)
            val = float(np.einsum("cq,cqd->", wdet, grad * (v - control.values)))
            worst = min(worst, val)
        return worst
    raise TypeError("certificate not defined for %r" % type(control))


def amplitude_error(exact, approx):
    """sqrt(sum_t |u_t - v_t|^2) over a shared point set."""
    if isinstance(exact, AmplitudeSet):
        pe, ve = exact.points, exact.values
    else:
        pe, ve = None, np.atleast_2d(np.asarray(exact, dtype=float))
    if isinstance(approx, AmplitudeSet):
        pa, va = approx.points, approx.values
    else:
        pa, va = None, np.atleast_2d(np.asarray(approx, dtype=float))
    if pe is not None and pa is not None:
        if pe.shape != pa.shape or not np.allclose(pe, pa):
            raise MismatchedPoints("amplitude sets live on different points")
    if ve.shape != va.shape:
        raise MismatchedPoints("amplitude sets have different shapes")
    return float(np.linalg.norm(ve - va))
