"""Error norms, the distance weight, EOC computation and study reports.

All integrals use the rule the caller provides (the studies use the
degree-19/14 rules).  L-infinity norms are maxima over the quadrature points
of every cell: that lower-bounds the true sup-norm and is the measurement
convention of the experiments.  Pressure errors are measured in the
L2-quotient norm (the mean of the difference is subtracted), since both the
exact Stokeslet pressures and the discrete pressures are defined up to a
constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import quadrature as quad
from .exceptions import DegenerateInput

CELL_BLOCK = 4096


@dataclass
class WeightConfig:
    """Radial weight |x - t|^alpha near each center, 1 away from them."""

    centers: np.ndarray
    alpha: float
    d_sep: Optional[float] = None

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        d = self.centers.shape[1]
        if self.d_sep is None:
            bdry = float(np.minimum(self.centers,
                                    1.0 - self.centers).min())
            if len(self.centers) > 1:
                diff = self.centers[:, None, :] - self.centers[None, :, :]
                dist = np.linalg.norm(diff, axis=2)
                np.fill_diagonal(dist, np.inf)
                self.d_sep = min(bdry, float(dist.min()))
            else:
                self.d_sep = bdry
        if self.d_sep <= 0:
            raise ValueError("separation radius must be positive")
        if not (d - 2 < self.alpha < 2):
            warnings.warn(
                "alpha=%.3g outside (d-2, 2): weighted-norm theory does not "
                "apply" % self.alpha, stacklevel=2)


def weight_rho(x, cfg):
    """Evaluate the weight at points ``x`` ((n, d) or (d,)).

    Single center: |x - t|^alpha everywhere.  Several centers: |x - t|^alpha
    inside the ball of radius d_sep/2 around the nearest center, 1 outside
    all such balls (the weight is discontinuous across the interface unless
    (d_sep/2)^alpha = 1).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    dist = np.linalg.norm(x[:, None, :] - cfg.centers[None, :, :], axis=2)
    if len(cfg.centers) == 1:
        out = dist[:, 0] ** cfg.alpha
    else:
        nearest = dist.min(axis=1)
        out = np.where(nearest < 0.5 * cfg.d_sep, nearest ** cfg.alpha, 1.0)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# norms

class FieldErrors:
    """Error integrator for one (space, rule) pair.

    Evaluates discrete fields and exact callbacks at every quadrature point
    (in cell blocks, to bound memory) and accumulates the requested norms
    in a deterministic order.
    """

    def __init__(self, space, rule):
        self.space = space
        self.rule = rule
        mesh = space.mesh
        self.v_vals, self.v_ref_grads = space.tabulate_velocity(
            rule.reference_points)
        self.p_vals, _ = space.tabulate_pressure(rule.reference_points)
        self.wdet = rule.weights[None, :] * mesh.jacobian_dets[:, None]
        self.points = quad.physical_points(mesh, rule)

    def _blocks(self):
        nc = self.space.mesh.num_cells
        for start in range(0, nc, CELL_BLOCK):
            yield start, min(start + CELL_BLOCK, nc)

    def velocity_values(self, coeffs, sl):
        d = self.space.mesh.dim
        per_cell = coeffs.reshape(-1, d)[self.space.cell_scalar_dofs[sl]]
        return np.einsum("qn,cnd->cqd", self.v_vals, per_cell)

    def velocity_gradients(self, coeffs, sl):
        d = self.space.mesh.dim
        per_cell = coeffs.reshape(-1, d)[self.space.cell_scalar_dofs[sl]]
        ref = np.einsum("qnd,cni->cqid", self.v_ref_grads, per_cell)
        return np.einsum("cqid,cde->cqie", ref,
                         self.space.mesh.inverse_jacobians[sl])

    def pressure_values(self, coeffs, sl):
        per_cell = coeffs[self.space.cell_pressure_dofs[sl]]
        return np.einsum("qn,cn->cq", self.p_vals, per_cell)

    # -- norm kernels -------------------------------------------------------

    def l2_and_max(self, coeffs, exact, weight=None):
        """(L2 error, max point error) of a velocity field vs a callback."""
        acc = 0.0
        vmax = 0.0
        for a, b in self._blocks():
            sl = slice(a, b)
            pts = self.points[sl]
            vals = self.velocity_values(coeffs, sl)
            ex = np.asarray(exact(pts.reshape(-1, pts.shape[2])),
                            dtype=float).reshape(pts.shape)
            diff2 = ((vals - ex) ** 2).sum(axis=2)
            if weight is not None:
                w = weight(pts.reshape(-1, pts.shape[2])).reshape(
                    pts.shape[:2])
                acc += float((self.wdet[sl] * w * diff2).sum())
            else:
                acc += float((self.wdet[sl] * diff2).sum())
            vmax = max(vmax, float(np.sqrt(diff2.max(initial=0.0))))
        return np.sqrt(acc), vmax

    def h1_seminorm(self, coeffs, exact_grad, weight=None):
        """(weighted) L2 norm of the velocity gradient error."""
        acc = 0.0
        for a, b in self._blocks():
            sl = slice(a, b)
            pts = self.points[sl]
            grads = self.velocity_gradients(coeffs, sl)
            ex = np.asarray(exact_grad(pts.reshape(-1, pts.shape[2])),
                            dtype=float).reshape(grads.shape)
            diff2 = ((grads - ex) ** 2).sum(axis=(2, 3))
            if weight is not None:
                w = weight(pts.reshape(-1, pts.shape[2])).reshape(
                    pts.shape[:2])
                diff2 = w * diff2
            acc += float((self.wdet[sl] * diff2).sum())
        return np.sqrt(acc)

    def pressure_quotient(self, coeffs, exact):
        """L2/R quotient error: mean of the difference subtracted."""
        total = 0.0
        mean = 0.0
        diffs = []
        for a, b in self._blocks():
            sl = slice(a, b)
            pts = self.points[sl]
            vals = self.pressure_values(coeffs, sl)
            ex = np.asarray(exact(pts.reshape(-1, pts.shape[2])),
                            dtype=float).reshape(vals.shape)
            diff = ex - vals
            diffs.append(diff)
            mean += float((self.wdet[sl] * diff).sum())
        # domain volume is 1; subtract the mean and accumulate
        for (a, b), diff in zip(self._blocks(), diffs):
            total += float((self.wdet[a:b] * (diff - mean) ** 2).sum())
        return np.sqrt(total)

    def control_error(self, control, exact, lam=None):
        """L2 distance of a control to an exact callback.

        Accepts ControlField (cellwise constant), VariationalControl
        (values at this integrator's points) or a plain (nc, nq, d) array.
        """
        from .ocp import VariationalControl
        from .spaces import ControlField
        acc = 0.0
        for a, b in self._blocks():
            sl = slice(a, b)
            pts = self.points[sl]
            ex = np.asarray(exact(pts.reshape(-1, pts.shape[2])),
                            dtype=float).reshape(pts.shape)
            if isinstance(control, ControlField):
                vals = np.broadcast_to(control.values[sl, None, :],
                                       pts.shape)
            elif isinstance(control, VariationalControl):
                vals = control.values[sl]
            else:
                vals = np.asarray(control)[sl]
            diff2 = ((vals - ex) ** 2).sum(axis=2)
            acc += float((self.wdet[sl] * diff2).sum())
        return np.sqrt(acc)


NORM_NAMES = ("L2_vel", "Linf_vel", "L2_pressure", "H1_vel",
              "weightedH1_vel", "L2_adj", "Linf_adj", "L2_adj_pressure",
              "H1_adj", "weightedH1_adj")


def error_norms(space, approx, spec, rule, which):
    """Named error norms of a discrete quadruple against the exact fields.

    ``approx`` maps {"y", "p", "z", "r"} to FEFunctions (missing entries
    skip the norms that need them); ``which`` selects from NORM_NAMES.
    """
    unknown = set(which) - set(NORM_NAMES)
    if unknown:
        raise ValueError("unknown norms: %s" % sorted(unknown))
    integ = FieldErrors(space, rule)
    weight = None
    if any(w.startswith("weighted") for w in which):
        cfg = WeightConfig(centers=spec.points, alpha=spec.alpha)

        def weight(x):
            return weight_rho(x, cfg)

    out = {}
    if {"L2_vel", "Linf_vel"} & set(which) and "y" in approx:
        l2, linf = integ.l2_and_max(approx["y"].coeffs, spec.y_exact)
        if "L2_vel" in which:
            out["L2_vel"] = l2
        if "Linf_vel" in which:
            out["Linf_vel"] = linf
    if "L2_pressure" in which and "p" in approx:
        out["L2_pressure"] = integ.pressure_quotient(approx["p"].coeffs,
                                                     spec.p_exact)
    if "H1_vel" in which and "y" in approx:
        out["H1_vel"] = integ.h1_seminorm(approx["y"].coeffs, spec.y_grad)
    if "weightedH1_vel" in which and "y" in approx:
        out["weightedH1_vel"] = integ.h1_seminorm(approx["y"].coeffs,
                                                  spec.y_grad, weight)
    if {"L2_adj", "Linf_adj"} & set(which) and "z" in approx:
        l2, linf = integ.l2_and_max(approx["z"].coeffs, spec.z_exact)
        if "L2_adj" in which:
            out["L2_adj"] = l2
        if "Linf_adj" in which:
            out["Linf_adj"] = linf
    if "L2_adj_pressure" in which and "r" in approx:
        out["L2_adj_pressure"] = integ.pressure_quotient(approx["r"].coeffs,
                                                         spec.r_exact)
    if "H1_adj" in which and "z" in approx:
        out["H1_adj"] = integ.h1_seminorm(approx["z"].coeffs, spec.z_grad)
    if "weightedH1_adj" in which and "z" in approx:
        out["weightedH1_adj"] = integ.h1_seminorm(approx["z"].coeffs,
                                                  spec.z_grad, weight)
    return out


def control_error_l2(space, control, exact, rule):
    """L2 control error (cellwise-constant or variational control)."""
    return FieldErrors(space, rule).control_error(control, exact)


# ---------------------------------------------------------------------------
# reports

@dataclass
class ReportRow:
    level: int
    h: float
    ndof: int
    errors: dict


@dataclass
class ConvergenceReport:
    """Per-refinement errors with EOCs against Ndof and against h."""

    rows: list = field(default_factory=list)
    eoc_ndof: dict = field(default_factory=dict)
    eoc_h: dict = field(default_factory=dict)

    @property
    def error_names(self):
        names = []
        for row in self.rows:
            for k in row.errors:
                if k not in names:
                    names.append(k)
        return names

    def column(self, name):
        return np.array([row.errors.get(name, np.nan) for row in self.rows])

    def slope_ndof(self, name):
        """Least-squares slope of log(error) against log(1/Ndof)."""
        e = self.column(name)
        n = np.array([row.ndof for row in self.rows], dtype=float)
        good = np.isfinite(e) & (e > 0)
        if good.sum() < 2:
            raise DegenerateInput("need two positive errors for a slope")
        coef = np.polyfit(np.log(n[good]), np.log(e[good]), 1)
        return float(-coef[0])

    def slope_h(self, name):
        e = self.column(name)
        h = np.array([row.h for row in self.rows], dtype=float)
        good = np.isfinite(e) & (e > 0)
        if good.sum() < 2:
            raise DegenerateInput("need two positive errors for a slope")
        coef = np.polyfit(np.log(h[good]), np.log(e[good]), 1)
        return float(coef[0])

    def format_table(self, precision=12):
        names = self.error_names
        fmt = "%%.%dg" % precision
        header = ["level", "h", "ndof"] + names
        for name in names:
            header += ["eoc(%s)" % name]
        lines = ["\t".join(header)]
        for k, row in enumerate(self.rows):
            cells = [str(row.level), fmt % row.h, str(row.ndof)]
            cells += [fmt % row.errors[n] if n in row.errors else "nan"
                      for n in names]
            for name in names:
                rates = self.eoc_ndof.get(name, [])
                cells.append(fmt % rates[k - 1]
                             if 0 < k <= len(rates) else "-")
            lines.append("\t".join(cells))
        return "\n".join(lines)


def eoc(rows):
    """Build a :class:`ConvergenceReport` with pairwise log-ratio rates.

    ``rows`` are ReportRow (or (level, h, ndof, errors) tuples).  Raises
    :class:`DegenerateInput` when fewer than two rows are given or an error
    is zero/negative.
    """
    parsed = [row if isinstance(row, ReportRow) else ReportRow(*row)
              for row in rows]
    if len(parsed) < 2:
        raise DegenerateInput("need at least two rows for EOC")
    report = ConvergenceReport(rows=parsed)
    names = report.error_names
    for name in names:
        e = report.column(name)
        if np.any(~np.isfinite(e)) or np.any(e <= 0):
            raise DegenerateInput("errors for %r must be positive" % name)
        nd = np.array([r.ndof for r in parsed], dtype=float)
        if np.any(np.diff(nd) <= 0):
            raise DegenerateInput("Ndof must increase strictly")
        h = np.array([r.h for r in parsed], dtype=float)
        report.eoc_ndof[name] = list(
            np.log(e[:-1] / e[1:]) / np.log(nd[1:] / nd[:-1]))
        report.eoc_h[name] = list(
            np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))
    return report
