"""Convergence-study driver and command-line interface.

``run_study`` executes one benchmark problem over a range of refinement
levels and gathers errors, Ndofs and EOCs in a ConvergenceReport; ``run``
additionally writes a CSV, a plain-text table and one two-column log-log
file per error.  The console entry point is::

    stokesdirac run --example {1|2|3} --scheme {fd|vd} --levels MIN:MAX
                    --family {th|mini} --out DIR [--lambda V] [--alpha V]

Output precision is controlled by the STOKESDIRAC_PRECISION environment
variable (significant digits, default 12).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis, ocp
from .analysis import ConvergenceReport, ReportRow, control_error_l2, \
    error_norms
from .exceptions import ConfigError
from .manufactured import example_spec
from .mesh import build_unit_mesh
from .quadrature import rule_simplex
from .spaces import MINI, TAYLOR_HOOD, build_space
from .stokes import LOAD_RULE_DEGREE

MAX_LEVEL = {2: 8, 3: 4}
FAMILIES = {"th": TAYLOR_HOOD, "mini": MINI}

#: norms reported per example (problem 1 tracks the state in max norm, the
#: adjoint in L2; problem 3 tracks the state in L2 and the adjoint in H1)
DEFAULT_NORMS = {
    1: ("L2_adj", "Linf_vel", "L2_pressure", "weightedH1_adj"),
    2: ("L2_adj", "Linf_vel", "L2_pressure", "weightedH1_adj"),
    3: ("L2_vel", "H1_adj", "L2_adj_pressure"),
}


@dataclass
class ExperimentConfig:
    """Validated configuration of one convergence study."""

    example: int = 1
    scheme: str = "fd"               # fd | vd (tracking only)
    family: str = "th"
    level_min: int = 2
    level_max: int = 5
    tol: float = 1e-10
    max_iter: int = 50
    out_dir: Optional[str] = None
    norms: Optional[tuple] = None
    lam: float = 1.0
    alpha: Optional[float] = None
    box: Optional[tuple] = None      # (lower, upper) override
    points: Optional[list] = None

    def validate(self):
        if self.example not in (1, 2, 3):
            raise ConfigError("example must be 1, 2 or 3")
        if self.scheme not in ("fd", "vd"):
            raise ConfigError("scheme must be 'fd' or 'vd'")
        if self.example == 3 and self.scheme == "vd":
            raise ConfigError("example 3 has no variational scheme")
        if self.family not in FAMILIES:
            raise ConfigError("family must be 'th' or 'mini'")
        dim = 3 if self.example == 2 else 2
        if not (0 <= self.level_min <= self.level_max <= MAX_LEVEL[dim]):
            raise ConfigError("levels must satisfy 0 <= min <= max <= %d"
                              % MAX_LEVEL[dim])
        if self.lam <= 0:
            raise ConfigError("lambda must be positive")
        if self.box is not None:
            lower = np.asarray(self.box[0], dtype=float)
            upper = np.asarray(self.box[1], dtype=float)
            if not np.all(lower < upper):
                raise ConfigError("box override requires lower < upper")
        if self.points is not None:
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            if pts.shape[1] != dim:
                raise ConfigError("points have wrong dimension")
            if np.minimum(pts, 1 - pts).min() <= 1e-10:
                raise ConfigError("points must be interior")
        return self

    def build_spec(self):
        return example_spec(self.example, lam=self.lam, alpha=self.alpha,
                            box=self.box, points=self.points)


@dataclass
class LevelResult:
    level: int
    h: float
    ndof: int
    errors: dict
    solution: object = None


@dataclass
class StudyResult:
    config: ExperimentConfig
    report: ConvergenceReport
    levels: list = field(default_factory=list)


def ndof_total(space, control_dim):
    """2 dim(V_h) + 2 dim(Q_h) + control dimension."""
    return 2 * space.n_velocity_dofs + 2 * space.n_pressure_dofs \
        + control_dim


def solve_level(config, spec, level, keep_solution=False):
    """Mesh, solve and measure one refinement level."""
    dim = spec.dim
    mesh = build_unit_mesh(dim, level)
    space = build_space(mesh, FAMILIES[config.family])
    rule = rule_simplex(dim, LOAD_RULE_DEGREE[dim])

    if spec.problem == "tracking":
        ws = ocp.TrackingWorkspace(space, spec)
        if config.scheme == "fd":
            solution = ocp.solve_tracking_fully_discrete(
                space, spec, tol=config.tol, max_iter=config.max_iter,
                workspace=ws)
            control_dim = mesh.num_cells * dim
        else:
            solution = ocp.solve_tracking_variational(
                space, spec, tol=config.tol, max_iter=config.max_iter,
                workspace=ws)
            control_dim = mesh.num_cells * dim
        errors = error_norms(space,
                             {"y": solution.y, "p": solution.p,
                              "z": solution.z, "r": solution.r},
                             spec, rule, config.norms)
        errors["L2_control"] = control_error_l2(space, solution.control,
                                                spec.u_exact, rule)
    else:
        solution = ocp.solve_point_source_ocp(
            space, spec, tol=config.tol, max_iter=config.max_iter)
        control_dim = 2 * len(spec.points)
        errors = error_norms(space,
                             {"y": solution.y, "p": solution.p,
                              "z": solution.z, "r": solution.r},
                             spec, rule, config.norms)
        errors["amplitude"] = ocp.amplitude_error(
            spec.exact_amplitudes, solution.control)
    return LevelResult(level=level, h=mesh.h_max,
                       ndof=ndof_total(space, control_dim), errors=errors,
                       solution=solution if keep_solution else None)


def run_study(config, keep_solutions=False):
    """Run all levels of a study and assemble the convergence report."""
    config.validate()
    if config.norms is None:
        config.norms = DEFAULT_NORMS[config.example]
    spec = config.build_spec()
    levels = []
    for level in range(config.level_min, config.level_max + 1):
        levels.append(solve_level(config, spec, level,
                                  keep_solution=keep_solutions))
    report = analysis.eoc([ReportRow(r.level, r.h, r.ndof, r.errors)
                           for r in levels])
    return StudyResult(config=config, report=report, levels=levels)


def _precision():
    try:
        return max(1, int(os.environ.get("STOKESDIRAC_PRECISION", "12")))
    except ValueError:
        return 12


def write_outputs(result, out_dir):
    """CSV + text table + per-error two-column log-log companion files."""
    os.makedirs(out_dir, exist_ok=True)
    report = result.report
    cfg = result.config
    prec = _precision()
    fmt = "%%.%dg" % prec
    stem = "example%d_%s_%s" % (cfg.example, cfg.scheme, cfg.family)
    names = report.error_names

    csv_path = os.path.join(out_dir, stem + ".csv")
    with open(csv_path, "w") as f:
        header = ["level", "h", "ndof"] + names \
            + ["eoc_%s" % n for n in names]
        f.write(",".join(header) + "\n")
        for k, row in enumerate(report.rows):
            cells = [str(row.level), fmt % row.h, str(row.ndof)]
            cells += [fmt % row.errors[n] for n in names]
            for n in names:
                rates = report.eoc_ndof[n]
                cells.append(fmt % rates[k - 1] if k > 0 else "")
            f.write(",".join(cells) + "\n")

    table_path = os.path.join(out_dir, stem + ".txt")
    with open(table_path, "w") as f:
        f.write(report.format_table(precision=prec) + "\n")

    files = [csv_path, table_path]
    for n in names:
        path = os.path.join(out_dir, "%s_%s.dat" % (stem, n))
        with open(path, "w") as f:
            for row in report.rows:
                f.write((fmt + " " + fmt + "\n")
                        % (row.ndof, row.errors[n]))
        files.append(path)
    return files


def run(config):
    """Run a study and, if configured, write its output files."""
    result = run_study(config)
    if config.out_dir:
        write_outputs(result, config.out_dir)
    return result


def _parse_levels(text):
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise ConfigError("levels must be MIN:MAX") from None


def make_parser():
    parser = argparse.ArgumentParser(
        prog="stokesdirac",
        description="Convergence studies for Stokes optimal control "
                    "with point data")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one convergence study")
    runp.add_argument("--example", type=int, required=True,
                      choices=(1, 2, 3))
    runp.add_argument("--scheme", default="fd", choices=("fd", "vd"))
    runp.add_argument("--levels", default="2:5", metavar="MIN:MAX")
    runp.add_argument("--family", default="th", choices=("th", "mini"))
    runp.add_argument("--out", default=None, metavar="DIR")
    runp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    runp.add_argument("--alpha", type=float, default=None)
    runp.add_argument("--tol", type=float, default=1e-10)
    runp.add_argument("--config", default=None,
                      help="JSON file with ExperimentConfig fields "
                           "(flags override)")
    return parser


def config_from_args(args):
    base = {}
    if args.config:
        with open(args.config) as f:
            base = json.load(f)
    level_min, level_max = _parse_levels(args.levels)
    merged = dict(base)
    merged.update(dict(example=args.example, scheme=args.scheme,
                       family=args.family, level_min=level_min,
                       level_max=level_max, out_dir=args.out, lam=args.lam,
                       alpha=args.alpha, tol=args.tol))
    if "box" in merged and merged["box"] is not None:
        merged["box"] = (np.asarray(merged["box"][0], dtype=float),
                         np.asarray(merged["box"][1], dtype=float))
    return ExperimentConfig(**merged)


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        config = config_from_args(args).validate()
        result = run(config)
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 2
    except Exception as exc:                      # surfaced with context
        print("study failed: %s" % exc, file=sys.stderr)
        return 1
    print(result.report.format_table(precision=_precision()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
