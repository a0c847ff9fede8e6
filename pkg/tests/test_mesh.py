"""Mesh construction, refinement and point location."""

import itertools
from math import factorial

import numpy as np
import pytest

from stokesdirac import build_unit_mesh, refine_uniform
from stokesdirac.exceptions import NotFound
from stokesdirac.mesh import dump_mesh, locate_point, locate_points


def brute_force_volume(mesh):
    total = 0.0
    for cell in mesh.cells:
        v = mesh.vertices[cell]
        total += abs(np.linalg.det((v[1:] - v[0]).T)) / factorial(mesh.dim)
    return total


def test_level0_square_area():
    mesh = build_unit_mesh(2, 0)
    assert mesh.num_cells == 4
    assert abs(mesh.cell_volumes.sum() - 1.0) < 1e-12


def test_level0_cube_six_tets_volume():
    # oracle: brute-force sum over the Kuhn subdivision
    mesh = build_unit_mesh(3, 0)
    assert mesh.num_cells == 6
    assert abs(brute_force_volume(mesh) - 1.0) < 1e-12
    assert abs(mesh.cell_volumes.sum() - 1.0) < 1e-12


def test_refinement_counts():
    assert build_unit_mesh(2, 1).num_cells == 4 * 4
    mesh3 = refine_uniform(build_unit_mesh(3, 0))
    assert mesh3.num_cells == 48


def test_rejects_bad_dim():
    with pytest.raises(ValueError):
        build_unit_mesh(4, 0)
    with pytest.raises(ValueError):
        build_unit_mesh(2, -1)


@pytest.mark.parametrize("dim,levels", [(2, 4), (3, 3)])
def test_volume_conservation_across_levels(dim, levels):
    mesh = build_unit_mesh(dim, 0)
    for _ in range(levels):
        assert abs(mesh.cell_volumes.sum() - 1.0) < 1e-12
        mesh = refine_uniform(mesh)
    assert abs(mesh.cell_volumes.sum() - 1.0) < 1e-12


def test_h_laws():
    h0 = build_unit_mesh(2, 0).h_max
    for level in range(1, 5):
        mesh = build_unit_mesh(2, level)
        assert mesh.h_max == pytest.approx(h0 * 0.5 ** level, rel=1e-14)
        assert mesh.h_max / mesh.h_min <= 4.0
    h0 = build_unit_mesh(3, 0).h_max
    for level in range(1, 4):
        mesh = build_unit_mesh(3, level)
        assert mesh.h_max <= 2.0 * h0 * 0.5 ** level + 1e-14
        assert mesh.h_max / mesh.h_min <= 4.0


@pytest.mark.parametrize("dim,level", [(2, 2), (3, 1)])
def test_conformity_witness(dim, level):
    # every facet belongs to one or two cells; boundary facet count matches
    # the structured pattern; vertices are unique
    mesh = build_unit_mesh(dim, level)
    subsets = list(itertools.combinations(range(dim + 1), dim))
    facets = np.sort(mesh.cells[:, subsets].reshape(-1, dim), axis=1)
    _, counts = np.unique(facets, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    assert len(np.unique(np.round(mesh.vertices, 12), axis=0)) \
        == mesh.num_vertices
    expected_boundary = 4 * 2 ** level if dim == 2 \
        else 6 * 2 * 4 ** level
    assert len(mesh.boundary_facets) == expected_boundary


def test_refinement_preserves_boundary_vertices():
    mesh = build_unit_mesh(2, 1)
    fine = refine_uniform(mesh)
    old_flags = mesh.boundary_vertex_flags
    assert np.array_equal(fine.boundary_vertex_flags[:mesh.num_vertices],
                          old_flags)


@pytest.mark.parametrize("dim", [2, 3])
def test_locate_barycenter(dim):
    mesh = build_unit_mesh(dim, 1)
    for c in range(0, mesh.num_cells, 3):
        center = mesh.vertices[mesh.cells[c]].mean(axis=0)
        cell, bary = locate_point(mesh, center)
        assert cell == c or np.allclose(
            mesh.vertices[mesh.cells[cell]].mean(axis=0), center)
        assert np.allclose(bary, 1.0 / (dim + 1), atol=1e-12)


def test_locate_by_exhaustive_oracle():
    # oracle: independent brute-force scan solving each cell's barycentric
    # system directly
    mesh = build_unit_mesh(2, 2)
    x = np.array([0.25, 0.25])
    hits = []
    for c, cell in enumerate(mesh.cells):
        v = mesh.vertices[cell]
        mat = np.vstack([v.T, np.ones(3)])
        lam = np.linalg.solve(mat, np.array([x[0], x[1], 1.0]))
        if lam.min() >= -1e-12:
            hits.append(c)
    cell, bary = locate_point(mesh, x)
    assert cell == min(hits)
    assert abs(bary.sum() - 1.0) < 1e-12
    assert bary.min() >= -1e-12
    rebuilt = bary @ mesh.vertices[mesh.cells[cell]]
    assert np.allclose(rebuilt, x, atol=1e-13)


def test_locate_vertex_tie_break():
    mesh = build_unit_mesh(2, 1)
    # the center vertex belongs to several cells: lowest index wins
    center = np.array([0.5, 0.5])
    incident = [c for c, cell in enumerate(mesh.cells)
                if any(np.allclose(mesh.vertices[v], center)
                       for v in cell)]
    cell, bary = locate_point(mesh, center)
    assert cell == min(incident)
    assert bary.max() == pytest.approx(1.0, abs=1e-12)


def test_locate_all_vertices():
    mesh = build_unit_mesh(2, 2)
    cells, bary = locate_points(mesh, mesh.vertices)
    assert (bary.max(axis=1) >= 1.0 - 1e-12).all()


def test_locate_outside_raises():
    mesh = build_unit_mesh(2, 1)
    with pytest.raises(NotFound):
        locate_point(mesh, np.array([1.5, 0.5]))


def test_mesh_dump(tmp_path):
    mesh = build_unit_mesh(2, 0)
    path = tmp_path / "mesh.txt"
    with open(path, "w") as f:
        dump_mesh(mesh, f)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "vertices 5"
    assert lines[6] == "cells 4"
    assert len(lines) == 11
