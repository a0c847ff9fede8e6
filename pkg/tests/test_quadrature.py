"""Quadrature exactness and mesh integration."""

from math import factorial

import numpy as np
import pytest

from stokesdirac import build_unit_mesh
from stokesdirac.exceptions import Unsupported
from stokesdirac.quadrature import integrate, rule_simplex


def monomial_integral_2d(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def monomial_integral_3d(a, b, c):
    return (factorial(a) * factorial(b) * factorial(c)
            / factorial(a + b + c + 3))


def test_weights_sum_to_reference_volume():
    for dim, ref in ((2, 0.5), (3, 1.0 / 6.0)):
        for degree in (1, 4, 8):
            rule = rule_simplex(dim, degree)
            assert abs(rule.weights.sum() - ref) < 1e-14
            assert np.all(np.isfinite(rule.weights))


def test_constant_on_reference_triangle():
    rule = rule_simplex(2, 3)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)


def test_x1_power_19():
    # closed form a! b! / (a+b+2)! with a=19, b=0 gives 1/420
    rule = rule_simplex(2, 19)
    val = (rule.reference_points[:, 0] ** 19) @ rule.weights
    assert val == pytest.approx(1.0 / 420.0, rel=1e-12)


def test_3d_mixed_monomial():
    rule = rule_simplex(3, 14)
    x = rule.reference_points
    val = (x[:, 0] ** 5 * x[:, 1] ** 4 * x[:, 2] ** 3) @ rule.weights
    assert val == pytest.approx(monomial_integral_3d(5, 4, 3), rel=1e-12)


def test_monomial_sweep_2d():
    rule = rule_simplex(2, 19)
    x = rule.reference_points
    for a in range(20):
        for b in range(20 - a):
            val = (x[:, 0] ** a * x[:, 1] ** b) @ rule.weights
            assert val == pytest.approx(monomial_integral_2d(a, b),
                                        rel=1e-12)


def test_monomial_sweep_3d():
    rule = rule_simplex(3, 14)
    x = rule.reference_points
    for a in range(15):
        for b in range(15 - a):
            for c in range(15 - a - b):
                val = (x[:, 0] ** a * x[:, 1] ** b * x[:, 2] ** c) \
                    @ rule.weights
                assert val == pytest.approx(
                    monomial_integral_3d(a, b, c), rel=1e-12)


def test_degree_caps():
    with pytest.raises(Unsupported):
        rule_simplex(2, 20)
    with pytest.raises(Unsupported):
        rule_simplex(3, 15)


def test_points_inside_simplex():
    for dim in (2, 3):
        rule = rule_simplex(dim, 10 if dim == 2 else 9)
        assert rule.points.min() > 0
        assert rule.points.max() < 1


def test_integrate_one():
    for dim in (2, 3):
        mesh = build_unit_mesh(dim, 1)
        rule = rule_simplex(dim, 2)
        assert integrate(mesh, rule, lambda x: np.ones(len(x))) \
            == pytest.approx(1.0, abs=1e-13)


def test_integrate_example1_pressure_bubble():
    # int x1 x2 (1-x1)(1-x2) = 1/36, the pressure offset of the first
    # tracking benchmark
    mesh = build_unit_mesh(2, 2)
    rule = rule_simplex(2, 6)
    val = integrate(mesh, rule,
                    lambda x: x[:, 0] * x[:, 1] * (1 - x[:, 0])
                    * (1 - x[:, 1]))
    assert val == pytest.approx(1.0 / 36.0, rel=1e-13)


def test_integrate_example2_pressure_offset():
    mesh = build_unit_mesh(3, 1)
    rule = rule_simplex(3, 4)
    val = integrate(mesh, rule, lambda x: x[:, 0] * x[:, 1] * x[:, 2])
    assert val == pytest.approx(0.125, rel=1e-13)


def test_integrate_linear_and_additive():
    mesh = build_unit_mesh(2, 2)
    rule = rule_simplex(2, 8)
    rng = np.random.default_rng(7)
    coef = rng.standard_normal(3)

    def f(x):
        return np.sin(x[:, 0]) * x[:, 1]

    def g(x):
        return np.cos(3 * x[:, 0]) + x[:, 1] ** 2

    lhs = integrate(mesh, rule,
                    lambda x: coef[0] * f(x) + coef[1] * g(x))
    rhs = coef[0] * integrate(mesh, rule, f) \
        + coef[1] * integrate(mesh, rule, g)
    assert lhs == pytest.approx(rhs, abs=1e-13)

    # additivity over a random disjoint cell split
    split = rng.random(mesh.num_cells) < 0.5
    pts_rule = rule

    def masked(mask):
        import stokesdirac.quadrature as q
        pts = q.physical_points(mesh, pts_rule)
        vals = f(pts.reshape(-1, 2)).reshape(mesh.num_cells, -1)
        per_cell = vals @ pts_rule.weights * mesh.jacobian_dets
        return per_cell[mask].sum()

    assert masked(split) + masked(~split) \
        == pytest.approx(integrate(mesh, rule, f), abs=1e-13)
