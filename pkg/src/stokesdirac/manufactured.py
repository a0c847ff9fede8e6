"""Closed-form solutions: Stokeslets and the three benchmark problems.

The singular fields are sums of Stokes fundamental solutions with unit force
(1,...,1) at each center,

    2D: K(r) = -(1/4 pi) (log|r| I - r r^T / |r|^2),  q(r) = -r/(2 pi |r|^2)
    3D: K(r) =  (1/8 pi) (I/|r| + r r^T / |r|^3),     q(r) = -r/(4 pi |r|^3)

so velocity = sum_t K(x - t) @ ones and pressure = sum_t q(x - t) . ones
solve the momentum equation with a unit point force at every center.  The
benchmark problems pair such a sum with polynomial/trigonometric fields:

* problem 1 (2D): tracking with four observation points; the adjoint pair is
  the Stokeslet sum, the state a squared-bubble curl.
* problem 2 (3D): tracking with one center observation point and a sin^2
  curl state.
* problem 3 (2D): point-source amplitude control; the *state* is the
  Stokeslet, the adjoint the squared-bubble curl, exact amplitude (1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import SingularPoint

#: evaluation closer than this to a center raises / is perturbed
SINGULAR_TOL = 1e-13
PERTURBATION = 1e-12


def _radii(r):
    d = np.linalg.norm(r, axis=-1)
    return d


def stokeslet_velocity(r):
    """Velocity kernel K(r); accepts (d,) or (n, d), returns (..., d, d)."""
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    d = r.shape[1]
    dist = _radii(r)
    if np.any(dist < SINGULAR_TOL):
        raise SingularPoint("Stokeslet evaluated at a source point")
    eye = np.eye(d)
    rr = r[:, :, None] * r[:, None, :]
    if d == 2:
        out = (-1.0 / (4.0 * np.pi)) * (
            np.log(dist)[:, None, None] * eye
            - rr / (dist ** 2)[:, None, None])
    else:
        out = (1.0 / (8.0 * np.pi)) * (
            eye / dist[:, None, None] + rr / (dist ** 3)[:, None, None])
    return out[0] if single else out


def stokeslet_pressure(r):
    """Pressure kernel q(r); accepts (d,) or (n, d), returns (..., d)."""
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    d = r.shape[1]
    dist = _radii(r)
    if np.any(dist < SINGULAR_TOL):
        raise SingularPoint("Stokeslet evaluated at a source point")
    if d == 2:
        out = -r / (2.0 * np.pi * (dist ** 2)[:, None])
    else:
        out = -r / (4.0 * np.pi * (dist ** 3)[:, None])
    return out[0] if single else out


def stokeslet_velocity_gradient(r):
    """Gradient tensor dK_ij/dr_k, shape (..., d, d, d) indexed [i, j, k]."""
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    n, d = r.shape
    dist = _radii(r)
    if np.any(dist < SINGULAR_TOL):
        raise SingularPoint("Stokeslet evaluated at a source point")
    eye = np.eye(d)
    ri = r[:, :, None, None]
    rj = r[:, None, :, None]
    rk = r[:, None, None, :]
    d_ij = eye[None, :, :, None]
    if d == 2:
        r2 = (dist ** 2)[:, None, None, None]
        r4 = (dist ** 4)[:, None, None, None]
        term1 = d_ij * rk / r2
        term2 = (eye[None, :, None, :] * rj + eye[None, None, :, :] * ri) / r2
        term3 = 2.0 * ri * rj * rk / r4
        out = (-1.0 / (4.0 * np.pi)) * (term1 - term2 + term3)
    else:
        r3 = (dist ** 3)[:, None, None, None]
        r5 = (dist ** 5)[:, None, None, None]
        term1 = -d_ij * rk / r3
        term2 = (eye[None, :, None, :] * rj + eye[None, None, :, :] * ri) / r3
        term3 = -3.0 * ri * rj * rk / r5
        out = (1.0 / (8.0 * np.pi)) * (term1 + term2 + term3)
    return out[0] if single else out


class StokesletSum:
    """Velocity/pressure fields of unit point forces at several centers."""

    def __init__(self, centers):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.dim = self.centers.shape[1]

    def _relative(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rel = x[:, None, :] - self.centers[None, :, :]     # (n, l, d)
        dist = np.linalg.norm(rel, axis=2)
        hit = dist < SINGULAR_TOL
        if np.any(hit):
            # quadrature points never coincide with centers on the
            # structured meshes; nudge if a caller ever lands exactly on one
            rel = rel + hit[:, :, None] * PERTURBATION
        return rel

    def velocity(self, x):
        """Sum_t K(x - t) @ ones, shape (n, d)."""
        rel = self._relative(x)
        n, l, d = rel.shape
        K = stokeslet_velocity(rel.reshape(-1, d)).reshape(n, l, d, d)
        return K.sum(axis=1) @ np.ones(d)

    def pressure(self, x):
        """Sum_t q(x - t) . ones, shape (n,)."""
        rel = self._relative(x)
        n, l, d = rel.shape
        q = stokeslet_pressure(rel.reshape(-1, d)).reshape(n, l, d)
        return q.sum(axis=(1, 2))

    def velocity_gradient(self, x):
        """Gradient of the summed velocity, shape (n, d, d), [i, k]."""
        rel = self._relative(x)
        n, l, d = rel.shape
        G = stokeslet_velocity_gradient(rel.reshape(-1, d))
        return G.reshape(n, l, d, d, d).sum(axis=(1, 3))


# ---------------------------------------------------------------------------
# polynomial / trigonometric fields

def _bubble2d(x):
    """g(x1) g(x2) with g(s) = s (1 - s), plus derivatives up to third."""
    s = np.asarray(x, dtype=float)
    g = s * (1.0 - s)
    g1 = 1.0 - 2.0 * s
    return g, g1


def _gpoly(s):
    """G(s) = (s - s^2)^2 and its first three derivatives."""
    G = (s - s ** 2) ** 2
    G1 = 2.0 * s - 6.0 * s ** 2 + 4.0 * s ** 3
    G2 = 2.0 - 12.0 * s + 12.0 * s ** 2
    G3 = -12.0 + 24.0 * s
    return G, G1, G2, G3


def curl2d_squared_bubble(scale):
    """Fields of scale * curl[(x1 x2 (1-x1)(1-x2))^2].

    Returns callbacks (value, gradient, laplacian); value shape (n, 2).
    """

    def value(x):
        x = np.atleast_2d(x)
        G1, G1p, _, _ = _gpoly(x[:, 0])
        G2, G2p, _, _ = _gpoly(x[:, 1])
        return scale * np.stack([G1 * G2p, -G1p * G2], axis=1)

    def gradient(x):
        x = np.atleast_2d(x)
        G1, G1p, G1pp, _ = _gpoly(x[:, 0])
        G2, G2p, G2pp, _ = _gpoly(x[:, 1])
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = G1p * G2p
        out[:, 0, 1] = G1 * G2pp
        out[:, 1, 0] = -G1pp * G2
        out[:, 1, 1] = -G1p * G2p
        return scale * out

    def laplacian(x):
        x = np.atleast_2d(x)
        G1, G1p, G1pp, G1ppp = _gpoly(x[:, 0])
        G2, G2p, G2pp, G2ppp = _gpoly(x[:, 1])
        return scale * np.stack([G1pp * G2p + G1 * G2ppp,
                                 -(G1ppp * G2 + G1p * G2pp)], axis=1)

    return value, gradient, laplacian


def _sin2(u):
    """S(u) = sin^2(2 pi u) and derivatives up to third order."""
    S = np.sin(2.0 * np.pi * u) ** 2
    S1 = 2.0 * np.pi * np.sin(4.0 * np.pi * u)
    S2 = 8.0 * np.pi ** 2 * np.cos(4.0 * np.pi * u)
    S3 = -32.0 * np.pi ** 3 * np.sin(4.0 * np.pi * u)
    return S, S1, S2, S3


def curl3d_sin2(scale):
    """Fields of scale * curl[(sin(2pi x1) sin(2pi x2) sin(2pi x3))^2 e1]."""

    def parts(x):
        x = np.atleast_2d(x)
        return [_sin2(x[:, i]) for i in range(3)]

    def value(x):
        (S1, _, _, _), (S2, S2p, _, _), (S3, S3p, _, _) = parts(x)
        zero = np.zeros_like(S1)
        return scale * np.stack([zero, S1 * S2 * S3p, -S1 * S2p * S3],
                                axis=1)

    def gradient(x):
        (S1, S1p, _, _), (S2, S2p, S2pp, _), (S3, S3p, S3pp, _) = parts(x)
        n = len(S1)
        out = np.zeros((n, 3, 3))
        out[:, 1, 0] = S1p * S2 * S3p
        out[:, 1, 1] = S1 * S2p * S3p
        out[:, 1, 2] = S1 * S2 * S3pp
        out[:, 2, 0] = -S1p * S2p * S3
        out[:, 2, 1] = -S1 * S2pp * S3
        out[:, 2, 2] = -S1 * S2p * S3p
        return scale * out

    def laplacian(x):
        ((S1, S1p, S1pp, S1ppp),
         (S2, S2p, S2pp, S2ppp),
         (S3, S3p, S3pp, S3ppp)) = parts(x)
        zero = np.zeros_like(S1)
        comp2 = S1pp * S2 * S3p + S1 * S2pp * S3p + S1 * S2 * S3ppp
        comp3 = -(S1pp * S2p * S3 + S1 * S2ppp * S3 + S1 * S2p * S3pp)
        return scale * np.stack([zero, comp2, comp3], axis=1)

    return value, gradient, laplacian


def poly_pressure_2d():
    """p(x) = x1 x2 (1-x1)(1-x2) - 1/36 (zero mean) and its gradient."""

    def value(x):
        x = np.atleast_2d(x)
        g1, _ = _bubble2d(x[:, 0])
        g2, _ = _bubble2d(x[:, 1])
        return g1 * g2 - 1.0 / 36.0

    def gradient(x):
        x = np.atleast_2d(x)
        g1, g1p = _bubble2d(x[:, 0])
        g2, g2p = _bubble2d(x[:, 1])
        return np.stack([g1p * g2, g1 * g2p], axis=1)

    return value, gradient


def poly_pressure_3d():
    """p(x) = x1 x2 x3 - 1/8 (zero mean) and its gradient."""

    def value(x):
        x = np.atleast_2d(x)
        return x[:, 0] * x[:, 1] * x[:, 2] - 0.125

    def gradient(x):
        x = np.atleast_2d(x)
        return np.stack([x[:, 1] * x[:, 2], x[:, 0] * x[:, 2],
                         x[:, 0] * x[:, 1]], axis=1)

    return value, gradient


def project_interval(v, lower, upper):
    """Componentwise clamp min(b, max(v, a)) for arrays."""
    return np.minimum(upper, np.maximum(v, lower))


@dataclass
class ExampleSpec:
    """One benchmark problem instance with all exact fields as callbacks.

    Velocity-valued callbacks map (n, d) -> (n, d); their gradients map to
    (n, d, d) with index [component, derivative]; pressures map to (n,).
    """

    id: int
    dim: int
    problem: str                     # "tracking" or "point_source"
    alpha: float
    lam: float
    points: np.ndarray               # observation / source points
    box_lower: np.ndarray
    box_upper: np.ndarray
    y_exact: Callable = None
    y_grad: Callable = None
    p_exact: Callable = None
    z_exact: Callable = None
    z_grad: Callable = None
    r_exact: Callable = None
    u_exact: Callable = None         # tracking: exact control field
    exact_amplitudes: Optional[np.ndarray] = None    # point_source
    targets: Optional[np.ndarray] = None             # tracking: y_t rows
    forcing: Callable = None         # tracking: extra momentum forcing f
    y_omega: Callable = None         # point_source: desired state
    state_bc: Callable = None        # exact velocity trace for the state
    adjoint_bc: Callable = None      # exact velocity trace for the adjoint

    def control_box(self):
        return self.box_lower.copy(), self.box_upper.copy()


def example_spec(example_id, lam=1.0, alpha=None, box=None, points=None):
    """Build the spec of benchmark problem 1, 2 or 3.

    Keyword overrides replace the published constants (used by the CLI).
    """
    if example_id == 1:
        return _example1(lam, alpha, box, points)
    if example_id == 2:
        return _example2(lam, alpha, box, points)
    if example_id == 3:
        return _example3(lam, alpha, box, points)
    raise ValueError("example id must be 1, 2 or 3")


def _tracking_spec(example_id, dim, alpha, lam, pts, lower, upper,
                   y_val, y_grad, y_lap, p_val, p_grad):
    stokeslet = StokesletSum(pts)

    def u_exact(x):
        return project_interval(-stokeslet.velocity(x) / lam, lower, upper)

    def forcing(x):
        return -y_lap(x) + p_grad(x) - u_exact(x)

    targets = y_val(pts) - np.ones(dim)

    def r_exact(x):
        # adjoint pressure of the paper's sign convention (see solver docs)
        return -stokeslet.pressure(x)

    return ExampleSpec(
        id=example_id, dim=dim, problem="tracking", alpha=alpha, lam=lam,
        points=pts, box_lower=lower, box_upper=upper,
        y_exact=y_val, y_grad=y_grad, p_exact=p_val,
        z_exact=stokeslet.velocity, z_grad=stokeslet.velocity_gradient,
        r_exact=r_exact, u_exact=u_exact, targets=targets, forcing=forcing,
        state_bc=y_val, adjoint_bc=stokeslet.velocity)


def _example1(lam, alpha, box, points):
    pts = np.array([[0.25, 0.25], [0.25, 0.75],
                    [0.75, 0.25], [0.75, 0.75]]) \
        if points is None else np.atleast_2d(points)
    lower = np.array([-5.0, -5.0]) if box is None else np.asarray(box[0])
    upper = np.array([5.0, 5.0]) if box is None else np.asarray(box[1])
    alpha = 1.5 if alpha is None else alpha
    y_val, y_grad, y_lap = curl2d_squared_bubble(0.5)
    p_val, p_grad = poly_pressure_2d()
    return _tracking_spec(1, 2, alpha, lam, pts, lower, upper,
                          y_val, y_grad, y_lap, p_val, p_grad)


def _example2(lam, alpha, box, points):
    pts = np.array([[0.5, 0.5, 0.5]]) if points is None \
        else np.atleast_2d(points)
    lower = np.array([-10.0, -10.0, -10.0]) if box is None \
        else np.asarray(box[0])
    upper = np.array([2.0, 2.0, 2.0]) if box is None else np.asarray(box[1])
    alpha = 1.99 if alpha is None else alpha
    y_val, y_grad, y_lap = curl3d_sin2(-1.0 / np.pi)
    p_val, p_grad = poly_pressure_3d()
    return _tracking_spec(2, 3, alpha, lam, pts, lower, upper,
                          y_val, y_grad, y_lap, p_val, p_grad)


def _example3(lam, alpha, box, points):
    pts = np.array([[0.75, 0.25]]) if points is None \
        else np.atleast_2d(points)
    lower = np.array([0.0, 0.0]) if box is None else np.asarray(box[0])
    upper = np.array([2.0, 2.0]) if box is None else np.asarray(box[1])
    alpha = 1.99 if alpha is None else alpha

    z_val, z_grad, z_lap = curl2d_squared_bubble(-4096.0 / 27.0)
    r_val, r_grad = poly_pressure_2d()
    stokeslet = StokesletSum(pts)

    amplitudes = project_interval(-z_val(pts) / lam, lower, upper)

    def y_omega(x):
        # from -Lap(z) - grad(r) = y - y_omega
        return stokeslet.velocity(x) + z_lap(x) + r_grad(x)

    return ExampleSpec(
        id=3, dim=2, problem="point_source", alpha=alpha, lam=lam,
        points=pts, box_lower=lower, box_upper=upper,
        y_exact=stokeslet.velocity, y_grad=stokeslet.velocity_gradient,
        p_exact=stokeslet.pressure,
        z_exact=z_val, z_grad=z_grad, r_exact=r_val,
        exact_amplitudes=amplitudes, y_omega=y_omega,
        state_bc=stokeslet.velocity, adjoint_bc=z_val)
