"""Scott-Vogelius pair: continuous P2 vector velocity, discontinuous P1 pressure.

Velocity dofs are nodal at vertices and edge midpoints. Scalar node ``k`` is
vertex ``k`` for ``k < n_vertices`` and edge ``k - n_vertices`` otherwise; the
vector dof of component ``c`` at node ``k`` is ``c * n_nodes + k`` (all x
components first, then all y components). Pressure dof ``3 * E + j`` is the
value of the pressure at local vertex ``j`` of element ``E``.

Local P2 ordering on an element: the three vertices, then the midpoints of the
edges opposite vertices 0, 1, 2.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .quadrature import triangle_rule


def p2_values(bary):
    """P2 shape values at barycentric points (nq, 3) -> (nq, 6)."""
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    return np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1])


def p2_gradients(bary, grad_lambda):
    """Physical gradients of P2 shape functions.

    ``grad_lambda`` (ne, 3, 2) holds the constant barycentric gradients and
    ``bary`` is (nq, 3) or per element (ne, nq, 3); returns (ne, nq, 6, 2).
    """
    L = (bary[None] if bary.ndim == 2 else bary)[..., None]
    G = grad_lambda[:, None, :, :]
    out = np.empty((grad_lambda.shape[0], bary.shape[-2], 6, 2))
    out[:, :, 0:3] = (4 * L - 1) * G
    for k, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
        out[:, :, 3 + k] = 4 * (L[:, :, a] * G[:, :, b] + L[:, :, b] * G[:, :, a])
    return out


def p2_hessians(grad_lambda):
    """Constant P2 Hessians per element, (ne, 6, 2, 2)."""
    G = grad_lambda
    out = np.empty((G.shape[0], 6, 2, 2))
    for k in range(3):
        out[:, k] = 4 * G[:, k, :, None] * G[:, k, None, :]
    for k, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
        out[:, 3 + k] = 4 * (G[:, a, :, None] * G[:, b, None, :] + G[:, b, :, None] * G[:, a, None, :])
    return out


def p2_third_derivatives(n_elements):
    """Third derivatives of P2 shape functions, identically zero, (ne, 6, 2, 2, 2)."""
    return np.zeros((n_elements, 6, 2, 2, 2))


@dataclass(frozen=True)
class BasisEval:
    """Shape functions of one element at one point, in physical coordinates."""

    values: np.ndarray  # (6,)
    gradients: np.ndarray  # (6, 2)
    hessians: np.ndarray  # (6, 2, 2)
    p1_values: np.ndarray  # (3,)
    p1_gradients: np.ndarray  # (3, 2)


@dataclass(frozen=True)
class Tabulation:
    """Basis data of every element at the points of one triangle rule."""

    rule: object
    points: np.ndarray  # (ne, nq, 2) physical
    weights: np.ndarray  # (ne, nq) quadrature weight times |det J|
    values: np.ndarray  # (nq, 6)
    gradients: np.ndarray  # (ne, nq, 6, 2)
    p1_values: np.ndarray  # (nq, 3)


class FeSystem:
    """Dof maps of the Scott-Vogelius pair on a fixed mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        nv = mesh.n_vertices
        self.n_nodes = nv + mesh.n_edges
        self.n_vel = 2 * self.n_nodes
        self.n_prs = 3 * mesh.n_triangles
        self.element_nodes = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        self.element_nodes.setflags(write=False)
        # (ne, 12): local vector dof c*6 + s
        self.element_dofs = np.hstack([self.element_nodes, self.element_nodes + self.n_nodes])
        self.element_dofs.setflags(write=False)
        self.node_coords = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])])
        self.node_coords.setflags(write=False)
        bnodes = np.concatenate([mesh.boundary_vertices, nv + mesh.boundary_edges])
        self.boundary_nodes = np.sort(bnodes)
        self.boundary_dofs = np.concatenate([self.boundary_nodes, self.boundary_nodes + self.n_nodes])
        self.free_dofs = np.setdiff1d(np.arange(self.n_vel), self.boundary_dofs)
        self._tabs = {}

    @cached_property
    def jacobians(self):
        p = self.mesh.vertices[self.mesh.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (ne, 2, 2) columns

    @cached_property
    def grad_lambda(self):
        """Barycentric coordinate gradients, (ne, 3, 2)."""
        inv = np.linalg.inv(self.jacobians)  # rows: grad xi, grad eta
        g = np.empty((self.mesh.n_triangles, 3, 2))
        g[:, 1] = inv[:, 0]
        g[:, 2] = inv[:, 1]
        g[:, 0] = -g[:, 1] - g[:, 2]
        return g

    @cached_property
    def hessians(self):
        return p2_hessians(self.grad_lambda)

    def tabulate(self, degree):
        tab = self._tabs.get(degree)
        if tab is None:
            rule = triangle_rule(degree)
            bary = rule.barycentric
            p = self.mesh.vertices[self.mesh.triangles]
            pts = np.einsum("qk,ekd->eqd", bary, p)
            w = 2.0 * self.mesh.areas[:, None] * rule.weights[None, :]
            tab = Tabulation(rule, pts, w, p2_values(bary), p2_gradients(bary, self.grad_lambda), bary)
            self._tabs[degree] = tab
        return tab

    def to_reference(self, element, x):
        """Barycentric coordinates of physical points ``x`` (n, 2) in ``element``."""
        p0 = self.mesh.vertices[self.mesh.triangles[element, 0]]
        ref = np.linalg.solve(self.jacobians[element], (np.atleast_2d(x) - p0).T).T
        return np.column_stack([1.0 - ref.sum(axis=1), ref])

    def element_coefficients(self, u):
        """Split a global velocity vector into per-element (ne, 2, 6) coefficients."""
        return np.stack([u[self.element_nodes], u[self.element_nodes + self.n_nodes]], axis=1)


def build_system(mesh):
    return FeSystem(mesh)


def eval_basis(sys, element, point):
    """Shape functions of ``element`` at a reference point (xi, eta)."""
    xi, eta = point
    bary = np.array([[1.0 - xi - eta, xi, eta]])
    if bary.min() < -1e-14:
        raise ValueError(f"point {point} lies outside the reference triangle")
    G = sys.grad_lambda[element : element + 1]
    return BasisEval(
        values=p2_values(bary)[0],
        gradients=p2_gradients(bary, G)[0, 0],
        hessians=sys.hessians[element],
        p1_values=bary[0],
        p1_gradients=G[0],
    )


def _sample(g, pts, *args):
    vals = np.asarray(g(pts, *args), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite sample value in interpolated field")
    return vals


def interpolate_velocity(g, sys, *args):
    """Nodal P2 interpolant of a vector field ``g(points, *args) -> (n, 2)``."""
    vals = _sample(g, sys.node_coords, *args)
    if vals.shape != (sys.n_nodes, 2):
        raise ValueError(f"field must return shape (n, 2), got {vals.shape}")
    return np.concatenate([vals[:, 0], vals[:, 1]])


def interpolate_pressure(q, sys, *args):
    """Elementwise nodal P1 interpolant of a scalar field (discontinuous)."""
    pts = sys.mesh.vertices[sys.mesh.triangles].reshape(-1, 2)
    return _sample(q, pts, *args).reshape(-1)


def velocity_at_quadrature(u, sys, degree):
    """Values (ne, nq, 2) and gradients (ne, nq, 2, 2) of a P2 field; grad[..., i, j] = d u_i / d x_j."""
    tab = sys.tabulate(degree)
    coef = sys.element_coefficients(u)
    vals = np.einsum("qs,ecs->eqc", tab.values, coef)
    grads = np.einsum("eqsd,ecs->eqcd", tab.gradients, coef)
    return vals, grads


def pressure_at_quadrature(p, sys, degree):
    tab = sys.tabulate(degree)
    return np.einsum("qk,ek->eq", tab.p1_values, p.reshape(-1, 3))


def divergence_norm(u, sys, m=None):
    """L2 norm of the divergence of a P2 velocity field."""
    _, grads = velocity_at_quadrature(u, sys, 2)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    tab = sys.tabulate(2)
    return float(np.sqrt(np.sum(tab.weights * div**2)))
