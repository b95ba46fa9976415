"""scikit-learn style facade over a full space-time solve."""

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator

from .analysis import compute_errors
from .assembly import DEFAULT_C_E, DEFAULT_C_HAT, StabParams
from .fe_spaces import FeSystem, p2_values
from .mesh import benchmark_mesh
from .problems import get_problem
from .slab_solver import SolveConfig, TimeGrid, march


class SpaceTimeNavierStokes(BaseEstimator):
    """Solve a benchmark flow with ``fit`` and sample the final velocity with ``predict``.

    ``fit(problem, mesh=None)`` accepts a problem name or a problem object
    (its viscosity wins over ``nu``) and defaults to the level-2 mesh.
    ``score`` is the negative L2 velocity error at the final time, so larger
    is better as scikit-learn expects.
    """

    def __init__(self, nu=None, tau=0.125, T=None, stabilized=True, c_E=DEFAULT_C_E, c_hat=DEFAULT_C_HAT,
                 picard_tol=1e-9, max_iter=100, linear_tol=1e-11, relaxation=1.0):
        self.nu = nu
        self.tau = tau
        self.T = T
        self.stabilized = stabilized
        self.c_E = c_E
        self.c_hat = c_hat
        self.picard_tol = picard_tol
        self.max_iter = max_iter
        self.linear_tol = linear_tol
        self.relaxation = relaxation

    def fit(self, problem, mesh=None):
        if isinstance(problem, str):
            problem = get_problem(problem, self.nu)
        if self.T is not None:
            problem = replace(problem, T=self.T)
        self.problem_ = problem
        self.mesh_ = benchmark_mesh(2) if mesh is None else mesh
        self.system_ = FeSystem(self.mesh_)
        cfg = SolveConfig(self.picard_tol, self.max_iter, self.linear_tol, self.relaxation, self.stabilized)
        params = StabParams(problem.nu, self.c_E, self.c_hat)
        self.result_ = march(TimeGrid(problem.T, self.tau), problem, cfg, self.system_, params)
        self.velocity_ = self.result_.U
        self.pressure_ = self.result_.P
        return self

    def _locate(self, points):
        sys = self.system_
        mesh = sys.mesh
        inv = np.linalg.inv(sys.jacobians)
        p0 = mesh.vertices[mesh.triangles[:, 0]]
        elem = np.full(len(points), -1)
        bary = np.zeros((len(points), 3))
        for start in range(0, len(points), 256):
            chunk = points[start : start + 256]
            ref = np.einsum("eij,nej->nei", inv, chunk[:, None, :] - p0[None])
            b = np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)
            best = np.argmax(b.min(axis=2), axis=1)
            elem[start : start + len(chunk)] = best
            bary[start : start + len(chunk)] = b[np.arange(len(chunk)), best]
        if np.any(bary.min(axis=1) < -1e-10):
            raise ValueError("some points lie outside the mesh")
        return elem, bary

    def predict(self, points):
        """Final velocity at physical points (n, 2) -> (n, 2)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        elem, bary = self._locate(points)
        coef = self.system_.element_coefficients(self.velocity_)[elem]  # (n, 2, 6)
        return np.einsum("ns,ncs->nc", p2_values(bary), coef)

    def score(self, problem=None, y=None):
        """Negative L2 norm of the final velocity error against the exact solution."""
        problem = self.problem_ if problem is None else problem
        return -compute_errors(self.velocity_, self.pressure_, problem, self.system_, problem.T).errU_L2
