"""Time marching over DG(1) slabs with a fixed-point iteration per slab.

Each slab system is a sparse saddle-point matrix bordered by two dense rows
and columns (the pressure-mean multipliers). Dense borders wreck the fill of
a sparse LU, so :class:`BorderedLU` factorizes the core block after a rank-2
diagonal shift that removes its constant-pressure null space and recovers the
exact bordered solution from a 4 x 4 correction.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .assembly import SlabAssembler, StabParams
from .fe_spaces import divergence_norm, interpolate_velocity


class SolverError(RuntimeError):
    """Linear solve failed or missed its residual tolerance."""


class ConvergenceError(SolverError):
    """Fixed-point iteration did not converge on a slab."""

    def __init__(self, slab, iterations, increment):
        super().__init__(f"slab {slab}: fixed-point iteration not converged after {iterations} iterations (last increment {increment:.3e})")
        self.slab = slab
        self.iterations = iterations
        self.increment = increment


@dataclass(frozen=True)
class TimeGrid:
    """Uniform slabs (n tau, (n + 1) tau) covering (0, T)."""

    T: float
    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and self.T > 0):
            raise ValueError("final time and time step must be positive")
        n = round(self.T / self.tau)
        if n < 1 or abs(n * self.tau - self.T) > 1e-12 * self.T:
            raise ValueError(f"T = {self.T} is not an integer multiple of tau = {self.tau}")

    @classmethod
    def from_slabs(cls, T, n_slabs):
        return cls(T, T / n_slabs)

    @property
    def n_slabs(self):
        return round(self.T / self.tau)

    @property
    def nodes(self):
        return self.tau * np.arange(self.n_slabs + 1)

    def interval(self, n):
        return n * self.tau, (n + 1) * self.tau


@dataclass(frozen=True)
class SolveConfig:
    picard_tol: float = 1e-9
    max_iter: int = 100
    linear_tol: float = 1e-11
    relaxation: float = 1.0
    stabilized: bool = True
    # Previous factorizations precondition GMRES until it stalls.
    reuse_factorization: bool = True
    gmres_maxiter: int = 40

    def __post_init__(self):
        if not (self.picard_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be an integer >= 1")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")

    @property
    def mode(self):
        return "stab" if self.stabilized else "no-stab"


@dataclass
class SlabState:
    """Velocity and pressure at both time nodes of one slab."""

    index: int
    t0: float
    t1: float
    U_a: np.ndarray
    U_b: np.ndarray
    P_a: np.ndarray
    P_b: np.ndarray
    U_prev: np.ndarray
    iterations: int = 0
    increment: float = 0.0
    residual: float = 0.0
    div_a: float = 0.0
    div_b: float = 0.0
    wall_time: float = 0.0

    def velocity_at(self, t):
        s = (t - self.t0) / (self.t1 - self.t0)
        return (1.0 - s) * self.U_a + s * self.U_b

    def pressure_at(self, t):
        s = (t - self.t0) / (self.t1 - self.t0)
        return (1.0 - s) * self.P_a + s * self.P_b

    def record(self):
        return SlabRecord(self.index, self.t0, self.t1, self.iterations, self.increment, self.residual, self.div_a, self.div_b, self.wall_time)


@dataclass(frozen=True)
class SlabRecord:
    index: int
    t0: float
    t1: float
    iterations: int
    increment: float
    residual: float
    div_a: float
    div_b: float
    wall_time: float

    FIELDS = ("slab", "t0", "t1", "iterations", "increment", "linear_residual", "div_a", "div_b", "wall_time")


@dataclass
class MarchResult:
    grid: TimeGrid
    final: SlabState
    records: list
    states: list = field(default_factory=list)

    @property
    def U(self):
        return self.final.U_b

    @property
    def P(self):
        return self.final.P_b


# ---------------------------------------------------------------- linear algebra


class BorderedLU:
    """Exact solver for ``[[K, C], [R, 0]]`` with ``nb`` dense border rows/columns.

    ``K`` may be singular with a null space of dimension ``nb`` that the
    border removes. For each border column the entry of largest magnitude
    selects a pivot row ``j``; ``K + alpha e_j e_j^T`` is then regular and
    sparse, and is the matrix that gets factorized.
    """

    def __init__(self, A, nb):
        A = sp.csc_matrix(A)
        n = A.shape[0] - nb
        self.n, self.nb = n, nb
        K = A[:n, :n]
        C = A[:n, n:].toarray()
        R = A[n:, :n].toarray()
        pins = np.argmax(np.abs(C), axis=0)
        if len(set(pins)) != nb:
            raise SolverError("border columns do not select distinct pivot rows")
        self.alpha = float(abs(K).max()) or 1.0
        shift = sp.csc_matrix((np.full(nb, self.alpha), (pins, pins)), shape=(n, n))
        try:
            self.lu = sla.splu((K + shift).tocsc(), permc_spec="COLAMD", diag_pivot_thresh=0.1)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        E = np.zeros((n, nb))
        E[pins, np.arange(nb)] = 1.0
        self.pins, self.R = pins, R
        self.Z_E = self.lu.solve(E)
        self.Z_C = self.lu.solve(C)
        a = self.alpha
        self.small = np.block(
            [
                [a * self.Z_E[pins] - np.eye(nb), -a * self.Z_C[pins]],
                [R @ self.Z_E, -R @ self.Z_C],
            ]
        )

    def solve(self, b):
        n, nb, a = self.n, self.nb, self.alpha
        z = self.lu.solve(b[:n])
        rhs = np.concatenate([-a * z[self.pins], b[n:] - self.R @ z])
        mu_lam = np.linalg.solve(self.small, rhs)
        mu, lam = mu_lam[:nb], mu_lam[nb:]
        return np.concatenate([z + self.Z_E @ mu - self.Z_C @ lam, lam])

    def as_operator(self):
        N = self.n + self.nb
        return sla.LinearOperator((N, N), matvec=self.solve, dtype=float)


def _relative_residual(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / nb) if nb > 0 else float(np.linalg.norm(A @ x))


def _direct(A, b, nb, tol, factor=None):
    factor = BorderedLU(A, nb) if factor is None else factor
    x = factor.solve(b)
    res = _relative_residual(A, x, b)
    for _ in range(3):
        if res <= tol:
            break
        x = x + factor.solve(b - A @ x)
        res = _relative_residual(A, x, b)
    return x, res, factor


def linear_solve(S, cfg=None, n_border=2):
    """Solve a reduced slab system directly; returns ``(x, relative_residual)``."""
    cfg = SolveConfig() if cfg is None else cfg
    if not np.any(S.rhs):
        return np.zeros_like(S.rhs), 0.0
    x, res, _ = _direct(S.matrix, S.rhs, n_border, cfg.linear_tol)
    if not (res <= cfg.linear_tol):
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {cfg.linear_tol:.1e}")
    return x, res


class SlabLinearSolver:
    """Direct solves whose factorizations are reused as GMRES preconditioners."""

    def __init__(self, cfg, n_border=2):
        self.cfg = cfg
        self.nb = n_border
        self.factor = None
        self.n_factorizations = 0

    def solve(self, A, b, x0=None):
        tol = self.cfg.linear_tol
        if not np.any(b):
            return np.zeros_like(b), 0.0
        if self.factor is not None and self.cfg.reuse_factorization:
            x0 = self.factor.solve(b) if x0 is None else x0
            x, _ = sla.gmres(
                A, b, x0=x0, rtol=0.5 * tol, atol=0.0, restart=self.cfg.gmres_maxiter,
                maxiter=1, M=self.factor.as_operator(),
            )
            res = _relative_residual(A, x, b)
            if res <= tol:
                return x, res
        x, res, self.factor = _direct(A, b, self.nb, tol)
        self.n_factorizations += 1
        if not (res <= tol):
            raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
        return x, res


# ---------------------------------------------------------------- marching


def _l2(u, mass):
    return math.sqrt(max(float(u @ (mass @ u)), 0.0))


def solve_slab(n, U_prev, assembler, problem, cfg, grid, solver=None):
    """Fixed-point iteration on slab ``n`` starting from ``U_prev`` held constant in time."""
    start = time.perf_counter()
    sys = assembler.sys
    solver = SlabLinearSolver(cfg) if solver is None else solver
    t0, t1 = grid.interval(n)
    bc_a = interpolate_velocity(problem.dirichlet, sys, t0)
    bc_b = interpolate_velocity(problem.dirichlet, sys, t1)
    zero_f = getattr(problem, "forcing_is_zero", False)
    load = None if zero_f else assembler.load_vector(t0, problem.forcing)
    samples = None if (zero_f or not assembler.stabilized) else assembler.curl_samples(t0, problem.curl_forcing)
    W_a = W_b = U_prev
    blocks, mass, omega = assembler.blocks, assembler.mass, cfg.relaxation
    inc = math.inf
    x = None
    for it in range(1, cfg.max_iter + 1):
        S = assembler.assemble(W_a, W_b, U_prev, t0, bc_a, bc_b, load=load, curl_samples=samples)
        try:
            x, res = solver.solve(S.matrix, S.rhs, x0=x if omega == 1.0 else None)
        except SolverError as exc:
            raise SolverError(f"slab {n}, iteration {it}: {exc}") from exc
        full = S.expand(x)
        U_a, U_b = full[blocks["U_a"]], full[blocks["U_b"]]
        inc = max(
            _l2(U_a - W_a, mass) / max(_l2(U_a, mass), 1e-30),
            _l2(U_b - W_b, mass) / max(_l2(U_b, mass), 1e-30),
        )
        if omega != 1.0:
            U_a = omega * U_a + (1.0 - omega) * W_a
            U_b = omega * U_b + (1.0 - omega) * W_b
        W_a, W_b = U_a, U_b
        if inc <= cfg.picard_tol:
            break
    else:
        raise ConvergenceError(n, cfg.max_iter, inc)
    P_a, P_b = full[blocks["P_a"]], full[blocks["P_b"]]
    return SlabState(
        n, t0, t1, U_a, U_b, P_a, P_b, U_prev, it, inc, res,
        divergence_norm(U_a, sys), divergence_norm(U_b, sys), time.perf_counter() - start,
    )


def march(grid, problem, cfg, sys, params=None, keep_states=False, callback=None, assembler=None):
    """Solve all slabs in order; ``callback(state)`` sees every accepted slab."""
    params = StabParams(problem.nu) if params is None else params
    if assembler is None:
        assembler = SlabAssembler(sys, params, grid.tau, stabilized=cfg.stabilized)
    solver = SlabLinearSolver(cfg)
    U = interpolate_velocity(problem.initial_velocity, sys)
    records, states = [], []
    state = None
    for n in range(grid.n_slabs):
        state = solve_slab(n, U, assembler, problem, cfg, grid, solver)
        records.append(state.record())
        if keep_states:
            states.append(state)
        if callback is not None:
            callback(state)
        U = state.U_b
    return MarchResult(grid, state, records, states)
