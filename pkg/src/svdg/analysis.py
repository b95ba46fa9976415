"""Error norms, stab-norm components, convergence rates and sparsity counts."""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .assembly import (
    DATA_DEGREE,
    SlabAssembler,
    _edge_jump_values,
    _edge_weights,
    local_strain,
    _scatter_elements,
)
from .fe_spaces import divergence_norm, pressure_at_quadrature, velocity_at_quadrature

ERROR_COLUMNS = ("errU_L2", "errU_H1", "errP_L2")


@dataclass
class ErrorReport:
    errU_L2: float
    errU_H1: float
    errP_L2: float
    div_norm: float
    stab: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)

    def as_dict(self):
        return asdict(self)


def _mean(values, weights):
    return float(np.sum(weights * values) / np.sum(weights))


def compute_errors(U, P, problem, sys, t=None):
    """Errors of a discrete velocity/pressure pair against the exact solution at ``t``.

    ``t`` defaults to the final time of the problem. Both pressures are
    compared modulo their means.
    """
    t = problem.T if t is None else t
    tab = sys.tabulate(DATA_DEGREE)
    pts = tab.points.reshape(-1, 2)
    w = tab.weights
    shape = w.shape
    uh, guh = velocity_at_quadrature(U, sys, DATA_DEGREE)
    ue = problem.velocity(pts, t).reshape(shape + (2,))
    gue = problem.velocity_grad(pts, t).reshape(shape + (2, 2))
    ph = pressure_at_quadrature(P, sys, DATA_DEGREE)
    pe = problem.pressure(pts, t).reshape(shape)
    dp = (ph - _mean(ph, w)) - (pe - _mean(pe, w))
    return ErrorReport(
        errU_L2=float(np.sqrt(np.sum(w[..., None] * (uh - ue) ** 2))),
        errU_H1=float(np.sqrt(np.sum(w[..., None, None] * (guh - gue) ** 2))),
        errP_L2=float(np.sqrt(np.sum(w * dp**2))),
        div_norm=divergence_norm(U, sys),
    )


def relative_velocity_errors(U, problem, sys, t):
    """(relative L2, relative H1-seminorm) velocity errors at time ``t``."""
    tab = sys.tabulate(DATA_DEGREE)
    pts = tab.points.reshape(-1, 2)
    w = tab.weights
    uh, guh = velocity_at_quadrature(U, sys, DATA_DEGREE)
    ue = problem.velocity(pts, t).reshape(uh.shape)
    gue = problem.velocity_grad(pts, t).reshape(guh.shape)
    l2 = np.sqrt(np.sum(w[..., None] * (uh - ue) ** 2) / np.sum(w[..., None] * ue**2))
    h1 = np.sqrt(np.sum(w[..., None, None] * (guh - gue) ** 2) / np.sum(w[..., None, None] * gue**2))
    return float(l2), float(h1)


def max_velocity_magnitude(U, sys, degree=DATA_DEGREE):
    """Largest |U| over nodes and quadrature points."""
    vals, _ = velocity_at_quadrature(U, sys, degree)
    nodal = np.hypot(U[: sys.n_nodes], U[sys.n_nodes :])
    return float(max(np.sqrt((vals**2).sum(axis=-1)).max(), nodal.max()))


# ---------------------------------------------------------------- stab norm

STAB_COMPONENTS = ("time", "viscous", "curl_residual", "edge_jump")


def _quadratic(M, u, v=None):
    return float(u @ (M @ (u if v is None else v)))


def dg_time_identity(states, mass):
    """Both sides of the DG time-derivative identity for a slab history.

    Left: sum over slabs of int (V_t, V) dt from the slab blocks, plus
    ([V]_j, V^j_+) at every interior node, plus |V^0_+|^2. Right:
    (|V^{N}_-|^2 + sum_j |[V]_j|^2 + |V^0_+|^2) / 2.
    """
    eps = (-1.0, 1.0)
    lhs = 0.0
    for k, s in enumerate(states):
        nodes = (s.U_a, s.U_b)
        lhs += sum(0.5 * eps[j] * _quadratic(mass, nodes[i], nodes[j]) for i in range(2) for j in range(2))
        if k == 0:
            lhs += _quadratic(mass, s.U_a)
        else:
            lhs += _quadratic(mass, s.U_a - states[k - 1].U_b, s.U_a)
    jumps = sum(_quadratic(mass, s.U_a - p.U_b) for p, s in zip(states[:-1], states[1:]))
    rhs = 0.5 * (_quadratic(mass, states[-1].U_b) + jumps + _quadratic(mass, states[0].U_a))
    return lhs, rhs


def stab_norm_components(states, sys, params, W_states=None):
    """The four pieces of the natural space-time norm of a slab history.

    ``states`` supply the field v, ``W_states`` (defaults to ``states``) the
    convection field of the streamline and edge terms. The edge term carries
    the constant ``c_hat``.
    """
    if not states:
        return dict.fromkeys(STAB_COMPONENTS, 0.0)
    W_states = states if W_states is None else W_states
    tau = states[0].t1 - states[0].t0
    asm = SlabAssembler(sys, params, tau, stabilized=True)
    mass = asm.mass
    A = _scatter_elements(sys, local_strain(sys))
    T = tau / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    _, time_part = dg_time_identity(states, mass)
    viscous = curl = jump = 0.0
    w_vol = asm.t_weights[None, :, None] * asm.tab.weights[:, None, :] * asm.delta[:, None, None]
    et = asm.etab
    w_edge = asm.t_weights[None, :, None] * _edge_weights(sys.mesh, et, params.c_hat)[:, None, :]
    p0 = asm.t_phi[:, 0][None, :, None, None]
    p1 = asm.t_phi[:, 1][None, :, None, None]
    for s, ws in zip(states, W_states):
        nodes = (s.U_a, s.U_b)
        viscous += params.nu * sum(T[i, j] * _quadratic(A, nodes[i], nodes[j]) for i in range(2) for j in range(2))
        G, _ = asm.residual_operator(ws.U_a, ws.U_b)
        coef = np.concatenate([s.U_a, s.U_b])[asm.vel_dofs]
        r = np.einsum("etqa,ea->etq", G, coef)
        curl += float(np.sum(w_vol * r**2))
        Jt = p0 * _edge_jump_values(sys, et, ws.U_a)[:, None] + p1 * _edge_jump_values(sys, et, ws.U_b)[:, None]
        for blk in asm.edge_dofs:
            ca = np.concatenate([s.U_a, s.U_b])[blk]  # (nie, 24): time node, side, node
            vals = p0[..., 0] * np.einsum("etpr,er->etp", Jt, ca[:, :12]) + p1[..., 0] * np.einsum("etpr,er->etp", Jt, ca[:, 12:])
            jump += float(np.sum(w_edge * vals**2))
    return {"time": time_part, "viscous": viscous, "curl_residual": curl, "edge_jump": jump}


# ---------------------------------------------------------------- rates


def observed_rate(e_coarse, e_fine, h_coarse, h_fine):
    """log(e_c/e_f) / log(h_c/h_f), or None when an error vanishes."""
    if not (e_coarse > 0 and e_fine > 0) or h_coarse == h_fine:
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def convergence_table(runs, columns=ERROR_COLUMNS):
    """Rates between consecutive runs.

    ``runs`` is a sequence of mappings with key ``h`` and the error
    ``columns``; the returned list holds one rate dict per run (the first has
    all rates None).
    """
    if len(runs) < 2:
        raise ValueError("at least two refinement levels are needed for rates")
    out = [dict.fromkeys(columns)]
    for coarse, fine in zip(runs[:-1], runs[1:]):
        out.append({c: observed_rate(coarse[c], fine[c], coarse["h"], fine["h"]) for c in columns})
    return out


# ---------------------------------------------------------------- sparsity


@dataclass(frozen=True)
class SparsityStats:
    size: int  # velocity-pressure unknowns actually solved for
    nnz: int
    density: float  # percent
    multiplier_nnz: int  # entries in the multiplier rows and columns

    def as_text(self):
        return f"size {self.size}\nnnz {self.nnz}\ndensity_percent {self.density:.6f}\nmultiplier_nnz {self.multiplier_nnz}\n"


def sparsity_stats(S, n_border=2):
    """Structural nonzeros of a reduced slab matrix, multiplier border counted apart."""
    A = S.matrix if hasattr(S, "matrix") else S
    A = A.tocsc()
    n = A.shape[0] - n_border
    core = A[:n, :n]
    core_nnz = int(core.nnz)
    return SparsityStats(n, core_nnz, 100.0 * core_nnz / n**2, int(A.nnz) - core_nnz)
