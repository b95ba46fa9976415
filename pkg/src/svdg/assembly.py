"""Space-time assembly of the DG(1) slab saddle-point system.

On a slab ``I_n = (t_n, t_n + tau)`` the velocity is ``U(t) = U_a (1 - s) +
U_b s`` with ``s = (t - t_n) / tau`` and the same for the pressure. The slab
unknown vector is laid out as

    [U_a (n_vel), U_b (n_vel), P_a (n_prs), P_b (n_prs), lambda_a, lambda_b]

where the two multipliers pin the pressure mean at each time node. Every
form that depends on the frozen convection field ``W`` (the previous
fixed-point iterate) is integrated with a 3-point Gauss rule in time and a
degree-6 triangle rule in space, which is exact for all slab integrands.

The sparsity pattern is fixed at construction; each fixed-point iteration
only refills the value array.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fe_spaces import p2_gradients, p2_third_derivatives, p2_values
from .quadrature import edge_rule, time_rule

FORM_DEGREE = 6
DATA_DEGREE = 10
EDGE_POINTS = 4
TIME_POINTS = 3
DEFAULT_C_E = 1e-2
DEFAULT_C_HAT = 1e-2


def stab_parameter(h_E, nu, c_E):
    """SUPG weight ``c_E * min(h_E^3, h_E^4 / nu)``.

    ``c_E = 0`` is accepted and switches the curl-residual terms off.
    """
    h_E = np.asarray(h_E, dtype=float)
    c_E = np.asarray(c_E, dtype=float)
    if np.any(h_E <= 0):
        raise ValueError("element diameters must be positive")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    if np.any(c_E < 0):
        raise ValueError("stabilization constant c_E must be nonnegative")
    delta = c_E * np.minimum(h_E**3, h_E**4 / nu)
    return float(delta) if delta.ndim == 0 else delta


@dataclass(frozen=True)
class StabParams:
    nu: float
    c_E: float = DEFAULT_C_E
    c_hat: float = DEFAULT_C_HAT

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if np.any(np.asarray(self.c_E) < 0) or self.c_hat < 0:
            raise ValueError("stabilization constants must be nonnegative")

    def delta(self, mesh):
        return stab_parameter(mesh.h_E, self.nu, self.c_E) * np.ones(mesh.n_triangles)


# ---------------------------------------------------------------- local kernels


def curl_operator(grads):
    """curl of the vector basis functions phi_s e_c: (..., 6, 2) -> (..., 12)."""
    return np.concatenate([-grads[..., 1], grads[..., 0]], axis=-1)


def material_derivative_gradient(hess, grads, W, gradW):
    """Gradient of psi_s = grad(phi_s) . W.

    ``hess`` (ne, 6, 2, 2), ``grads`` (ne, ..., 6, 2), ``W`` (ne, ..., 2) and
    ``gradW`` (ne, ..., 2, 2) with gradW[..., k, l] = d_l W_k. Returns
    (ne, ..., 6, 2).
    """
    extra = grads.ndim - 3
    H = hess.reshape(hess.shape[:1] + (1,) * extra + hess.shape[1:])
    return np.matmul(H, W[..., None, :, None])[..., 0] + np.matmul(grads, gradW)


def curl_material_operator(hess, grads, W, gradW):
    """curl((grad(phi_s e_c)) W) for every vector basis function, (..., 12)."""
    dpsi = material_derivative_gradient(hess, grads, W, gradW)
    return np.concatenate([-dpsi[..., 1], dpsi[..., 0]], axis=-1)


def viscous_curl_operator(third, nu):
    """curl(-nu div eps(phi_s e_c)) from third derivatives (ne, 6, 2, 2, 2) -> (ne, 12).

    div eps(phi e_c)_k = 1/2 (lap(phi) delta_kc + d_k d_c phi).
    """
    out = np.zeros(third.shape[:1] + (12,))
    lap_grad = third[:, :, 0, 0, :] + third[:, :, 1, 1, :]  # d_l lap(phi), (ne, 6, l)
    for c in range(2):
        # v_k = 1/2 (lap phi delta_kc + d_k d_c phi); curl v = d_x v_1 - d_y v_0
        dv1_dx = 0.5 * ((c == 1) * lap_grad[:, :, 0] + third[:, :, 1, c, 0])
        dv0_dy = 0.5 * ((c == 0) * lap_grad[:, :, 1] + third[:, :, 0, c, 1])
        out[:, 6 * c : 6 * c + 6] = -nu * (dv1_dx - dv0_dy)
    return out


def _field_at(sys, tab, u):
    coef = sys.element_coefficients(u)
    return np.matmul(coef, tab.values.T).transpose(0, 2, 1), np.matmul(coef[:, None], tab.gradients)


def curl_of_field(sys, u, degree=FORM_DEGREE):
    """curl of a P2 field at the quadrature points of ``degree``, (ne, nq)."""
    _, g = _field_at(sys, sys.tabulate(degree), u)
    return g[..., 1, 0] - g[..., 0, 1]


def curl_of_material_term(sys, u, w, degree=FORM_DEGREE):
    """curl((grad u) w) for P2 fields u, w at quadrature points, (ne, nq)."""
    tab = sys.tabulate(degree)
    W, gW = _field_at(sys, tab, w)
    ops = curl_material_operator(sys.hessians, tab.gradients, W, gW)  # (ne, nq, 12)
    coef = sys.element_coefficients(u).reshape(-1, 12)
    return np.einsum("eqa,ea->eq", ops, coef)


# ---------------------------------------------------------------- edges


@dataclass
class EdgeTabulation:
    """Basis gradients of both neighbours at Gauss points of every interior edge."""

    edges: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sign: np.ndarray  # +1 where the edge normal points from left to right
    weights: np.ndarray  # gauss weight * edge length
    values_L: np.ndarray
    grads_L: np.ndarray
    grads_R: np.ndarray


def tabulate_edges(sys, npts=EDGE_POINTS):
    mesh = sys.mesh
    ie = mesh.interior_edges
    L, R = mesh.edge_elements[ie, 0], mesh.edge_elements[ie, 1]
    rule = edge_rule(npts)
    v0 = mesh.vertices[mesh.edges[ie, 0]]
    v1 = mesh.vertices[mesh.edges[ie, 1]]
    pts = v0[:, None, :] + rule.points[None, :, None] * (v1 - v0)[:, None, :]
    cent = mesh.vertices[mesh.triangles].mean(axis=1)
    sign = np.where(np.einsum("ij,ij->i", mesh.edge_normals[ie], cent[R] - cent[L]) > 0, 1.0, -1.0)

    def bary(elems):
        p0 = mesh.vertices[mesh.triangles[elems, 0]]
        inv = np.linalg.inv(sys.jacobians[elems])
        ref = np.einsum("eij,epj->epi", inv, pts - p0[:, None, :])
        return np.concatenate([1.0 - ref.sum(axis=2, keepdims=True), ref], axis=2)

    bL, bR = bary(L), bary(R)
    values_L = np.stack([p2_values(b) for b in bL]) if len(ie) else np.zeros((0, npts, 6))
    return EdgeTabulation(
        ie,
        L,
        R,
        sign,
        rule.weights[None, :] * mesh.edge_lengths[ie][:, None],
        values_L,
        p2_gradients(bL, sys.grad_lambda[L]),
        p2_gradients(bR, sys.grad_lambda[R]),
    )


def _edge_jump_values(sys, etab, W):
    """Scalar jump operators [grad(phi_r) . W] for the 12 (side, node) dofs, (nie, np, 12)."""
    coef = sys.element_coefficients(W)[etab.left]
    Wp = np.einsum("eps,ecs->epc", etab.values_L, coef)
    psi_L = np.einsum("epsd,epd->eps", etab.grads_L, Wp)
    psi_R = np.einsum("epsd,epd->eps", etab.grads_R, Wp)
    s = etab.sign[:, None, None]
    return np.concatenate([s * psi_L, -(s * psi_R)], axis=2)


def _edge_nodes(sys, etab):
    return np.hstack([sys.element_nodes[etab.left], sys.element_nodes[etab.right]])


def _edge_weights(mesh, etab, c_hat):
    hL, hR = mesh.h_E[etab.left], mesh.h_E[etab.right]
    return etab.weights * (c_hat * 0.5 * (hL**2 + hR**2))[:, None]


def assemble_jump_form(sys, m, params, W, etab=None):
    """Spatial edge-jump matrix for a time-frozen W, (n_vel, n_vel), symmetric PSD."""
    etab = tabulate_edges(sys) if etab is None else etab
    J = _edge_jump_values(sys, etab, W)
    w = _edge_weights(m, etab, params.c_hat)
    K = np.einsum("epa,ep,epb->eab", J, w, J)
    nodes = _edge_nodes(sys, etab)
    rows, cols, vals = [], [], []
    for c in range(2):
        d = nodes + c * sys.n_nodes
        rows.append(np.repeat(d, 12, axis=1).ravel())
        cols.append(np.tile(d, (1, 12)).ravel())
        vals.append(K.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(sys.n_vel, sys.n_vel))


# ---------------------------------------------------------------- spatial matrices


def _scatter_elements(sys, K, nrow=None, ncol=None, row_dofs=None, col_dofs=None):
    row_dofs = sys.element_dofs if row_dofs is None else row_dofs
    col_dofs = sys.element_dofs if col_dofs is None else col_dofs
    nr = row_dofs.shape[1]
    nc = col_dofs.shape[1]
    r = np.repeat(row_dofs, nc, axis=1).ravel()
    c = np.tile(col_dofs, (1, nr)).ravel()
    shape = (nrow or sys.n_vel, ncol or sys.n_vel)
    return sp.csr_matrix((K.ravel(), (r, c)), shape=shape)


def _vector_block(Ks):
    """Component-diagonal (ne, 12, 12) block from a scalar (ne, 6, 6) one."""
    K = np.zeros(Ks.shape[:1] + (12, 12))
    K[:, :6, :6] = Ks
    K[:, 6:, 6:] = Ks
    return K


def local_mass(sys):
    tab = sys.tabulate(FORM_DEGREE)
    return _vector_block(np.einsum("eq,qs,qr->esr", tab.weights, tab.values, tab.values))


def local_strain(sys):
    """Local eps(u):eps(v) matrices (ne, 12, 12)."""
    tab = sys.tabulate(FORM_DEGREE)
    g = tab.gradients
    K = np.empty((g.shape[0], 12, 12))
    dot = np.einsum("eq,eqsk,eqrk->esr", tab.weights, g, g)
    for c in range(2):
        for d in range(2):
            cross = np.einsum("eq,eqs,eqr->esr", tab.weights, g[..., d], g[..., c])
            K[:, 6 * c : 6 * c + 6, 6 * d : 6 * d + 6] = 0.5 * ((c == d) * dot + cross)
    return K


def local_divergence(sys):
    """Local b(v, q) = int q div v matrices, (ne, 3, 12)."""
    tab = sys.tabulate(FORM_DEGREE)
    g = tab.gradients
    return np.concatenate(
        [np.einsum("eq,qk,eqs->eks", tab.weights, tab.p1_values, g[..., c]) for c in range(2)], axis=2
    )


def local_convection(sys, W):
    """Local c(W; u, v) = int ((grad u) W) . v matrices, (ne, 12, 12), rows = test."""
    tab = sys.tabulate(FORM_DEGREE)
    Wq, _ = _field_at(sys, tab, W)
    psi = np.einsum("eqsd,eqd->eqs", tab.gradients, Wq)
    return _vector_block(np.einsum("eq,qs,eqr->esr", tab.weights, tab.values, psi))


def mass_matrix(sys):
    return _scatter_elements(sys, local_mass(sys))


def strain_matrix(sys):
    return _scatter_elements(sys, local_strain(sys))


def convection_matrix(sys, W):
    return _scatter_elements(sys, local_convection(sys, W))


def divergence_matrix(sys):
    pd = np.arange(sys.n_prs).reshape(-1, 3)
    return _scatter_elements(sys, local_divergence(sys), sys.n_prs, sys.n_vel, row_dofs=pd)


def pressure_mean_weights(sys):
    return np.repeat(sys.mesh.areas / 3.0, 3)


# ---------------------------------------------------------------- slab system


@dataclass
class SlabSystem:
    """Reduced slab system plus what is needed to rebuild the full unknown vector."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    dirichlet_index: np.ndarray
    dirichlet_values: np.ndarray
    size: int
    blocks: dict
    full_matrix: sp.csc_matrix = field(repr=False, default=None)

    def expand(self, x):
        full = np.zeros(self.size)
        full[self.free] = x
        full[self.dirichlet_index] = self.dirichlet_values
        return full


class _Pattern:
    """Fixed CSC pattern with a precomputed slot for each COO contribution."""

    def __init__(self, rows, cols, n):
        key = cols.astype(np.int64) * n + rows
        uniq, slot = np.unique(key, return_inverse=True)
        self.slot = slot.ravel()
        self.rows = uniq % n
        self.cols = uniq // n
        self.n = n
        self.nnz = len(uniq)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(self.cols, minlength=n))])

    def fill(self, values):
        return np.bincount(self.slot, weights=values, minlength=self.nnz)

    def matrix(self, data):
        return sp.csc_matrix((data, self.rows, self.indptr), shape=(self.n, self.n))


class SlabAssembler:
    """Assembles slab systems on a fixed mesh, step size and stabilization mode.

    Parameters
    ----------
    sys : FeSystem
    params : StabParams
    tau : float
        Slab length.
    stabilized : bool
        False drops the curl-residual, viscous-curl and edge-jump forms and
        the stabilizing right-hand side.
    convective : bool
        False freezes W = 0, which turns the slab problem into unsteady Stokes.
    """

    def __init__(self, sys, params, tau, stabilized=True, convective=True):
        if tau <= 0:
            raise ValueError("time step must be positive")
        self.sys = sys
        self.mesh = sys.mesh
        self.params = params
        self.tau = float(tau)
        self.stabilized = bool(stabilized)
        self.convective = bool(convective)
        nv, npr = sys.n_vel, sys.n_prs
        self.size = 2 * (nv + npr) + 2
        self.blocks = {
            "U_a": slice(0, nv),
            "U_b": slice(nv, 2 * nv),
            "P_a": slice(2 * nv, 2 * nv + npr),
            "P_b": slice(2 * nv + npr, 2 * nv + 2 * npr),
            "lambda": slice(2 * (nv + npr), self.size),
        }
        trule = time_rule(TIME_POINTS)
        self.t_points = trule.points
        self.t_weights = trule.weights * self.tau
        self.t_phi = np.column_stack([1.0 - trule.points, trule.points])  # (nt, 2)
        self.t_dphi = np.array([-1.0, 1.0]) / self.tau
        self.delta = params.delta(self.mesh)
        self.tab = sys.tabulate(FORM_DEGREE)
        self.data_tab = sys.tabulate(DATA_DEGREE)
        self.etab = tabulate_edges(sys) if self.stabilized else None
        self.viscous_curl = viscous_curl_operator(p2_third_derivatives(self.mesh.n_triangles), params.nu)
        self.has_viscous_curl = bool(np.any(self.viscous_curl))

        ed = sys.element_dofs
        self.vel_dofs = np.hstack([ed, ed + nv])  # (ne, 24): time node, component, node
        pd = np.arange(npr).reshape(-1, 3)
        self.prs_dofs = np.hstack([2 * nv + pd, 2 * nv + npr + pd])  # (ne, 6)

        rows, cols = [], []

        def add(r, c):
            rows.append(r)
            cols.append(c)
            return sum(len(x) for x in rows[:-1]), sum(len(x) for x in rows)

        self._vv = add(np.repeat(self.vel_dofs, 24, axis=1).ravel(), np.tile(self.vel_dofs, (1, 24)).ravel())
        self._vp = add(np.repeat(self.vel_dofs, 6, axis=1).ravel(), np.tile(self.prs_dofs, (1, 24)).ravel())
        self._pv = add(np.repeat(self.prs_dofs, 24, axis=1).ravel(), np.tile(self.vel_dofs, (1, 6)).ravel())
        lam = 2 * (nv + npr) + np.arange(2)
        pr = [2 * nv + np.arange(npr), 2 * nv + npr + np.arange(npr)]
        self._ml = add(np.concatenate(pr), np.repeat(lam, npr))
        self._lm = add(np.repeat(lam, npr), np.concatenate(pr))
        if self.stabilized:
            nodes = _edge_nodes(sys, self.etab)  # (nie, 12): side, node
            nn = sys.n_nodes
            blocks = []
            for c in range(2):
                d = nodes + c * nn
                blocks.append(np.hstack([d, d + nv]))  # (nie, 24): time node, side, node
            self.edge_dofs = blocks
            r = np.concatenate([np.repeat(b, 24, axis=1).ravel() for b in blocks])
            cc = np.concatenate([np.tile(b, (1, 24)).ravel() for b in blocks])
            self._jj = add(r, cc)
        self.pattern = _Pattern(np.concatenate(rows), np.concatenate(cols), self.size)
        self.n_contrib = sum(len(r) for r in rows)
        self.static_data = self.pattern.fill(self._static_contributions())

        M = local_mass(sys)
        self.mass = _scatter_elements(sys, M)
        self.mean_weights = pressure_mean_weights(sys)

    # -- static part

    def _static_contributions(self):
        sys, tau, nu = self.sys, self.tau, self.params.nu
        vals = np.zeros(self.n_contrib)
        M = local_mass(sys)
        A = local_strain(sys)
        B = local_divergence(sys)
        T = tau / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        eps = np.array([-1.0, 1.0])
        ne = self.mesh.n_triangles
        K = np.zeros((ne, 24, 24))
        for i in range(2):
            for j in range(2):
                # int (U_t, V) + nu int a(U, V) + time-jump on the first node
                blk = 0.5 * eps[j] * M + nu * T[i, j] * A
                if i == j == 0:
                    blk = blk + M
                K[:, 12 * i : 12 * i + 12, 12 * j : 12 * j + 12] = blk
        vals[slice(*self._vv)] = K.ravel()
        Kvp = np.zeros((ne, 24, 6))
        Kpv = np.zeros((ne, 6, 24))
        for i in range(2):
            for j in range(2):
                Kvp[:, 12 * i : 12 * i + 12, 3 * j : 3 * j + 3] = T[i, j] * B.transpose(0, 2, 1)
                Kpv[:, 3 * i : 3 * i + 3, 12 * j : 12 * j + 12] = T[i, j] * B
        vals[slice(*self._vp)] = Kvp.ravel()
        vals[slice(*self._pv)] = Kpv.ravel()
        m = pressure_mean_weights(sys)
        vals[slice(*self._ml)] = np.tile(m, 2)
        vals[slice(*self._lm)] = np.tile(m, 2)
        return vals

    # -- W-dependent part

    def _time_field(self, W_a, W_b, tab):
        Wa, gWa = _field_at(self.sys, tab, W_a)
        Wb, gWb = _field_at(self.sys, tab, W_b)
        p0 = self.t_phi[:, 0][None, :, None, None]
        p1 = self.t_phi[:, 1][None, :, None, None]
        W = p0 * Wa[:, None] + p1 * Wb[:, None]
        gW = p0[..., None] * gWa[:, None] + p1[..., None] * gWb[:, None]
        return W, gW  # (ne, nt, nq, 2), (ne, nt, nq, 2, 2)

    def residual_operator(self, W_a, W_b, tab=None):
        """curl(V_t + (grad V) W) for every space-time basis function, (ne, nt, nq, 24)."""
        tab = self.tab if tab is None else tab
        W, gW = self._time_field(W_a, W_b, tab)
        grads = np.broadcast_to(tab.gradients[:, None], W.shape[:3] + (6, 2))
        g1 = curl_material_operator(self.sys.hessians, grads, W, gW)  # (ne, nt, nq, 12)
        g0 = curl_operator(tab.gradients)[:, None]  # (ne, 1, nq, 12)
        phi = self.t_phi[None, :, None, :, None]
        G = self.t_dphi[None, None, None, :, None] * g0[..., None, :] + phi * g1[..., None, :]
        return G.reshape(W.shape[:3] + (24,)), W

    def _dynamic_contributions(self, W_a, W_b):
        tab = self.tab
        ne = self.mesh.n_triangles
        vals = np.zeros(self.n_contrib)
        G, W = self.residual_operator(W_a, W_b)
        # convection: test phi_i phi_s e_c, trial phi_j (grad phi_r . W) e_c
        psi = np.einsum("eqsd,etqd->etqs", tab.gradients, W)
        test = self.t_phi[None, :, None, :, None] * tab.values[None, None, :, None, :]
        trial = self.t_phi[None, :, None, :, None] * psi[..., None, :]
        wts = self.t_weights[None, :, None] * tab.weights[:, None, :]
        nt, nq = W.shape[1], W.shape[2]
        test2 = np.broadcast_to(test, (ne, nt, nq, 2, 6)).reshape(ne, nt * nq, 12)
        trial2 = trial.reshape(ne, nt * nq, 12)
        w2 = wts.reshape(ne, nt * nq)
        Ks = np.matmul((test2 * w2[..., None]).transpose(0, 2, 1), trial2)  # (ne, 12, 12) in (time, node)
        K = np.zeros((ne, 24, 24))
        for c in range(2):
            idx = np.concatenate([6 * c + np.arange(6), 12 + 6 * c + np.arange(6)])
            K[:, idx[:, None], idx[None, :]] = Ks
        if self.stabilized:
            dw = (w2 * self.delta[:, None])[..., None]
            Gf = G.reshape(ne, nt * nq, 24)
            K += np.matmul((Gf * dw).transpose(0, 2, 1), Gf)
            if self.has_viscous_curl:
                # trial curl(-nu div eps(U)) is P1 in time like U itself
                GL = self.t_phi[None, :, None, :, None] * self.viscous_curl[:, None, None, None, :]
                GL = np.broadcast_to(GL, (ne, nt, nq, 2, 12)).reshape(ne, nt * nq, 24)
                K += np.matmul((Gf * dw).transpose(0, 2, 1), GL)
        vals[slice(*self._vv)] = K.ravel()
        if self.stabilized:
            vals[slice(*self._jj)] = self._jump_contributions(W_a, W_b)
        return vals

    def _jump_contributions(self, W_a, W_b):
        sys, et = self.sys, self.etab
        Ja = _edge_jump_values(sys, et, W_a)
        Jb = _edge_jump_values(sys, et, W_b)
        w = _edge_weights(self.mesh, et, self.params.c_hat)
        nie, npt = w.shape
        nt = len(self.t_points)
        p0 = self.t_phi[:, 0][None, :, None, None]
        p1 = self.t_phi[:, 1][None, :, None, None]
        Jt = p0 * Ja[:, None] + p1 * Jb[:, None]  # (nie, nt, np, 12)
        phi = self.t_phi[None, :, None, :, None]
        Z = (phi * Jt[..., None, :]).reshape(nie, nt * npt, 24)
        wt = (self.t_weights[None, :, None] * w[:, None, :]).reshape(nie, nt * npt)
        K = np.matmul((Z * wt[..., None]).transpose(0, 2, 1), Z)
        return np.concatenate([K.ravel(), K.ravel()])

    # -- right-hand side

    def load_vector(self, t0, forcing):
        """int_{I_n} (f, V) dt for both test time nodes, full slab length."""
        tab = self.data_tab
        ne, nq = tab.weights.shape
        out = np.zeros(self.size)
        pts = tab.points.reshape(-1, 2)
        loc = np.zeros((ne, 2, 2, 6))
        for t, (s, wt) in enumerate(zip(self.t_points, self.t_weights)):
            f = np.asarray(forcing(pts, t0 + s * self.tau)).reshape(ne, nq, 2)
            proj = np.einsum("eq,eqc,qs->ecs", tab.weights, f, tab.values)
            for i in range(2):
                loc[:, i] += wt * self.t_phi[t, i] * proj
        np.add.at(out, self.vel_dofs.ravel(), loc.reshape(ne, 24).ravel())
        return out

    def curl_samples(self, t0, curl_forcing):
        """curl f at the data quadrature points and time nodes of the slab, (ne, nt, nq)."""
        tab = self.data_tab
        ne, nq = tab.weights.shape
        pts = tab.points.reshape(-1, 2)
        return np.stack([np.asarray(curl_forcing(pts, t0 + s * self.tau)).reshape(ne, nq) for s in self.t_points], axis=1)

    def stabilizing_load(self, t0, W_a, W_b, curl_forcing=None, samples=None):
        """int_{I_n} sum_E delta_E (curl f, curl(V_t + (grad V) W)) dt.

        ``samples`` may carry precomputed :meth:`curl_samples`, which do not
        depend on W.
        """
        tab = self.data_tab
        cf = self.curl_samples(t0, curl_forcing) if samples is None else samples
        c = cf * self.t_weights[None, :, None] * tab.weights[:, None, :] * self.delta[:, None, None]
        # Contract the quadrature sums before forming per-basis curls; this
        # equals summing c * residual_operator(...) but avoids the big array.
        W, gW = self._time_field(W_a, W_b, tab)
        curl0 = np.einsum("eq,eqa->ea", c.sum(axis=1), curl_operator(tab.gradients))
        cW = np.einsum("etq,etqk->etk", c, W)
        ne, nt, nq = c.shape
        cgW = (c[..., None, None] * gW).transpose(0, 2, 3, 1, 4).reshape(ne, 2 * nq, 2 * nt)  # (e, qk, tl)
        gq = tab.gradients.transpose(0, 2, 1, 3).reshape(ne, 6, 2 * nq)  # (e, s, qk)
        dpsi = np.einsum("eslk,etk->etsl", self.sys.hessians, cW)
        dpsi += np.matmul(gq, cgW).reshape(ne, 6, nt, 2).transpose(0, 2, 1, 3)
        curl1 = np.concatenate([-dpsi[..., 1], dpsi[..., 0]], axis=-1)  # (ne, nt, 12)
        loc = np.concatenate(
            [self.t_dphi[i] * curl0 + np.einsum("t,eta->ea", self.t_phi[:, i], curl1) for i in range(2)], axis=1
        )
        out = np.zeros(self.size)
        np.add.at(out, self.vel_dofs.ravel(), loc.ravel())
        return out

    # -- full system

    def assemble(self, W_a, W_b, U_prev, t0, bc_a, bc_b, forcing=None, curl_forcing=None, load=None, curl_samples=None):
        """Slab system for frozen convection field (W_a, W_b).

        ``bc_a``/``bc_b`` are full velocity vectors whose boundary entries give
        the Dirichlet data at t0 and t0 + tau. ``load`` and ``curl_samples``
        may carry the W-independent data precomputed once per slab.
        """
        if not self.convective:
            W_a = W_b = np.zeros(self.sys.n_vel)
        data = self.static_data + self.pattern.fill(self._dynamic_contributions(W_a, W_b))
        full = self.pattern.matrix(data)
        nv = self.sys.n_vel
        rhs = np.zeros(self.size) if load is None else load.copy()
        if load is None and forcing is not None:
            rhs += self.load_vector(t0, forcing)
        rhs[:nv] += self.mass @ U_prev
        if self.stabilized and (curl_forcing is not None or curl_samples is not None):
            rhs += self.stabilizing_load(t0, W_a, W_b, curl_forcing, curl_samples)
        bd = self.sys.boundary_dofs
        didx = np.concatenate([bd, bd + nv])
        dval = np.concatenate([bc_a[bd], bc_b[bd]])
        if not np.all(np.isfinite(rhs)) or not np.all(np.isfinite(dval)):
            raise ValueError("non-finite forcing or boundary data")
        free = self._free(didx)
        lift = np.zeros(self.size)
        lift[didx] = dval
        rhs = rhs - full @ lift
        return SlabSystem(self._reduce(data), rhs[free], free, didx, dval, self.size, self.blocks, full)

    def _free(self, didx):
        if getattr(self, "_didx", None) is None or not np.array_equal(self._didx, didx):
            self._didx = didx
            mask = np.ones(self.size, dtype=bool)
            mask[didx] = False
            self._free_idx = np.flatnonzero(mask)
            newidx = np.full(self.size, -1)
            newidx[self._free_idx] = np.arange(len(self._free_idx))
            keep = mask[self.pattern.rows] & mask[self.pattern.cols]
            nf = len(self._free_idx)
            rr = newidx[self.pattern.rows[keep]]
            cc = newidx[self.pattern.cols[keep]]
            indptr = np.concatenate([[0], np.cumsum(np.bincount(cc, minlength=nf))])
            self._reduce = lambda d: sp.csc_matrix((d[keep], rr, indptr), shape=(nf, nf))
        return self._free_idx
