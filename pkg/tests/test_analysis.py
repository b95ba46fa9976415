import numpy as np
import pytest
import scipy.sparse as sp

from svdg.analysis import (
    compute_errors,
    convergence_table,
    dg_time_identity,
    max_velocity_magnitude,
    observed_rate,
    sparsity_stats,
    stab_norm_components,
)
from svdg.assembly import SlabAssembler, StabParams, mass_matrix
from svdg.fe_spaces import FeSystem, interpolate_pressure, interpolate_velocity
from svdg.mesh import Mesh, barycentric_refine, benchmark_mesh, generate_uniform
from svdg.problems import get_problem
from svdg.slab_solver import SlabState, SolveConfig, TimeGrid, march


@pytest.fixture(scope="module")
def sys3():
    return FeSystem(barycentric_refine(generate_uniform(3)))


def test_quadratic_solution_has_no_error(sys3):
    prob = get_problem("robustness", 1.0)
    U = interpolate_velocity(prob.velocity, sys3, 0.7)
    # the robustness pressure is cubic, so only the velocity part is exact here
    e = compute_errors(U, np.zeros(sys3.n_prs), prob, sys3, 0.7)
    assert e.errU_L2 <= 1e-14 and e.errU_H1 <= 1e-13 and e.div_norm <= 1e-13


def test_zero_fields_against_closed_form_norms(sys3):
    prob = get_problem("robustness", 1.0)
    e = compute_errors(np.zeros(sys3.n_vel), np.zeros(sys3.n_prs), prob, sys3, 1.0)
    # u(T=1) = 2 (y^2, x^2); p(T=1) = x^2 y + y^3 - 5/12
    assert e.errU_L2 == pytest.approx(2 * np.sqrt(2 / 5), rel=1e-13)
    assert e.errU_H1 == pytest.approx(np.sqrt(32 / 3), rel=1e-13)
    assert e.errP_L2 == pytest.approx(np.sqrt(853 / 5040), rel=1e-13)


def test_pressure_error_ignores_constants(sys3):
    prob = get_problem("convergence", 1.0)
    P = interpolate_pressure(prob.pressure, sys3, 0.3)
    U = np.zeros(sys3.n_vel)
    a = compute_errors(U, P, prob, sys3, 0.3).errP_L2
    b = compute_errors(U, P + 7.5, prob, sys3, 0.3).errP_L2
    assert a == pytest.approx(b, rel=1e-12)


def test_errors_invariant_under_renumbering():
    base = generate_uniform(4)
    rng = np.random.default_rng(2)
    vperm = rng.permutation(len(base.vertices))
    inv = np.argsort(vperm)
    tris = inv[base.triangles][rng.permutation(len(base.triangles))]
    tris = np.roll(tris, 1, axis=1)  # rotate local numbering, keeps orientation
    other = Mesh(base.vertices[vperm], tris)
    prob = get_problem("convergence", 1.0)
    out = []
    for mesh in (base, other):
        sys = FeSystem(barycentric_refine(mesh))
        U = interpolate_velocity(prob.velocity, sys, 0.5)
        P = interpolate_pressure(prob.pressure, sys, 0.5)
        out.append(compute_errors(U, P, prob, sys, 0.5))
    for key in ("errU_L2", "errU_H1", "errP_L2"):
        assert getattr(out[0], key) == pytest.approx(getattr(out[1], key), rel=1e-11)


def test_max_velocity_magnitude(sys3):
    prob = get_problem("robustness", 1.0)
    U = interpolate_velocity(prob.velocity, sys3, 0.0)
    # |(y^2, x^2)| peaks at the corner (1, 1)
    assert max_velocity_magnitude(U, sys3) == pytest.approx(np.sqrt(2), rel=1e-14)


# ---------------------------------------------------------------- stab norm


def continuous_history(sys, n=4, seed=5):
    rng = np.random.default_rng(seed)
    nodes = rng.normal(size=(n + 1, sys.n_vel))
    nodes[:, sys.boundary_dofs] = 0.0
    return [SlabState(k, 0.1 * k, 0.1 * (k + 1), nodes[k], nodes[k + 1], None, None, None) for k in range(n)]


def test_time_component_for_continuous_history(sys3):
    states = continuous_history(sys3)
    M = mass_matrix(sys3)
    comps = stab_norm_components(states, sys3, StabParams(1e-3))
    expect = 0.5 * (states[-1].U_b @ M @ states[-1].U_b + states[0].U_a @ M @ states[0].U_a)
    assert comps["time"] == pytest.approx(expect, rel=1e-12)
    assert all(v >= 0 for v in comps.values())


def test_stab_components_vanish_without_constants(sys3):
    states = continuous_history(sys3)
    comps = stab_norm_components(states, sys3, StabParams(1e-3, c_E=0.0, c_hat=0.0))
    assert comps["curl_residual"] == 0.0 and comps["edge_jump"] == 0.0
    assert comps["viscous"] > 0


def test_edge_component_scales_with_c_hat(sys3):
    states = continuous_history(sys3)
    a = stab_norm_components(states, sys3, StabParams(1e-3, c_hat=1e-2))["edge_jump"]
    b = stab_norm_components(states, sys3, StabParams(1e-3, c_hat=3e-2))["edge_jump"]
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_edge_component_invariant_under_normal_flip(sys3):
    flipped = FeSystem(sys3.mesh.with_flipped_normals())
    states = continuous_history(sys3)
    a = stab_norm_components(states, sys3, StabParams(1e-3))
    b = stab_norm_components(states, flipped, StabParams(1e-3))
    assert a["edge_jump"] == pytest.approx(b["edge_jump"], rel=1e-13)


def test_dg_identity_on_computed_run(sys3):
    prob = get_problem("convergence", 1e-3)
    res = march(TimeGrid(0.5, 0.125), prob, SolveConfig(), sys3, keep_states=True)
    lhs, rhs = dg_time_identity(res.states, mass_matrix(sys3))
    assert abs(lhs - rhs) <= 1e-12 * rhs


def test_stab_norm_of_empty_history(sys3):
    assert set(stab_norm_components([], sys3, StabParams(1.0)).values()) == {0.0}


# ---------------------------------------------------------------- rates


def test_convergence_table_recovers_synthetic_rates():
    hs = [0.4, 0.2, 0.1, 0.05]
    runs = [{"h": h, "errU_L2": 3 * h**3, "errU_H1": h**2.5, "errP_L2": 0.0} for h in hs]
    table = convergence_table(runs)
    assert table[0] == {"errU_L2": None, "errU_H1": None, "errP_L2": None}
    for row in table[1:]:
        assert row["errU_L2"] == pytest.approx(3.0, abs=1e-12)
        assert row["errU_H1"] == pytest.approx(2.5, abs=1e-12)
        assert row["errP_L2"] is None


def test_rate_edge_cases():
    assert observed_rate(1.0, 0.125, 0.2, 0.1) == pytest.approx(3.0)
    assert observed_rate(1.0, 1.0, 0.1, 0.1) is None
    with pytest.raises(ValueError, match="two"):
        convergence_table([{"h": 0.1, "errU_L2": 1.0, "errU_H1": 1.0, "errP_L2": 1.0}])


# ---------------------------------------------------------------- sparsity


def test_sparsity_of_diagonal_matrix():
    st = sparsity_stats(sp.identity(10, format="csc"), n_border=0)
    assert (st.size, st.nnz, st.multiplier_nnz) == (10, 10, 0)
    assert st.density == pytest.approx(10.0)
    assert "nnz 10" in st.as_text()


def test_sparsity_border_counted_apart():
    A = sp.bmat([[sp.identity(4), sp.csc_matrix(np.ones((4, 1)))], [sp.csc_matrix(np.ones((1, 4))), None]])
    st = sparsity_stats(A, n_border=1)
    assert (st.size, st.nnz, st.multiplier_nnz) == (4, 4, 8)


def test_stabilization_adds_nonzeros():
    sys = FeSystem(benchmark_mesh(1))
    prob = get_problem("convergence", 1e-3)
    U = interpolate_velocity(prob.initial_velocity, sys)
    bc = np.zeros(sys.n_vel)
    nnz = {}
    for stab in (True, False):
        asm = SlabAssembler(sys, StabParams(1e-3), 0.25, stabilized=stab)
        nnz[stab] = sparsity_stats(asm.assemble(U, U, U, 0.0, bc, bc, forcing=prob.forcing)).nnz
    assert 1.1 <= nnz[True] / nnz[False] <= 1.6
