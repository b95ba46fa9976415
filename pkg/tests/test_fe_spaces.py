import numpy as np
import pytest

from svdg.fe_spaces import (
    FeSystem,
    divergence_norm,
    eval_basis,
    interpolate_pressure,
    interpolate_velocity,
    p2_gradients,
    p2_values,
    velocity_at_quadrature,
)
from svdg.mesh import Mesh, barycentric_refine, generate_uniform
from svdg.problems import lattice_vortex
from svdg.analysis import compute_errors


@pytest.fixture(scope="module")
def alfeld_square():
    # two base triangles -> six Alfeld sub-triangles
    return FeSystem(barycentric_refine(generate_uniform(1)))


def test_single_element_counts():
    sys = FeSystem(Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]])))
    assert (sys.n_vel, sys.n_prs) == (12, 3)


def test_refined_square_counts(alfeld_square):
    sys = alfeld_square
    assert (sys.n_vel, sys.n_prs) == (34, 18)
    assert len(sys.boundary_nodes) == 8
    assert len(sys.boundary_dofs) == 16


def test_basis_nodal_at_vertices_and_midpoints(alfeld_square):
    ref_nodes = [(0, 0), (1, 0), (0, 1), (0.5, 0.5), (0, 0.5), (0.5, 0)]
    for k, pt in enumerate(ref_nodes):
        b = eval_basis(alfeld_square, 2, pt)
        expect = np.zeros(6)
        expect[k] = 1.0
        assert np.allclose(b.values, expect, atol=1e-15)


def test_partition_of_unity_and_gradients(alfeld_square):
    rng = np.random.default_rng(0)
    for _ in range(5):
        xi, eta = rng.dirichlet([1, 1, 1])[1:]
        b = eval_basis(alfeld_square, 4, (xi, eta))
        assert b.values.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(b.gradients.sum(axis=0), 0.0, atol=1e-13)
        assert np.allclose(b.hessians.sum(axis=0), 0.0, atol=1e-12)


def test_eval_basis_rejects_outside_points(alfeld_square):
    with pytest.raises(ValueError):
        eval_basis(alfeld_square, 0, (0.8, 0.8))


def test_gradients_match_finite_differences():
    sys = FeSystem(Mesh(np.array([[0.1, 0.2], [0.9, 0.35], [0.3, 0.8]]), np.array([[0, 1, 2]])))
    x = np.array([[0.4, 0.45]])
    h = 1e-3  # central differences of a quadratic carry no truncation error

    def vals(p):
        return p2_values(sys.to_reference(0, p))[0]

    fd = np.column_stack([(vals(x + h * e) - vals(x - h * e)) / (2 * h) for e in np.eye(2)])
    grads = p2_gradients(sys.to_reference(0, x), sys.grad_lambda[:1])[0, 0]
    assert np.allclose(grads, fd, atol=1e-11)
    hess = np.stack(
        [np.column_stack([(vals(x + h * (a + b)) - vals(x + h * (a - b)) - vals(x - h * (a - b)) + vals(x - h * (a + b))) / (4 * h * h) for b in np.eye(2)]) for a in np.eye(2)],
        axis=1,
    )
    assert np.allclose(sys.hessians[0], hess, atol=1e-8)


def test_quadratic_fields_are_reproduced():
    sys = FeSystem(barycentric_refine(generate_uniform(3)))
    U = interpolate_velocity(lambda p: np.column_stack([p[:, 1] ** 2, p[:, 0] ** 2]), sys)
    vals, grads = velocity_at_quadrature(U, sys, 6)
    pts = sys.tabulate(6).points
    x, y = pts[..., 0], pts[..., 1]
    assert np.allclose(vals[..., 0], y**2, atol=1e-14)
    assert np.allclose(vals[..., 1], x**2, atol=1e-14)
    assert np.allclose(grads[..., 0, 1], 2 * y, atol=1e-13)
    assert np.allclose(grads[..., 1, 0], 2 * x, atol=1e-13)
    assert divergence_norm(U, sys) <= 1e-13


def test_divergence_norm_of_linear_field():
    sys = FeSystem(barycentric_refine(generate_uniform(2)))
    U = interpolate_velocity(lambda p: np.column_stack([p[:, 0], 0 * p[:, 0]]), sys)
    assert divergence_norm(U, sys) == pytest.approx(1.0, rel=1e-13)


def test_interpolation_rejects_nonfinite():
    sys = FeSystem(generate_uniform(1))
    with pytest.raises(ValueError, match="non-finite"):
        interpolate_velocity(lambda p: np.full((len(p), 2), np.nan), sys)
    with pytest.raises(ValueError):
        interpolate_velocity(lambda p: np.zeros((len(p), 3)), sys)


def test_pressure_interpolation_is_elementwise():
    sys = FeSystem(generate_uniform(2))
    P = interpolate_pressure(lambda p: p[:, 0] + 2 * p[:, 1], sys)
    corners = sys.mesh.vertices[sys.mesh.triangles].reshape(-1, 2)
    assert np.allclose(P, corners[:, 0] + 2 * corners[:, 1])


def test_lattice_interpolation_rate_is_three():
    prob = lattice_vortex(1e-5, check=False)
    errs, hs = [], []
    for n in (8, 16, 32):
        sys = FeSystem(barycentric_refine(generate_uniform(n)))
        U = interpolate_velocity(prob.initial_velocity, sys)
        P = interpolate_pressure(prob.pressure, sys, 0.0)
        errs.append(compute_errors(U, P, prob, sys, 0.0).errU_L2)
        hs.append(sys.mesh.h)
    rates = np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])
    assert np.all(np.abs(rates - 3.0) < 0.2)
