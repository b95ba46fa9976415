"""Closed-form data of the benchmarks checked against finite differences of the exact fields."""

import warnings

import numpy as np
import pytest

from svdg.problems import PROBLEM_NAMES, get_problem, lattice_vortex

H1 = 1e-5  # first derivatives
H2 = 1e-4  # second derivatives


def fd_forcing(prob, pts, t):
    """u_t - nu div eps(u) + (grad u) u - grad p from central differences of u and p only."""
    u = prob.velocity
    e = np.eye(2)
    ut = (u(pts, t + H1) - u(pts, t - H1)) / (2 * H1)
    grad = np.stack([(u(pts + H1 * e[k], t) - u(pts - H1 * e[k], t)) / (2 * H1) for k in range(2)], axis=2)

    def d2(i, j):
        a, b = H2 * e[i], H2 * e[j]
        return (u(pts + a + b, t) - u(pts + a - b, t) - u(pts - a + b, t) + u(pts - a - b, t)) / (4 * H2 * H2)

    D = [[d2(i, j) for j in range(2)] for i in range(2)]
    lap = D[0][0] + D[1][1]
    # div eps(u)_k = 1/2 (lap u_k + d_k div u)
    div_eps = 0.5 * np.column_stack([lap[:, k] + D[k][0][:, 0] + D[k][1][:, 1] for k in range(2)])
    conv = np.einsum("nij,nj->ni", grad, u(pts, t))
    p = prob.pressure
    gp = np.column_stack([(p(pts + H1 * e[k], t) - p(pts - H1 * e[k], t)) / (2 * H1) for k in range(2)])
    return ut - prob.nu * div_eps + conv - gp


def fd_curl(f, pts, t):
    e = np.eye(2)
    dx = (f(pts + H1 * e[0], t) - f(pts - H1 * e[0], t)) / (2 * H1)
    dy = (f(pts + H1 * e[1], t) - f(pts - H1 * e[1], t)) / (2 * H1)
    return dx[:, 1] - dy[:, 0]


def within(value, oracle):
    return np.all(np.abs(value - oracle) <= 1e-6 * np.maximum(1.0, np.abs(oracle)))


CASES = [("convergence", 1.0), ("convergence", 1e-11), ("robustness", 1.0), ("robustness", 1e-7), ("lattice", 1e-5), ("lattice", 1e-2)]


@pytest.fixture(scope="module")
def samples():
    rng = np.random.default_rng(12)
    pts = rng.uniform(0.05, 0.95, size=(20, 2))
    ts = rng.uniform(0.1, 0.9, size=20)
    return pts, ts


def _problem(name, nu):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return get_problem(name, nu)


@pytest.mark.parametrize("name,nu", CASES)
def test_forcing_matches_fd_oracle(name, nu, samples):
    prob = _problem(name, nu)
    pts, ts = samples
    for x, t in zip(pts, ts):
        x = x[None]
        assert within(prob.forcing(x, t), fd_forcing(prob, x, t))


@pytest.mark.parametrize("name,nu", CASES)
def test_curl_forcing_matches_fd_oracle(name, nu, samples):
    prob = _problem(name, nu)
    pts, ts = samples
    for x, t in zip(pts, ts):
        x = x[None]
        assert within(prob.curl_forcing(x, t), fd_curl(prob.forcing, x, t))


@pytest.mark.parametrize("name", PROBLEM_NAMES)
def test_exact_velocity_is_divergence_free(name, samples):
    prob = _problem(name, 1e-3)
    pts, ts = samples
    for t in ts[:5]:
        g = prob.velocity_grad(pts, t)
        assert np.allclose(g[:, 0, 0] + g[:, 1, 1], 0.0, atol=1e-13)
        e = np.eye(2)
        fd = np.stack([(prob.velocity(pts + H1 * e[k], t) - prob.velocity(pts - H1 * e[k], t)) / (2 * H1) for k in range(2)], axis=2)
        assert np.allclose(g, fd, atol=1e-8)


def test_convergence_velocity_vanishes_on_boundary():
    prob = _problem("convergence", 1.0)
    s = np.linspace(0, 1, 11)
    edges = np.vstack([np.column_stack([s, 0 * s]), np.column_stack([s, 0 * s + 1]), np.column_stack([0 * s, s]), np.column_stack([0 * s + 1, s])])
    assert np.abs(prob.dirichlet(edges, 0.3)).max() <= 1e-15


def test_convergence_problem_values():
    prob = _problem("convergence", 1.0)
    x = np.array([[0.25, 0.6]])
    X, Y = np.pi * (x[0, 0] - 0.5), np.pi * (x[0, 1] - 0.5)
    expect = 0.5 * np.array([-np.cos(X) ** 2 * np.cos(Y) * np.sin(Y), np.cos(Y) ** 2 * np.cos(X) * np.sin(X)]) * np.cos(0.4)
    assert np.allclose(prob.velocity(x, 0.4)[0], expect, rtol=1e-14)
    assert prob.pressure(x, 0.4)[0] == pytest.approx((np.sin(X) - np.sin(Y)) * np.cos(0.4), rel=1e-14)


def test_robustness_problem_values():
    prob = _problem("robustness", 1e-3)
    x = np.array([[0.3, 0.7]])
    assert np.allclose(prob.velocity(x, 0.5)[0], [0.7**2 * 1.5, 0.3**2 * 1.5])
    assert prob.pressure(x, 0.5)[0] == pytest.approx((0.09 * 0.7 + 0.343 - 5 / 12) * (0.125 - 0.5 + 1))


def test_robustness_pressure_has_zero_mean():
    from svdg.quadrature import gauss_rule

    g = gauss_rule(4)
    X, Y = np.meshgrid(g.points, g.points)
    W = np.outer(g.weights, g.weights)
    p = _problem("robustness", 1.0).pressure(np.column_stack([X.ravel(), Y.ravel()]), 0.7)
    assert abs(np.sum(W.ravel() * p)) <= 1e-15


def test_lattice_amplitude_and_bound():
    prob = lattice_vortex(1e-5, check=False)
    x = np.random.default_rng(1).uniform(size=(200, 2))
    assert np.all(np.linalg.norm(prob.velocity(x, 0.0), axis=1) <= 1.0 + 1e-15)
    assert prob.amplitude(10.0) == pytest.approx(np.exp(-8e-5 * np.pi**2 * 10.0), rel=1e-14)
    assert prob.amplitude(10.0) == pytest.approx(0.99213, abs=1e-5)


def test_lattice_forcing_is_not_zero_and_is_warned():
    with pytest.warns(UserWarning, match="consistent forcing"):
        prob = lattice_vortex(1e-5)
    x = np.array([[0.1, 0.2]])
    # with the doubled viscosity the exact field needs f = -4 nu pi^2 u
    assert np.allclose(prob.forcing(x, 1.0), -4e-5 * np.pi**2 * prob.velocity(x, 1.0), rtol=1e-10)


def test_invalid_inputs():
    with pytest.raises(ValueError, match="valid names"):
        get_problem("cavity")
    with pytest.raises(ValueError):
        get_problem("convergence", 0.0)
