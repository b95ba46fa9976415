"""Benchmark problems with closed-form solutions.

The momentum equation is taken in the form

    u_t - nu div eps(u) + (grad u) u - grad p = f,    div u = 0,

so ``nu`` is twice the usual kinematic viscosity and the pressure sign is
flipped. Each benchmark velocity is ``a(t) g(x, y)`` with every component of
``g`` a sum of products ``c * X(x) * Y(y)`` of one-dimensional functions whose
first three derivatives are written out by hand; ``f`` and ``curl f`` are
assembled from those derivatives.
"""

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi
PROBLEM_NAMES = ("convergence", "robustness", "lattice")


@dataclass(frozen=True)
class Factor:
    """A 1D function and its first three derivatives."""

    derivs: tuple

    def __call__(self, x, k=0):
        return self.derivs[k](x)


def _const(c):
    return Factor((lambda x: np.full_like(x, c), lambda x: np.zeros_like(x), lambda x: np.zeros_like(x), lambda x: np.zeros_like(x)))


def _power(p):
    def d(k):
        if k > p:
            return lambda x: np.zeros_like(x)
        coef = float(np.prod(range(p - k + 1, p + 1)) if k else 1.0)
        return lambda x: coef * x ** (p - k)

    return Factor(tuple(d(k) for k in range(4)))


def _sin(w, shift=0.0):
    """sin(w (x - shift)) and derivatives."""
    return Factor(
        (
            lambda x: np.sin(w * (x - shift)),
            lambda x: w * np.cos(w * (x - shift)),
            lambda x: -(w**2) * np.sin(w * (x - shift)),
            lambda x: -(w**3) * np.cos(w * (x - shift)),
        )
    )


def _cos(w, shift=0.0, offset=0.0):
    """offset + cos(w (x - shift)) and derivatives."""
    return Factor(
        (
            lambda x: offset + np.cos(w * (x - shift)),
            lambda x: -w * np.sin(w * (x - shift)),
            lambda x: -(w**2) * np.cos(w * (x - shift)),
            lambda x: w**3 * np.sin(w * (x - shift)),
        )
    )


class SeparableField:
    """Vector field whose components are sums of ``c * X(x) * Y(y)`` terms."""

    def __init__(self, components):
        self.components = components  # [[(c, X, Y), ...], [...]]

    def derivative(self, pts, nx, ny):
        """d^{nx+ny} g / dx^nx dy^ny at points (n, 2) -> (n, 2)."""
        x, y = pts[:, 0], pts[:, 1]
        out = np.zeros((len(pts), 2))
        for i, terms in enumerate(self.components):
            for c, X, Y in terms:
                out[:, i] += c * X(x, nx) * Y(y, ny)
        return out

    def value(self, pts):
        return self.derivative(pts, 0, 0)

    def tensor(self, pts, order):
        """All derivatives of the given order as (n, 2, 2, ..., 2); axis 1 is the component."""
        shape = (len(pts), 2) + (2,) * order
        out = np.empty(shape)
        for idx in np.ndindex(*(2,) * order):
            nx = sum(1 for d in idx if d == 0)
            out[(slice(None), slice(None)) + idx] = self.derivative(pts, nx, order - nx)
        return out


def _viscous(grad2, grad3=None):
    """div eps(g), and optionally its gradient, from derivative tensors.

    div eps(g)_i = 1/2 (lap g_i + d_i div g).
    """
    lap = grad2[:, :, 0, 0] + grad2[:, :, 1, 1]
    graddiv = grad2[:, 0, 0, :] + grad2[:, 1, 1, :]
    v = 0.5 * (lap + graddiv)
    if grad3 is None:
        return v
    # d_k of the above: (n, i, k)
    dlap = grad3[:, :, 0, 0, :] + grad3[:, :, 1, 1, :]
    dgraddiv = grad3[:, 0, 0, :, :] + grad3[:, 1, 1, :, :]
    return v, 0.5 * (dlap + dgraddiv)


def _curl_of_gradient(dv):
    """curl of a vector field from its gradient (n, i, k) = d_k v_i."""
    return dv[:, 1, 0] - dv[:, 0, 1]


@dataclass
class ManufacturedProblem:
    """Exact solution and data of one benchmark.

    Callables take points (n, 2) and a time ``t``.
    """

    name: str
    nu: float
    T: float
    shape: SeparableField
    amplitude: Callable  # a(t)
    amplitude_rate: Callable  # a'(t)
    pressure_shape: Callable  # q(pts) -> (n,)
    pressure_shape_grad: Callable  # grad q(pts) -> (n, 2)
    pressure_amplitude: Callable  # b(t)
    forcing_is_zero: bool = False

    def velocity(self, pts, t):
        return self.amplitude(t) * self.shape.value(pts)

    def velocity_grad(self, pts, t):
        return self.amplitude(t) * self.shape.tensor(pts, 1)

    def pressure(self, pts, t):
        return self.pressure_amplitude(t) * self.pressure_shape(pts)

    def pressure_grad(self, pts, t):
        return self.pressure_amplitude(t) * self.pressure_shape_grad(pts)

    def dirichlet(self, pts, t):
        return self.velocity(pts, t)

    def initial_velocity(self, pts):
        return self.velocity(pts, 0.0)

    def forcing(self, pts, t):
        if self.forcing_is_zero:
            return np.zeros((len(pts), 2))
        a, da = self.amplitude(t), self.amplitude_rate(t)
        g = self.shape.value(pts)
        dg = self.shape.tensor(pts, 1)
        visc = _viscous(self.shape.tensor(pts, 2))
        conv = np.einsum("nij,nj->ni", dg, g)
        return da * g - self.nu * a * visc + a * a * conv - self.pressure_grad(pts, t)

    def curl_forcing(self, pts, t):
        if self.forcing_is_zero:
            return np.zeros(len(pts))
        a, da = self.amplitude(t), self.amplitude_rate(t)
        g = self.shape.value(pts)
        dg = self.shape.tensor(pts, 1)
        d2g = self.shape.tensor(pts, 2)
        _, dvisc = _viscous(d2g, self.shape.tensor(pts, 3))
        # d_k [(grad g) g]_i = sum_j d_k d_j g_i g_j + d_j g_i d_k g_j
        dconv = np.einsum("nijk,nj->nik", d2g, g) + np.einsum("nij,njk->nik", dg, dg)
        return da * _curl_of_gradient(dg) - self.nu * a * _curl_of_gradient(dvisc) + a * a * _curl_of_gradient(dconv)


def convergence_problem(nu):
    """Trigonometric vortex with cos(t) amplitude, homogeneous boundary data, T = 1."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    # 0.5 cos^2(X) cos(Y) sin(Y) = (1/8) (1 + cos 2X) sin 2Y with X = pi (x - 1/2)
    A = _cos(2 * PI, 0.5, offset=1.0)
    B = _sin(2 * PI, 0.5)
    shape = SeparableField([[(-0.125, A, B)], [(0.125, B, A)]])

    def q(pts):
        return np.sin(PI * (pts[:, 0] - 0.5)) - np.sin(PI * (pts[:, 1] - 0.5))

    def dq(pts):
        return np.column_stack([PI * np.cos(PI * (pts[:, 0] - 0.5)), -PI * np.cos(PI * (pts[:, 1] - 0.5))])

    return ManufacturedProblem("convergence", nu, 1.0, shape, np.cos, lambda t: -np.sin(t), q, dq, np.cos)


def robustness_problem(nu):
    """Quadratic velocity (y^2, x^2)(t + 1) with a cubic-in-time pressure, T = 1."""
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    one = _const(1.0)
    shape = SeparableField([[(1.0, one, _power(2))], [(1.0, _power(2), one)]])

    def q(pts):
        x, y = pts[:, 0], pts[:, 1]
        return x * x * y + y**3 - 5.0 / 12.0

    def dq(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([2 * x * y, x * x + 3 * y * y])

    return ManufacturedProblem(
        "robustness", nu, 1.0, shape, lambda t: t + 1.0, lambda t: 1.0, q, dq, lambda t: t**3 - t + 1.0
    )


def lattice_vortex(nu=1e-5, T=10.0, check=True):
    """Lattice of counter-rotating vortices decaying like exp(-8 nu pi^2 t).

    With the doubled viscosity the exact solution has forcing
    ``f = -4 nu pi^2 u`` rather than zero; this closed form (which the
    finite-difference check reproduces) is used, with a warning when
    ``check`` is set.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    w = 2 * PI
    shape = SeparableField([[(1.0, _sin(w), _sin(w))], [(1.0, _cos(w), _cos(w))]])
    rate = -8.0 * nu * PI**2

    def q(pts):
        return 0.5 * (np.sin(w * pts[:, 0]) ** 2 + np.cos(w * pts[:, 1]) ** 2)

    def dq(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.column_stack([0.5 * w * np.sin(2 * w * x), -0.5 * w * np.sin(2 * w * y)])

    prob = ManufacturedProblem(
        "lattice", nu, T, shape, lambda t: np.exp(rate * t), lambda t: rate * np.exp(rate * t), q, dq, lambda t: np.exp(2 * rate * t)
    )
    if check:
        probe = np.array([[0.1, 0.2], [0.37, 0.81], [0.66, 0.45]])
        resid = np.abs(prob.forcing(probe, 0.0)).max()
        if resid > 1e-6:
            warnings.warn(
                f"lattice vortex: strong residual with f = 0 is {resid:.2e}; using the consistent forcing -4 nu pi^2 u",
                stacklevel=2,
            )
    return prob


def get_problem(name, nu=None, **kwargs):
    if name == "convergence":
        return convergence_problem(1.0 if nu is None else nu)
    if name == "robustness":
        return robustness_problem(1.0 if nu is None else nu)
    if name == "lattice":
        return lattice_vortex(1e-5 if nu is None else nu, **kwargs)
    raise ValueError(f"unknown problem {name!r}; valid names: {', '.join(PROBLEM_NAMES)}")
