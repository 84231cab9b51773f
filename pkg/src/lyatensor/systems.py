"""Built-in dynamical systems with analytic Jacobians."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ContractViolation, VectorField


@dataclass(frozen=True)
class SystemEntry:
    name: str
    dim: int
    defaults: dict
    factory: Callable[..., VectorField]
    y0: tuple
    window: tuple
    box_center: tuple
    box_halfwidth: tuple
    horizon: float
    description: str = ""

    def build(self, **params) -> VectorField:
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise ContractViolation(f"{self.name}: unknown parameter(s) {sorted(unknown)}")
        merged = {**self.defaults, **{k: float(v) for k, v in params.items()}}
        return self.factory(**merged)

    def sample_box(self, rng: np.random.Generator, n: int) -> np.ndarray:
        c = np.asarray(self.box_center, dtype=float)
        w = np.asarray(self.box_halfwidth, dtype=float)
        return c + w * rng.uniform(-1.0, 1.0, size=(n, self.dim))


def scalar(a: float = -1.0) -> VectorField:
    return VectorField(
        1,
        lambda t, y: a * np.asarray(y, dtype=float),
        lambda t, y: np.array([[a]]),
        name=f"scalar(a={a})",
        hessian_fn=lambda t, y: np.zeros((1, 1, 1)),
    )


def linear(A) -> VectorField:
    A = np.array(A, dtype=float)
    n = A.shape[0]
    return VectorField(n, lambda t, y: A @ np.asarray(y, dtype=float), lambda t, y: A, name="linear",
                       hessian_fn=lambda t, y: np.zeros((n, n, n)))


def linear2d(a11: float = -0.3, a12: float = 2.0, a21: float = -0.5, a22: float = -0.3) -> VectorField:
    A = np.array([[a11, a12], [a21, a22]])
    vf = linear(A)
    return VectorField(2, vf.eval, vf.jacobian_fn, name=f"linear2d({a11},{a12},{a21},{a22})",
                       hessian_fn=vf.hessian_fn)


def damped_oscillator(delta: float = 0.2, omega: float = 1.0, kappa: float = 0.1) -> VectorField:
    """Rotating oscillator with linear damping and cubic damping on the second coordinate."""

    def f(t, y):
        return np.array([
            -delta * y[0] + omega * y[1],
            -omega * y[0] - delta * y[1] - kappa * y[1] ** 3,
        ])

    def jac(t, y):
        return np.array([[-delta, omega], [-omega, -delta - 3.0 * kappa * y[1] ** 2]])

    def hes(t, y):
        h = np.zeros((2, 2, 2))
        h[1, 1, 1] = -6.0 * kappa * y[1]
        return h

    return VectorField(2, f, jac, name=f"damped_oscillator({delta},{omega},{kappa})", hessian_fn=hes)


def vanderpol(mu: float = 1.0) -> VectorField:
    def f(t, y):
        return np.array([y[1], mu * (1.0 - y[0] ** 2) * y[1] - y[0]])

    def jac(t, y):
        return np.array([[0.0, 1.0], [-2.0 * mu * y[0] * y[1] - 1.0, mu * (1.0 - y[0] ** 2)]])

    def hes(t, y):
        h = np.zeros((2, 2, 2))
        h[1, 0, 0] = -2.0 * mu * y[1]
        h[1, 0, 1] = h[1, 1, 0] = -2.0 * mu * y[0]
        return h

    return VectorField(2, f, jac, name=f"vanderpol({mu})", hessian_fn=hes)


def lorenz(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> VectorField:
    def f(t, y):
        x, u, z = y
        return np.array([sigma * (u - x), rho * x - u - x * z, x * u - beta * z])

    def jac(t, y):
        x, u, z = y
        return np.array([[-sigma, sigma, 0.0], [rho - z, -1.0, -x], [u, x, -beta]])

    def hes(t, y):
        h = np.zeros((3, 3, 3))
        h[1, 0, 2] = h[1, 2, 0] = -1.0
        h[2, 0, 1] = h[2, 1, 0] = 1.0
        return h

    return VectorField(3, f, jac, name=f"lorenz({sigma},{rho},{beta})", hessian_fn=hes)


def zero_field(dim: int) -> VectorField:
    """gamma = d/dt: every point is an equilibrium."""
    return VectorField(dim, lambda t, y: np.zeros(dim), lambda t, y: np.zeros((dim, dim)), name="zero",
                       hessian_fn=lambda t, y: np.zeros((dim, dim, dim)))


REGISTRY: dict[str, SystemEntry] = {
    "scalar": SystemEntry(
        "scalar", 1, {"a": -1.0}, scalar, (1.0,), (0.0, 10.0), (0.0,), (2.0,), 20.0,
        "y' = a y",
    ),
    "linear2d": SystemEntry(
        "linear2d", 2, {"a11": -0.3, "a12": 2.0, "a21": -0.5, "a22": -0.3}, linear2d,
        (1.0, 0.0), (0.0, 10.0), (0.0, 0.0), (2.0, 2.0), 20.0,
        "y' = A y with A = [[a11, a12], [a21, a22]]",
    ),
    "damped_oscillator": SystemEntry(
        "damped_oscillator", 2, {"delta": 0.2, "omega": 1.0, "kappa": 0.1}, damped_oscillator,
        (1.0, 0.0), (0.0, 10.0), (0.0, 0.0), (2.0, 2.0), 20.0,
        "y1' = -delta y1 + omega y2, y2' = -omega y1 - delta y2 - kappa y2^3",
    ),
    "vanderpol": SystemEntry(
        "vanderpol", 2, {"mu": 1.0}, vanderpol, (2.0, 0.0), (0.0, 5.0), (0.0, 0.0), (2.5, 2.5),
        100.0, "x'' - mu (1 - x^2) x' + x = 0",
    ),
    "lorenz": SystemEntry(
        "lorenz", 3, {"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0}, lorenz,
        (1.0, 1.0, 1.0), (0.0, 0.5), (0.0, 0.0, 25.0), (15.0, 20.0, 20.0), 500.0,
        "Lorenz equations",
    ),
}


def get_system(name: str) -> SystemEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ContractViolation(f"unknown system {name!r}; known: {sorted(REGISTRY)}") from None
