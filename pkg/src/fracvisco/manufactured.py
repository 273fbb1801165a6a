"""Separable manufactured solutions w(x, y, t) = g(t) * Phi(x, y).

Each case carries the time factor g as a sum of powers of t, the spatial
profile Phi with its derivatives, and the material.  The body force that
makes w solve the model problem is

    f = rho g'(t) Phi - G(t) [ mu_hat Lap(Phi) + (mu_hat + lambda_hat) grad(div Phi) ]

where G = I^{1-alpha} g is available in closed form for power sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import Material
from .fracquad import rl_integral_power


@dataclass(frozen=True)
class PowerSum:
    """g(t) = sum of c * t^p over (c, p) pairs with p > 0.

    Positive exponents guarantee g(0) = 0, so the exact solution starts
    from rest.  Derivatives of terms with p < 1 blow up at t = 0; the
    shipped cases use p >= 1 only.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(c), float(p)) for c, p in self.terms)
        if not terms:
            raise ValueError("power sum needs at least one term")
        for _c, p in terms:
            if p <= 0.0:
                raise ValueError(f"exponents must be positive, got {p}")
        object.__setattr__(self, "terms", terms)

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        return sum(c * t ** p for c, p in self.terms)

    def deriv(self, t):
        t = np.asarray(t, dtype=np.float64)
        return sum(c * p * t ** (p - 1.0) for c, p in self.terms)

    def frac_integral(self, alpha: float, t: float) -> float:
        """G(t) = (I^{1-alpha} g)(t), exactly, term by term."""
        return sum(c * rl_integral_power(alpha, p, t) for c, p in self.terms)

    def third_derivative_bounded(self) -> bool:
        """True when g''' stays bounded on closed intervals [0, T]."""
        return all(p >= 3.0 or p == int(p) for _c, p in self.terms)


@dataclass(frozen=True)
class SpatialField:
    """Vector profile Phi with the derivatives the forcing needs.

    value : (x, y) -> (..., 2)
    grad : (x, y) -> (..., 2, 2), [i, j] = d Phi_i / d x_j
    laplacian : (x, y) -> (..., 2), componentwise Laplacian
    grad_div : (x, y) -> (..., 2), gradient of div Phi
    """

    value: object
    grad: object
    laplacian: object
    grad_div: object


def sine_bubble_field() -> SpatialField:
    """The standard test profile (sin(pi x) sin(pi y), x y (1-x)(1-y)).

    Vanishes on the whole boundary of the unit square; first component is
    trigonometric, second polynomial.
    """
    pi = np.pi

    def value(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return np.stack([np.sin(pi * x) * np.sin(pi * y),
                         x * y * (1.0 - x) * (1.0 - y)], axis=-1)

    def grad(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        g = np.empty(x.shape + (2, 2))
        g[..., 0, 0] = pi * np.cos(pi * x) * np.sin(pi * y)
        g[..., 0, 1] = pi * np.sin(pi * x) * np.cos(pi * y)
        g[..., 1, 0] = (1.0 - 2.0 * x) * y * (1.0 - y)
        g[..., 1, 1] = x * (1.0 - x) * (1.0 - 2.0 * y)
        return g

    def laplacian(x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return np.stack([-2.0 * pi ** 2 * np.sin(pi * x) * np.sin(pi * y),
                         -2.0 * y * (1.0 - y) - 2.0 * x * (1.0 - x)], axis=-1)

    def grad_div(x, y):
        # div Phi = pi cos(pi x) sin(pi y) + x(1-x)(1-2y)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return np.stack([-pi ** 2 * np.sin(pi * x) * np.sin(pi * y)
                         + (1.0 - 2.0 * x) * (1.0 - 2.0 * y),
                         pi ** 2 * np.cos(pi * x) * np.cos(pi * y)
                         - 2.0 * x * (1.0 - x)], axis=-1)

    return SpatialField(value=value, grad=grad, laplacian=laplacian, grad_div=grad_div)


@dataclass(frozen=True)
class ManufacturedCase:
    """A closed-form solution of the model problem, with its data."""

    name: str
    g: PowerSum
    phi: SpatialField
    material: Material

    def velocity(self, x, y, t):
        """Exact velocity w(x, y, t); shape (..., 2)."""
        return np.asarray(self.g(t)) * self.phi.value(x, y)

    def velocity_gradient(self, x, y, t):
        """Spatial gradient of the exact velocity; shape (..., 2, 2)."""
        return np.asarray(self.g(t)) * self.phi.grad(x, y)

    def elastic_divergence(self, x, y):
        """div(D_hat eps(Phi)) = mu_hat Lap(Phi) + (mu_hat + lambda_hat) grad(div Phi)."""
        mu, lam = self.material.mu_hat, self.material.lambda_hat
        return mu * self.phi.laplacian(x, y) + (mu + lam) * self.phi.grad_div(x, y)

    def time_factor_integral(self, t: float) -> float:
        """G(t) = (I^{1-alpha} g)(t)."""
        return self.g.frac_integral(self.material.alpha, t)

    def forcing(self, x, y, t):
        """Body force making the case solve the model problem; shape (..., 2)."""
        rho = self.material.rho
        return (rho * np.asarray(self.g.deriv(t)) * self.phi.value(x, y)
                - self.time_factor_integral(float(t)) * self.elastic_divergence(x, y))

    def force_terms(self):
        """Separable form of the forcing: list of (time factor, spatial field)."""
        rho = self.material.rho
        return [
            (lambda t: rho * float(self.g.deriv(t)), self.phi.value),
            (lambda t: -self.time_factor_integral(float(t)), self.elastic_divergence),
        ]

    @property
    def optimal_time_order(self) -> bool:
        """Whether the time error should be O(dt^2) rather than O(dt^(2-alpha)).

        Requires a bounded third derivative of g and zero initial
        acceleration (g'(0) = 0).
        """
        g1_at_0 = float(self.g.deriv(0.0))
        return self.g.third_derivative_bounded() and g1_at_0 == 0.0

    @property
    def expected_time_order(self) -> float:
        return 2.0 if self.optimal_time_order else 2.0 - self.material.alpha


def example1(alpha: float = 0.5, rho: float = 1.0, lambda_hat: float = 0.0,
             mu_hat: float = 0.5) -> ManufacturedCase:
    """Limited time regularity: g(t) = t + t^1.5 (third derivative blows up at 0)."""
    return ManufacturedCase(
        name="example1",
        g=PowerSum(terms=((1.0, 1.0), (1.0, 1.5))),
        phi=sine_bubble_field(),
        material=Material(rho=rho, lambda_hat=lambda_hat, mu_hat=mu_hat, alpha=alpha),
    )


def example2(alpha: float = 0.5, rho: float = 1.0, lambda_hat: float = 0.0,
             mu_hat: float = 0.5) -> ManufacturedCase:
    """Smooth in time: g(t) = t^3.5 (bounded third derivative, g'(0) = 0)."""
    return ManufacturedCase(
        name="example2",
        g=PowerSum(terms=((1.0, 3.5),)),
        phi=sine_bubble_field(),
        material=Material(rho=rho, lambda_hat=lambda_hat, mu_hat=mu_hat, alpha=alpha),
    )


def custom_case(name: str, terms, phi: SpatialField, material: Material) -> ManufacturedCase:
    """Assemble a case from arbitrary power-sum terms and a spatial profile."""
    return ManufacturedCase(name=name, g=PowerSum(terms=tuple(terms)),
                            phi=phi, material=material)
