"""Polynomial potentials and standard-form Hamiltonians H = p^2/2m + V(q).

Phase points are ordered ``r = (p, q)`` everywhere in the package.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = [
    "PhasePoint",
    "PolynomialPotential",
    "potential_eval",
    "hamiltonian",
    "wedge",
    "CUBIC_WELL",
]


@dataclass(frozen=True)
class PhasePoint:
    p: float
    q: float

    def __post_init__(self):
        if not (np.isfinite(self.p) and np.isfinite(self.q)):
            raise ValidationError(f"phase point must be finite, got ({self.p}, {self.q})")

    def as_array(self):
        return np.array([self.p, self.q], dtype=float)

    @classmethod
    def from_array(cls, r):
        return cls(float(r[0]), float(r[1]))


@dataclass(frozen=True)
class PolynomialPotential:
    """V(q) = sum_k c_k q^k with particle mass m."""

    coefficients: tuple
    mass: float = 1.0
    _derivs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = tuple(float(x) for x in self.coefficients)
        if len(c) == 0:
            raise ValidationError("potential needs at least one coefficient")
        if not all(np.isfinite(c)):
            raise ValidationError("potential coefficients must be finite")
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ValidationError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "mass", float(self.mass))
        # Coefficient arrays of V, V', V'', V''' (ascending powers).
        derivs = [np.array(c)]
        for _ in range(3):
            d = np.polynomial.polynomial.polyder(derivs[-1]) if len(derivs[-1]) > 1 else np.zeros(1)
            derivs.append(np.atleast_1d(d))
        object.__setattr__(self, "_derivs", tuple(derivs))

    @property
    def degree(self):
        return len(self.coefficients) - 1

    def derivative_coefficients(self, order):
        _check_order(order)
        return self._derivs[order]

    def __call__(self, q, order=0):
        _check_order(order)
        return np.polynomial.polynomial.polyval(q, self._derivs[order])

    def kernel_coefficients(self):
        """Coefficient array padded to degree >= 3, for the compiled kernels."""
        c = np.zeros(max(4, len(self.coefficients)))
        c[: len(self.coefficients)] = self.coefficients
        return c


def _check_order(order):
    if order not in (0, 1, 2, 3):
        raise ValidationError(f"derivative order must be in 0..3, got {order!r}")


def potential_eval(pot, q, order=0):
    """Exact ``d^order V / dq^order`` at ``q`` (scalar or array)."""
    return pot(q, order)


def hamiltonian(pot, r):
    """p^2/2m + V(q) for a PhasePoint or an array whose last axis is (p, q)."""
    if isinstance(r, PhasePoint):
        p, q = r.p, r.q
    else:
        r = np.asarray(r, dtype=float)
        p, q = r[..., 0], r[..., 1]
    return p * p / (2.0 * pot.mass) + pot(q)


def wedge(a, b):
    """Symplectic product a^b = a_q b_p - a_p b_q for (p, q)-ordered vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 1] * b[..., 0] - a[..., 0] * b[..., 1]


CUBIC_WELL = PolynomialPotential((0.0, -0.69, 0.0, 0.329), mass=1.0)
