"""Rectangular phase-space grids and sampled fields.

Values are stored with shape ``(np, nq)`` and sampled at cell centres
``p_i = p_min + (i + 1/2) dp``.  The frame tag distinguishes absolute
phase-space coordinates from local (scaled, co-moving) ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

__all__ = ["GridSpec", "PhaseSpaceField", "centered_grid"]


@dataclass(frozen=True)
class GridSpec:
    p_range: tuple
    q_range: tuple
    np: int
    nq: int

    def __post_init__(self):
        pr = tuple(float(x) for x in self.p_range)
        qr = tuple(float(x) for x in self.q_range)
        object.__setattr__(self, "p_range", pr)
        object.__setattr__(self, "q_range", qr)
        if not all(np.isfinite(pr + qr)):
            raise ValidationError("grid ranges must be finite")
        if int(self.np) < 1 or int(self.nq) < 1:
            raise ValidationError("grid counts must be positive")
        object.__setattr__(self, "np", int(self.np))
        object.__setattr__(self, "nq", int(self.nq))
        if not (pr[1] > pr[0] and qr[1] > qr[0]):
            raise ValidationError(f"empty grid range p={pr} q={qr}")

    @property
    def dp(self):
        return (self.p_range[1] - self.p_range[0]) / self.np

    @property
    def dq(self):
        return (self.q_range[1] - self.q_range[0]) / self.nq

    @property
    def cell_area(self):
        return self.dp * self.dq

    @property
    def shape(self):
        return (self.np, self.nq)

    @property
    def p(self):
        return self.p_range[0] + (np.arange(self.np) + 0.5) * self.dp

    @property
    def q(self):
        return self.q_range[0] + (np.arange(self.nq) + 0.5) * self.dq

    def mesh(self):
        return np.meshgrid(self.p, self.q, indexing="ij")

    def cell_of(self, p, q):
        """Integer cell indices (ip, iq) containing the point; may be out of range."""
        ip = int(np.floor((p - self.p_range[0]) / self.dp))
        iq = int(np.floor((q - self.q_range[0]) / self.dq))
        return ip, iq

    def contains(self, p, q):
        ip, iq = self.cell_of(p, q)
        return 0 <= ip < self.np and 0 <= iq < self.nq

    def same_as(self, other, rtol=1e-12):
        return (self.shape == other.shape
                and np.allclose(self.p_range, other.p_range, rtol=rtol, atol=0)
                and np.allclose(self.q_range, other.q_range, rtol=rtol, atol=0))


def centered_grid(center, half_p, half_q, n_p, n_q=None):
    """Grid of ``n_p x n_q`` cells centred on ``center = (p, q)``."""
    n_q = n_p if n_q is None else n_q
    p0, q0 = center
    return GridSpec((p0 - half_p, p0 + half_p), (q0 - half_q, q0 + half_q), n_p, n_q)


@dataclass
class PhaseSpaceField:
    grid: GridSpec
    values: np.ndarray
    frame: str = "absolute"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValidationError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field values must be finite")

    # spec-facing aliases
    p_range = property(lambda self: self.grid.p_range)
    q_range = property(lambda self: self.grid.q_range)
    np = property(lambda self: self.grid.np)
    nq = property(lambda self: self.grid.nq)

    def integral(self):
        return float(self.values.sum() * self.grid.cell_area)

    def abs_integral(self):
        return float(np.abs(self.values).sum() * self.grid.cell_area)

    def argmax_abs(self):
        return tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(self.values)), self.values.shape))

    def l2(self):
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_area))

    def with_values(self, values, **meta):
        return PhaseSpaceField(self.grid, values, self.frame, {**self.meta, **meta})
