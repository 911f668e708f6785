"""Trajectory-pair (van Vleck) approximation of the Wigner propagator.

Pairs of classical trajectories ``r_{j+-}`` start at ``r' +- delta/2`` on a
polar seed grid.  Each pair contributes

    G_j(rbar'') = (4/h) * 2 cos(S_j/hbar - offset) / sqrt|det(M_{j+} - M_{j-})|

at its final midpoint ``rbar''``, where ``S_j`` is the symplectic-area
action accumulated along the pair and the offset is the fixed pi/2.  The scattered contributions are
classified into the two sheets of the midpoint map (extrema and saddles of
the action, told apart by the sign of its Jacobian), smoothed onto a grid
per sheet and superposed.

The cosine is taken of ``|S_j|/hbar - pi/2``, i.e. each pair is oriented
so that its action is non-negative.  This makes the field independent of
which member is called ``plus``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .classical import ESCAPE_BOUND, _step_plan, integrate
from .errors import ValidationError
from .fields import PhaseSpaceField
from .model import PhasePoint, hamiltonian, wedge

logger = logging.getLogger(__name__)

__all__ = [
    "TrajectoryPair",
    "PairEnsemble",
    "seed_pairs",
    "propagate_pair",
    "propagate_pairs",
    "classify_sheets",
    "assemble_spot",
    "caustic_mask",
    "vanvleck_propagator",
    "EXTREMUM",
    "SADDLE",
    "CAUSTIC",
    "INVALID",
]

EXTREMUM = "extremum"
SADDLE = "saddle"
CAUSTIC = "caustic"
INVALID = "invalid"

_CODES = {INVALID: -1, CAUSTIC: 0, EXTREMUM: 1, SADDLE: 2}
_NAMES = {v: k for k, v in _CODES.items()}

EPS_JACOBIAN = 1e-8
EPS_CAUSTIC = 1e-8


@dataclass(frozen=True)
class TrajectoryPair:
    """One pair with its full trajectory records."""

    plus: object            # TrajectoryRecord
    minus: object
    delta: np.ndarray       # r'_+ - r'_-
    midpoint_path: np.ndarray
    chord: np.ndarray
    action: float
    final_midpoint: PhasePoint
    amplitude_den: float
    sheet: str = None

    def swapped(self):
        return TrajectoryPair(self.minus, self.plus, -self.delta, self.midpoint_path, -self.chord,
                              -self.action, self.final_midpoint, self.amplitude_den, self.sheet)


def _exact_half(r_prime, delta, rho_max):
    """Snap delta/2 to a dyadic grid on which r' +- delta/2 are exact."""
    # per component: the step is at least the ulp of any |r'_c| + |delta/2|
    mag = np.maximum(np.abs(r_prime.as_array()) + 0.5 * float(rho_max), 1e-300)
    step = 2.0 ** (np.floor(np.log2(mag)) + 1 - 52)
    return np.round(np.asarray(delta) / 2 / step) * step


def seed_pairs(r_prime, n_radii, n_angles, rho_max):
    """Displacements ``rho_k (cos theta_l, sin theta_l)`` on a polar grid.

    ``rho_k = rho_max k / n_radii`` (k = 1..n_radii), ``theta_l = pi l /
    n_angles``; the half circle suffices because ``-delta`` is the swapped
    pair.  Returned as an ``(n_radii * n_angles, 2)`` array in ``(p, q)``
    order, radius-major.  Each delta is rounded (by far less than an ulp of
    its size) so that ``(r' + delta/2 + r' - delta/2) / 2 == r'`` exactly
    whenever ``r' +- delta/2`` are representable, which holds unless ``r'``
    has bits below the ulp of the displaced points.
    """
    if not isinstance(r_prime, PhasePoint):
        r_prime = PhasePoint.from_array(r_prime)
    n_radii, n_angles = int(n_radii), int(n_angles)
    if n_radii < 1 or n_angles < 1:
        raise ValidationError("n_radii and n_angles must be positive")
    if not (np.isfinite(rho_max) and rho_max > 0):
        raise ValidationError(f"rho_max must be positive, got {rho_max}")
    rho = rho_max * np.arange(1, n_radii + 1) / n_radii
    theta = np.pi * np.arange(n_angles) / n_angles
    d = np.stack([rho[:, None] * np.cos(theta)[None, :],
                  rho[:, None] * np.sin(theta)[None, :]], axis=-1).reshape(-1, 2)
    half = _exact_half(r_prime, d, rho_max)
    r0 = r_prime.as_array()
    off = np.any(((r0 + half) + (r0 - half)) / 2 != r0, axis=1)
    if off.any():
        # r' carries bits below the ulp of r' +- delta/2: no representable pair is exact
        logger.info("%d of %d seed midpoints are off r' by rounding", int(off.sum()), len(off))
    return 2.0 * half


def _pair_action(plus, minus, pot):
    """Trapezoidal S = int [rbar_dot ^ R - H(r+) + H(r-)] ds on recorded samples."""
    vbar = 0.5 * (plus.velocities + minus.velocities)
    R = plus.states - minus.states
    g = wedge(vbar, R) - hamiltonian(pot, plus.states) + hamiltonian(pot, minus.states)
    return float(np.sum(0.5 * np.diff(plus.times) * (g[1:] + g[:-1])))


def propagate_pair(pot, r_prime, delta, t, dt):
    """Integrate one pair and record its action and final midpoint."""
    if not isinstance(r_prime, PhasePoint):
        r_prime = PhasePoint.from_array(r_prime)
    half = np.asarray(delta, dtype=float) / 2
    r0 = r_prime.as_array()
    plus = integrate(pot, r0 + half, t, dt)
    minus = integrate(pot, r0 - half, t, dt)
    mid = 0.5 * (plus.states + minus.states)
    return TrajectoryPair(
        plus=plus, minus=minus, delta=2 * half,
        midpoint_path=mid, chord=plus.states - minus.states,
        action=_pair_action(plus, minus, pot),
        final_midpoint=PhasePoint.from_array(mid[-1]),
        amplitude_den=float(np.linalg.det(plus.monodromy[-1] - minus.monodromy[-1])),
    )


@dataclass
class PairEnsemble:
    """All pairs of a polar seed grid, stored as ``(n_radii, n_angles, ...)`` arrays."""

    r_prime: PhasePoint
    t: float
    rho: np.ndarray
    theta: np.ndarray
    deltas: np.ndarray          # (nr, na, 2)
    final_plus: np.ndarray      # (nr, na, 2)
    final_minus: np.ndarray
    mono_plus: np.ndarray       # (nr, na, 2, 2)
    mono_minus: np.ndarray
    action: np.ndarray          # (nr, na), NaN where invalid
    valid: np.ndarray           # (nr, na) bool
    labels: np.ndarray = None   # (nr, na) int8 codes, see _CODES
    jacobian: np.ndarray = None  # det d rbar'' / d delta (Cartesian)
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.action.shape

    @property
    def size(self):
        return self.action.size

    @property
    def final_midpoint(self):
        return 0.5 * (self.final_plus + self.final_minus)

    @property
    def amplitude_den(self):
        d = self.mono_plus - self.mono_minus
        return d[..., 0, 0] * d[..., 1, 1] - d[..., 0, 1] * d[..., 1, 0]

    def sheet_names(self):
        if self.labels is None:
            raise ValidationError("pairs are not classified yet")
        return np.vectorize(_NAMES.get, otypes=[object])(self.labels)

    def count(self, sheet):
        return int(np.sum(self.labels == _CODES[sheet]))

    def swapped(self):
        """Relabel every pair plus <-> minus (delta -> -delta)."""
        return replace(self, deltas=-self.deltas, final_plus=self.final_minus, final_minus=self.final_plus,
                       mono_plus=self.mono_minus, mono_minus=self.mono_plus, action=-self.action)

    def pair(self, k, l):
        """Lightweight :class:`TrajectoryPair` view (no trajectory records)."""
        mid = self.final_midpoint[k, l]
        sheet = None if self.labels is None else _NAMES[int(self.labels[k, l])]
        return TrajectoryPair(None, None, self.deltas[k, l], mid[None, :],
                              (self.final_plus[k, l] - self.final_minus[k, l])[None, :],
                              float(self.action[k, l]), PhasePoint.from_array(mid),
                              float(self.amplitude_den[k, l]), sheet)


def propagate_pairs(pot, r_prime, t, n_radii, n_angles, rho_max, dt=1e-3, bound=ESCAPE_BOUND):
    """Seed and propagate a whole polar grid of pairs in one batched kernel call."""
    if not isinstance(r_prime, PhasePoint):
        r_prime = PhasePoint.from_array(r_prime)
    n_steps, h_last = _step_plan(t, dt)
    deltas = seed_pairs(r_prime, n_radii, n_angles, rho_max)
    r0 = r_prime.as_array()
    plus0 = r0 + deltas / 2
    minus0 = r0 - deltas / 2
    fp, fm, mp, mm, action, status = _kernels.rk4_pairs(
        np.ascontiguousarray(plus0[:, 0]), np.ascontiguousarray(plus0[:, 1]),
        np.ascontiguousarray(minus0[:, 0]), np.ascontiguousarray(minus0[:, 1]),
        pot.derivative_coefficients(0), pot.derivative_coefficients(1), pot.derivative_coefficients(2),
        pot.mass, float(dt), n_steps, float(h_last), float(bound))
    valid = status == _kernels.OK
    n_bad = int(np.sum(~valid))
    if n_bad:
        logger.info("%d of %d pairs escaped and are excluded", n_bad, valid.size)
    shp = (int(n_radii), int(n_angles))
    rho = rho_max * np.arange(1, shp[0] + 1) / shp[0]
    theta = np.pi * np.arange(shp[1]) / shp[1]
    return PairEnsemble(
        r_prime=r_prime, t=float(t), rho=rho, theta=theta,
        deltas=deltas.reshape(shp + (2,)),
        final_plus=fp.reshape(shp + (2,)), final_minus=fm.reshape(shp + (2,)),
        mono_plus=mp.reshape(shp + (2, 2)), mono_minus=mm.reshape(shp + (2, 2)),
        action=action.reshape(shp), valid=valid.reshape(shp),
        meta={"dt": dt, "rho_max": float(rho_max), "backend": _kernels.BACKEND})


def _polar_jacobian(ens):
    """det d rbar''/d(rho, theta) by central differences; theta is pi-periodic."""
    mid = ens.final_midpoint.copy()
    mid[~ens.valid] = np.nan
    d_rho = np.gradient(mid, ens.rho, axis=0)
    dth = np.pi / ens.shape[1]
    # rbar''(rho, theta + pi) = rbar''(rho, theta): wrap around
    d_th = (np.roll(mid, -1, axis=1) - np.roll(mid, 1, axis=1)) / (2 * dth)
    return d_rho[..., 0] * d_th[..., 1] - d_rho[..., 1] * d_th[..., 0]


def classify_sheets(ens, r_prime=None, eps_j=EPS_JACOBIAN):
    """Label every pair extremum, saddle, caustic or invalid.

    The polar Jacobian ``J = det d rbar''/d(rho, theta)`` is divided by
    ``rho`` to give the Cartesian Jacobian ``j = det d rbar''/d delta``.
    ``j > 0`` marks the extremum sheet and ``j < 0`` the saddle sheet.
    Pairs with ``|j| <= eps_j``, or whose sign differs from an angular
    neighbour (a fold between samples), are caustic.
    """
    if r_prime is not None:
        rp = r_prime if isinstance(r_prime, PhasePoint) else PhasePoint.from_array(r_prime)
        if (rp.p, rp.q) != (ens.r_prime.p, ens.r_prime.q):
            raise ValidationError("pairs were seeded around a different initial point")
    nr, na = ens.shape
    if nr < 3 or na < 8:
        raise ValidationError(f"seed grid too coarse for differencing (n_radii={nr} < 3 or n_angles={na} < 8)")
    J = _polar_jacobian(ens)
    j = J / ens.rho[:, None]
    sgn = np.sign(j)
    flip = (sgn != np.roll(sgn, 1, axis=1)) | (sgn != np.roll(sgn, -1, axis=1))
    labels = np.where(j > 0, _CODES[EXTREMUM], _CODES[SADDLE]).astype(np.int8)
    labels[(np.abs(j) <= eps_j) | flip] = _CODES[CAUSTIC]
    labels[~np.isfinite(j)] = _CODES[CAUSTIC]
    labels[~ens.valid] = _CODES[INVALID]
    return replace(ens, labels=labels, jacobian=j)


def assemble_spot(ens, grid, hbar, smoothing_radius=None, eps_caustic=EPS_CAUSTIC):
    """Superpose the two smoothed sheets on ``grid``.

    Per sheet, amplitude ``(4/h) 2/sqrt|det(M+ - M-)|`` and phase are
    interpolated from the scattered midpoints by Shepard weights within
    ``smoothing_radius`` (default two cells).  The action is a real
    accumulated quantity, hence already unwrapped.  Cells out of reach of
    a sheet get nothing from it (shadow region).
    """
    if ens.labels is None:
        raise ValidationError("classify the pairs before assembling")
    if not hbar > 0:
        raise ValidationError("hbar must be positive")
    radius = 2.0 * max(grid.dp, grid.dq) if smoothing_radius is None else float(smoothing_radius)
    if not radius > 0:
        raise ValidationError("smoothing_radius must be positive")
    den = ens.amplitude_den
    with np.errstate(divide="ignore"):
        amp = (4.0 / (2 * np.pi * hbar)) * 2.0 / np.sqrt(np.abs(den))
    phase = np.abs(ens.action) / hbar - np.pi / 2
    mid = ens.final_midpoint
    values = np.zeros(grid.shape)
    used = 0
    for code in (_CODES[EXTREMUM], _CODES[SADDLE]):
        sel = (ens.labels == code) & (np.abs(den) >= eps_caustic) & np.isfinite(ens.action)
        if not sel.any():
            continue
        used += int(sel.sum())
        x = np.ascontiguousarray(mid[sel][:, 0])
        y = np.ascontiguousarray(mid[sel][:, 1])
        vals = np.ascontiguousarray(np.column_stack([amp[sel], phase[sel]]))
        wsum, vsum = _kernels.shepard_accumulate(x, y, vals, grid.p_range[0], grid.q_range[0],
                                                 grid.dp, grid.dq, grid.np, grid.nq, radius)
        hit = wsum > 0
        a = np.zeros(grid.shape)
        ph = np.zeros(grid.shape)
        a[hit] = vsum[..., 0][hit] / wsum[hit]
        ph[hit] = vsum[..., 1][hit] / wsum[hit]
        values[hit] += a[hit] * np.cos(ph[hit])
    degenerate = used == 0 and _is_degenerate_cone(ens, grid)
    if degenerate:
        # Liouville limit: every midpoint sits on r_cl(t), the cone has collapsed
        mid0 = np.mean(mid[ens.valid], axis=0)
        fi = np.array([(mid0[0] - grid.p_range[0]) / grid.dp - 0.5])
        fj = np.array([(mid0[1] - grid.q_range[0]) / grid.dq - 0.5])
        values = _kernels.cic_deposit(fi, fj, np.ones(1), grid.np, grid.nq) / grid.cell_area
    elif not np.any(values):
        logger.warning("no non-caustic pairs reach the grid; returning a zero field")
    return PhaseSpaceField(grid, values, meta={
        "source": "vanvleck", "t": ens.t, "r_prime": (ens.r_prime.p, ens.r_prime.q),
        "smoothing_radius": radius, "pairs_used": used, "delta_limit": bool(degenerate)})


def _is_degenerate_cone(ens, grid):
    """All valid midpoints within a fraction of a cell of each other."""
    mid = ens.final_midpoint[ens.valid]
    if mid.size == 0:
        return False
    spread = np.ptp(mid, axis=0)
    return bool(spread[0] < 0.5 * grid.dp and spread[1] < 0.5 * grid.dq)


def caustic_mask(ens, grid, eps_caustic=EPS_CAUSTIC, k_nearest=4, radius=None):
    """0/1 field marking cells near caustic pairs.

    A cell is masked when any of its ``k_nearest`` midpoints within
    ``radius`` (default two cells) is caustic or has ``|det(M+ - M-)| <
    eps_caustic``.  Without any usable pair the whole grid is masked.
    """
    if ens.labels is None:
        raise ValidationError("classify the pairs before masking")
    radius = 2.0 * max(grid.dp, grid.dq) if radius is None else float(radius)
    ok = ens.valid & np.isfinite(ens.final_midpoint).all(axis=-1)
    den = ens.amplitude_den
    bad = (ens.labels == _CODES[CAUSTIC]) | (np.abs(den) < eps_caustic)
    good = ok & ~bad
    if not good.any():
        return PhaseSpaceField(grid, np.ones(grid.shape), meta={"mask": "caustic", "illuminated": 0})
    pts = ens.final_midpoint[ok]
    flag = bad[ok]
    # measure distances in cells so that radius counts cells along both axes
    scale = np.array([1.0 / grid.dp, 1.0 / grid.dq])
    tree = cKDTree(pts * scale)
    P, Q = grid.mesh()
    cells = np.column_stack([P.ravel(), Q.ravel()]) * scale
    r_cells = radius / max(grid.dp, grid.dq)
    dist, idx = tree.query(cells, k=k_nearest, distance_upper_bound=r_cells)
    dist = dist.reshape(len(cells), -1)
    idx = idx.reshape(len(cells), -1)
    hit = np.isfinite(dist)
    idx_safe = np.where(hit, idx, 0)
    near_bad = np.any(hit & flag[idx_safe], axis=1)
    mask = near_bad.reshape(grid.shape).astype(float)
    illuminated = np.any(hit, axis=1).reshape(grid.shape)
    return PhaseSpaceField(grid, mask, meta={"mask": "caustic", "illuminated": int(illuminated.sum()),
                                             "illuminated_cells": illuminated})


def vanvleck_propagator(pot, r_prime, t, hbar, grid, n_radii=200, n_angles=256, rho_max=None,
                        dt=1e-3, smoothing_radius=None, eps_caustic=EPS_CAUSTIC):
    """Seed, propagate, classify and assemble in one call.

    Without ``rho_max`` the seed radius is grown until the midpoints reach
    past the grid.  Returns ``(field, mask, ensemble)``.
    """
    if not isinstance(r_prime, PhasePoint):
        r_prime = PhasePoint.from_array(r_prime)
    if rho_max is None:
        rho_max = _auto_rho_max(pot, r_prime, t, grid, dt)
    ens = classify_sheets(propagate_pairs(pot, r_prime, t, n_radii, n_angles, rho_max, dt))
    spot = assemble_spot(ens, grid, hbar, smoothing_radius, eps_caustic)
    mask = caustic_mask(ens, grid, eps_caustic, radius=smoothing_radius)
    spot.meta.update(rho_max=rho_max, n_radii=n_radii, n_angles=n_angles)
    return spot, mask, ens


def _auto_rho_max(pot, r_prime, t, grid, dt, n_probe=64):
    """Seed radius at which half of the angular directions reach the grid's half-diagonal."""
    if np.all(pot.derivative_coefficients(3) == 0):
        return 1.0      # quadratic: midpoints never leave r_cl(t)
    center = integrate(pot, r_prime, t, dt).states[-1]
    reach = 0.5 * np.hypot(grid.p_range[1] - grid.p_range[0], grid.q_range[1] - grid.q_range[0])
    rho = 0.1
    for _ in range(40):
        ens = propagate_pairs(pot, r_prime, t, 1, n_probe, rho, dt)
        mid = ens.final_midpoint[0][ens.valid[0]]
        if mid.size == 0:
            rho *= 0.7
            continue
        d = float(np.median(np.hypot(mid[:, 0] - center[0], mid[:, 1] - center[1])))
        if d >= reach:
            return rho
        # midpoints move off r_cl quadratically in rho
        rho *= min(2.0, max(1.05, np.sqrt(reach / max(d, 1e-300))))
    raise ValidationError("could not find a seed radius reaching the grid")
