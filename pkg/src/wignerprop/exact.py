"""Exact quantum reference on a hard-wall box.

Eigenstates come from a sine-basis DVR (spectrally accurate, Dirichlet
walls).  Operators are kept as matrices in the retained eigenbasis, so
time evolution is diagonal and exact; Wigner transforms are evaluated with
chord sums over eigenfunctions interpolated exactly through their sine
expansion.

Conventions: ``W(p, q) = (2 pi hbar)^-1 int dy exp(-i p y / hbar)
<q + y/2| rho |q - y/2>`` so that a normalized state integrates to one.
The Wigner propagator ``G(r'', r', t)`` for fixed ``r'`` is the Wigner
function of ``U F rho' F U^dagger`` where ``rho'`` has Wigner function
``delta(r - r')`` and ``F = sqrt(f(H))`` is a smooth spectral cutoff over
the kept states (see :func:`spectral_filter`).
"""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh

from .errors import BoundaryContaminationError, ValidationError
from .fields import GridSpec, PhaseSpaceField
from .model import PhasePoint, hamiltonian

logger = logging.getLogger(__name__)

__all__ = [
    "SpectralBasis",
    "solve_eigenbasis",
    "default_energy_cutoff",
    "position_kernel",
    "point_operator",
    "wigner_transform",
    "weyl_quantize",
    "evolve_operator",
    "wigner_propagator_exact",
    "ExactPropagator",
    "propagate_wigner",
    "wigner_of_coherent_state",
    "coherent_state_wavefunction",
    "de_broglie_wavelength",
    "spectral_filter",
]

MARGIN_WAVELENGTHS = 10
POINTS_PER_WAVELENGTH = 8
LEAKAGE_TOL = 1e-4
DEFAULT_TAPER = 0.3


@dataclass(frozen=True)
class SpectralBasis:
    domain: tuple
    n_grid: int
    dq: float
    energies: np.ndarray     # (k,)
    states: np.ndarray       # (n_grid, k): psi_n(q_i), trapezoidal-normalized
    hbar: float
    mass: float
    e_cutoff: float
    sine_coeffs: np.ndarray  # (n_grid, k): coefficients in the box sine basis
    v_min: float

    @property
    def n_kept(self):
        return len(self.energies)

    @property
    def q(self):
        a = self.domain[0]
        return a + self.dq * np.arange(1, self.n_grid + 1)

    @property
    def length(self):
        return self.domain[1] - self.domain[0]

    @property
    def wavelength(self):
        return de_broglie_wavelength(self.hbar, self.mass, self.e_cutoff, self.v_min)

    @property
    def k_max(self):
        """Largest wave number carried by the kept states."""
        return np.sqrt(2 * self.mass * max(self.e_cutoff - self.v_min, 0.0)) / self.hbar

    def evaluate(self, x):
        """Kept eigenfunctions at arbitrary points ``x`` (shape (len(x), k))."""
        x = np.asarray(x, dtype=float)
        a, L = self.domain[0], self.length
        n = np.arange(1, self.n_grid + 1)
        basis = np.sqrt(2.0 / L) * np.sin(np.outer(x - a, n * np.pi / L))
        inside = (x >= a) & (x <= self.domain[1])
        basis[~inside] = 0.0
        return basis @ self.sine_coeffs

    def interior(self):
        """Reliable interior: domain minus the wall margin."""
        m = MARGIN_WAVELENGTHS * self.wavelength
        return self.domain[0] + m, self.domain[1] - m

    def cache_key(self, coefficients):
        payload = repr((tuple(coefficients), self.mass, self.domain, self.n_grid, self.hbar, self.e_cutoff))
        return hashlib.sha1(payload.encode()).hexdigest()[:16]


def de_broglie_wavelength(hbar, mass, energy, v_min):
    """h / p_typ with p_typ the largest classical momentum at ``energy``."""
    p_typ = np.sqrt(2 * mass * max(energy - v_min, 1e-300))
    return 2 * np.pi * hbar / p_typ


def default_energy_cutoff(pot, r_prime, hbar, n_quanta=50):
    """H(r') + n_quanta * hbar * omega with omega from the nearest well minimum."""
    e0 = float(hamiltonian(pot, r_prime))
    roots = np.polynomial.polynomial.polyroots(pot.derivative_coefficients(1)) \
        if pot.degree >= 2 else np.array([])
    roots = roots[np.abs(roots.imag) < 1e-9].real
    minima = roots[pot(roots, 2) > 0] if roots.size else roots
    if minima.size:
        qs = minima[np.argmin(np.abs(minima - r_prime.q))]
        omega = np.sqrt(pot(qs, 2) / pot.mass)
    else:
        omega = np.sqrt(max(abs(float(pot(r_prime.q, 2))), 1e-12) / pot.mass)
    return e0 + n_quanta * hbar * float(omega)


def _sine_dst(n_grid):
    i = np.arange(1, n_grid + 1)
    return np.sqrt(2.0 / (n_grid + 1)) * np.sin(np.outer(i, i) * np.pi / (n_grid + 1))


def minimal_grid(domain, hbar, mass, e_cutoff, v_min):
    lam = de_broglie_wavelength(hbar, mass, e_cutoff, v_min)
    L = domain[1] - domain[0]
    return int(np.ceil(L * POINTS_PER_WAVELENGTH / lam)) - 1


def solve_eigenbasis(pot, domain, n_grid, hbar, e_cutoff, check_resolution=True):
    """Eigenstates of H on ``domain`` with Dirichlet walls, E_n <= e_cutoff."""
    a, b = (float(x) for x in domain)
    if not b > a:
        raise ValidationError(f"empty domain {domain}")
    if not hbar > 0:
        raise ValidationError("hbar must be positive")
    L = b - a
    dq = L / (n_grid + 1)
    x = a + dq * np.arange(1, n_grid + 1)
    vx = pot(x)
    v_min = float(np.min(vx))
    if e_cutoff <= v_min:
        raise ValidationError(f"energy cutoff {e_cutoff} below the potential minimum {v_min}")
    if check_resolution:
        n_need = minimal_grid((a, b), hbar, pot.mass, e_cutoff, v_min)
        if n_grid < n_need:
            raise ValidationError(
                f"n_grid={n_grid} under-resolves the de Broglie wavelength at E={e_cutoff:g}; "
                f"need n_grid >= {n_need}")
    S = _sine_dst(n_grid)
    kin = (hbar * np.pi * np.arange(1, n_grid + 1) / L) ** 2 / (2 * pot.mass)
    H = (S * kin) @ S + np.diag(vx)
    H = 0.5 * (H + H.T)
    E, V = eigh(H, subset_by_value=(-np.inf, e_cutoff), driver="evr")
    if E.size == 0:
        raise ValidationError("no eigenstates below the energy cutoff")
    # fix signs: first significant lobe positive
    for k in range(V.shape[1]):
        j = np.argmax(np.abs(V[:, k]) > 1e-3 * np.max(np.abs(V[:, k])))
        if V[j, k] < 0:
            V[:, k] *= -1
    states = V / np.sqrt(dq)
    coeffs = S @ V          # S is symmetric orthogonal
    logger.info("spectral basis: %d states below %.4g on %d points", E.size, e_cutoff, n_grid)
    return SpectralBasis((a, b), n_grid, dq, E, states, float(hbar), pot.mass,
                         float(e_cutoff), coeffs, v_min)


def position_kernel(basis, t, hbar=None):
    """K(q_i, q_j; t) = sum_n exp(-i E_n t / hbar) psi_n(q_i) psi_n(q_j).

    This is the continuous kernel; ``K * dq`` is the matrix acting on samples.
    """
    hbar = basis.hbar if hbar is None else hbar
    ph = np.exp(-1j * basis.energies * t / hbar)
    return (basis.states * ph) @ basis.states.T


def _chord_step(basis, p_max):
    return min(basis.dq, 0.8 * np.pi / (basis.k_max + p_max / basis.hbar))


def point_operator(basis, r):
    """Eigenbasis matrix of the operator whose Wigner function is delta(. - r)."""
    if not isinstance(r, PhasePoint):
        r = PhasePoint.from_array(r)
    a, b = basis.domain
    half = min(r.q - a, b - r.q)
    if half <= 0:
        raise BoundaryContaminationError(f"point q={r.q} outside the spectral domain")
    dy = _chord_step(basis, abs(r.p))
    j = np.arange(int(np.floor(2 * half / dy)) + 1)
    y = j * dy
    A = basis.evaluate(r.q + y / 2)
    B = basis.evaluate(r.q - y / 2)
    w = np.exp(1j * r.p * y / basis.hbar) * dy
    w[0] *= 0.5
    M = (A * w[:, None]).T @ B
    # the y<0 half is the Hermitian conjugate of the y>0 half
    return M + M.conj().T


def spectral_filter(basis, taper=DEFAULT_TAPER):
    """Amplitude weights sqrt(f(E_n)) of a smooth spectral cutoff.

    ``f`` is 1 below ``E_cut - taper * (E_cut - V_min)`` and falls to 0 at
    ``E_cut`` as cos^2.  A sharp projector has a Weyl symbol that does not
    converge pointwise (for the oscillator it alternates between 0 and 2 at
    the origin); a smooth ``f(H)`` has symbol ``f(H(r)) + O(hbar^2)``.
    ``taper = 0`` gives the sharp projector.
    """
    if not 0.0 <= taper < 1.0:
        raise ValidationError(f"taper must lie in [0, 1), got {taper}")
    if taper == 0.0:
        return np.ones(basis.n_kept)
    width = taper * (basis.e_cutoff - basis.v_min)
    x = np.clip((basis.energies - (basis.e_cutoff - width)) / width, 0.0, 1.0)
    return np.cos(0.5 * np.pi * x)


def evolve_operator(basis, rho, t):
    """U(t) rho U(t)^dagger in the eigenbasis."""
    ph = np.exp(-1j * basis.energies * t / basis.hbar)
    return ph[:, None] * rho * ph.conj()[None, :]


def wigner_transform(basis, rho, grid, chunk=8):
    """Wigner function of the eigenbasis operator ``rho`` on ``grid``."""
    a, b = basis.domain
    p = grid.p
    dy = _chord_step(basis, float(np.max(np.abs(p))))
    out = np.zeros(grid.shape)
    for iq, q in enumerate(grid.q):
        half = min(q - a, b - q)
        if half <= 0:
            continue
        y = np.arange(int(np.floor(2 * half / dy)) + 1) * dy
        A = basis.evaluate(q + y / 2)
        B = basis.evaluate(q - y / 2)
        r = np.einsum("jk,jk->j", A @ rho, B)
        w = np.full(len(y), 2.0)
        w[0] = 1.0
        phase = np.exp(-1j * np.outer(p, y) / basis.hbar)
        out[:, iq] = (phase @ (w * r)).real * dy / (2 * np.pi * basis.hbar)
    return out


def weyl_quantize(basis, field):
    """Eigenbasis matrix of the operator whose Wigner function is ``field``."""
    g = field.grid
    a, b = basis.domain
    dy = _chord_step(basis, float(np.max(np.abs(g.p))))
    ps, qs, values, dp, dq = _quantization_rows(basis, field)
    rho = np.zeros((basis.n_kept, basis.n_kept), dtype=complex)
    for iq, q in enumerate(qs):
        col = values[:, iq]
        if not np.any(col):
            continue
        half = min(q - a, b - q)
        if half <= 0:
            raise BoundaryContaminationError(f"field row q={q} outside the spectral domain")
        y = np.arange(int(np.floor(2 * half / dy)) + 1) * dy
        # F(q, y) = int dp W(p, q) exp(i p y / hbar)
        F = np.exp(1j * np.outer(y, ps) / basis.hbar) @ col * dp
        F[0] *= 0.5
        A = basis.evaluate(q + y / 2)
        B = basis.evaluate(q - y / 2)
        M = (A * F[:, None]).T @ B
        rho += (M + M.conj().T) * dy * dq
    return rho


def _quantization_rows(basis, field):
    """Samples for the midpoint sum, refined by cubic interpolation if needed.

    Each q row adds a line of constant midpoint to the density matrix; rows
    further apart than about pi / k_max alias into the kept band.  The p sum
    is periodic in the chord with period 2 pi hbar / dp, which must exceed
    the box length.  Returns ``(p, q, values, dp, dq)``.
    """
    g = field.grid
    p, q, values, dp, dq = g.p, g.q, field.values, g.dp, g.dq
    q_step = 0.8 * np.pi / basis.k_max
    if g.nq > 1 and dq > q_step:
        n = int(np.ceil(g.nq * dq / q_step))
        dq = (g.q_range[1] - g.q_range[0]) / n
        q = g.q_range[0] + (np.arange(n) + 0.5) * dq
        values = CubicSpline(g.q, values, axis=1)(np.clip(q, g.q[0], g.q[-1]))
    p_step = 0.9 * 2 * np.pi * basis.hbar / basis.length
    if g.np > 1 and dp > p_step:
        n = int(np.ceil(g.np * dp / p_step))
        dp = (g.p_range[1] - g.p_range[0]) / n
        p = g.p_range[0] + (np.arange(n) + 0.5) * dp
        values = CubicSpline(g.p, values, axis=0)(np.clip(p, g.p[0], g.p[-1]))
    if values is not field.values:
        logger.debug("quantizing on %d x %d interpolated samples instead of %d x %d",
                     len(p), len(q), g.np, g.nq)
    return p, q, values, dp, dq


def _check_interior(basis, points_q, what):
    lo, hi = basis.interior()
    qs = np.atleast_1d(points_q)
    if np.any(qs < lo) or np.any(qs > hi):
        raise BoundaryContaminationError(
            f"{what} within {MARGIN_WAVELENGTHS} wavelengths of the walls "
            f"(reliable interior [{lo:.4g}, {hi:.4g}], got [{qs.min():.4g}, {qs.max():.4g}])")


def wall_leakage(basis, rho):
    """Fraction of |rho(x, x)| inside the wall margins."""
    diag = np.abs(np.einsum("ik,kl,il->i", basis.states, rho, basis.states))
    lo, hi = basis.interior()
    q = basis.q
    tot = diag.sum()
    return float(diag[(q < lo) | (q > hi)].sum() / tot) if tot > 0 else 0.0


def wigner_propagator_exact(basis, r_prime, t, out_grid, normalize=True, check_walls=True, supersample=1,
                            taper=DEFAULT_TAPER):
    """G(r'', r', t) over ``out_grid`` for fixed ``r'``.

    The point operator is filtered with :func:`spectral_filter` on both
    sides.  With ``normalize`` the kernel is divided by the trace of the
    filtered point operator so that its integral over all of phase space is
    one; the raw trace is kept in ``meta['raw_trace']``.  ``supersample = k
    > 1`` returns cell averages over ``k x k`` sub-samples instead of point
    values, which matters when the kernel is narrower than a cell.
    """
    k = int(supersample)
    if k < 1:
        raise ValidationError(f"supersample must be a positive integer, got {supersample}")
    if not isinstance(r_prime, PhasePoint):
        r_prime = PhasePoint.from_array(r_prime)
    if check_walls:
        _check_interior(basis, [r_prime.q], "initial point")
        _check_interior(basis, [out_grid.q_range[0], out_grid.q_range[1]], "output grid")
    w = spectral_filter(basis, taper)
    rho0 = w[:, None] * point_operator(basis, r_prime) * w[None, :]
    trace = float(np.trace(rho0).real)
    rho_t = evolve_operator(basis, rho0, t)
    leak = wall_leakage(basis, rho_t)
    if leak > LEAKAGE_TOL:
        logger.info("wall leakage %.3g exceeds %.1g", leak, LEAKAGE_TOL)
    if k == 1:
        values = wigner_transform(basis, rho_t, out_grid)
    else:
        fine = GridSpec(out_grid.p_range, out_grid.q_range, out_grid.np * k, out_grid.nq * k)
        values = wigner_transform(basis, rho_t, fine).reshape(out_grid.np, k, out_grid.nq, k).mean(axis=(1, 3))
    if normalize:
        values = values / trace
    return PhaseSpaceField(out_grid, values, meta={
        "source": "exact", "t": t, "r_prime": (r_prime.p, r_prime.q),
        "raw_trace": trace, "wall_leakage": leak, "n_kept": basis.n_kept, "supersample": k,
        "taper": taper})


class ExactPropagator:
    """Exact Wigner propagator as a linear map on fields.

    Applying it equals the cell quadrature ``sum_r' G(r'', r', t) W(r') dA``
    with the exact kernel; by linearity it is evaluated as
    Weyl-quantize -> filter -> evolve -> Wigner-transform.
    """

    def __init__(self, basis, t, taper=DEFAULT_TAPER):
        self.basis = basis
        self.t = float(t)
        self.taper = taper
        self._w = spectral_filter(basis, taper)

    def kernel(self, r_prime, out_grid, **kw):
        kw.setdefault("taper", self.taper)
        return wigner_propagator_exact(self.basis, r_prime, self.t, out_grid, **kw)

    def apply(self, field, out_grid=None):
        out_grid = field.grid if out_grid is None else out_grid
        rho = self._w[:, None] * weyl_quantize(self.basis, field) * self._w[None, :]
        rho_t = evolve_operator(self.basis, rho, self.t)
        return PhaseSpaceField(out_grid, wigner_transform(self.basis, rho_t, out_grid),
                               meta={"source": "exact", "t": self.t})


def propagate_wigner(field, propagator, out_grid=None, threshold=0.0):
    """W''(r'') = sum over cells of G(r'', r', t) W(r') dA.

    ``propagator`` is an :class:`ExactPropagator` or any callable
    ``kernel(r_prime, out_grid) -> PhaseSpaceField``.  Cells with
    ``|W| <= threshold * max|W|`` are skipped in the generic quadrature.
    """
    out_grid = field.grid if out_grid is None else out_grid
    if isinstance(propagator, ExactPropagator):
        return propagator.apply(field, out_grid)
    if not callable(propagator):
        raise ValidationError("propagator must be an ExactPropagator or a kernel callable")
    acc = np.zeros(out_grid.shape)
    vmax = np.max(np.abs(field.values))
    P, Q = field.grid.mesh()
    for ip, iq in zip(*np.nonzero(np.abs(field.values) > threshold * vmax)):
        col = propagator(PhasePoint(float(P[ip, iq]), float(Q[ip, iq])), out_grid)
        if not col.grid.same_as(out_grid):
            raise ValidationError("kernel returned a field on a different grid")
        acc += col.values * field.values[ip, iq] * field.grid.cell_area
    return PhaseSpaceField(out_grid, acc, meta={"source": "quadrature"})


def wigner_of_coherent_state(center, hbar, squeeze, out_grid, check_coverage=True):
    """Normalized Gaussian (1/pi hbar) exp(-(p-p0)^2/(hbar s) - s (q-q0)^2/hbar)."""
    if not isinstance(center, PhasePoint):
        center = PhasePoint.from_array(center)
    if not (squeeze > 0 and hbar > 0):
        raise ValidationError("squeeze and hbar must be positive")
    sig_p = np.sqrt(hbar * squeeze / 2)
    sig_q = np.sqrt(hbar / (2 * squeeze))
    if check_coverage:
        g = out_grid
        ok = (center.p - g.p_range[0] >= 6 * sig_p and g.p_range[1] - center.p >= 6 * sig_p
              and center.q - g.q_range[0] >= 6 * sig_q and g.q_range[1] - center.q >= 6 * sig_q)
        if not ok:
            raise ValidationError("grid does not cover 6 standard deviations around the centre")
    P, Q = out_grid.mesh()
    W = np.exp(-(P - center.p) ** 2 / (hbar * squeeze) - squeeze * (Q - center.q) ** 2 / hbar) / (np.pi * hbar)
    return PhaseSpaceField(out_grid, W, meta={"state": "coherent", "center": (center.p, center.q),
                                              "squeeze": squeeze})


def coherent_state_wavefunction(center, hbar, squeeze, x):
    """Position wavefunction whose Wigner function is :func:`wigner_of_coherent_state`."""
    if not isinstance(center, PhasePoint):
        center = PhasePoint.from_array(center)
    x = np.asarray(x, dtype=float)
    norm = (squeeze / (np.pi * hbar)) ** 0.25
    return norm * np.exp(-squeeze * (x - center.q) ** 2 / (2 * hbar) + 1j * center.p * (x - center.q) / hbar)
