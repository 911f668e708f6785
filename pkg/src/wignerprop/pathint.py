"""Uniform (Airy) propagator from the cubic Fourier-space kernel.

In the scaled frame ``(eta, xi) = (mu^{1/4} p, mu^{-1/4} q)`` co-moving with
the classical trajectory, the propagator's Fourier transform is the pure
phase ``exp(-i Phi(alpha, beta))`` with the cubic form

    Phi = a30/3 alpha^3 + a21 alpha^2 beta + a12 alpha beta^2 + a03/3 beta^3.

The spot in the initial orientation is

    W0(eta, xi) = (2 pi)^-2  int dalpha dbeta  exp(i (alpha xi - beta eta)) exp(-i Phi)

(wave vectors ``k_eta = -beta``, ``k_xi = alpha``; this sign choice makes the
Airy tail point the way the Moyal ``-hbar^2 V''' d^3/dp^3 / 24`` term
demands).  The linear flow then carries the spot to absolute phase space.

Two routes supply the coefficients.  The adiabatic one integrates
``sigma(s) sin^j(phi) cos^k(phi)`` in the scaled frame and maps with the
rotation (or hyperbolic rotation) by ``phi``.  The monodromy route
transports the wave vector with the stability matrix, ``a_jk = (hbar^2/8)
int V3 M21^j M22^k ds`` in unscaled coordinates, and maps with ``M(t)``.
Both agree when ``mu`` is constant; only the second stays regular when the
trajectory crosses an inflection point, so it is the default.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import erfc

from . import _kernels
from .classical import (
    AiryCoefficients,
    airy_coefficients,
    integrate,
    lab_map,
    monodromy_coefficients,
    running_stability_angle,
)
from .errors import AccuracyError, AliasingError, UnsupportedScenarioError, ValidationError
from .fields import GridSpec, PhaseSpaceField, centered_grid

logger = logging.getLogger(__name__)

__all__ = [
    "FourierGridSpec",
    "fourier_kernel_phase",
    "phase_gradient",
    "auto_fourier_grid",
    "spot_from_fourier",
    "spectral_window",
    "spot_in_lab_frame",
    "lab_to_local",
    "local_to_lab",
    "field_to_local_frame",
    "pathint_propagator",
    "cubic_coefficients",
    "recurrence_probe",
    "spot_rms_radius",
    "spot_scale",
]

DEFAULT_N = 512
MAX_N = 8192
# spots smaller than this fraction of a local cell are deposited as a point mass
DELTA_FRACTION = 0.25


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class FourierGridSpec:
    """Grid over Fourier phase space; alpha pairs with xi (q), beta with eta (p)."""

    alpha_range: tuple
    beta_range: tuple
    n_alpha: int = DEFAULT_N
    n_beta: int = DEFAULT_N

    def __post_init__(self):
        for name, (lo, hi), n in (("alpha", self.alpha_range, self.n_alpha),
                                  ("beta", self.beta_range, self.n_beta)):
            if not (hi > 0 and abs(lo + hi) <= 1e-12 * hi):
                raise ValidationError(f"{name}_range must be symmetric about 0, got {(lo, hi)}")
            if n < 64 or not _is_pow2(int(n)):
                raise ValidationError(f"n_{name} must be a power of two >= 64, got {n}")

    @property
    def d_alpha(self):
        return (self.alpha_range[1] - self.alpha_range[0]) / self.n_alpha

    @property
    def d_beta(self):
        return (self.beta_range[1] - self.beta_range[0]) / self.n_beta

    @property
    def alpha(self):
        return (np.arange(self.n_alpha) - self.n_alpha // 2) * self.d_alpha

    @property
    def beta(self):
        return (np.arange(self.n_beta) - self.n_beta // 2) * self.d_beta

    def native_grid(self):
        """Real-space grid dual to this Fourier grid, frame (eta, xi) as (p, q)."""
        d_eta = 2 * np.pi / (self.n_beta * self.d_beta)
        d_xi = 2 * np.pi / (self.n_alpha * self.d_alpha)
        pe = (self.n_beta // 2 + 0.5) * d_eta
        qx = (self.n_alpha // 2 + 0.5) * d_xi
        return GridSpec((-pe, -pe + self.n_beta * d_eta), (-qx, -qx + self.n_alpha * d_xi),
                        self.n_beta, self.n_alpha)


def fourier_kernel_phase(coeffs, alpha, beta):
    """Phi(alpha, beta); the kernel is exp(-i Phi)."""
    a30, a21, a12, a03 = _coeff_tuple(coeffs)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    return (a30 / 3.0 * alpha**3 + a21 * alpha**2 * beta
            + a12 * alpha * beta**2 + a03 / 3.0 * beta**3)


def phase_gradient(coeffs, alpha, beta):
    a30, a21, a12, a03 = _coeff_tuple(coeffs)
    d_alpha = a30 * alpha**2 + 2 * a21 * alpha * beta + a12 * beta**2
    d_beta = a21 * alpha**2 + 2 * a12 * alpha * beta + a03 * beta**2
    return d_alpha, d_beta


def _coeff_tuple(coeffs):
    if isinstance(coeffs, AiryCoefficients):
        return coeffs.a30, coeffs.a21, coeffs.a12, coeffs.a03
    a = tuple(float(x) for x in coeffs)
    if len(a) != 4 or not all(np.isfinite(a)):
        raise ValidationError("need four finite coefficients (a30, a21, a12, a03)")
    return a


def spectral_window(kind, alpha, beta, k_max):
    """Taper applied to exp(-i Phi) on the (alpha, beta) grid; ``None`` for the plain sinc cut."""
    if kind == "sinc":
        return None
    if kind == "smooth":
        # separable erfc taper: flat to ~1e-8 out to 0.55 K, ~1e-29 at K
        width = 0.05 * k_max
        wa = 0.5 * erfc((np.abs(alpha) - 0.75 * k_max) / width)
        wb = 0.5 * erfc((np.abs(beta) - 0.75 * k_max) / width)
        return wa[:, None] * wb[None, :]
    raise ValidationError(f"unknown spectral window {kind!r}")


def _gradient_bound(coeffs):
    """max over unit wave vectors of |grad Phi| (grad Phi is homogeneous of degree 2)."""
    th = np.linspace(0, 2 * np.pi, 721)
    da, db = phase_gradient(coeffs, np.cos(th), np.sin(th))
    return float(np.max(np.hypot(da, db)))


def auto_fourier_grid(coeffs, half_width, resolution, window="sinc", n_min=64, n_max=MAX_N, coverage=6.0):
    """Choose a Nyquist-safe Fourier grid for a local window.

    ``half_width`` is the half-size of the local (scaled) window to be
    resolved and ``resolution`` its sample spacing.  The band limit is the
    smaller of the window Nyquist ``pi/resolution`` and the wave number whose
    stationary point lies ``coverage`` half-widths out; the step is then set
    so that ``max |grad Phi| * dk < pi`` over the whole grid and the window
    fits into one period.
    """
    g2 = _gradient_bound(coeffs)
    k_win = np.pi / resolution
    k_max = k_win if g2 == 0 else min(k_win, np.sqrt(coverage * half_width / g2))
    # corners of the square grid reach |k| = sqrt(2) K
    grad_max = 2.0 * g2 * k_max**2
    dk = 2 * np.pi / (2.4 * half_width)
    if grad_max > 0:
        dk = min(dk, 0.9 * np.pi / grad_max)
    n = max(n_min, int(2 ** np.ceil(np.log2(2 * k_max / dk))))
    if n > n_max:
        raise AliasingError(f"Fourier grid needs n={n} > n_max={n_max}", recommended=n)
    return FourierGridSpec((-k_max, k_max), (-k_max, k_max), n, n)


def nyquist_ratio(coeffs, fgrid, window="sinc"):
    """max(|dPhi/dalpha| d_alpha, |dPhi/dbeta| d_beta) / pi over the live grid."""
    al = fgrid.alpha[:, None]
    be = fgrid.beta[None, :]
    da, db = phase_gradient(coeffs, al, be)
    w = spectral_window(window, fgrid.alpha, fgrid.beta, fgrid.alpha_range[1])
    live = np.ones(da.shape, bool) if w is None else (w > 1e-20)
    r = max(float(np.max(np.abs(da)[live])) * fgrid.d_alpha, float(np.max(np.abs(db)[live])) * fgrid.d_beta)
    return r / np.pi


def _kernel_values(coeffs, fgrid, window):
    al = fgrid.alpha
    be = fgrid.beta
    F = np.exp(-1j * fourier_kernel_phase(coeffs, al[:, None], be[None, :]))
    w = spectral_window(window, al, be, fgrid.alpha_range[1])
    if w is not None:
        F = F * w
    # Hermitian completion of the unpaired Nyquist row/column
    ia = (-np.arange(fgrid.n_alpha)) % fgrid.n_alpha
    ib = (-np.arange(fgrid.n_beta)) % fgrid.n_beta
    return 0.5 * (F + np.conj(F[np.ix_(ia, ib)]))


def spot_from_fourier(coeffs, fgrid=None, out_grid=None, window="sinc", check=True):
    """Inverse transform of exp(-i Phi) to the local spot W0(eta, xi).

    Returns a field in the local scaled frame with ``(p, q) -> (eta, xi)``.
    Without ``out_grid`` the native FFT dual grid is used (exact mass 1);
    otherwise the band-limited sum is evaluated directly on ``out_grid``.
    """
    if fgrid is None:
        if out_grid is None:
            raise ValidationError("need a Fourier grid or an output grid to size one")
        half = max(out_grid.p_range[1] - out_grid.p_range[0], out_grid.q_range[1] - out_grid.q_range[0]) / 2
        res = min(out_grid.dp, out_grid.dq)
        fgrid = auto_fourier_grid(coeffs, half, res, window=window)
    if check:
        ratio = nyquist_ratio(coeffs, fgrid, window)
        if ratio >= 1.0:
            n_rec = int(2 ** np.ceil(np.log2(max(fgrid.n_alpha, fgrid.n_beta) * ratio * 1.1)))
            raise AliasingError(
                f"Fourier grid under-resolves exp(-i Phi) (max|grad Phi| dk / pi = {ratio:.3g}); "
                f"use n_alpha = n_beta >= {n_rec} over the same range",
                recommended=n_rec)
    F = _kernel_values(coeffs, fgrid, window)
    pref = fgrid.d_alpha * fgrid.d_beta / (4 * np.pi**2)
    if out_grid is None:
        grid = fgrid.native_grid()
        # alpha axis: exp(+i alpha xi) ; beta axis: exp(-i beta eta)
        tmp = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(F, axes=0), axis=0), axes=0) * fgrid.n_alpha
        tmp = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(tmp, axes=1), axis=1), axes=1)
        W = pref * tmp.T    # -> (eta, xi)
    else:
        grid = out_grid
        # off the native grid the self-paired Nyquist samples break the +-k
        # symmetry; drop them so the sum stays exactly real
        F = F.copy()
        F[0, :] = 0.0
        F[:, 0] = 0.0
        e_eta = np.exp(-1j * np.outer(grid.p, fgrid.beta))        # (n_eta, n_beta)
        e_xi = np.exp(1j * np.outer(fgrid.alpha, grid.q))         # (n_alpha, n_xi)
        W = pref * (e_eta @ (F.T @ e_xi))
    scale = max(float(np.max(np.abs(W.real))), 1e-300)
    resid = float(np.max(np.abs(W.imag))) / scale
    if resid > 1e-9:
        raise AccuracyError(f"inverse transform not real: relative imaginary residue {resid:.3g}")
    return PhaseSpaceField(grid, W.real, frame="local-scaled",
                           meta={"fgrid": fgrid, "window": window, "imag_residue": resid})


def _frame_params(traj, coeffs):
    if coeffs.stability_class == "mixed" and coeffs.route != "monodromy":
        raise UnsupportedScenarioError("lab-frame mapping is undefined for mixed-stability trajectories")
    return traj.states[-1], lab_map(coeffs)


def local_to_lab(x0, traj, coeffs):
    """Map local spot coordinates (eta, xi) to absolute (p, q)."""
    center, L = _frame_params(traj, coeffs)
    return center + np.asarray(x0, dtype=float) @ L.T


def lab_to_local(r, traj, coeffs):
    center, L = _frame_params(traj, coeffs)
    return (np.asarray(r, dtype=float) - center) @ np.linalg.inv(L).T


def _resample(src, dst_grid, dst_to_src, src_to_dst, method):
    """Move a field between frames related by an area-preserving affine map."""
    if method == "auto":
        method = "deposit" if src.grid.cell_area <= dst_grid.cell_area else "interpolate"
    if method == "interpolate":
        interp = RegularGridInterpolator((src.grid.p, src.grid.q), src.values,
                                         method="linear", bounds_error=False, fill_value=0.0)
        P, Q = dst_grid.mesh()
        pts = dst_to_src(np.stack([P, Q], axis=-1))
        return interp(pts.reshape(-1, 2)).reshape(dst_grid.shape)
    if method == "deposit":
        P, Q = src.grid.mesh()
        pts = src_to_dst(np.stack([P.ravel(), Q.ravel()], axis=-1))
        fi = (pts[:, 0] - dst_grid.p_range[0]) / dst_grid.dp - 0.5
        fj = (pts[:, 1] - dst_grid.q_range[0]) / dst_grid.dq - 0.5
        mass = src.values.ravel() * src.grid.cell_area
        keep = mass != 0.0
        dep = _kernels.cic_deposit(np.ascontiguousarray(fi[keep]), np.ascontiguousarray(fj[keep]),
                                   np.ascontiguousarray(mass[keep]), dst_grid.np, dst_grid.nq)
        return dep / dst_grid.cell_area
    raise ValidationError(f"unknown resampling method {method!r}")


def spot_in_lab_frame(spot, traj, coeffs, out_grid, method="auto"):
    """Place the local spot in absolute phase space around r_cl(t).

    ``method='deposit'`` conserves mass (cloud-in-cell), ``'interpolate'``
    samples bilinearly; ``'auto'`` deposits when the source grid is finer.
    """
    values = _resample(spot, out_grid,
                       lambda r: lab_to_local(r, traj, coeffs),
                       lambda x: local_to_lab(x, traj, coeffs), method)
    return PhaseSpaceField(out_grid, values, frame="absolute",
                           meta={**spot.meta, "r_cl": tuple(traj.states[-1]), "method": method})


def field_to_local_frame(field, traj, coeffs, local_grid, method="interpolate"):
    """Inverse of :func:`spot_in_lab_frame`."""
    values = _resample(field, local_grid,
                       lambda x: local_to_lab(x, traj, coeffs),
                       lambda r: lab_to_local(r, traj, coeffs), method)
    return PhaseSpaceField(local_grid, values, frame="local-scaled", meta=dict(field.meta))


def _local_window_for(out_grid, traj, coeffs, oversample=2.0):
    """Local grid covering the pre-image of ``out_grid`` at comparable resolution."""
    corners = np.array([[out_grid.p_range[i], out_grid.q_range[j]] for i in (0, 1) for j in (0, 1)])
    x = lab_to_local(corners, traj, coeffs)
    half = float(np.max(np.abs(x))) * 1.05
    # a lab cell maps to a parallelogram; resolve its shortest extent
    Linv = np.linalg.inv(lab_map(coeffs))
    steps = np.abs(Linv @ np.diag([out_grid.dp, out_grid.dq]))
    res = float(np.min(np.max(steps, axis=0))) / oversample
    n = int(2 ** np.ceil(np.log2(2 * half / res)))
    n = min(max(n, 64), 1024)
    return centered_grid((0.0, 0.0), half, half, n)


def cubic_coefficients(traj, pot, hbar, route="monodromy"):
    """a_jk for ``route`` 'monodromy' (linearized flow) or 'adiabatic' (scaled rotation)."""
    if route == "monodromy":
        return monodromy_coefficients(traj, pot, hbar)
    if route == "adiabatic":
        return airy_coefficients(traj, pot, hbar)
    raise ValidationError(f"unknown route {route!r}")


def pathint_propagator(pot, r_prime, t, hbar, out_grid, dt=1e-3, window="sinc",
                       fgrid=None, local_grid=None, method="auto", route="monodromy"):
    """Full pipeline: trajectory -> a_jk -> local spot -> absolute-frame field."""
    traj = integrate(pot, r_prime, t, dt)
    coeffs = cubic_coefficients(traj, pot, hbar, route)
    if coeffs.stability_class == "mixed":
        raise UnsupportedScenarioError("pathint does not support mixed-stability trajectories")
    if local_grid is None:
        local_grid = _local_window_for(out_grid, traj, coeffs)
    if spot_scale(coeffs) < DELTA_FRACTION * min(local_grid.dp, local_grid.dq):
        # unresolved spot: the kernel is the Liouville delta on this grid
        lab = _delta_in_lab_frame(traj, out_grid)
    else:
        spot = spot_from_fourier(coeffs, fgrid=fgrid, out_grid=local_grid, window=window)
        lab = spot_in_lab_frame(spot, traj, coeffs, out_grid, method=method)
        lab.meta["delta_limit"] = False
    lab.meta.update(coeffs=coeffs, trajectory=traj, route=route)
    return lab


def spot_scale(coeffs):
    """Length scale max|a_jk|^(1/3) of the spot in local coordinates (0 for a delta)."""
    return float(np.max(np.abs(_coeff_tuple(coeffs)))) ** (1.0 / 3.0)


def _delta_in_lab_frame(traj, out_grid):
    c = traj.states[-1]
    fi = np.array([(c[0] - out_grid.p_range[0]) / out_grid.dp - 0.5])
    fj = np.array([(c[1] - out_grid.q_range[0]) / out_grid.dq - 0.5])
    values = _kernels.cic_deposit(fi, fj, np.ones(1), out_grid.np, out_grid.nq) / out_grid.cell_area
    return PhaseSpaceField(out_grid, values, frame="absolute",
                           meta={"r_cl": tuple(c), "delta_limit": True, "method": "deposit"})


def spot_rms_radius(field, center):
    """sqrt(sum |W| |r - center|^2 / sum |W|) in absolute units."""
    P, Q = field.grid.mesh()
    w = np.abs(field.values)
    tot = w.sum()
    if tot == 0:
        return 0.0
    d2 = (P - center[0]) ** 2 + (Q - center[1]) ** 2
    return float(np.sqrt((w * d2).sum() / tot))


def _time_for_angle(pot, r_prime, target, dt, t_guess):
    t_hi = t_guess
    for _ in range(40):
        traj = integrate(pot, r_prime, t_hi, dt)
        phis = running_stability_angle(traj, pot)
        if abs(phis[-1].imag) > 1e-12 * max(1.0, abs(phis[-1])):
            raise ValidationError("recurrence probe needs an elliptic trajectory")
        if phis[-1].real >= target:
            break
        t_hi *= 1.5
    else:
        raise ValidationError(f"stability angle never reaches {target}")
    ph = phis.real
    if np.any(np.diff(ph) < 0):
        raise ValidationError("phi(t) not monotone over the bracket")
    lo, hi = 0, len(ph) - 1
    while hi - lo > 1:     # bisection on the sampled, monotone angle
        mid = (lo + hi) // 2
        if ph[mid] < target:
            lo = mid
        else:
            hi = mid
    frac = (target - ph[lo]) / (ph[hi] - ph[lo]) if ph[hi] > ph[lo] else 0.0
    return float(traj.times[lo] + frac * (traj.times[hi] - traj.times[lo]))


def recurrence_probe(pot, r_prime, hbar, phi_targets, out_half_width=0.3, n_grid=128, dt=1e-3):
    """RMS spot radius at the times where phi(t) hits each target angle."""
    results = []
    omega = None
    for target in phi_targets:
        if omega is None:
            omega = np.sqrt(max(abs(float(pot(r_prime.q if hasattr(r_prime, "q") else r_prime[1], 2))), 1e-3) / pot.mass)
        t = _time_for_angle(pot, r_prime, float(target), dt, t_guess=max(1.0, 1.2 * target / omega))
        traj = integrate(pot, r_prime, t, dt)
        grid = centered_grid(tuple(traj.states[-1]), out_half_width, out_half_width, n_grid)
        lab = pathint_propagator(pot, r_prime, t, hbar, grid, dt=dt)
        results.append((float(target), spot_rms_radius(lab, traj.states[-1])))
    return results
