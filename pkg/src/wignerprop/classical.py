"""Classical trajectories, stability matrices and the cubic-phase ingredients.

The flow of ``H = p^2/2m + V(q)`` is integrated together with its
monodromy matrix ``M(s) = d r(s) / d r(0)`` using a fixed-step classical
RK4 on the joint (state, M) system.  On top of a recorded trajectory this
module computes the stability angle ``phi(t)``, the anisotropy ``mu``,
the spreading rate ``sigma`` and the four cubic coefficients ``a_jk``.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateCurvatureError, EscapeError, ValidationError
from .model import PhasePoint, hamiltonian

logger = logging.getLogger(__name__)

__all__ = [
    "TrajectoryRecord",
    "AiryCoefficients",
    "integrate",
    "integrate_many",
    "stability_angle",
    "running_stability_angle",
    "anisotropy",
    "spreading_rate",
    "airy_coefficients",
    "classify_stability",
    "linear_map",
    "lab_map",
    "monodromy_coefficients",
    "ESCAPE_BOUND",
    "EPS_CURV",
]

ESCAPE_BOUND = 1e3
EPS_CURV = 1e-9
MIN_STEPS = 16


@dataclass(frozen=True)
class TrajectoryRecord:
    """Sampled classical trajectory r(s) = (p, q) with its monodromy history."""

    times: np.ndarray        # (N+1,)
    states: np.ndarray       # (N+1, 2), columns (p, q)
    monodromy: np.ndarray    # (N+1, 2, 2)
    energy: float
    curvature2: np.ndarray   # V''(q(s_i))
    curvature3: np.ndarray   # V'''(q(s_i))
    velocities: np.ndarray   # (N+1, 2), (dp/ds, dq/ds)

    @property
    def t(self):
        return float(self.times[-1])

    @property
    def initial(self):
        return PhasePoint.from_array(self.states[0])

    @property
    def final(self):
        return PhasePoint.from_array(self.states[-1])

    def state_at(self, s):
        """Cubic Hermite interpolation of the state at time ``s``."""
        s = float(s)
        if not (self.times[0] - 1e-12 <= s <= self.times[-1] + 1e-12):
            raise ValidationError(f"time {s} outside trajectory span [0, {self.t}]")
        i = int(np.clip(np.searchsorted(self.times, s) - 1, 0, len(self.times) - 2))
        h = self.times[i + 1] - self.times[i]
        u = (s - self.times[i]) / h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        r = (h00 * self.states[i] + h10 * h * self.velocities[i]
             + h01 * self.states[i + 1] + h11 * h * self.velocities[i + 1])
        return PhasePoint.from_array(r)

    def dump(self, path):
        """Text dump with columns ``s p q M11 M12 M21 M22``."""
        data = np.column_stack([self.times, self.states, self.monodromy.reshape(-1, 4)])
        np.savetxt(path, data, fmt="%.17g", header="s p q M11 M12 M21 M22")


@dataclass(frozen=True)
class AiryCoefficients:
    a30: float
    a21: float
    a12: float
    a03: float
    phi: complex
    mu: float
    stability_class: str        # "elliptic" | "hyperbolic" | "mixed"
    imag_residue: float = 0.0   # relative imaginary residue (mixed class only)
    route: str = "adiabatic"    # "adiabatic" (scaled frame) or "monodromy" (unscaled)
    final_map: tuple = None     # M(t) as ((M11, M12), (M21, M22)), monodromy route only

    @property
    def flagged(self):
        return self.stability_class == "mixed" or self.imag_residue > 1e-9

    def as_array(self):
        return np.array([self.a30, self.a21, self.a12, self.a03])

    @classmethod
    def zeros(cls, phi=0.0, mu=1.0, stability_class="elliptic"):
        return cls(0.0, 0.0, 0.0, 0.0, complex(phi), mu, stability_class)


def _step_plan(t, dt):
    if not (np.isfinite(t) and t > 0):
        raise ValidationError(f"t must be positive, got {t}")
    if not (np.isfinite(dt) and dt > 0):
        raise ValidationError(f"dt must be positive, got {dt}")
    if dt > t * (1 + 1e-12):
        raise ValidationError(f"dt={dt} exceeds t={t}")
    n_steps = int(np.floor(t / dt + 1e-9))
    h_last = t - n_steps * dt
    if h_last <= 1e-12 * t:
        h_last = 0.0
    if n_steps + (h_last > 0) < MIN_STEPS:
        logger.warning("only %d integration steps for t=%g, dt=%g", n_steps + (h_last > 0), t, dt)
    return n_steps, h_last


def integrate(pot, r0, t, dt, bound=ESCAPE_BOUND):
    """Integrate the trajectory from ``r0`` over ``[0, t]`` with step ``dt``.

    The last step is shortened so that the final sample sits exactly at ``t``.
    Raises :class:`EscapeError` if |p| or |q| exceed ``bound``.
    """
    if not isinstance(r0, PhasePoint):
        r0 = PhasePoint.from_array(r0)
    n_steps, h_last = _step_plan(t, dt)
    c1 = pot.derivative_coefficients(1)
    c2 = pot.derivative_coefficients(2)
    states, mono, status, n_done = _kernels.rk4_track(
        float(r0.p), float(r0.q), c1, c2, pot.mass, float(dt), n_steps, float(h_last), float(bound))
    times = np.arange(n_steps + 1) * dt
    if h_last > 0:
        times = np.append(times, t)
    else:
        times[-1] = t
    if status != _kernels.OK:
        t_esc = float(times[min(n_done, len(times) - 1)])
        raise EscapeError(f"trajectory from ({r0.p}, {r0.q}) escaped at s={t_esc:.6g}", time=t_esc)
    q = states[:, 1]
    velocities = np.column_stack([-pot(q, 1), states[:, 0] / pot.mass])
    return TrajectoryRecord(
        times=times,
        states=np.ascontiguousarray(states),
        monodromy=mono.reshape(-1, 2, 2).copy(),
        energy=float(hamiltonian(pot, r0)),
        curvature2=pot(q, 2),
        curvature3=pot(q, 3),
        velocities=velocities,
    )


def integrate_many(pot, r0s, t, dt, bound=ESCAPE_BOUND, workers=None):
    """Integrate several trajectories; output order always follows ``r0s``.

    Escaped trajectories come back as the :class:`EscapeError` instance in
    their slot instead of raising.
    """
    def one(r0):
        try:
            return integrate(pot, r0, t, dt, bound)
        except EscapeError as exc:
            return exc

    r0s = list(r0s)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(one, r0s))
    return [one(r0) for r0 in r0s]


def running_stability_angle(traj, pot):
    """Cumulative phi(s_i) at every sample (complex; imaginary where hyperbolic)."""
    # T''(p) = 1/m for the standard form
    rate = np.sqrt(traj.curvature2.astype(complex) / pot.mass)
    inc = 0.5 * np.diff(traj.times) * (rate[1:] + rate[:-1])
    return np.concatenate([[0.0 + 0.0j], np.cumsum(inc)])


def stability_angle(traj, pot):
    """phi(t) = int_0^t sqrt(T'' V'') ds by trapezoidal quadrature."""
    return complex(running_stability_angle(traj, pot)[-1])


def _curvature_at(traj, pot, s):
    return float(pot(traj.state_at(s).q, 2))


def anisotropy(traj, pot, s, eps_curv=EPS_CURV):
    """mu(s) = T''/|V''| at the trajectory point q_cl(s)."""
    v2 = _curvature_at(traj, pot, s)
    if abs(v2) < eps_curv:
        raise DegenerateCurvatureError(f"|V''| = {abs(v2):.3g} < {eps_curv:g} at s={s}")
    return (1.0 / pot.mass) / abs(v2)


def spreading_rate(traj, pot, s, hbar, eps_curv=EPS_CURV):
    """sigma(s) = mu^{3/4} hbar^2 V'''(q_cl(s)) / 8."""
    mu = anisotropy(traj, pot, s, eps_curv)
    q = traj.state_at(s).q
    return mu**0.75 * hbar**2 * float(pot(q, 3)) / 8.0


def classify_stability(curvature2, eps_curv=EPS_CURV):
    """Stability class from the signs of the non-degenerate V'' samples."""
    c = np.asarray(curvature2)
    nondeg = c[np.abs(c) > eps_curv]
    if nondeg.size == 0:
        return "mixed"
    if np.all(nondeg > 0):
        return "elliptic"
    if np.all(nondeg < 0):
        return "hyperbolic"
    return "mixed"


def _weight_integrals(times, kappa):
    """Per-interval integrals of |kappa|^{-3/4} with kappa linear on each interval.

    Exact for linear kappa, so sampled zeros of V'' (integrable s^{-3/4}
    singularities) are handled without dropping samples.  Returns complex
    weights carrying the principal-branch phase of negative kappa.
    """
    h = np.diff(times)
    k0 = kappa[:-1]
    k1 = kappa[1:]
    out = np.zeros(len(h), dtype=complex)

    def branch(k):
        return np.where(k < 0, np.exp(-0.75j * np.pi), 1.0)

    same = k0 * k1 > 0
    a0 = np.abs(k0)
    a1 = np.abs(k1)
    with np.errstate(divide="ignore", invalid="ignore"):
        close = np.abs(a1 - a0) <= 1e-12 * np.maximum(a0, a1)
        w_same = np.where(close, h * np.maximum(a0, a1) ** -0.75,
                          4.0 * h * (a1**0.25 - a0**0.25) / (a1 - a0))
        out[same] = (w_same * branch(k0))[same]
        # sign change or touching zero: split at the linear root
        cross = ~same
        denom = np.where(cross, a0 + a1, 1.0)
        u0 = np.where(cross, a0 / denom, 0.0)
        w0 = np.where(a0 > 0, 4.0 * u0 * h * a0**0.25 / np.where(a0 > 0, a0, 1.0), 0.0)
        w1 = np.where(a1 > 0, 4.0 * (1 - u0) * h * a1**0.25 / np.where(a1 > 0, a1, 1.0), 0.0)
        out[cross] = (w0 * branch(k0) + w1 * branch(k1))[cross]
    return out


def airy_coefficients(traj, pot, hbar, eps_curv=EPS_CURV):
    """The cubic-phase coefficients a_jk = int sigma(s) sin^j(phi) cos^k(phi) ds.

    Elliptic trajectories use real trigonometric functions of phi; hyperbolic
    ones use sinh/cosh of |phi| with |mu|.  Mixed trajectories are evaluated
    by analytic continuation on the principal branch, the real parts are
    kept and the result is flagged.
    """
    if not (hbar > 0):
        raise ValidationError("hbar must be positive")
    cls = classify_stability(traj.curvature2, eps_curv)
    kappa = pot.mass * traj.curvature2
    weights = _weight_integrals(traj.times, kappa)
    phis = running_stability_angle(traj, pot)
    if cls == "elliptic":
        s, c = np.sin(phis.real), np.cos(phis.real)
        weights = weights.real
    elif cls == "hyperbolic":
        th = phis.imag
        s, c = np.sinh(th), np.cosh(th)
        weights = np.abs(weights)
    else:
        s, c = np.sin(phis), np.cos(phis)
    if np.any(np.abs(kappa) <= eps_curv):
        logger.info("trajectory touches an inflection point (|V''| <= %g); using product quadrature", eps_curv)
    smooth = hbar**2 * traj.curvature3 / 8.0
    coeffs = []
    for j, k in ((3, 0), (2, 1), (1, 2), (0, 3)):
        g = smooth * s**j * c**k
        coeffs.append(np.sum(weights * 0.5 * (g[:-1] + g[1:])))
    coeffs = np.array(coeffs)
    scale = max(np.max(np.abs(coeffs)), 1e-300)
    residue = float(np.max(np.abs(np.imag(coeffs))) / scale) if np.iscomplexobj(coeffs) else 0.0
    phi_t = complex(phis[-1])
    v2_end = traj.curvature2[-1]
    if abs(v2_end) < eps_curv:
        raise DegenerateCurvatureError(f"final point sits on an inflection (V''={v2_end:.3g})")
    mu_t = (1.0 / pot.mass) / abs(v2_end)
    if cls == "mixed":
        logger.warning("mixed-stability trajectory: a_jk computed by continuation and flagged")
    a = np.real(coeffs)
    return AiryCoefficients(float(a[0]), float(a[1]), float(a[2]), float(a[3]),
                            phi=phi_t, mu=float(mu_t), stability_class=cls, imag_residue=residue)


def monodromy_coefficients(traj, pot, hbar, eps_curv=EPS_CURV):
    """Cubic-phase coefficients from the linearized flow itself.

    Same third-order phase as :func:`airy_coefficients`, but the wave vector
    is transported by the monodromy matrix instead of the scaled rotation:
    ``a_jk = (hbar^2/8) int V3(s) M21^j M22^k ds`` in unscaled coordinates.
    No anisotropy enters, so trajectories through inflection points stay
    regular.  The lab map is ``x = M(t) x0``.
    """
    if not (hbar > 0):
        raise ValidationError("hbar must be positive")
    cls = classify_stability(traj.curvature2, eps_curv)
    phi_t = complex(running_stability_angle(traj, pot)[-1])
    f = hbar**2 * traj.curvature3 / 8.0
    m21 = traj.monodromy[:, 1, 0]
    m22 = traj.monodromy[:, 1, 1]
    h = np.diff(traj.times)
    a = []
    for j, k in ((3, 0), (2, 1), (1, 2), (0, 3)):
        g = f * m21**j * m22**k
        a.append(float(np.sum(0.5 * h * (g[:-1] + g[1:]))))
    v2_end = abs(traj.curvature2[-1])
    mu_t = (1.0 / pot.mass) / v2_end if v2_end > eps_curv else float("inf")
    return AiryCoefficients(*a, phi=phi_t, mu=float(mu_t), stability_class=cls, route="monodromy",
                            final_map=tuple(map(tuple, traj.monodromy[-1].tolist())))


def lab_map(coeffs):
    """Matrix taking local spot coordinates to displacements from r_cl(t)."""
    if coeffs.route == "monodromy":
        return np.array(coeffs.final_map, dtype=float)
    s = coeffs.mu ** 0.25
    return np.diag([1.0 / s, s]) @ linear_map(coeffs)


def linear_map(coeffs):
    """2x2 map in scaled (eta, xi) coordinates over the whole trajectory.

    Rotation by phi for elliptic trajectories, the real hyperbolic
    rotation ``[[cosh, sinh], [sinh, cosh]]`` for hyperbolic ones.
    """
    if coeffs.stability_class == "elliptic":
        ph = coeffs.phi.real
        c, s = np.cos(ph), np.sin(ph)
        return np.array([[c, -s], [s, c]])
    if coeffs.stability_class == "hyperbolic":
        th = coeffs.phi.imag
        c, s = np.cosh(th), np.sinh(th)
        return np.array([[c, s], [s, c]])
    raise ValidationError("no linear map for mixed stability")
