import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wignerprop.classical import (
    airy_coefficients,
    anisotropy,
    classify_stability,
    integrate,
    integrate_many,
    monodromy_coefficients,
    running_stability_angle,
    spreading_rate,
    stability_angle,
)
from wignerprop.errors import DegenerateCurvatureError, EscapeError, ValidationError
from wignerprop.model import CUBIC_WELL, PhasePoint, PolynomialPotential, hamiltonian

Q_STAR = np.sqrt(0.69 / 0.987)
BARRIER = float(CUBIC_WELL(-Q_STAR))


def test_harmonic_quarter_period(harmonic):
    traj = integrate(harmonic, PhasePoint(0.0, 1.0), np.pi / 2, 1e-3)
    assert traj.states[-1] == pytest.approx([-1.0, 0.0], abs=1e-10)
    assert traj.monodromy[-1] == pytest.approx(np.array([[0.0, -1.0], [1.0, 0.0]]), abs=1e-10)
    assert traj.times[-1] == np.pi / 2
    assert np.all(np.diff(traj.times) > 0)


def test_single_step_is_near_identity(cubic):
    dt = 1e-4
    traj = integrate(cubic, PhasePoint(0.636, 0.0), dt, dt)
    assert len(traj.times) == 2
    assert np.abs(traj.states[-1] - traj.states[0]).max() < 2 * dt
    assert np.abs(traj.monodromy[-1] - np.eye(2)).max() < 2 * dt
    assert np.array_equal(traj.monodromy[0], np.eye(2))


def test_cubic_orbit_is_bound(cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 1.8, 1e-3)
    assert traj.energy < BARRIER
    assert np.all(np.abs(np.linalg.det(traj.monodromy) - 1) < 1e-6)
    assert traj.states[:, 1].min() >= -1e-12
    assert Q_STAR == pytest.approx(0.836, abs=1e-3)


def test_partial_last_step(cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 0.10005, 1e-3)
    assert traj.times[-1] == 0.10005
    assert traj.times[-2] == pytest.approx(0.1)


def test_step_checks(cubic):
    with pytest.raises(ValidationError):
        integrate(cubic, PhasePoint(0.0, 0.5), 0.1, 0.2)
    with pytest.raises(ValidationError):
        integrate(cubic, PhasePoint(0.0, 0.5), -1.0, 0.01)


def test_escape_is_reported(cubic):
    with pytest.raises(EscapeError) as info:
        integrate(cubic, PhasePoint(-2.0, -1.0), 20.0, 1e-3)
    assert 0 < info.value.time < 20.0


def test_integrate_many_keeps_order(cubic):
    r0s = [PhasePoint(0.1 * k, 0.8) for k in range(6)] + [PhasePoint(-2.0, -1.0)]
    serial = integrate_many(cubic, r0s, 5.0, 1e-2)
    threaded = integrate_many(cubic, r0s, 5.0, 1e-2, workers=4)
    for a, b, r0 in zip(serial[:-1], threaded[:-1], r0s):
        assert np.array_equal(a.states, b.states)
        assert a.states[0] == pytest.approx([r0.p, r0.q])
    assert isinstance(serial[-1], EscapeError) and isinstance(threaded[-1], EscapeError)


def test_stability_angle_limits(harmonic):
    traj = integrate(harmonic, PhasePoint(0.3, 0.2), 2.5, 1e-3)
    assert stability_angle(traj, harmonic) == pytest.approx(2.5, abs=1e-12)
    inverted = PolynomialPotential((0, 0, -0.5))
    traj = integrate(inverted, PhasePoint(0.0, 0.01), 1.5, 1e-3)
    assert stability_angle(traj, inverted) == pytest.approx(1.5j, abs=1e-12)


def test_fig3_stability_angle(cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 1.8, 1e-3)
    phi = stability_angle(traj, cubic)
    assert phi.imag == 0.0
    assert abs(phi.real - 2 * np.pi / 3) / (2 * np.pi / 3) < 0.05


def test_angle_group_property(cubic):
    r0 = PhasePoint(0.2, 0.7)
    dt = 1e-3
    whole = integrate(cubic, r0, 2.0, dt)
    first = integrate(cubic, r0, 1.2, dt)
    second = integrate(cubic, first.final, 0.8, dt)
    total = stability_angle(first, cubic) + stability_angle(second, cubic)
    assert abs(stability_angle(whole, cubic) - total) < 1e-8


def test_anisotropy_and_spreading(cubic, harmonic):
    traj = integrate(cubic, PhasePoint(0.0, Q_STAR), 0.5, 1e-3)
    assert anisotropy(traj, cubic, 0.0) == pytest.approx(1 / (1.974 * Q_STAR))
    assert anisotropy(traj, cubic, 0.0) == pytest.approx(0.606, abs=1e-3)
    sigma = spreading_rate(traj, cubic, 0.0, 0.01)
    assert sigma == pytest.approx(0.606**0.75 * 1e-4 * 1.974 / 8, rel=2e-3)
    assert sigma == pytest.approx(1.69e-5, rel=1e-2)
    assert spreading_rate(traj, cubic, 0.0, 0.02) == pytest.approx(4 * sigma, rel=1e-14)
    h = integrate(harmonic, PhasePoint(0.0, 1.0), 1.0, 1e-3)
    assert anisotropy(h, harmonic, 0.3) == pytest.approx(1.0)
    assert spreading_rate(h, harmonic, 0.3, 0.01) == 0.0


def test_inflection_is_degenerate(cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 0.5, 1e-3)
    with pytest.raises(DegenerateCurvatureError):
        anisotropy(traj, cubic, 0.0)
    with pytest.raises(DegenerateCurvatureError):
        spreading_rate(traj, cubic, 0.0, 0.01)


def test_classes():
    assert classify_stability([1.0, 2.0]) == "elliptic"
    assert classify_stability([-1.0, -2.0]) == "hyperbolic"
    assert classify_stability([-1.0, 2.0]) == "mixed"
    # an isolated inflection sample does not change the class
    assert classify_stability([0.0, 1.0, 2.0]) == "elliptic"


def test_harmonic_coefficients_vanish(harmonic):
    traj = integrate(harmonic, PhasePoint(0.0, 1.0), 2.0, 1e-3)
    for c in (airy_coefficients(traj, harmonic, 0.01), monodromy_coefficients(traj, harmonic, 0.01)):
        assert np.all(c.as_array() == 0.0)
        assert c.stability_class == "elliptic"


def test_short_time_coefficients(cubic):
    r0 = PhasePoint(0.0, Q_STAR)
    traj0 = integrate(cubic, r0, 0.01, 1e-4)
    sigma0 = spreading_rate(traj0, cubic, 0.0, 0.01)
    errs, a30s = [], []
    for t in (0.02, 0.04, 0.08):
        c = airy_coefficients(integrate(cubic, r0, t, 1e-4), cubic, 0.01)
        errs.append(abs(c.a03 / (sigma0 * t) - 1))
        a30s.append(abs(c.a30))
    # relative error O(t^2): doubling t multiplies it by ~4
    assert errs[1] / errs[0] == pytest.approx(4, rel=0.1)
    assert errs[2] / errs[1] == pytest.approx(4, rel=0.1)
    # a30 = O(t^4): doubling t multiplies it by ~16
    assert a30s[1] / a30s[0] == pytest.approx(16, rel=0.1)


def test_hyperbolic_coefficients(cubic):
    traj = integrate(cubic, PhasePoint(0.0, -0.8), 1.0, 1e-3)
    c = airy_coefficients(traj, cubic, 0.01)
    assert c.stability_class == "hyperbolic"
    assert c.phi.real == 0.0 and c.phi.imag > 0
    assert np.all(np.isfinite(c.as_array()))
    assert not c.flagged


def test_mixed_is_flagged(cubic):
    # the elliptic scenario run for longer dips into q < 0
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 4.5, 1e-3)
    c = airy_coefficients(traj, cubic, 0.01)
    assert c.stability_class == "mixed"
    assert c.flagged


def test_energy_conservation_long_run(cubic):
    for r0, t in ((PhasePoint(0.636, 0.0), 10.0), (PhasePoint(0.0, 1.2), 10.0), (PhasePoint(0.0, -0.8), 1.0)):
        traj = integrate(cubic, r0, t, 1e-3)
        drift = np.abs(hamiltonian(cubic, traj.states) - traj.energy) / max(1.0, abs(traj.energy))
        assert drift.max() < 1e-6
        assert np.abs(np.linalg.det(traj.monodromy) - 1).max() < 1e-6


def test_convergence_order(harmonic):
    r0 = PhasePoint(0.4, 1.0)
    t = 3.0
    exact = np.array([0.4 * np.cos(t) - np.sin(t), 0.4 * np.sin(t) + np.cos(t)])
    errs = [np.linalg.norm(integrate(harmonic, r0, t, dt).states[-1] - exact) for dt in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.9)


def test_monodromy_matches_finite_differences(cubic):
    r0 = np.array([0.636, 0.0])
    t, dt, h = 1.8, 1e-3, 1e-6
    M = integrate(cubic, r0, t, dt).monodromy[-1]
    for col in range(2):
        e = np.zeros(2)
        e[col] = h
        fd = (integrate(cubic, r0 + e, t, dt).states[-1] - integrate(cubic, r0 - e, t, dt).states[-1]) / (2 * h)
        assert np.linalg.norm(fd - M[:, col]) / np.linalg.norm(M[:, col]) < 1e-4


def test_running_angle_is_cumulative(cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 1.0, 1e-3)
    phis = running_stability_angle(traj, cubic)
    assert phis[0] == 0
    assert np.all(np.diff(phis.real) >= 0)


def test_trajectory_dump(tmp_path, cubic):
    traj = integrate(cubic, PhasePoint(0.636, 0.0), 0.1, 1e-2)
    path = tmp_path / "traj.txt"
    traj.dump(path)
    data = np.loadtxt(path)
    assert data.shape == (len(traj.times), 7)
    assert path.read_text().startswith("# s p q M11 M12 M21 M22")
    assert np.array_equal(data[:, 1:3], traj.states)


@settings(max_examples=25, deadline=None)
@given(p=st.floats(-0.4, 0.4), q=st.floats(0.4, 1.2), t=st.floats(0.5, 4.0))
def test_symplectic_and_conservative_in_the_well(p, q, t):
    r0 = PhasePoint(p, q)
    if hamiltonian(CUBIC_WELL, r0) >= BARRIER - 0.05:
        return
    traj = integrate(CUBIC_WELL, r0, t, 1e-3)
    assert np.abs(np.linalg.det(traj.monodromy) - 1).max() < 1e-6
    drift = np.abs(hamiltonian(CUBIC_WELL, traj.states) - traj.energy) / max(1.0, abs(traj.energy))
    assert drift.max() < 1e-6
