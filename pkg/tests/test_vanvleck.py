import numpy as np
import pytest

from wignerprop.classical import integrate
from wignerprop.errors import ValidationError
from wignerprop.fields import centered_grid
from wignerprop.model import CUBIC_WELL, PhasePoint, PolynomialPotential
from wignerprop.vanvleck import (
    CAUSTIC,
    EXTREMUM,
    SADDLE,
    assemble_spot,
    caustic_mask,
    classify_sheets,
    propagate_pair,
    propagate_pairs,
    seed_pairs,
    vanvleck_propagator,
)

R0 = PhasePoint(0.636, 0.0)
T = 1.8


@pytest.fixture(scope="module")
def r_cl():
    return integrate(CUBIC_WELL, R0, T, 1e-3).states[-1]


@pytest.fixture(scope="module")
def grid(r_cl):
    return centered_grid(tuple(r_cl), 0.2, 0.2, 128)


@pytest.fixture(scope="module")
def ens():
    return classify_sheets(propagate_pairs(CUBIC_WELL, R0, T, 100, 128, 1.33))


def test_seed_trivial():
    d = seed_pairs(R0, 1, 1, 0.1)
    assert d.shape == (1, 2)
    assert d[0] == pytest.approx([0.1, 0.0], abs=1e-15)


@pytest.mark.parametrize("rp", [R0, PhasePoint(0.0, -0.8), PhasePoint(0.0, 0.7),
                                PhasePoint(0.125, -0.765625)])
def test_seed_count_and_exact_midpoints(rp):
    # exact whenever r' +- delta/2 stay representable (no binade crossing with low bits)
    d = seed_pairs(rp, 7, 13, 0.37)
    assert d.shape == (7 * 13, 2)
    r0 = rp.as_array()
    mid = ((r0 + d / 2) + (r0 - d / 2)) / 2
    assert np.array_equal(mid, np.broadcast_to(r0, mid.shape))
    rho = np.hypot(d[:, 0], d[:, 1]).reshape(7, 13)
    assert rho[:, 0] == pytest.approx(0.37 * np.arange(1, 8) / 7)
    theta = np.arctan2(d[:, 1], d[:, 0]).reshape(7, 13)[0]
    assert np.all((theta >= 0) & (theta < np.pi))


def test_seed_checks():
    with pytest.raises(ValidationError):
        seed_pairs(R0, 0, 8, 0.1)
    with pytest.raises(ValidationError):
        seed_pairs(R0, 3, 8, -1.0)


def test_harmonic_pair_has_no_action(harmonic):
    pair = propagate_pair(harmonic, PhasePoint(0.0, 1.0), [0.3, -0.2], np.pi / 2, 1e-3)
    assert abs(pair.action) < 1e-8
    assert [pair.final_midpoint.p, pair.final_midpoint.q] == pytest.approx([-1.0, 0.0], abs=1e-10)
    assert abs(pair.amplitude_den) < 1e-10


def test_swap_symmetry():
    a = propagate_pair(CUBIC_WELL, R0, [0.2, 0.1], T, 1e-3)
    b = propagate_pair(CUBIC_WELL, R0, [-0.2, -0.1], T, 1e-3)
    assert b.action == pytest.approx(-a.action, rel=1e-12, abs=1e-15)
    assert (b.final_midpoint.p, b.final_midpoint.q) == pytest.approx((a.final_midpoint.p, a.final_midpoint.q),
                                                                   rel=1e-12, abs=1e-14)
    assert abs(b.amplitude_den) == pytest.approx(abs(a.amplitude_den), rel=1e-10)
    s = a.swapped()
    assert s.action == -a.action and np.array_equal(s.delta, -a.delta)


def test_pair_matches_batch():
    ens = propagate_pairs(CUBIC_WELL, R0, T, 3, 8, 0.3)
    k, l = 2, 5
    single = propagate_pair(CUBIC_WELL, R0, ens.deltas[k, l], T, 1e-3)
    assert single.action == pytest.approx(ens.action[k, l], rel=1e-9, abs=1e-12)
    view = ens.pair(k, l)
    assert (view.final_midpoint.p, view.final_midpoint.q) == pytest.approx(
        (single.final_midpoint.p, single.final_midpoint.q), abs=1e-12)
    assert view.amplitude_den == pytest.approx(single.amplitude_den, rel=1e-9)


def test_small_chord_midpoint_is_second_order(r_cl):
    dist = []
    for mag in (1e-3, 5e-4):
        pair = propagate_pair(CUBIC_WELL, R0, [mag * 0.6, mag * 0.8], T, 1e-3)
        dist.append(np.hypot(pair.final_midpoint.p - r_cl[0], pair.final_midpoint.q - r_cl[1]))
    assert dist[0] < 1e-5
    assert dist[0] / dist[1] == pytest.approx(4.0, rel=0.05)


def test_chord_shrinking_slope(r_cl):
    rhos = np.array([0.01, 0.02, 0.04, 0.08])
    d = []
    for r in rhos:
        e = propagate_pairs(CUBIC_WELL, R0, T, 4, 32, r)
        d.append(np.max(np.hypot(*(e.final_midpoint - r_cl).reshape(-1, 2).T)))
    slope = np.polyfit(np.log(rhos), np.log(d), 1)[0]
    assert abs(slope - 2) < 0.2


def test_harmonic_all_caustic(harmonic):
    e = classify_sheets(propagate_pairs(harmonic, PhasePoint(0.0, 1.0), np.pi / 2, 10, 16, 0.5))
    assert e.count(CAUSTIC) == e.size


def test_classification_too_coarse():
    e = propagate_pairs(CUBIC_WELL, R0, T, 2, 16, 0.3)
    with pytest.raises(ValidationError):
        classify_sheets(e)
    e = propagate_pairs(CUBIC_WELL, R0, T, 5, 4, 0.3)
    with pytest.raises(ValidationError):
        classify_sheets(e)


def test_classification_other_r_prime_rejected(ens):
    with pytest.raises(ValidationError):
        classify_sheets(ens, PhasePoint(0.0, 0.0))


def test_both_sheets_present(ens):
    assert ens.count(EXTREMUM) > 0 and ens.count(SADDLE) > 0
    # caustics sit between the sheets: every radial ray changes sheet at most at a caustic
    lab = ens.labels
    for l in range(lab.shape[1]):
        ray = lab[:, l]
        ray = ray[ray != 0]
        assert np.sum(np.diff(ray) != 0) <= 2


def test_jacobian_sign_invariant_under_swap(ens):
    swapped = classify_sheets(ens.swapped())
    assert np.array_equal(swapped.labels, ens.labels)


def test_assemble_swap_invariance(ens, grid):
    a = assemble_spot(ens, grid, 0.01)
    b = assemble_spot(classify_sheets(ens.swapped()), grid, 0.01)
    assert np.max(np.abs(a.values - b.values)) <= 1e-12 * np.max(np.abs(a.values))


def test_shadow_is_exactly_zero(ens, grid):
    f = assemble_spot(ens, grid, 0.01)
    from scipy.spatial import cKDTree
    ok = ens.labels > 0
    tree = cKDTree(ens.final_midpoint[ok])
    P, Q = grid.mesh()
    dist, _ = tree.query(np.column_stack([P.ravel(), Q.ravel()]))
    far = dist.reshape(grid.shape) > f.meta["smoothing_radius"]
    assert far.any()
    assert np.all(f.values[far] == 0.0)


def test_fringes_coarsen_with_hbar(ens, grid, r_cl):
    ip, iq = grid.cell_of(*r_cl)
    counts = []
    for hbar in (0.01, 0.02):
        line = assemble_spot(ens, grid, hbar).values[ip, :]
        line = line[line != 0]
        counts.append(int(np.sum(np.diff(np.sign(line)) != 0)))
    assert counts[1] < counts[0]


def test_mask_properties(ens, grid, harmonic):
    m = caustic_mask(ens, grid)
    ill = m.meta["illuminated_cells"]
    assert set(np.unique(m.values)) <= {0.0, 1.0}
    assert (m.values[ill] == 1).mean() < 0.25
    assert np.all(caustic_mask(ens, grid, eps_caustic=np.inf).values == 1)
    he = classify_sheets(propagate_pairs(harmonic, PhasePoint(0.0, 1.0), np.pi / 2, 10, 16, 0.5))
    hg = centered_grid((-1.0, 0.0), 0.2, 0.2, 16)
    assert np.all(caustic_mask(he, hg).values == 1)


def test_liouville_limit(harmonic):
    for r0, t in ((PhasePoint(0.0, 1.0), np.pi / 2), (PhasePoint(0.3, -0.4), 0.7)):
        rc = integrate(harmonic, r0, t, 1e-3).states[-1]
        g = centered_grid(tuple(rc), 0.3, 0.3, 31)
        f, mask, e = vanvleck_propagator(harmonic, r0, t, 0.01, g, n_radii=10, n_angles=16)
        ip, iq = g.cell_of(*rc)
        a = np.abs(f.values)
        assert a[ip - 1:ip + 2, iq - 1:iq + 2].sum() >= 0.99 * a.sum()
        assert f.integral() == pytest.approx(1.0)
    inverted = PolynomialPotential((0.0, 0.0, -0.5))
    rc = integrate(inverted, PhasePoint(0.2, 0.1), 1.0, 1e-3).states[-1]
    g = centered_grid(tuple(rc), 0.3, 0.3, 31)
    f, _, _ = vanvleck_propagator(inverted, PhasePoint(0.2, 0.1), 1.0, 0.01, g, n_radii=10, n_angles=16)
    ip, iq = g.cell_of(*rc)
    a = np.abs(f.values)
    assert a[ip - 1:ip + 2, iq - 1:iq + 2].sum() >= 0.99 * a.sum()


def test_nonclassical_paths_exist(ens, grid, r_cl):
    ok = ens.labels > 0
    mid = ens.final_midpoint[ok]
    cells = np.maximum(np.abs(mid[:, 0] - r_cl[0]) / grid.dp, np.abs(mid[:, 1] - r_cl[1]) / grid.dq)
    assert np.sum(cells > 10) > 0


def test_empty_field_warns(ens, caplog):
    far = centered_grid((5.0, 5.0), 0.1, 0.1, 8)
    with caplog.at_level("WARNING"):
        f = assemble_spot(ens, far, 0.01)
    assert np.all(f.values == 0)
    assert "zero field" in caplog.text
