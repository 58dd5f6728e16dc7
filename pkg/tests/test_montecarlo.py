import numpy as np
import pytest
from scipy import stats

from conftest import N2_MASS, SPHERE_RADIUS
from desorb.flux import (CosineLaw, FixedDirection, IsotropicDirection,
                         SingleSite, total_rate)
from desorb.geometry import BodySpec, Cylinder, Sphere, build_quadrature
from desorb.moments import Diffusion6, diffusion_tensor, force_torque
from desorb.montecarlo import (compare_to_prediction, simulate_ensemble,
                               simulate_free_rotation, simulate_trajectory)
from desorb.rng import stream
from desorb.spectra import MaxwellBoltzmannFlux, Monoenergetic

E0 = 4.141947e-21
P0 = np.sqrt(2.0 * N2_MASS * E0)


def test_zero_event_trajectories_constant(sphere_quad_coarse):
    # vanishingly small rate: no events, moments stay at zero
    model = CosineLaw(MaxwellBoltzmannFlux(300.0), 1e-12)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 64, seed=1)
    assert em.event_counts.sum() == 0
    assert np.all(em.mean == 0.0)
    assert np.all(em.cov == 0.0)


def test_trajectory_momentum_bookkeeping(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0), 5e3 / sphere_quad_coarse.total_area)
    rng = stream(3, "test-traj")
    traj = simulate_trajectory(model, sphere_quad_coarse, N2_MASS, 1.0, rng,
                               check_conservation=True)
    # piecewise-constant record: one state per event plus the initial one
    assert traj.momenta.shape == (len(traj.times) + 1, 3)
    # final momentum equals minus the summed atom momenta
    p_atoms = np.sqrt(2 * N2_MASS * traj.energies)[:, None] * traj.directions
    np.testing.assert_allclose(traj.momenta[-1], -p_atoms.sum(axis=0),
                               atol=1e-30)
    np.testing.assert_allclose(
        traj.angular[-1], -np.cross(traj.sites, p_atoms).sum(axis=0),
        atol=1e-37)


def test_isotropic_site_covariance_matches_prediction(sphere_quad_coarse):
    # oracle: the moments module (itself pinned to the 1/3 hand integral)
    gamma = 25.0
    model = SingleSite(np.zeros(3), IsotropicDirection(), Monoenergetic(E0),
                       gamma)
    d = diffusion_tensor(model, sphere_quad_coarse, N2_MASS)
    f = force_torque(model, sphere_quad_coarse, N2_MASS)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 20000,
                           seed=7)
    report = compare_to_prediction(em, d, f)
    assert report.passed, report.summary()
    # angular momentum never kicks for a site at the center of mass
    assert np.all(em.cov[-1][3:, 3:] == 0.0)


def test_directed_site_mean_drift(sphere_quad_coarse):
    # Poisson mean count times kick: <P>(t) = -Gamma p0 n t, matching the
    # force_torque sign convention
    gamma = 25.0
    model = SingleSite(np.array([0.0, 0.0, SPHERE_RADIUS]),
                       FixedDirection([0.0, 0.0, 1.0]), Monoenergetic(E0),
                       gamma)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 20000,
                           seed=11)
    t = em.times[-1]
    expected = -gamma * P0 * t
    z = (em.mean[-1][2] - expected) / em.stderr_mean[-1][2]
    assert abs(z) < 4.0
    f = force_torque(model, sphere_quad_coarse, N2_MASS)
    assert f.force[2] == pytest.approx(-gamma * P0, rel=1e-12)


def test_event_counts_poisson_chi2(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0),
                      8.0 / sphere_quad_coarse.total_area)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 50000,
                           seed=13)
    lam = total_rate(model, sphere_quad_coarse) * 1.0
    kmax = int(stats.poisson.ppf(0.9999, lam)) + 1
    counts = np.bincount(np.minimum(em.event_counts, kmax), minlength=kmax + 1)
    probs = stats.poisson.pmf(np.arange(kmax + 1), lam)
    probs[-1] = 1.0 - probs[:-1].sum() + stats.poisson.pmf(kmax, lam)
    expected = probs * len(em.event_counts)
    keep = expected > 10
    chi2 = np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3


def test_bitwise_reproducible_across_threads(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0),
                      50.0 / sphere_quad_coarse.total_area)
    runs = [simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 0.1, 6000,
                              seed=99, threads=t) for t in (1, 4, 16)]
    for other in runs[1:]:
        assert np.array_equal(runs[0].mean, other.mean)
        assert np.array_equal(runs[0].cov, other.cov)
        assert np.array_equal(runs[0].stderr_cov, other.stderr_cov)
        assert np.array_equal(runs[0].event_counts, other.event_counts)


def test_same_seed_identical_different_seed_not(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0),
                      100.0 / sphere_quad_coarse.total_area)
    a = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 0.1, 2000, seed=5)
    b = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 0.1, 2000, seed=5)
    c = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 0.1, 2000, seed=6)
    assert np.array_equal(a.mean, b.mean)
    assert not np.array_equal(a.mean, c.mean)


def test_self_consistency_passes_and_scaled_d_fails(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0),
                      15.0 / sphere_quad_coarse.total_area)
    d = diffusion_tensor(model, sphere_quad_coarse, N2_MASS)
    f = force_torque(model, sphere_quad_coarse, N2_MASS)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 100_000,
                           seed=21)
    report = compare_to_prediction(em, d, f)
    assert report.passed, report.summary()
    scaled = Diffusion6(1.1 * d.d_tt, 1.1 * d.d_tr, 1.1 * d.d_rt, 1.1 * d.d_rr)
    report_bad = compare_to_prediction(em, scaled, f)
    assert not report_bad.passed
    # the detection comes from the diagonal covariance entries
    diag_idx = [0, 6, 11, 15, 18, 20]  # (i,i) positions in the triu order
    assert np.max(np.abs(report_bad.z_cov[diag_idx])) > 4.0


def test_cylinder_biased_rate_cross_block(sphere_quad_coarse):
    # axially biased emission from a capped cylinder: nonzero P-J coupling
    body = BodySpec(Cylinder(5e-8, 1.1e-7, capped=True))
    q = build_quadrature(body, 16)
    h = 1.1e-7
    rate_field = lambda pts: (20.0 / q.total_area) * (1.0 + 0.8 * pts[:, 2] / h)
    model = CosineLaw(MaxwellBoltzmannFlux(300.0), rate_field)
    d = diffusion_tensor(model, q, N2_MASS)
    f = force_torque(model, q, N2_MASS)
    # quadrature predicts a genuinely nonzero tr block for this model
    assert np.max(np.abs(d.d_tr)) > 1e-3 * np.sqrt(
        np.max(np.abs(d.d_tt)) * np.max(np.abs(d.d_rr)))
    em = simulate_ensemble(model, q, N2_MASS, 1.0, 100_000, seed=23)
    report = compare_to_prediction(em, d, f)
    assert report.passed, report.summary()


def test_free_rotation_smoke():
    body = BodySpec(Sphere(SPHERE_RADIUS), mass=1e-18)
    r = simulate_free_rotation(body, [0.0, 0.0, 1e-26], 1e-3, n_steps=200)
    # sphere: J along z precesses the body about z; stays a rotation
    assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(r) - 1.0) < 1e-12


def test_free_rotation_trajectory_flag(sphere_quad_coarse):
    from desorb.montecarlo import simulate_trajectory
    body = BodySpec(Sphere(SPHERE_RADIUS), mass=1e-18)
    model = SingleSite(np.array([0.0, 0.0, SPHERE_RADIUS]),
                       FixedDirection([1.0, 0.0, 0.0]), Monoenergetic(E0),
                       2e3)
    rng = stream(71, "test-free-rot")
    traj = simulate_trajectory(model, sphere_quad_coarse, N2_MASS, 1e-2, rng,
                               free_rotation=True, body=body)
    assert traj.momenta.shape == (len(traj.times) + 1, 3)
    # kicks still remove one atom momentum magnitude per event
    steps = np.linalg.norm(np.diff(traj.momenta, axis=0), axis=1)
    np.testing.assert_allclose(steps, P0, rtol=1e-12)
    rng2 = stream(71, "test-free-rot")
    with pytest.raises(ValueError):
        simulate_trajectory(model, sphere_quad_coarse, N2_MASS, 1e-2, rng2,
                            free_rotation=True)


def test_ensemble_covariance_psd(sphere_quad_coarse):
    model = CosineLaw(MaxwellBoltzmannFlux(300.0),
                      20.0 / sphere_quad_coarse.total_area)
    em = simulate_ensemble(model, sphere_quad_coarse, N2_MASS, 1.0, 4000,
                           seed=31)
    for k in range(len(em.times)):
        cov = em.cov[k]
        np.testing.assert_allclose(cov, cov.T, atol=1e-30)
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() >= -1e-12 * max(eigs.max(), 1e-300)
