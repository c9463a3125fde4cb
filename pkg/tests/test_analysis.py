import numpy as np
import pytest

import torus_billiards as tb
from torus_billiards.analysis import _sample_directions, _trace_min_graze

from conftest import random_interior_states

TWO_PI = 2.0 * np.pi
SQRT3 = np.sqrt(3.0)


# -- cross-section frame and rings ----------------------------------------


def test_cross_section_frame_axes():
    x = np.array([2.0, 0.0, 0.0])
    assert tb.cross_section_frame(x, [1.0, 0.0, 0.0]) == (1.0, 0.0, 0.0)
    assert tb.cross_section_frame(x, [0.0, 1.0, 0.0]) == (0.0, 1.0, 0.0)
    assert tb.cross_section_frame(x, [0.0, 0.0, 1.0]) == (0.0, 0.0, 1.0)
    # rotating the base point rotates the decomposition with it
    R = tb.rotation_z(0.9)
    vx, vphi, vy = tb.cross_section_frame(R @ x, R @ [0.3, 0.4, 0.5])
    assert (vx, vphi, vy) == pytest.approx((0.3, 0.4, 0.5), abs=1e-12)


def test_cross_section_frame_batched():
    x = np.array([2.0, 0.0, 0.0])
    v = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    vx, vphi, vy = tb.cross_section_frame(x, v)
    assert np.allclose(vx, [1.0, 0.0])
    assert np.allclose(vphi, [0.0, 1.0])


def test_ring_spec_validation():
    with pytest.raises(ValueError):
        tb.RingSpec(kind="bogus", epsilon=0.1)
    with pytest.raises(ValueError):
        tb.RingSpec(kind="perp", epsilon=-0.1)
    with pytest.raises(ValueError):
        tb.RingSpec(kind="angular-momentum", epsilon=0.1)   # tau_ref missing


def test_ring_membership(circle_domain):
    x = np.array([2.0, 0.0, 0.0])
    specs = [tb.RingSpec("perp", 0.05),
             tb.RingSpec("azimuth-aligned", 0.05),
             tb.RingSpec("symmetric", 0.05),
             tb.RingSpec("angular-momentum", 0.05, tau_ref=2 * np.pi / 3)]
    v_perp = np.array([0.8, 0.0, 0.6])          # no azimuthal component
    flags = tb.ring_membership(circle_domain, x, v_perp, specs)
    assert flags[0] and not flags[1] and not flags[2]
    v_az = np.array([0.0, 1.0, 0.0])
    flags = tb.ring_membership(circle_domain, x, v_az, specs)
    assert flags[1] and not flags[0]
    v_sym = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
    flags = tb.ring_membership(circle_domain, x, v_sym, specs)
    assert flags[2]
    # angular-momentum ring: |2 v_phi| near omega_I(2 pi/3)
    vphi = tb.inflection_momentum(circle_domain, 2 * np.pi / 3) / 2.0
    v_am = np.array([np.sqrt(1 - vphi ** 2), vphi, 0.0])
    flags = tb.ring_membership(circle_domain, x, v_am, specs)
    assert flags[3]


def test_ring_membership_batched(circle_domain):
    x = np.array([2.0, 0.0, 0.0])
    v = np.array([[0.8, 0.0, 0.6], [0.0, 1.0, 0.0]])
    flags = tb.ring_membership(circle_domain, x, v,
                               [tb.RingSpec("perp", 0.05)])
    assert flags[0].tolist() == [True, False]


# -- bounce counting -------------------------------------------------------


def test_bounce_count_golden(circle_engine):
    x0 = np.array([3.0, 0.0, 0.0])
    v = np.array([-SQRT3 / 2, 0.5, 0.0])
    # interior launch: chord midpoint, half a chord back to the first bounce
    mid = x0 + 1.5 * SQRT3 * v
    n, capped = tb.bounce_count(circle_engine, mid, v, 1.5 * SQRT3)
    assert (n, capped) == (1, False)
    n, capped = tb.bounce_count(circle_engine, mid, v, 4.5 * SQRT3)
    assert (n, capped) == (2, False)
    # boundary launch whose backward ray exits at once: the zero-length
    # chord (sup-empty-set convention) counts as a bounce
    n, capped = tb.bounce_count(circle_engine, x0, v, 3 * SQRT3)
    assert (n, capped) == (2, False)
    n, capped = tb.bounce_count(circle_engine, x0, v, 3 * SQRT3,
                                max_bounces=1)
    assert capped


# -- recurrence residuals --------------------------------------------------


def test_recurrence_residuals_short_trajectory(circle_domain, circle_engine):
    traj = circle_engine.forward_cycles(
        tb.PhaseState([2.0, 0.0, 0.0], [1.0, 0.0, 0.0]), 1.5)
    assert tb.recurrence_residuals(circle_domain, traj) == []


def test_recurrence_residuals_gate(circle_domain, circle_engine):
    tau0 = 2 * np.pi / 3
    x = circle_domain.sigma(tau0, 0.0)
    n = circle_domain.unit_normal_at(x)
    u = (np.cos(np.pi / 3) * circle_domain.phi_hat(0.0)
         + np.sin(np.pi / 3) * circle_domain.meridian_tangent(tau0, 0.0))
    v = np.cos(0.01) * u - np.sin(0.01) * n
    traj = circle_engine.forward_cycles(tb.PhaseState(x, v, 0.0), 3.0,
                                        max_bounces=400)
    recs = tb.recurrence_residuals(circle_domain, traj, gate=0.1)
    assert len(recs) > 5
    for r in recs:
        assert abs(r["d_tau"]) < 0.1
        assert abs(r["d_phi"]) < 0.1
        assert np.isfinite(r["r1"]) and np.isfinite(r["r2"])


# -- bad-set measure -------------------------------------------------------


def test_sample_directions_deterministic():
    a = _sample_directions(11, 0, 64)
    b = _sample_directions(11, 0, 64)
    assert np.array_equal(a, b)
    c = _sample_directions(11, 1, 64)
    assert not np.allclose(a, c)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)


def test_tracer_matches_engine(circle_domain, circle_engine):
    """The vectorized bad-set tracer must reproduce the honest engine's
    per-bounce minimum |n.v_hat| statistic."""
    x = np.array([2.0, 0.0, 0.0])
    dirs = _sample_directions(3, 0, 64)
    L = 8.0
    min_nd, bounces, stopped = _trace_min_graze(circle_domain, x, dirs, L)
    for i in range(len(dirs)):
        if stopped[i]:
            continue
        traj = circle_engine.backward_cycles(
            tb.PhaseState(x, dirs[i], 0.0), L)
        ref = min(abs(ev.normal_dot) for ev in traj.events)
        assert min_nd[i] == pytest.approx(ref, abs=1e-8)
        assert bounces[i] == len(traj.events)


def test_badset_measure_deterministic(circle_engine):
    kw = dict(x=[2.0, 0.0, 0.0], phi=0.0, eps_graze=0.05, L=5.0,
              n_samples=1500, seed=7)
    a = tb.badset_measure(circle_engine, **kw)
    b = tb.badset_measure(circle_engine, **kw)
    assert a.fraction == b.fraction
    assert a.breakdown == b.breakdown
    assert 0.0 <= a.fraction <= 1.0
    assert a.ci95 > 0.0
    assert set(a.breakdown) == {"near_grazing", "ring_excluded",
                                "stopped_at_inflection", "max_bounces"}


def test_badset_measure_ring_exclusions_increase_fraction(circle_engine):
    kw = dict(x=[2.0, 0.0, 0.0], phi=0.0, eps_graze=0.02, L=5.0,
              n_samples=1500, seed=7)
    plain = tb.badset_measure(circle_engine, **kw)
    ringed = tb.badset_measure(
        circle_engine, ring_specs=[tb.RingSpec("perp", 0.05)], **kw)
    assert ringed.fraction > plain.fraction
    assert ringed.breakdown["ring_excluded"] > 0


def test_badset_scan_monotone(circle_engine):
    rows = tb.badset_scan(circle_engine, [2.0, 0.0, 0.0], 0.0,
                          [0.1, 0.05], 5.0, 1500, 7,
                          ring_kinds=("perp",))
    assert rows[0]["fraction"] >= rows[1]["fraction"]
    assert rows[0]["near_grazing"] >= rows[1]["near_grazing"]


# -- Jacobians -------------------------------------------------------------


def test_jacobian_free_flight(circle_engine):
    res = tb.jacobian_det(circle_engine, 1.0, [2.0, 0.0, 0.0],
                          [0.3, 0.2, 0.1], -1.0)
    assert abs(res.det) == pytest.approx(8.0, rel=1e-6)   # (t-s)^3 = 2^3
    assert res.det < 0.0
    assert res.rel_spread < 1e-6
    res = tb.jacobian_det(circle_engine, 0.5, [2.0, 0.0, 0.0],
                          [0.3, 0.2, 0.1], 0.0)
    assert abs(res.det) == pytest.approx(0.125, rel=1e-6)


def test_jacobian_validation(circle_engine):
    with pytest.raises(ValueError):
        tb.jacobian_det(circle_engine, 0.0, [2.0, 0.0, 0.0],
                        [1.0, 0.0, 0.0], 1.0)   # s >= t
    # s too close to a bounce time of the base trajectory (bounce at -0.5)
    with pytest.raises(ValueError):
        tb.jacobian_det(circle_engine, 1.0, [2.5, 0.0, 0.0],
                        [1.0, 0.0, 0.0], -0.5 - 1e-6)


def test_jacobian_nonsmooth_at_grazing(circle_engine):
    # backward ray from the outer equator grazing the torus hole: the
    # perturbed rays straddle clipping the inner wall
    a = np.arcsin(1.0 / 3.0)
    v = np.array([np.cos(a), np.sin(a), 0.0])
    with pytest.raises(tb.NonSmoothPointError):
        tb.jacobian_det(circle_engine, 1.0, [3.0, 0.0, 0.0], v, -2.0)


# -- specular basis --------------------------------------------------------


def test_specular_basis(circle_domain):
    rng = np.random.default_rng(6)
    for x, v in random_interior_states(rng, 10):
        e0, e1, e2 = tb.specular_basis(circle_domain, x, v)
        M = np.stack([e0, e1, e2])
        assert np.allclose(M @ M.T, np.eye(3), atol=1e-12)
        assert np.allclose(e0, v / np.linalg.norm(v), atol=1e-12)
        assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-12)


def test_specular_basis_degenerate(circle_domain):
    with pytest.raises(tb.DegenerateBasisError):
        tb.specular_basis(circle_domain, [2.0, 0.0, 0.0], [0.0, 1.0, 0.0])
