import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cola_sdp import conjunction as cj
from cola_sdp.errors import DegenerateEncounter, SingularProjectedCovariance, TargetUnreachable

C = np.array([[4.0e4, 1.0e4], [1.0e4, 9.0e4]])


def test_bplane_axis_aligned():
    f = cj.bplane([1, 0, 0], [0, 1, 0])
    assert np.allclose(f.b_x, [1, 0, 0]) and np.allclose(f.b_y, [0, 1, 0]) and np.allclose(f.b_z, [0, 0, 1])
    assert np.allclose(f.projector @ [1, 0, 0], [1, 0])


def test_bplane_degenerate():
    with pytest.raises(DegenerateEncounter):
        cj.bplane([1, 0, 0], [2, 0, 0])
    with pytest.raises(DegenerateEncounter):
        cj.bplane([1, 0, 0], [0, 0, 0])


vec = st.lists(st.floats(-1e4, 1e4), min_size=3, max_size=3)


@settings(max_examples=80, deadline=None)
@given(vec, vec)
def test_bplane_properties(dr, dv):
    dr, dv = np.array(dr), np.array(dv)
    if np.linalg.norm(np.cross(dr, dv)) < 1e-3 * (1 + np.linalg.norm(dr) * np.linalg.norm(dv)):
        return
    f = cj.bplane(dr, dv)
    rot = f.rotation
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.cross(f.b_x, f.b_y), f.b_z, atol=1e-12)
    assert np.allclose(f.projector @ dv, 0.0, atol=1e-12 * np.linalg.norm(dv))
    # dr lies in the (b_x, b_y) plane
    assert abs(f.b_z @ dr) <= 1e-9 * np.linalg.norm(dr)


def test_combined_covariance_identity():
    f = cj.bplane([100.0, 20.0, -5.0], [3.0, -7000.0, 1200.0])
    assert np.allclose(cj.combined_covariance(0.5 * np.eye(3), 0.5 * np.eye(3), f), np.eye(2), atol=1e-14)


def test_combined_covariance_oracle():
    rng = np.random.default_rng(3)
    f = cj.bplane(rng.normal(size=3), rng.normal(size=3))
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3))
    c1, c2 = a @ a.T, b @ b.T
    r = np.vstack([f.b_x, f.b_z])
    expected = np.einsum("ij,jk,lk->il", r, c1 + c2, r)
    out = cj.combined_covariance(c1, c2, f)
    assert np.allclose(out, expected, rtol=1e-12)
    assert np.abs(out - out.T).max() <= 1e-14 * np.abs(out).max()
    assert np.allclose(cj.combined_covariance(c1, np.zeros((3, 3)), f), r @ c1 @ r.T)


def test_combined_covariance_singular():
    f = cj.bplane([1, 0, 0], [0, 1, 0])
    with pytest.raises(SingularProjectedCovariance):
        cj.combined_covariance(np.diag([0.0, 1.0, 1.0]), np.zeros((3, 3)), f)


def test_threshold_at_ceiling_is_zero():
    ceiling = cj.density_ceiling(10.0, C)
    assert ceiling == 100.0 / (2 * math.sqrt(np.linalg.det(C)))
    assert cj.poc_threshold(ceiling, 10.0, C) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(TargetUnreachable):
        cj.poc_threshold(1.01 * ceiling, 10.0, C)


def test_threshold_log_algebra():
    p1 = cj.poc_threshold(1e-6, 10.0, C)
    p2 = cj.poc_threshold(2e-6, 10.0, C)
    assert p1 - p2 == pytest.approx(2 * math.log(2), rel=1e-12)
    assert p1 > 0


def test_default_hard_body_radius():
    assert cj.DEFAULT_HARD_BODY_RADIUS == 10.0


def test_estimate_roundtrip_on_boundary():
    target = 1e-6
    p = cj.poc_threshold(target, 10.0, C)
    root = np.linalg.cholesky(C)
    for t in np.linspace(0, 2 * math.pi, 13):
        rb = math.sqrt(p) * root @ [math.cos(t), math.sin(t)]
        est = cj.poc_estimate(rb, C, 10.0)
        assert est.mahalanobis_sq == pytest.approx(p, rel=1e-12)
        assert est.pc_closed_form == pytest.approx(target, rel=1e-12)


def test_estimate_monotone_outward():
    d = np.array([0.6, 0.8])
    pcs = [cj.poc_estimate(s * d, C, 10.0).pc_closed_form for s in (50, 100, 200, 400, 800)]
    assert all(a > b for a, b in zip(pcs, pcs[1:]))


@pytest.mark.parametrize("rb", [[0.0, 0.0], [150.0, 400.0], [-300.0, 200.0]])
def test_quadrature_agrees_for_small_disk(rb):
    r_hbr = 0.05 * math.sqrt(np.linalg.eigvalsh(C)[0])
    est = cj.poc_estimate(rb, C, r_hbr, quadrature=True)
    assert est.pc_quadrature == pytest.approx(est.pc_closed_form, rel=0.02)
    assert 0.0 <= est.pc_quadrature <= 1.0


def test_quadrature_matches_monte_carlo():
    rng = np.random.default_rng(11)
    r_hbr = 100.0
    rb = np.array([50.0, -80.0])
    est = cj.poc_estimate(rb, C, r_hbr, quadrature=True)
    pts = rng.multivariate_normal([0, 0], C, size=400_000)
    mc = np.mean(np.linalg.norm(pts - rb, axis=1) <= r_hbr)
    assert est.pc_quadrature == pytest.approx(mc, rel=0.03)


def test_build_geometry(bundled):
    geo = bundled.geometry()
    assert geo.hard_body_radius == 10.0
    expected = math.log(10.0 ** 4 / (4 * geo.target_pc ** 2 * np.linalg.det(geo.combined_cov)))
    assert geo.threshold == pytest.approx(expected, rel=1e-12)
    w = geo.position_weight()
    d = np.array([30.0, -20.0, 50.0])
    rb = geo.projector @ d
    assert d @ w @ d == pytest.approx(rb @ np.linalg.solve(geo.combined_cov, rb), rel=1e-10)
