import numpy as np
import pytest

from cornerlab.geometry import (
    DegenerateGeometryError,
    InvalidProfileError,
    KarmanTrefftzProfile,
    body_from_json,
    circle_body,
    classify_corners,
    karman_trefftz_deriv,
    karman_trefftz_inverse,
    karman_trefftz_map,
    pacman_test,
    polygon_body,
    polyline_csv,
    profile_to_body,
    segments_body,
    slit_body,
)

TRIANGLE = [(0.0, 0.577350269), (-0.5, -0.288675135), (0.5, -0.288675135)]


def lshape():
    return polygon_body([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])


# ---------------------------------------------------------------------------
# corner bookkeeping
# ---------------------------------------------------------------------------

def test_triangle_corners_protruding():
    body = polygon_body(TRIANGLE)
    recs = classify_corners(body)
    assert len(recs) == 3
    for rec in recs:
        assert rec.protruding
        assert rec.fluid_angle == pytest.approx(2 * np.pi - np.pi / 3, abs=1e-9)
        assert rec.pacman_radius is not None and rec.pacman_radius > 0


def test_slit_tips_full_angle():
    body = slit_body((-1, 0), (1, 0))
    recs = classify_corners(body)
    assert len(recs) == 2
    for rec in recs:
        assert rec.fluid_angle == pytest.approx(2 * np.pi)
        assert rec.protruding


def test_lshape_corner_angles():
    recs = classify_corners(lshape())
    angles = sorted(r.fluid_angle for r in recs)
    assert angles[0] == pytest.approx(np.pi / 2, abs=1e-9)
    for a in angles[1:]:
        assert a == pytest.approx(3 * np.pi / 2, abs=1e-9)
    assert sum(r.protruding for r in recs) == 5


def test_polygon_angle_sum():
    # sum of exterior turns of a simple closed polygon is 2*pi
    for verts in (TRIANGLE, [(0, 0), (3, 0), (3, 2), (0, 2)]):
        recs = polygon_body(verts).corners
        turn = sum(np.pi - (2 * np.pi - r.fluid_angle) for r in recs)
        assert turn == pytest.approx(2 * np.pi, abs=1e-9)


def test_degenerate_cusp_rejected():
    from cornerlab.geometry import CornerRecord

    with pytest.raises(DegenerateGeometryError):
        CornerRecord((0.0, 0.0), 0.0, 1e-13)


# ---------------------------------------------------------------------------
# pacman tests
# ---------------------------------------------------------------------------

def test_pacman_triangle_small_radius():
    body = polygon_body(TRIANGLE)
    assert pacman_test(body, body.corners[0], 0.1)


def test_pacman_large_radius_catches_other_body_parts():
    # U-shaped body: the sector at one prong tip reaches the other prong
    body = polygon_body(
        [(0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3)]
    )
    tip = [r for r in body.corners if r.location == (1.0, 3.0)][0]
    assert tip.protruding
    assert pacman_test(body, tip, 0.4)
    assert not pacman_test(body, tip, 2.0)


def test_pacman_receding_corner():
    body = lshape()
    rec = [r for r in body.corners if not r.protruding][0]
    for radius in (0.01, 0.1, 0.5):
        assert not pacman_test(body, rec, radius)


# ---------------------------------------------------------------------------
# Karman-Trefftz map
# ---------------------------------------------------------------------------

def test_kt_map_trailing_point():
    for nu in (1.5, 1.75, 2.0):
        assert karman_trefftz_map(1.0, nu) == pytest.approx(nu)


def test_kt_map_identity_at_infinity():
    for nu in (1.5, 1.75):
        for zeta in (1e3 + 0j, 1e3j, -7e2 + 4e2j):
            assert abs(karman_trefftz_map(zeta, nu) / zeta - 1.0) < 5e-3


def test_kt_map_joukowsky_special_case():
    th = np.linspace(0, 2 * np.pi, 201)  # includes theta = pi
    z = karman_trefftz_map(np.exp(1j * th), 2.0)
    assert np.max(np.abs(z.imag)) < 1e-12
    assert np.min(z.real) == pytest.approx(-2.0, abs=1e-12)
    assert np.max(z.real) == pytest.approx(2.0, abs=1e-12)


def test_kt_map_far_annulus_injective():
    rng = np.random.default_rng(1)
    r = rng.uniform(50.0, 80.0, 300)
    th = rng.uniform(0, 2 * np.pi, 300)
    zeta = r * np.exp(1j * th)
    z = karman_trefftz_map(zeta, 1.6)
    d = np.abs(z[:, None] - z[None, :]) + np.eye(300)
    assert d.min() > 1e-8


def test_kt_deriv_matches_finite_difference():
    rng = np.random.default_rng(2)
    zeta = 2.0 + rng.uniform(-0.3, 0.3, 20) + 1j * rng.uniform(-0.3, 0.3, 20)
    h = 1e-6
    for nu in (1.5, 1.75):
        fd = (karman_trefftz_map(zeta + h, nu) - karman_trefftz_map(zeta - h, nu)) / (
            2 * h
        )
        assert np.max(np.abs(fd - karman_trefftz_deriv(zeta, nu))) < 1e-6


def test_kt_inverse_round_trip():
    prof = KarmanTrefftzProfile(nu=1.75, center_mu=-0.1)
    rng = np.random.default_rng(3)
    zeta = prof.center_mu + prof.radius * (1.0 + rng.uniform(0.01, 3.0, 50)) * np.exp(
        1j * rng.uniform(0, 2 * np.pi, 50)
    )
    z = karman_trefftz_map(zeta, prof.nu)
    back = karman_trefftz_inverse(z, prof.nu)
    assert np.max(np.abs(back - zeta)) < 1e-9


# ---------------------------------------------------------------------------
# profile bodies
# ---------------------------------------------------------------------------

def test_two_corner_profile():
    prof = KarmanTrefftzProfile(nu=1.5, center_mu=0.0)  # fluid angle 270 deg
    body = profile_to_body(prof, n_samples=2048)
    assert len(body.corners) == 2
    for rec in body.corners:
        assert rec.fluid_angle == pytest.approx(1.5 * np.pi, abs=1e-12)
    ys = body.polyline[:, 1]
    assert abs(ys.max() + ys.min()) < 1e-9  # symmetric profile


def test_one_corner_profile():
    prof = KarmanTrefftzProfile(nu=1.75, center_mu=-0.1)  # fluid angle 315 deg
    body = profile_to_body(prof, n_samples=2048)
    assert len(body.corners) == 1
    assert body.corners[0].fluid_angle == pytest.approx(1.75 * np.pi, abs=1e-12)


def test_near_circle_limit():
    prof = KarmanTrefftzProfile(nu=1.0001, center_mu=0.0)
    body = profile_to_body(prof, n_samples=512)
    r = np.hypot(*body.polyline.T)
    assert np.max(r) / np.min(r) < 1.01  # nearly a circle


def test_profile_corner_angle_from_polyline():
    # measured polyline tangents agree with the exact record within 1 degree
    prof = KarmanTrefftzProfile(nu=1.5, center_mu=0.0)
    body = profile_to_body(prof, n_samples=4096)
    poly = body.polyline
    rec = body.corners[[tuple(c.location) for c in body.corners].index((1.5, 0.0))]
    i = int(np.argmin(np.hypot(poly[:, 0] - 1.5, poly[:, 1])))
    fwd = poly[(i + 1) % len(poly)] - poly[i]
    bwd = poly[i - 1] - poly[i]
    # CCW sweep from the incoming to the outgoing ray is the fluid angle
    ang = (np.arctan2(fwd[1], fwd[0]) - np.arctan2(bwd[1], bwd[0])) % (2 * np.pi)
    assert abs(np.degrees(ang) - 270.0) < 1.0


def test_invalid_profile():
    with pytest.raises(InvalidProfileError):
        KarmanTrefftzProfile(nu=2.5)


# ---------------------------------------------------------------------------
# predicates and serialization
# ---------------------------------------------------------------------------

def test_circle_predicates():
    body = circle_body(radius=1.0)
    assert body.contains((0.0, 0.0))
    assert not body.contains((1.5, 0.0))
    assert body.distance((2.0, 0.0)) == pytest.approx(1.0)
    t = body.first_crossing((2.0, 0.0), (0.0, 0.0))
    assert t == pytest.approx(0.5, abs=1e-12)


def test_polygon_crossings_batch():
    body = polygon_body(TRIANGLE)
    P = np.array([[0.0, 1.0], [-1.0, -0.288675135], [0.0, -1.0]])
    Q = np.array([[0.0, 0.0], [1.0, -0.288675135], [0.0, -0.2]])
    t = body.crossings(P, Q)
    assert t[0] == pytest.approx(1.0 - 0.577350269, abs=1e-9)
    assert t[1] == pytest.approx(0.25, abs=1e-9)  # hits the left side first
    assert t[2] == pytest.approx((1.0 - 0.288675135) / 0.8, abs=1e-9)


def test_project_returns_corner_id():
    body = polygon_body(TRIANGLE)
    bp, tangent, cid = body.project((0.0, 0.7))
    assert cid == 0
    assert np.hypot(bp[0], bp[1] - 0.577350269) < 1e-9


def test_json_round_trip():
    spec = {"type": "polygon", "vertices": TRIANGLE}
    body = body_from_json(spec)
    assert len(body.corners) == 3
    spec2 = {"type": "karman_trefftz", "nu": 1.75, "center_mu": (-0.1, 0.0)}
    assert len(body_from_json(spec2).corners) == 1
    spec3 = {"type": "circle", "radius": 2.0}
    assert body_from_json(spec3).contains((0.0, 1.5))
    spec4 = {"type": "segments", "closed": True,
             "segments": [[[0, 0], [1, 0]], [[1, 0], [1, 1]],
                          [[1, 1], [0, 1]], [[0, 1], [0, 0]]]}
    square = body_from_json(spec4)
    assert len(square.corners) == 4
    assert square.contains((0.5, 0.5))
    # a body serializes back through the generic segments schema
    again = body_from_json(body.to_json())
    assert len(again.corners) == 3


def test_polyline_csv_marks_corners():
    rows = polyline_csv(polygon_body(TRIANGLE))
    assert sum(r[3] for r in rows) >= 3
    assert rows[0][0] == 0.0
    assert rows[-1][0] == pytest.approx(3.0, abs=1e-6)  # perimeter of unit triangle
