import numpy as np
import pytest

from cornerlab.conformal import CirclePlaneFlow, ConformalFlowField, flow_for_profile
from cornerlab.geometry import KarmanTrefftzProfile, polygon_body
from cornerlab.diagnostics import (
    BOUNDED_THRESHOLD,
    ConstructionViolation,
    NotProtruding,
    SubsolutionParams,
    blowup_exponent,
    default_gamma_grid,
    random_elliptic_sampler,
    subsolution_params,
    sweep_incompressible,
    sweep_table_rows,
    theorem_check,
    verify_subsolution,
)

TRIANGLE = [(0.0, 0.577350269), (-0.5, -0.288675135), (0.5, -0.288675135)]


def laplace_sampler(pts):
    n = len(pts)
    return np.ones(n), np.zeros(n), np.ones(n)


# ---------------------------------------------------------------------------
# comparison-function construction
# ---------------------------------------------------------------------------

def test_amplitude_values():
    p = subsolution_params(0.0, 2 * np.pi)  # slit tip
    assert p.amplitude == pytest.approx(1.0)
    p = subsolution_params(0.0, 1.5 * np.pi)
    assert p.amplitude == pytest.approx(np.sqrt(2.0), abs=1e-12)
    with pytest.raises(NotProtruding):
        subsolution_params(0.0, np.pi)


def test_profile_vanishes_on_edges():
    for span in (np.radians(191), 1.5 * np.pi, 1.75 * np.pi, 2 * np.pi):
        p = subsolution_params(0.3, 0.3 + span)
        assert p.f(p.theta0) == pytest.approx(0.0, abs=1e-12)
        assert p.f(p.theta1) == pytest.approx(0.0, abs=1e-12)
        th = p.theta0 + span * np.linspace(0.001, 0.999, 10000)
        vals = p.f(th)
        assert np.all(vals > 0)
        assert np.argmax(vals) == pytest.approx(len(th) / 2, abs=len(th) * 0.01)


def test_verify_subsolution_laplacian():
    rng = np.random.default_rng(7)
    for span_deg in (191.0, 270.0, 315.0, 360.0):
        p = subsolution_params(0.1, 0.1 + np.radians(span_deg), 1.0)
        worst = verify_subsolution(p, laplace_sampler, n_samples=10000, rng=rng)
        assert worst <= 0.0


def test_verify_subsolution_anisotropic():
    def diag21(pts):
        n = len(pts)
        return 2.0 * np.ones(n), np.zeros(n), np.ones(n)

    p = subsolution_params(0.0, 1.5 * np.pi, ellipticity_bound=2.0)
    worst = verify_subsolution(p, diag21, n_samples=10000)
    assert worst <= 0.0


def test_verify_subsolution_random_operators():
    rng = np.random.default_rng(11)
    for _ in range(100):
        sampler, C = random_elliptic_sampler(5.0, rng)
        p = subsolution_params(0.2, 0.2 + 1.6 * np.pi, ellipticity_bound=C)
        worst = verify_subsolution(p, sampler, n_samples=2000, rng=rng)
        assert worst <= 0.0


def test_inflated_exponent_negative_control():
    p = subsolution_params(0.0, 1.5 * np.pi, 1.0)
    bad = SubsolutionParams(
        theta0=p.theta0, theta1=p.theta1, amplitude=p.amplitude,
        exponent_eps=4.0 * p.exponent_eps, ellipticity_bound=1.0,
    )
    with pytest.raises(ConstructionViolation):
        verify_subsolution(bad, laplace_sampler, n_samples=10000)
    worst = verify_subsolution(bad, laplace_sampler, n_samples=10000,
                               raise_on_violation=False)
    assert worst > 1e-12


# ---------------------------------------------------------------------------
# blow-up exponents on the conformal oracle
# ---------------------------------------------------------------------------

def test_exponent_unbounded_corner():
    # radii small enough for the r^(-1/3) term to dominate the next order
    prof = KarmanTrefftzProfile(nu=1.5, center_mu=0.0)
    field = ConformalFlowField(CirclePlaneFlow(circulation=3.0), prof)
    radii = [1e-3 / 2**k for k in range(6)]
    slope, r2, _ = blowup_exponent(field, (1.5, 0.0), radii, body=field.body)
    assert slope == pytest.approx(-1.0 / 3.0, abs=0.05)
    assert r2 > 0.99


def test_exponent_kutta_bounded_corner():
    prof = KarmanTrefftzProfile(nu=1.5, center_mu=0.0, alpha=0.15)
    flow = flow_for_profile(prof)  # Kutta circulation
    field = ConformalFlowField(flow, prof)
    radii = [1e-3 / 2**k for k in range(6)]
    slope, r2, _ = blowup_exponent(field, (1.5, 0.0), radii, body=field.body)
    assert slope is not None and slope >= -BOUNDED_THRESHOLD


def test_exponent_smooth_point():
    field = ConformalFlowField(CirclePlaneFlow(circulation=2.0))
    radii = [0.08 / 2**k for k in range(5)]
    slope, _r2, _ = blowup_exponent(field, (0.0, 2.0), radii)
    assert abs(slope) < 0.05  # regular interior point


# ---------------------------------------------------------------------------
# sweeps and the theorem harness (coarse, fast versions)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def triangle_sweep():
    from cornerlab.solver import FarField

    body = polygon_body(TRIANGLE)
    gammas = np.linspace(-8 * np.pi, 8 * np.pi, 9)
    return body, sweep_incompressible(
        body, FarField.incompressible(vinf=1.0), gammas,
        half_width=6.0, h=1.0 / 32, levels=4,
    )


def test_triangle_sweep_always_unbounded(triangle_sweep):
    _body, sweep = triangle_sweep
    for gamma, row in sweep["reports"].items():
        slopes = [r.exponent for r in row if r.exponent is not None]
        assert slopes, f"no conclusive exponents at gamma={gamma}"
        assert min(slopes) <= -0.15


def test_triangle_theorem_verdict(triangle_sweep):
    body, sweep = triangle_sweep
    out = theorem_check(body, sweep)
    assert out["verdict"] == "PASS"


def test_two_corner_not_applicable():
    from cornerlab.geometry import profile_to_body

    body = profile_to_body(KarmanTrefftzProfile(nu=1.5, center_mu=0.0))
    out = theorem_check(body, {"reports": {}})
    assert out["verdict"] == "NOT_APPLICABLE"


def test_channel_annotation():
    body = polygon_body([(1, 0), (0, 1), (-1, 0), (0, -1)])
    out = theorem_check(body, {"reports": {}}, channel_scenario=True)
    assert "four channels" in out.get("note", "")


def test_sweep_table_rows(triangle_sweep):
    _body, sweep = triangle_sweep
    rows = sweep_table_rows(sweep)
    assert len(rows) == 9 * 3
    gammas = sorted({r[0] for r in rows})
    assert gammas[0] == pytest.approx(-8 * np.pi)


def test_sweep_attachment_consistency():
    # a corner reported bounded must carry a body-streamline attachment
    from cornerlab.geometry import profile_to_body
    from cornerlab.solver import FarField
    from cornerlab.topology import trace_body_streamline

    prof = KarmanTrefftzProfile(nu=1.5, center_mu=0.0)
    body = profile_to_body(prof, n_samples=2048)
    sweep = sweep_incompressible(
        body, FarField.incompressible(vinf=1.0), [0.0],
        half_width=6.0, h=1.0 / 32, levels=4,
    )
    row = sweep["reports"][0.0]
    f0, _f1 = sweep["fields"]
    graph = trace_body_streamline(f0)
    attach_pts = np.array([a.point for a in graph.attachments])
    for rep in row:
        if rep.bounded:
            loc = np.asarray(body.corners[rep.corner_id].location)
            dist = np.min(np.hypot(*(attach_pts - loc[None, :]).T))
            assert dist < 0.02 * body.diameter


def test_default_gamma_grid():
    body = polygon_body(TRIANGLE)
    g = default_gamma_grid(body)
    assert len(g) == 41
    assert g[0] == -g[-1]
