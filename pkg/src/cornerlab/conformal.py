"""Exact incompressible potential flows around circles and Karman-Trefftz
profiles via complex potentials.

Sign conventions: circulation > 0 is counterclockwise, so the stream function
behaves like  vinf*(y cos(a) - x sin(a)) - (G/2pi) log|z|  far away.  The
stream function is normalized to vanish on the body.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import (
    KarmanTrefftzProfile,
    circle_body,
    karman_trefftz_deriv,
    karman_trefftz_inverse,
    profile_to_body,
)

TWO_PI = 2.0 * np.pi


class KuttaNotApplicable(ValueError):
    """Body has no designated trailing corner; the Kutta condition is void."""


@dataclass(frozen=True)
class CirclePlaneFlow:
    """Uniform stream + doublet + vortex around a circle.

    W(z) = vinf*(e^-ia (z-c) + e^ia R^2/(z-c)) - i G/(2pi) * log(z-c)
    """

    vinf: float = 1.0
    alpha: float = 0.0
    radius: float = 1.0
    center: complex = 0.0
    circulation: float = 0.0

    @property
    def boundary_psi(self) -> float:
        """Value of Im W on the circle (subtracted by stream_function)."""
        return -self.circulation / TWO_PI * np.log(self.radius)


def complex_potential(zeta, flow: CirclePlaneFlow):
    """Complex potential; domain is the closed exterior of the circle."""
    z = np.asarray(zeta, dtype=complex)
    u = z - flow.center
    if np.any(np.abs(u) < flow.radius * (1.0 - 1e-12)):
        raise ValueError("point inside the circle")
    ea = np.exp(-1j * flow.alpha)
    W = flow.vinf * (ea * u + np.conj(ea) * flow.radius**2 / u)
    W = W - 1j * flow.circulation / TWO_PI * np.log(u)
    return W


def potential_derivative(zeta, flow: CirclePlaneFlow):
    z = np.asarray(zeta, dtype=complex)
    u = z - flow.center
    ea = np.exp(-1j * flow.alpha)
    return (
        flow.vinf * (ea - np.conj(ea) * flow.radius**2 / u**2)
        - 1j * flow.circulation / (TWO_PI * u)
    )


def potential_second_derivative(zeta, flow: CirclePlaneFlow):
    z = np.asarray(zeta, dtype=complex)
    u = z - flow.center
    ea = np.exp(-1j * flow.alpha)
    return (
        flow.vinf * np.conj(ea) * 2.0 * flow.radius**2 / u**3
        + 1j * flow.circulation / (TWO_PI * u**2)
    )


def stagnation_points(flow: CirclePlaneFlow):
    """Roots of dW/dz (points where the velocity vanishes)."""
    ea = np.exp(-1j * flow.alpha)
    a = flow.vinf * ea
    b = -1j * flow.circulation / TWO_PI
    c = -flow.vinf * np.conj(ea) * flow.radius**2
    disc = np.sqrt(b * b - 4 * a * c + 0j)
    return [flow.center + (-b + s * disc) / (2 * a) for s in (+1.0, -1.0)]


def stream_function(point, flow: CirclePlaneFlow, profile: KarmanTrefftzProfile | None = None):
    """Stream function, zero on the body.

    With a profile the point is in the physical plane and is pulled back
    through the closed-form inverse map.
    """
    z = np.asarray(point, dtype=complex)
    zeta = karman_trefftz_inverse(z, profile.nu) if profile is not None else z
    return np.imag(complex_potential(zeta, flow)) - flow.boundary_psi


def velocity_physical(zeta, flow: CirclePlaneFlow,
                      profile: KarmanTrefftzProfile | None = None):
    """Velocity components in the physical plane at circle-plane points.

    v = conj(dW/dzeta / dz/dzeta).  At corner pre-images the 0/0 limit is
    resolved: zero velocity when the potential derivative also vanishes
    (Kutta condition, nu < 2), the second-derivative ratio for nu = 2, and
    +-inf components (singular-velocity flag) when it does not vanish.
    """
    z = np.atleast_1d(np.asarray(zeta, dtype=complex))
    dW = potential_derivative(z, flow)
    if profile is None:
        v = np.conj(dW)
    else:
        dz = karman_trefftz_deriv(z, profile.nu)
        scale = max(flow.vinf, 1e-30)
        v = np.empty_like(z)
        sing = np.abs(dz) < 1e-10
        reg = ~sing
        v[reg] = np.conj(dW[reg] / dz[reg])
        if np.any(sing):
            kutta_ok = np.abs(dW[sing]) < 1e-8 * scale
            vs = np.where(kutta_ok, 0.0 + 0.0j, np.inf + 0.0j)
            if profile.nu == 2.0:
                d2W = potential_second_derivative(z[sing], flow)
                d2z = 2.0 / z[sing] ** 3
                vs = np.where(kutta_ok, np.conj(d2W / d2z), vs)
            v[sing] = vs
    out = np.column_stack([v.real, v.imag])
    return out if np.asarray(zeta).ndim else (float(v[0].real), float(v[0].imag))


def kutta_circulation(flow: CirclePlaneFlow, profile: KarmanTrefftzProfile | None):
    """Circulation placing a stagnation point on the trailing-corner pre-image.

    G = 4 pi vinf R sin(theta_te - alpha) with theta_te the angular position
    of the pre-image on the generating circle.  At a 2*pi tip (slit) this is
    the classical first-order condition.
    """
    if profile is None:
        raise KuttaNotApplicable("no protruding corner: the Kutta condition is void")
    th_te = profile.trailing_preimage_angle
    return 4.0 * np.pi * flow.vinf * flow.radius * np.sin(th_te - flow.alpha)


def flow_for_profile(profile: KarmanTrefftzProfile, circulation=None):
    """Circle-plane flow matching a profile's far field; Kutta value of the
    circulation when none is given."""
    flow0 = CirclePlaneFlow(vinf=profile.vinf, alpha=profile.alpha,
                            radius=profile.radius, center=profile.center_mu)
    if circulation is None:
        circulation = kutta_circulation(flow0, profile)
    return CirclePlaneFlow(vinf=profile.vinf, alpha=profile.alpha,
                           radius=profile.radius, center=profile.center_mu,
                           circulation=circulation)


class ConformalFlowField:
    """Analytic stream-function evaluator in the physical plane.

    Provides psi/grad on (N,2) point arrays; the oracle interface consumed
    by the topology tracer and the corner diagnostics.
    """

    def __init__(self, flow: CirclePlaneFlow, profile: KarmanTrefftzProfile | None = None,
                 n_body=4096):
        self.flow = flow
        self.profile = profile
        if profile is None:
            self.body = circle_body(flow.radius,
                                    (flow.center.real, flow.center.imag), n=n_body)
        else:
            self.body = profile_to_body(profile, n_samples=n_body)
        self.vinf = flow.vinf
        self.alpha = flow.alpha
        self.rho_inf = 1.0
        self.circulation = flow.circulation

    def _pullback(self, pts):
        z = pts[:, 0] + 1j * pts[:, 1]
        if self.profile is not None:
            z = karman_trefftz_inverse(z, self.profile.nu)
        return z

    def in_fluid(self, pts):
        zeta = self._pullback(np.atleast_2d(pts))
        return np.abs(zeta - self.flow.center) >= self.flow.radius * (1 - 1e-12)

    def psi(self, pts):
        """Body-interior points are clamped to the boundary (value 0)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        zeta = self._pullback(pts)
        u = zeta - self.flow.center
        au = np.abs(u)
        with np.errstate(invalid="ignore", divide="ignore"):
            clamped = np.where(au > 0, self.flow.radius * u / np.where(au > 0, au, 1.0),
                               self.flow.radius)
        u = np.where(au < self.flow.radius, clamped, u)
        W = complex_potential(self.flow.center + u, self.flow)
        return np.imag(W) - self.flow.boundary_psi

    def grad(self, pts):
        """(psi_x, psi_y) = (Im dW/dz, Re dW/dz)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        zeta = self._pullback(pts)
        dW = potential_derivative(zeta, self.flow)
        if self.profile is not None:
            dz = karman_trefftz_deriv(zeta, self.profile.nu)
            with np.errstate(divide="ignore", invalid="ignore"):
                dW = np.where(np.abs(dz) > 0, dW / dz, np.inf)
        return np.column_stack([np.imag(dW), np.real(dW)])

    def speed(self, pts):
        g = self.grad(pts)
        return np.hypot(g[:, 0], g[:, 1])


def sample_field_csv(field: ConformalFlowField, window, n):
    """Rows (x, y, psi, vx, vy) on an n-by-n grid clipped to the fluid."""
    xs = np.linspace(window[0], window[1], n)
    ys = np.linspace(window[2], window[3], n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    ok = field.in_fluid(pts)
    psi = np.where(ok, field.psi(pts), np.nan)
    g = field.grad(pts)
    vx = np.where(ok, g[:, 1], np.nan)
    vy = np.where(ok, -g[:, 0], np.nan)
    return np.column_stack([pts, psi, vx, vy])
