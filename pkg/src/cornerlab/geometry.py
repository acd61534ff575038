"""Piecewise-analytic solid bodies: boundary segments, corner bookkeeping,
pacman (protruding-corner) classification, and Karman-Trefftz profiles.

Bodies are stored as sampled polylines with exact corner metadata attached.
Orientation convention: closed boundaries run counterclockwise with the body
interior on the left, so the fluid side of a corner is the sector swept
counterclockwise from theta0 (back along the incoming segment) to theta1
(forward along the outgoing segment).
"""

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path

TWO_PI = 2.0 * np.pi


class DegenerateGeometryError(ValueError):
    """Zero-angle cusp or otherwise unusable corner."""


class MapSingularityError(ValueError):
    """Karman-Trefftz map evaluated on a branch-cut collision."""


class InvalidProfileError(ValueError):
    """Karman-Trefftz circle misses a required pre-image point."""


@dataclass
class CornerRecord:
    """One boundary corner: location, adjacent ray directions and fluid angle.

    theta0/theta1 are the tangent directions (radians) of the two boundary
    rays leaving the corner; the fluid occupies the CCW sweep from theta0 to
    theta1, of size fluid_angle in (0, 2*pi].
    """

    location: tuple
    theta0: float
    theta1: float
    fluid_angle: float = field(init=False)
    protruding: bool = field(init=False)
    pacman_radius: float | None = None

    def __post_init__(self):
        span = (self.theta1 - self.theta0) % TWO_PI
        if span == 0.0:
            span = TWO_PI
        if span < 1e-9:
            raise DegenerateGeometryError(
                f"corner at {self.location} has a zero-angle cusp"
            )
        self.fluid_angle = span
        self.protruding = span > np.pi + 1e-12

    def bisector(self) -> float:
        return self.theta0 + 0.5 * self.fluid_angle


class BodyGeometry:
    """Solid body bounded by a chain of sampled-polyline segments.

    Segments are pairwise disjoint except at shared endpoints; every segment
    endpoint is a corner.  `closed` bodies enclose area; open chains model
    zero-thickness plates (fluid on both sides).
    """

    def __init__(self, segments, corners, closed=True, name="body", circle=None):
        self.segments = [np.asarray(s, dtype=float) for s in segments]
        self.corners = list(corners)
        self.closed = closed
        self.name = name
        self._circle = circle  # (center, radius) for exact predicates

        pts = [self.segments[0]]
        for seg in self.segments[1:]:
            pts.append(seg[1:])
        poly = np.vstack(pts)
        if closed and np.allclose(poly[0], poly[-1]):
            poly = poly[:-1]
        self.polyline = poly
        e0 = poly
        e1 = np.roll(poly, -1, axis=0) if closed else poly[1:]
        if not closed:
            e0 = poly[:-1]
        self._edges = np.stack([e0, e1], axis=1)
        self._path = Path(np.vstack([poly, poly[:1]])) if closed else None
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        self._bbox = (lo[0], hi[0], lo[1], hi[1])
        self.diameter = float(np.hypot(*(hi - lo)))

    # -- predicates ---------------------------------------------------------

    def contains(self, points):
        """True for points inside the solid (closed bodies only)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._circle is not None:
            c, r = self._circle
            out = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) <= r
        elif not self.closed:
            out = np.zeros(len(pts), dtype=bool)
        else:
            x0, x1, y0, y1 = self._bbox
            out = np.zeros(len(pts), dtype=bool)
            near = (
                (pts[:, 0] >= x0) & (pts[:, 0] <= x1)
                & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
            )
            if np.any(near):
                out[near] = self._path.contains_points(pts[near], radius=0.0)
        return out if np.asarray(points).ndim > 1 else bool(out[0])

    def distance(self, points):
        """Unsigned distance to the boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._circle is not None:
            c, r = self._circle
            d = np.abs(np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) - r)
        else:
            d = _point_segment_distance(pts, self._edges).min(axis=1)
        return d if np.asarray(points).ndim > 1 else float(d[0])

    def first_crossing(self, p, q):
        """Smallest t in (0,1] where the segment p->q crosses the boundary."""
        t = self.crossings(np.asarray(p, float)[None, :], np.asarray(q, float)[None, :])
        return None if np.isnan(t[0]) else float(t[0])

    def crossings(self, P, Q):
        """Vectorized first-crossing fractions for arms P[i]->Q[i] (nan: none)."""
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        if self._circle is not None:
            return _circle_crossings(P, Q, *self._circle)
        return _segment_crossings(P, Q, self._edges)

    def project(self, point):
        """Nearest boundary point with tangent angle and corner id (or None)."""
        p = np.asarray(point, dtype=float)
        if self._circle is not None:
            c, r = self._circle
            v = p - np.asarray(c)
            n = np.hypot(*v)
            bp = np.asarray(c) + v * (r / n) if n > 0 else np.asarray(c) + (r, 0.0)
            tangent = np.arctan2(v[1], v[0]) + 0.5 * np.pi
        else:
            d = _point_segment_distance(p[None, :], self._edges)[0]
            k = int(np.argmin(d))
            a, b = self._edges[k]
            ab = b - a
            t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            bp = a + t * ab
            tangent = np.arctan2(ab[1], ab[0])
        corner_id = None
        for i, c in enumerate(self.corners):
            if np.hypot(bp[0] - c.location[0], bp[1] - c.location[1]) < 1e-9 * max(
                1.0, self.diameter
            ):
                corner_id = i
        return bp, float(tangent), corner_id

    def to_json(self):
        return {"type": "segments", "segments": [s.tolist() for s in self.segments],
                "closed": self.closed, "name": self.name}


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def polygon_body(vertices, name="polygon"):
    """Simple polygon; vertices in either orientation, all of them corners."""
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")
    area2 = np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    if area2 < 0:
        v = v[::-1]
    n = len(v)
    corners, segments = [], []
    for i in range(n):
        prev_, next_ = v[(i - 1) % n], v[(i + 1) % n]
        th0 = np.arctan2(*(prev_ - v[i])[::-1])
        th1 = np.arctan2(*(next_ - v[i])[::-1])
        corners.append(CornerRecord(tuple(v[i]), th0, th1))
        segments.append(np.array([v[i], v[(i + 1) % n]]))
    return BodyGeometry(segments, corners, closed=True, name=name)


def circle_body(radius=1.0, center=(0.0, 0.0), n=2048, name="circle"):
    th = np.linspace(0.0, TWO_PI, n + 1)
    c = np.asarray(center, dtype=float)
    pts = c + radius * np.column_stack([np.cos(th), np.sin(th)])
    return BodyGeometry([pts], [], closed=True, name=name,
                        circle=(tuple(c), float(radius)))


def slit_body(p0, p1, name="slit"):
    """Zero-thickness plate from p0 to p1; both tips are 2*pi corners."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    d0 = np.arctan2(*(p1 - p0)[::-1])
    d1 = np.arctan2(*(p0 - p1)[::-1])
    corners = [CornerRecord(tuple(p0), d0, d0), CornerRecord(tuple(p1), d1, d1)]
    return BodyGeometry([np.array([p0, p1])], corners, closed=False, name=name)


def segments_body(chains, closed=True, name="segments"):
    """Generic body from point chains; junction tangents taken from the
    polyline ends (chains are assumed finely sampled)."""
    chains = [np.asarray(c, dtype=float) for c in chains]
    if closed:
        poly = np.vstack([chains[0]] + [c[1:] for c in chains[1:]])
        area2 = np.sum(
            poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1]
        )
        if area2 < 0:
            chains = [c[::-1] for c in reversed(chains)]
    corners = []
    n = len(chains)
    for i in range(n if closed else n - 1):
        cur, nxt = chains[i], chains[(i + 1) % n]
        loc = cur[-1]
        th0 = np.arctan2(*(cur[-2] - loc)[::-1])
        th1 = np.arctan2(*(nxt[1] - loc)[::-1])
        corners.append(CornerRecord(tuple(loc), th0, th1))
    if not closed:
        first, last = chains[0], chains[-1]
        d0 = np.arctan2(*(first[1] - first[0])[::-1])
        d1 = np.arctan2(*(last[-2] - last[-1])[::-1])
        corners.insert(0, CornerRecord(tuple(first[0]), d0, d0))
        corners.append(CornerRecord(tuple(last[-1]), d1, d1))
    return BodyGeometry(chains, corners, closed=closed, name=name)


# ---------------------------------------------------------------------------
# Karman-Trefftz profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KarmanTrefftzProfile:
    """Profile parameters: corner exponent nu (trailing fluid angle nu*pi),
    circle-plane center, angle of attack and far-field speed."""

    nu: float
    center_mu: complex = 0.0
    alpha: float = 0.0
    vinf: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.nu <= 2.0:
            raise InvalidProfileError(f"nu must be in (1, 2], got {self.nu}")

    @property
    def radius(self) -> float:
        return abs(1.0 - self.center_mu)

    @property
    def two_corner(self) -> bool:
        return abs(abs(-1.0 - self.center_mu) - self.radius) < 1e-12

    @property
    def trailing_preimage_angle(self) -> float:
        """Angular position of zeta=1 on the generating circle."""
        return float(np.angle(1.0 - self.center_mu))


def karman_trefftz_map(zeta, nu):
    """Map the circle plane to the profile plane:

        z = nu * [(z+1)^nu + (z-1)^nu] / [(z+1)^nu - (z-1)^nu]

    evaluated branch-safely as z = nu*(w+1)/(w-1), w = ((z+1)/(z-1))^nu.
    Conformal off zeta = +-1; z/zeta -> 1 at infinity; trailing corner
    z = nu with fluid angle nu*pi.
    """
    zeta_in = np.asarray(zeta, dtype=complex)
    z = np.atleast_1d(zeta_in).astype(complex)
    out = np.empty_like(z)
    at_te = np.abs(z - 1.0) < 1e-14
    out[at_te] = nu
    rest = ~at_te
    t = (z[rest] + 1.0) / (z[rest] - 1.0)
    on_cut = (t.real < 0) & (np.abs(t.imag) < 1e-14 * np.abs(t.real))
    if np.any(on_cut):
        raise MapSingularityError("zeta lies on the power branch cut")
    w = t**nu
    out[rest] = nu * (w + 1.0) / (w - 1.0)
    return out.reshape(zeta_in.shape) if zeta_in.ndim else complex(out[0])


def karman_trefftz_deriv(zeta, nu):
    """dz/dzeta = 4 nu^2 t^(nu-1) / ((w-1)^2 (zeta-1)^2), t=(z+1)/(z-1)."""
    zeta_in = np.asarray(zeta, dtype=complex)
    z = np.atleast_1d(zeta_in).astype(complex)
    out = np.empty_like(z)
    sing = (np.abs(z - 1.0) < 1e-14) | (np.abs(z + 1.0) < 1e-14)
    out[sing] = 0.0  # zero of order nu-1 > 0 at the corner pre-images
    rest = ~sing
    t = (z[rest] + 1.0) / (z[rest] - 1.0)
    w = t**nu
    out[rest] = 4.0 * nu**2 * t ** (nu - 1.0) / ((w - 1.0) ** 2 * (z[rest] - 1.0) ** 2)
    return out.reshape(zeta_in.shape) if zeta_in.ndim else complex(out[0])


def karman_trefftz_inverse(z, profile_nu):
    """Closed-form inverse: zeta = (t+1)/(t-1), t = ((z+nu)/(z-nu))^(1/nu).

    Valid on the fluid side for generating circles enclosing the unit circle
    (real center_mu <= 0, the profiles used here).
    """
    nu = profile_nu
    z_in = np.asarray(z, dtype=complex)
    zz = np.atleast_1d(z_in).astype(complex)
    out = np.empty_like(zz)
    at_te = np.abs(zz - nu) < 1e-14
    at_le = np.abs(zz + nu) < 1e-14
    out[at_te] = 1.0
    out[at_le] = -1.0
    rest = ~(at_te | at_le)
    t = ((zz[rest] + nu) / (zz[rest] - nu)) ** (1.0 / nu)
    out[rest] = (t + 1.0) / (t - 1.0)
    return out.reshape(z_in.shape) if z_in.ndim else complex(out[0])


def _kt_corner_record(profile, at_trailing):
    nu, mu = profile.nu, profile.center_mu
    if at_trailing:
        base = np.angle(1.0 - mu)
        loc = (nu, 0.0)
        th0 = nu * (base - 0.5 * np.pi)
        th1 = nu * (base + 0.5 * np.pi)
    else:
        base = np.angle(1.0 + mu)
        loc = (-nu, 0.0)
        th0 = np.pi + nu * (base - 0.5 * np.pi)
        th1 = np.pi + nu * (base + 0.5 * np.pi)
    return CornerRecord(loc, th0, th1)


def profile_to_body(profile: KarmanTrefftzProfile, n_samples=4096):
    """Sample the generating circle through the Karman-Trefftz map.

    Corner records carry exact tangent directions from the local expansion
    z - z_corner ~ const * (zeta - zeta_corner)^nu.
    """
    mu, R = profile.center_mu, profile.radius
    if R == 0.0:
        raise InvalidProfileError("generating circle is degenerate")
    th_te = profile.trailing_preimage_angle
    if profile.two_corner:
        th_le = float(np.angle(-1.0 - mu))
        span = (th_le - th_te) % TWO_PI
        n1 = max(8, int(round(n_samples * span / TWO_PI)))
        n2 = max(8, n_samples - n1)
        a1 = th_te + span * np.arange(n1 + 1) / n1
        a2 = th_le + (TWO_PI - span) * np.arange(n2 + 1) / n2
        zs1 = karman_trefftz_map(mu + R * np.exp(1j * a1), profile.nu)
        zs2 = karman_trefftz_map(mu + R * np.exp(1j * a2), profile.nu)
        zs1[0], zs1[-1] = profile.nu, -profile.nu
        zs2[0], zs2[-1] = -profile.nu, profile.nu
        segments = [np.column_stack([zs1.real, zs1.imag]),
                    np.column_stack([zs2.real, zs2.imag])]
        corners = [_kt_corner_record(profile, False),
                   _kt_corner_record(profile, True)]
        # CCW order: segment 1 ends at the leading corner, segment 2 at trailing
        body = BodyGeometry(segments, corners, closed=True, name="kt2")
    else:
        ang = th_te + TWO_PI * np.arange(n_samples + 1) / n_samples
        zs = karman_trefftz_map(mu + R * np.exp(1j * ang), profile.nu)
        zs[0] = zs[-1] = profile.nu
        segments = [np.column_stack([zs.real, zs.imag])]
        corners = [_kt_corner_record(profile, True)]
        body = BodyGeometry(segments, corners, closed=True, name="kt1")
    return body


# ---------------------------------------------------------------------------
# corner classification
# ---------------------------------------------------------------------------

def pacman_test(body: BodyGeometry, corner: CornerRecord, radius):
    """True iff the open sector (theta0,theta1) x (0,radius) avoids the body.

    Boundary segments are subdivided inside the disk and tested for angular
    membership; a few interior sector points are checked for containment.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not corner.protruding:
        return False  # a pacman has angle > pi by definition
    c = np.asarray(corner.location, dtype=float)
    span = corner.fluid_angle
    eps = 1e-9
    # segment-sector intersection by subdivision of clipped edges
    for a, b in body._edges:
        for p in _subdivide_in_disk(a, b, c, radius):
            r = np.hypot(*(p - c))
            if r <= eps * radius or r >= radius:
                continue
            ang = (np.arctan2(p[1] - c[1], p[0] - c[0]) - corner.theta0) % TWO_PI
            if eps < ang < span - eps:
                return False
    # sector interior must be fluid
    rr, aa = np.meshgrid([0.25 * radius, 0.5 * radius],
                         corner.theta0 + span * np.linspace(0.05, 0.95, 19))
    pts = c + np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
    if body.closed and np.any(body.contains(pts)):
        return False
    return True


def classify_corners(body: BodyGeometry):
    """Label corners protruding/receding and attach verified pacman radii."""
    out = []
    for rec in body.corners:
        if rec.protruding:
            radius = 0.25 * max(body.diameter, 1e-12)
            found = None
            for _ in range(40):
                if pacman_test(body, rec, radius):
                    found = radius
                    break
                radius *= 0.5
            rec.pacman_radius = found
        else:
            rec.pacman_radius = None
        out.append(rec)
    return out


def body_from_json(spec):
    kind = spec.get("type")
    if kind == "polygon":
        return polygon_body(spec["vertices"], name=spec.get("name", "polygon"))
    if kind == "circle":
        return circle_body(spec.get("radius", 1.0), spec.get("center", (0.0, 0.0)),
                           spec.get("n", 2048), name=spec.get("name", "circle"))
    if kind == "karman_trefftz":
        prof = KarmanTrefftzProfile(
            nu=spec["nu"], center_mu=complex(*spec.get("center_mu", (0.0, 0.0)))
            if isinstance(spec.get("center_mu"), (list, tuple))
            else complex(spec.get("center_mu", 0.0)),
            alpha=spec.get("alpha", 0.0), vinf=spec.get("vinf", 1.0))
        return profile_to_body(prof, spec.get("n", 4096))
    if kind == "segments":
        return segments_body(spec["segments"], spec.get("closed", True),
                             name=spec.get("name", "segments"))
    raise ValueError(f"unknown body type {kind!r}")


def polyline_csv(body: BodyGeometry):
    """Rows (s, x, y, is_corner) with s the cumulative arc length."""
    poly = body.polyline
    if body.closed:
        poly = np.vstack([poly, poly[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(poly, axis=0).T))])
    corner_set = {tuple(np.round(c.location, 12)) for c in body.corners}
    rows = []
    for si, (x, y) in zip(s, poly):
        rows.append((si, x, y, int(tuple(np.round((x, y), 12)) in corner_set)))
    return rows


# ---------------------------------------------------------------------------
# low-level helpers
# ---------------------------------------------------------------------------

def _point_segment_distance(pts, edges):
    # pts (M,2), edges (K,2,2) -> (M,K)
    a = edges[:, 0][None, :, :]
    b = edges[:, 1][None, :, :]
    p = pts[:, None, :]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=2), 1e-300)
    t = np.clip(np.sum((p - a) * ab, axis=2) / denom, 0.0, 1.0)
    proj = a + t[..., None] * ab
    return np.hypot(p[..., 0] - proj[..., 0], p[..., 1] - proj[..., 1])


def _segment_crossings(P, Q, edges, chunk=512):
    n = len(P)
    out = np.full(n, np.nan)
    A = edges[:, 0]
    B = edges[:, 1]
    E = B - A
    for i0 in range(0, n, chunk):
        sl = slice(i0, min(i0 + chunk, n))
        p = P[sl][:, None, :]
        d = (Q[sl] - P[sl])[:, None, :]
        ae = A[None, :, :]
        denom = d[..., 0] * E[None, :, 1] - d[..., 1] * E[None, :, 0]
        diff = ae - p
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (diff[..., 0] * E[None, :, 1] - diff[..., 1] * E[None, :, 0]) / denom
            s = (diff[..., 0] * d[..., 1] - diff[..., 1] * d[..., 0]) / denom
        ok = (np.abs(denom) > 1e-300) & (t > 1e-12) & (t <= 1.0) & (s >= -1e-12) & (
            s <= 1.0 + 1e-12
        )
        t = np.where(ok, t, np.inf)
        tmin = t.min(axis=1)
        out[sl] = np.where(np.isfinite(tmin), tmin, np.nan)
    return out


def _circle_crossings(P, Q, center, radius):
    c = np.asarray(center, dtype=float)
    d = Q - P
    f = P - c
    a = np.sum(d * d, axis=1)
    b = 2.0 * np.sum(f * d, axis=1)
    g = np.sum(f * f, axis=1) - radius**2
    disc = b * b - 4 * a * g
    out = np.full(len(P), np.nan)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-b - sq) / (2 * a)
        t2 = (-b + sq) / (2 * a)
    for t in (t1, t2):
        hit = ok & (t > 1e-12) & (t <= 1.0)
        out = np.where(hit & (~(out <= t)), t, out)
    return out


def _subdivide_in_disk(a, b, c, radius, n=64):
    """Sample points of segment a-b lying inside the disk around c."""
    ts = np.linspace(0.0, 1.0, n + 1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    inside = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) < radius
    return pts[inside]
