"""Extraction and classification of the body streamline (the zero level set
of the stream function) and its graph structure.

Works on anything exposing the evaluator protocol: psi(pts) -> (N,),
grad(pts) -> (N,2), and a `body` BodyGeometry; both the conformal oracle and
solved DiscreteFields qualify (the latter through `as_evaluator`).
"""

from dataclasses import dataclass, field as dfield

import numpy as np

TWO_PI = 2.0 * np.pi

NEG_INF = "neg_infinity"
POS_INF = "pos_infinity"
BODY = "body"
VERTEX = "vertex"
INCONCLUSIVE = "inconclusive"


@dataclass
class Attachment:
    point: tuple
    approach_angle_deg: float | None
    is_corner: bool
    corner_id: int | None
    curve_id: int
    grad_norm: float


@dataclass
class VertexRecord:
    location: tuple
    m: int | None
    ray_angles_deg: list
    resolved: bool


@dataclass
class Curve:
    points: np.ndarray
    start_label: str
    end_label: str


@dataclass
class StreamlineGraph:
    curves: list
    attachments: list
    vertices: list
    meta: dict = dfield(default_factory=dict)

    def unbounded_end_count(self):
        labels = [c.start_label for c in self.curves] + [
            c.end_label for c in self.curves
        ]
        return sum(1 for v in labels if v in (NEG_INF, POS_INF))

    def to_json(self):
        return {
            "curves": [
                {
                    "start": c.start_label,
                    "end": c.end_label,
                    "points": np.round(c.points, 9).tolist(),
                }
                for c in self.curves
            ],
            "attachments": [
                {
                    "point": list(a.point),
                    "approach_angle_deg": a.approach_angle_deg,
                    "is_corner": a.is_corner,
                    "corner_id": a.corner_id,
                    "curve_id": a.curve_id,
                }
                for a in self.attachments
            ],
            "vertices": [
                {
                    "location": list(v.location),
                    "m": v.m,
                    "ray_angles_deg": v.ray_angles_deg,
                    "resolved": v.resolved,
                }
                for v in self.vertices
            ],
            "meta": {k: v for k, v in self.meta.items() if _jsonable(v)},
        }


def _jsonable(v):
    return isinstance(v, (str, int, float, bool, list, dict, type(None)))


class _FieldEvaluator:
    """Adapter giving a DiscreteField the evaluator protocol."""

    def __init__(self, field, body=None):
        self.field = field
        self.body = body or (field.grid.obstacles[0][0] if field.grid.obstacles
                             else None)
        ff = field.farfield
        self.vinf = ff.vinf_x if ff else 1.0
        self.alpha = ff.alpha if ff else 0.0
        self.rho_inf = ff.rho_inf if ff else 1.0
        self.circulation = ff.circulation if ff else 0.0

    def psi(self, pts):
        return self.field.psi_at(pts)

    def grad(self, pts):
        return self.field.grad(pts)


def as_evaluator(obj, body=None):
    if hasattr(obj, "psi") and hasattr(obj, "grad") and hasattr(obj, "body"):
        return obj
    return _FieldEvaluator(obj, body)


# ---------------------------------------------------------------------------
# marching squares
# ---------------------------------------------------------------------------

_EDGES = {  # cell-edge endpoints by local corner index
    0: (0, 1),  # bottom
    1: (1, 2),  # right
    2: (2, 3),  # top
    3: (3, 0),  # left
}


def extract_zero_set(psi_source, window, n=256, polish=True, body=None):
    """Marching-squares contour segments of the zero set on a sampling grid.

    psi_source is an evaluator, a DiscreteField, or a callable on (N,2)
    points.  Returns (segments, degenerate_cells); segments are (2,2) arrays.
    Cells whose four corners all vanish are flagged degenerate instead of
    contoured.
    """
    if callable(psi_source) and not hasattr(psi_source, "psi"):
        peval = psi_source
    else:
        ev = as_evaluator(psi_source, body)
        peval = ev.psi
        body = body or ev.body
    x0, x1, y0, y1 = window
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    vals = np.asarray(peval(pts), dtype=float).reshape(X.shape)
    if body is not None and body.closed:
        vals[body.contains(pts).reshape(X.shape)] = np.nan

    segments = []
    degenerate = []
    corner_vals = np.stack(
        [vals[:-1, :-1], vals[:-1, 1:], vals[1:, 1:], vals[1:, :-1]]
    )
    corner_x = np.stack([X[:-1, :-1], X[:-1, 1:], X[1:, 1:], X[1:, :-1]])
    corner_y = np.stack([Y[:-1, :-1], Y[:-1, 1:], Y[1:, 1:], Y[1:, :-1]])
    finite = np.isfinite(corner_vals).all(axis=0)
    allzero = finite & (np.abs(corner_vals) < 1e-300).all(axis=0)
    sgn = np.where(corner_vals >= 0.0, 1.0, -1.0)
    has_cut = finite & ~allzero & (sgn.min(axis=0) < sgn.max(axis=0))

    jj, ii = np.nonzero(has_cut)
    for j, i in zip(jj, ii):
        cv = corner_vals[:, j, i]
        cx = corner_x[:, j, i]
        cy = corner_y[:, j, i]
        crossings = []
        for e, (a, b) in _EDGES.items():
            va, vb = cv[a], cv[b]
            sa = 1.0 if va >= 0 else -1.0
            sb = 1.0 if vb >= 0 else -1.0
            if sa == sb:
                continue
            t = va / (va - vb)
            p = np.array([cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a])])
            if polish:
                p = _edge_bisect(peval, np.array([cx[a], cy[a]]),
                                 np.array([cx[b], cy[b]]), va, vb)
            crossings.append(p)
        if len(crossings) == 2:
            segments.append(np.array(crossings))
        elif len(crossings) == 4:
            # saddle cell: pair crossings by the center-value convention
            center = np.array([[cx.mean(), cy.mean()]])
            cval = float(np.asarray(peval(center))[0])
            s_center = 1.0 if cval >= 0 else -1.0
            s0 = 1.0 if cv[0] >= 0 else -1.0
            if s_center == s0:
                segments.append(np.array([crossings[0], crossings[1]]))
                segments.append(np.array([crossings[2], crossings[3]]))
            else:
                segments.append(np.array([crossings[3], crossings[0]]))
                segments.append(np.array([crossings[1], crossings[2]]))
    for j, i in zip(*np.nonzero(allzero)):
        degenerate.append((float(corner_x[0, j, i]), float(corner_y[0, j, i])))
    return segments, degenerate


def _edge_bisect(peval, pa, pb, va, vb, tol=1e-10, iters=60):
    if va == 0.0:
        return pa.copy()
    if vb == 0.0:
        return pb.copy()
    scale = max(abs(va), abs(vb), 1e-30)
    for _ in range(iters):
        pm = 0.5 * (pa + pb)
        vm = float(np.asarray(peval(pm[None, :]))[0])
        if not np.isfinite(vm):
            break
        if abs(vm) <= tol * scale or np.hypot(*(pb - pa)) < 1e-15:
            return pm
        if (vm >= 0) == (va >= 0):
            pa, va = pm, vm
        else:
            pb, vb = pm, vm
    return 0.5 * (pa + pb)


def zero_set_cycle_report(psi_source, window, n=256, body=None):
    """Cycle-freeness and unbounded-end count of the sampled zero set.

    Components that touch the body are not counted as fluid cycles (the
    boundary shares the zero value).
    """
    ev = None
    if not (callable(psi_source) and not hasattr(psi_source, "psi")):
        ev = as_evaluator(psi_source, body)
        body = body or ev.body
    segments, degenerate = extract_zero_set(psi_source, window, n, polish=False,
                                            body=body)
    x0, x1, y0, y1 = window
    cell = max((x1 - x0), (y1 - y0)) / n
    key = lambda p: (round(p[0] / (cell * 1e-4)), round(p[1] / (cell * 1e-4)))
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            return True
        return False

    edge_count = {}
    node_of = {}
    comp_cycle = set()
    for seg in segments:
        ka, kb = key(seg[0]), key(seg[1])
        for k in (ka, kb):
            if k not in parent:
                parent[k] = k
        if not union(ka, kb):
            comp_cycle.add(find(ka))
        node_of[ka] = seg[0]
        node_of[kb] = seg[1]

    cycles = []
    for root in comp_cycle:
        p = node_of.get(root)
        cycles.append(tuple(p) if p is not None else None)
    if body is not None and cycles:
        keep = []
        for root in comp_cycle:
            comp_pts = [node_of[k] for k in parent if find(k) == root and k in node_of]
            d = body.distance(np.array(comp_pts))
            if np.min(d) > 2.5 * cell:
                keep.append(tuple(comp_pts[0]))
        cycles = keep

    # unbounded ends: endpoints on the outermost cell layer
    frame = 0
    margin = 1.5 * cell
    endpoints = {}
    for seg in segments:
        for p in (seg[0], seg[1]):
            endpoints[key(p)] = endpoints.get(key(p), 0) + 1
    for k, count in endpoints.items():
        if count == 1:
            p = node_of.get(k)
            if p is None:
                continue
            if (
                p[0] < x0 + margin or p[0] > x1 - margin
                or p[1] < y0 + margin or p[1] > y1 - margin
            ):
                frame += 1
    return {
        "cycle_free": len(cycles) == 0,
        "cycles": cycles,
        "unbounded_ends": frame,
        "segments": len(segments),
        "degenerate_cells": len(degenerate),
    }


# ---------------------------------------------------------------------------
# vertex classification
# ---------------------------------------------------------------------------

def classify_vertex(psi_source, point, probe_radius, n_probe=1440):
    """Branch count and ray angles of a zero point from probe circles.

    m is half the sign-change count of psi around the probe circle; the ray
    angles of the zero crossings must be spaced ~pi/m.  A second probe at
    half the radius must agree, otherwise the vertex is flagged unresolved.
    """
    peval = psi_source if callable(psi_source) and not hasattr(psi_source, "psi") \
        else as_evaluator(psi_source).psi
    point = np.asarray(point, dtype=float)

    def rays(radius):
        th = np.linspace(0.0, TWO_PI, n_probe, endpoint=False)
        pts = point + radius * np.column_stack([np.cos(th), np.sin(th)])
        v = np.asarray(peval(pts))
        s = np.where(v >= 0, 1, -1)
        flips = np.nonzero(s != np.roll(s, -1))[0]
        angles = []
        for k in flips:
            a, b = th[k], th[(k + 1) % n_probe] if k + 1 < n_probe else TWO_PI
            va, vb = v[k], v[(k + 1) % n_probe]
            t = va / (va - vb)
            angles.append((a + t * (b - a)) % TWO_PI)
        return np.sort(np.asarray(angles))

    a1 = rays(probe_radius)
    a2 = rays(probe_radius * 0.5)
    m1, m2 = len(a1) // 2, len(a2) // 2
    resolved = (m1 == m2) and (len(a1) % 2 == 0) and m1 >= 1
    record = VertexRecord(
        location=tuple(point),
        m=m1 if resolved else None,
        ray_angles_deg=list(np.degrees(a2 if resolved else a1)),
        resolved=resolved,
    )
    return record


def vertex_angle_law_ok(record: VertexRecord, tol_deg=5.0):
    if not record.resolved or record.m is None or record.m < 1:
        return False
    ang = np.radians(np.sort(record.ray_angles_deg))
    gaps = np.diff(np.concatenate([ang, [ang[0] + TWO_PI]]))
    return bool(np.max(np.abs(gaps - np.pi / record.m)) < np.radians(tol_deg))


# ---------------------------------------------------------------------------
# tracing
# ---------------------------------------------------------------------------

def _seed_points(ev, R):
    """Zero of psi on the transverse lines through +-R along the flow axis."""
    ca, sa = np.cos(ev.alpha), np.sin(ev.alpha)
    axis = np.array([ca, sa])
    perp = np.array([-sa, ca])
    seeds = []
    for s in (-1.0, 1.0):
        base = s * R * axis
        ts = np.linspace(-0.9 * R, 0.9 * R, 4001)
        pts = base[None, :] + ts[:, None] * perp[None, :]
        v = np.asarray(ev.psi(pts))
        sgn = np.where(v >= 0.0, 1, -1)  # exact zeros count as positive
        flips = np.nonzero(sgn[:-1] != sgn[1:])[0]
        if len(flips) == 0:
            seeds.append(None)
            continue
        k = flips[np.argmin(np.abs(ts[flips]))]
        va, vb = v[k], v[k + 1]
        t = ts[k] + va / (va - vb) * (ts[k + 1] - ts[k])
        seeds.append(base + t * perp)
    return seeds


def trace_body_streamline(source, body=None, window_radius=None, step=None,
                          max_steps=400000, attach_tol=None, grad_floor=1e-8):
    """Trace the zero streamline from both infinities.

    Outcomes: a single through-curve (no body contact) or two curves ending
    at body attachment points; traces that stall are labelled inconclusive.
    """
    ev = as_evaluator(source, body)
    body = ev.body
    if ev.vinf <= 0:
        raise ValueError("tracer requires a positive far-field speed")
    if window_radius is None:
        if hasattr(ev, "field"):
            x0, x1, _y0, _y1 = ev.field.grid.extent
            window_radius = 0.98 * min(abs(x0), abs(x1))
        else:
            window_radius = max(10.0, 6.0 * body.diameter)
    if step is None:
        step = body.diameter / 400.0 if not hasattr(ev, "field") \
            else max(ev.field.grid.h / 2.0, body.diameter / 2000.0)
    if attach_tol is None:
        attach_tol = 0.5 * step if not hasattr(ev, "field") \
            else max(ev.field.grid.h / 2.0, 1.5 * step)

    scale = abs(ev.rho_inf * ev.vinf)
    ca, sa = np.cos(ev.alpha), np.sin(ev.alpha)
    axis = np.array([ca, sa])

    curves, attachments, vertices = [], [], []
    seeds = _seed_points(ev, window_radius)

    def flow_coord(p):
        return p @ axis

    for side, seed in zip((-1.0, 1.0), seeds):
        if len(curves) == 1 and curves[0].start_label == NEG_INF \
                and curves[0].end_label == POS_INF:
            break  # single through-curve already found
        if seed is None:
            curves.append(Curve(np.zeros((0, 2)), INCONCLUSIVE, INCONCLUSIVE))
            continue
        start_label = NEG_INF if side < 0 else POS_INF
        pts = [np.asarray(seed, dtype=float)]
        direction = -side * axis
        end_label = INCONCLUSIVE
        p = pts[0].copy()
        for _ in range(max_steps):
            g = ev.grad(p[None, :])[0]
            gn = np.hypot(*g)
            dist = float(body.distance(p))
            if dist < attach_tol:
                end_label = BODY
                break
            if gn < grad_floor * scale:
                if dist < 6.0 * attach_tol:
                    end_label = BODY
                    break
                rec = classify_vertex(ev.psi, p, probe_radius=4 * step)
                vertices.append(rec)
                if not rec.resolved:
                    end_label = INCONCLUSIVE
                    break
                # continue along the outgoing ray closest to our heading
                head = np.degrees(np.arctan2(direction[1], direction[0])) % 360.0
                diffs = [(abs((a - head + 180) % 360 - 180), a)
                         for a in rec.ray_angles_deg]
                diffs.sort()
                ang = np.radians(diffs[0][1])
                direction = np.array([np.cos(ang), np.sin(ang)])
                p = p + (8 * step) * direction
                pts.append(p.copy())
                continue
            tang = np.array([-g[1], g[0]]) / gn
            if tang @ direction < 0:
                tang = -tang
            # local step: shrink in weak-gradient regions near stagnation
            loc = step * min(1.0, max(gn / scale, 0.05))
            q = p + loc * tang
            for _ in range(3):
                gq = ev.grad(q[None, :])[0]
                g2 = gq @ gq
                if g2 <= 0:
                    break
                q = q - float(ev.psi(q[None, :])[0]) * gq / g2
            direction = q - p
            nd = np.hypot(*direction)
            if nd == 0:
                end_label = INCONCLUSIVE
                break
            direction /= nd
            p = q
            pts.append(p.copy())
            if abs(flow_coord(p)) > window_radius:
                end_label = POS_INF if flow_coord(p) > 0 else NEG_INF
                break
        curve_id = len(curves)
        pts = np.asarray(pts)
        if end_label == BODY:
            bp, tangent, corner_id = body.project(p)
            if corner_id is None:
                # smooth attachments are boundary stagnation points: sharpen
                # the location by minimizing |grad psi| along the boundary
                bp, tangent, corner_id = _refine_attachment(
                    ev, body, bp, tangent, 30.0 * attach_tol
                )
            ang = _approach_angle(pts, bp, tangent, body, corner_id)
            attachments.append(Attachment(
                point=tuple(bp), approach_angle_deg=ang,
                is_corner=corner_id is not None, corner_id=corner_id,
                curve_id=curve_id, grad_norm=float(np.hypot(*ev.grad(p[None, :])[0])),
            ))
        curves.append(Curve(pts, start_label, end_label))

    graph = StreamlineGraph(curves, attachments, vertices)
    graph.meta["window_radius"] = float(window_radius)
    graph.meta["step"] = float(step)
    return graph


def _refine_attachment(ev, body, bp, tangent, halfwidth):
    from scipy.optimize import minimize_scalar

    t_hat = np.array([np.cos(tangent), np.sin(tangent)])

    def f(s):
        q, _tg, _cid = body.project(bp + s * t_hat)
        g = ev.grad(np.asarray(q)[None, :])[0]
        return float(g @ g)

    res = minimize_scalar(f, bounds=(-halfwidth, halfwidth), method="bounded",
                          options={"xatol": 1e-12})
    if res.fun < f(0.0):
        return body.project(bp + res.x * t_hat)
    return bp, tangent, None


def _approach_angle(pts, attach_point, boundary_tangent, body, corner_id):
    """Angle (degrees) between the incoming curve and the boundary tangent,
    extrapolated to zero distance; relative to the bisector at corners."""
    a = np.asarray(attach_point)
    rel = pts - a[None, :]
    r = np.hypot(rel[:, 0], rel[:, 1])
    sel = np.nonzero(r > 1e-12)[0]
    if len(sel) < 3:
        return None
    rel, r = rel[sel], r[sel]
    # keep only the asymptotic tail: curvature bends the curve farther out
    r_hi = max(8.0 * r.min(), r.min() + 1e-12)
    window = (r <= r_hi)
    rel, r = rel[window][-400:], r[window][-400:]
    phi = np.arctan2(rel[:, 1], rel[:, 0])
    if corner_id is not None:
        ref = body.corners[corner_id].bisector()
    else:
        ref = boundary_tangent
    raw = np.degrees(np.angle(np.exp(1j * (phi - ref))))
    # fold to the acute angle against the reference line
    fold = np.minimum(np.abs(raw), 180.0 - np.abs(raw))
    if len(r) >= 6:
        coef = np.polyfit(r, fold, 1)
        return float(coef[1])
    return float(fold[-1])


def attachment_angle(graph: StreamlineGraph, attachment: Attachment):
    return attachment.approach_angle_deg


# ---------------------------------------------------------------------------
# structure report
# ---------------------------------------------------------------------------

def pacman_sign_check(source, corner, radius, n=2000, body=None):
    """True when psi changes sign (or vanishes) inside the corner's pacman;
    a single-signed pacman contradicts bounded-velocity flow."""
    ev_psi = source if callable(source) and not hasattr(source, "psi") \
        else as_evaluator(source, body).psi
    rng = np.random.default_rng(12345)
    c = np.asarray(corner.location)
    rr = radius * np.sqrt(rng.uniform(0.02, 1.0, n))
    aa = corner.theta0 + corner.fluid_angle * rng.uniform(0.02, 0.98, n)
    pts = c + np.column_stack([rr * np.cos(aa), rr * np.sin(aa)])
    v = np.asarray(ev_psi(pts))
    scale = np.max(np.abs(v)) if np.max(np.abs(v)) > 0 else 1.0
    return bool(v.min() < 1e-9 * scale and v.max() > -1e-9 * scale)


def check_structure(graph: StreamlineGraph, body, source=None):
    """Verdicts on the traced graph against the structural theory:
    cycle-freeness, curve count, attachment bounds, and per-protruding-corner
    attachment as required for bounded flows."""
    curve_labels = [
        (c.start_label, c.end_label) for c in graph.curves
    ]
    conclusive = all(
        INCONCLUSIVE not in lab for lab in curve_labels
    )
    n_curves = len(graph.curves)
    ends_at_body = sum(
        1 for c in graph.curves if BODY in (c.start_label, c.end_label)
    )
    protruding = [i for i, c in enumerate(body.corners) if c.protruding]
    attach_pts = np.array([a.point for a in graph.attachments]).reshape(-1, 2)
    corner_attached = {}
    tol = 0.02 * max(body.diameter, 1e-12)
    for i in protruding:
        loc = np.asarray(body.corners[i].location)
        attached = bool(
            len(attach_pts)
            and np.min(np.hypot(*(attach_pts - loc[None, :]).T)) < tol
        )
        corner_attached[i] = attached
    report = {
        "conclusive": conclusive,
        "curve_count": n_curves,
        "curve_count_ok": n_curves in (1, 2),
        "unbounded_ends": graph.unbounded_end_count(),
        "attachment_count": len(graph.attachments),
        "attachment_count_ok": len(graph.attachments) <= 2,
        "ends_at_body": ends_at_body,
        "protruding_corners": protruding,
        "corner_attached": corner_attached,
        "unattached_protruding": [i for i in protruding if not corner_attached[i]],
    }
    if source is not None and protruding:
        sign_viol = {}
        for i in protruding:
            rec = body.corners[i]
            radius = rec.pacman_radius or 0.1 * body.diameter
            sign_viol[i] = not pacman_sign_check(source, rec, radius, body=body)
        report["single_signed_pacman"] = sign_viol
    report["theorem_hypothesis_met"] = len(protruding) >= 3
    report["theorem_evidence"] = (
        len(protruding) >= 3 and len(report["unattached_protruding"]) > 0
    )
    return report
