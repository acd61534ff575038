"""Finite-difference stream-function solvers on embedded-boundary grids.

Two code paths share the grid machinery:

* linear (incompressible) solves use the Shortley-Weller 5-point scheme with
  exact boundary intersections, second order at smooth boundaries;
* the compressible solve minimizes the strictly convex energy
  sum_cells area * T(|grad psi|^2 / 2) on a right-triangle split of the grid
  (P1 elements, solid nodes pinned to zero).  The residual is the exact
  energy gradient, so damped Picard steps are guaranteed descent directions
  and the energy decreases monotonically across accepted steps.
"""

from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import gas as gaslib

try:
    import pyamg

    _HAVE_PYAMG = True
except ImportError:  # pragma: no cover
    _HAVE_PYAMG = False

FLUID, SOLID, RING = 0, 1, 2
_ARM_FLOOR = 1e-3  # nodes closer than this fraction of h are pinned to the wall


class GridError(ValueError):
    pass


class SolverDiverged(RuntimeError):
    pass


class SupersonicEncounter(RuntimeError):
    """A compressible iterate required mu >= mu_sonic somewhere.

    This is a result, not a bug: it signals possible nonexistence of a
    uniformly subsonic flow for these parameters.
    """

    def __init__(self, location, mu_ratio, mach_inf=None, message=None):
        self.location = tuple(float(v) for v in location)
        self.mu_ratio = float(mu_ratio)
        self.mach_inf = mach_inf
        super().__init__(
            message
            or f"sonic threshold reached near {self.location} "
            f"(mu/mu_sonic={self.mu_ratio:.3f}, M_inf={mach_inf})"
        )


# ---------------------------------------------------------------------------
# far field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FarField:
    """Far-field data: density, speed, Mach number, circulation and the
    additive constant of the asymptotic stream function."""

    rho_inf: float = 1.0
    vinf_x: float = 1.0
    mach_inf: float = 0.0
    circulation: float = 0.0
    const: float = 0.0
    alpha: float = 0.0  # flow direction; nonzero only for incompressible runs

    def __post_init__(self):
        if self.rho_inf <= 0:
            raise ValueError("rho_inf must be positive")
        gaslib.prandtl_glauert(self.mach_inf)  # validates subsonic

    @property
    def beta(self) -> float:
        return gaslib.prandtl_glauert(self.mach_inf)

    @classmethod
    def incompressible(cls, vinf=1.0, circulation=0.0, alpha=0.0, rho_inf=1.0):
        return cls(rho_inf=rho_inf, vinf_x=vinf, mach_inf=0.0,
                   circulation=circulation, alpha=alpha)

    @classmethod
    def compressible(cls, mach_inf, gas: gaslib.GasModel, circulation=0.0):
        state = gaslib.farfield_state(mach_inf, gas)
        return cls(rho_inf=state.density, vinf_x=state.speed, mach_inf=mach_inf,
                   circulation=circulation)

    def with_circulation(self, circulation):
        return FarField(self.rho_inf, self.vinf_x, self.mach_inf,
                        circulation, self.const, self.alpha)


def _farfield_grid(X, Y, ff):
    out = ff.rho_inf * ff.vinf_x * Y + ff.const
    if ff.circulation != 0.0:
        beta = ff.beta
        r = np.sqrt(X * X + (beta * Y) ** 2)
        out = out - ff.rho_inf * ff.circulation / (2 * np.pi) * beta * np.log(r)
    return out


def far_field_psi(x, y, ff: FarField):
    """Asymptotic stream function

        psi = rho_inf*(vinf*y' - (G/2pi)*beta*log sqrt(x'^2 + (beta y')^2)) + c

    in flow-aligned coordinates (x', y'); the o(1) remainder is dropped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any((x == 0) & (y == 0)):
        raise ValueError("far-field expansion is singular at the origin")
    if ff.alpha != 0.0:
        if ff.mach_inf != 0.0:
            raise ValueError("nonzero flow angle requires the incompressible form")
        ca, sa = np.cos(ff.alpha), np.sin(ff.alpha)
        x, y = ca * x + sa * y, -sa * x + ca * y
    beta = ff.beta
    out = ff.rho_inf * ff.vinf_x * y + ff.const
    if ff.circulation != 0.0:
        r = np.sqrt(x * x + (beta * y) ** 2)
        out = out - ff.rho_inf * ff.circulation / (2 * np.pi) * beta * np.log(r)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

class Grid:
    """Uniform Cartesian grid with node classification and Shortley-Weller
    arm fractions against one or more obstacles.

    obstacles: list of (BodyGeometry, dirichlet_value) pairs.
    """

    def __init__(self, half_width, h, center=(0.0, 0.0), obstacles=(),
                 extent=None):
        if extent is not None:
            x0, x1, y0, y1 = extent
        else:
            x0, x1 = center[0] - half_width, center[0] + half_width
            y0, y1 = center[1] - half_width, center[1] + half_width
        self.h = float(h)
        self.nx = int(round((x1 - x0) / h)) + 1
        self.ny = int(round((y1 - y0) / h)) + 1
        self.xs = x0 + self.h * np.arange(self.nx)
        self.ys = y0 + self.h * np.arange(self.ny)
        self.extent = (x0, x1, y0, y1)
        self.obstacles = list(obstacles)
        self._classify()

    @property
    def shape(self):
        return (self.ny, self.nx)

    def points(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        return X, Y

    def _classify(self):
        X, Y = self.points()
        pts = np.column_stack([X.ravel(), Y.ravel()])
        cls = np.zeros(pts.shape[0], dtype=np.int8)
        owner = np.full(pts.shape[0], -1, dtype=np.int32)
        for k, (body, _val) in enumerate(self.obstacles):
            inside = body.contains(pts)
            owner[inside & (cls != SOLID)] = k
            cls[inside] = SOLID
        cls = cls.reshape(self.shape)
        owner = owner.reshape(self.shape)
        cls[0, :] = cls[-1, :] = RING
        cls[:, 0] = cls[:, -1] = RING
        self.cls = cls
        self.owner = owner
        self._build_arms()

    def _build_arms(self):
        """Fractions a in (0,1] and boundary values for arms cut by obstacles."""
        ny, nx = self.shape
        h = self.h
        self.arm_frac = np.ones((4, ny, nx))  # E, W, N, S
        self.arm_val = np.zeros((4, ny, nx))
        offs = [(0, 1), (0, -1), (1, 0), (-1, 0)]  # (dj, di) for E,W,N,S
        X, Y = self.points()
        fluid = self.cls == FLUID
        pinned = np.zeros(self.shape, dtype=bool)
        for a, (dj, di) in enumerate(offs):
            nb = np.roll(self.cls, (-dj, -di), axis=(0, 1))
            cut = fluid & (nb == SOLID)
            # roll wraps at edges, but edge nodes are RING, never FLUID
            if not np.any(cut):
                continue
            jj, ii = np.nonzero(cut)
            P = np.column_stack([X[jj, ii], Y[jj, ii]])
            Q = P + h * np.array([di, dj])[None, :]
            frac = np.full(len(P), np.nan)
            val = np.zeros(len(P))
            for body, bval in self.obstacles:
                t = body.crossings(P, Q)
                take = np.isfinite(t) & (~(t >= frac))
                frac = np.where(take, t, frac)
                val = np.where(take, bval, val)
            missing = ~np.isfinite(frac)
            frac[missing] = 1.0  # containment/crossing disagreement: full arm
            self.arm_frac[a, jj, ii] = np.maximum(frac, _ARM_FLOOR)
            self.arm_val[a, jj, ii] = val
            pinned[jj[frac < _ARM_FLOOR], ii[frac < _ARM_FLOOR]] = True
        if np.any(pinned):
            self.cls[pinned] = SOLID
            self._build_arms()


# ---------------------------------------------------------------------------
# discrete field
# ---------------------------------------------------------------------------

@dataclass
class DiscreteField:
    grid: Grid
    psi: np.ndarray
    farfield: FarField | None = None
    meta: dict = dfield(default_factory=dict)

    def __post_init__(self):
        self._grad_cache = None

    def psi_at(self, pts):
        return _bilinear(self.grid, self.psi, pts)

    def _node_gradients(self):
        if self._grad_cache is None:
            h = self.grid.h
            gx = np.gradient(self.psi, h, axis=1)
            gy = np.gradient(self.psi, h, axis=0)
            self._grad_cache = (gx, gy)
        return self._grad_cache

    def grad(self, pts):
        gx, gy = self._node_gradients()
        return np.column_stack(
            [_bilinear(self.grid, gx, pts), _bilinear(self.grid, gy, pts)]
        )

    def psi_eval(self, pts):
        return self.psi_at(pts)

    def solid_value(self, default=0.0):
        return default

    def fluid_mask(self):
        return self.grid.cls == FLUID

    def max_principle_ok(self, tol=1e-9):
        """Interior values never exceed the boundary/ring extrema."""
        fl = self.fluid_mask()
        if not np.any(fl):
            return True
        interior = self.psi[fl]
        bvals = [self.psi[self.grid.cls == RING]]
        for a in range(4):
            cut = self.grid.arm_frac[a] < 1.0
            if np.any(cut):
                bvals.append(self.grid.arm_val[a][cut])
        if any(self.grid.cls.ravel() == SOLID):
            bvals.append(np.array([v for _b, v in self.grid.obstacles]))
        b = np.concatenate([np.ravel(v) for v in bvals])
        scale = max(1.0, np.max(np.abs(b)) if b.size else 1.0)
        return (interior.max() <= b.max() + tol * scale) and (
            interior.min() >= b.min() - tol * scale
        )


def _bilinear(grid, arr, pts):
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x0, _x1, y0, _y1 = grid.extent
    h = grid.h
    fx = np.clip((pts[:, 0] - x0) / h, 0, grid.nx - 1 - 1e-12)
    fy = np.clip((pts[:, 1] - y0) / h, 0, grid.ny - 1 - 1e-12)
    i = fx.astype(int)
    j = fy.astype(int)
    tx = fx - i
    ty = fy - j
    return (
        arr[j, i] * (1 - tx) * (1 - ty)
        + arr[j, i + 1] * tx * (1 - ty)
        + arr[j + 1, i] * (1 - tx) * ty
        + arr[j + 1, i + 1] * tx * ty
    )


# ---------------------------------------------------------------------------
# sparse linear algebra
# ---------------------------------------------------------------------------

def _amg_hierarchy(A, symmetric):
    if not _HAVE_PYAMG:  # pragma: no cover
        return None
    return pyamg.smoothed_aggregation_solver(
        sp.csr_matrix(A), max_coarse=300,
        symmetry="symmetric" if symmetric else "nonsymmetric",
    )


def _linear_solve(A, b, tol=1e-11, symmetric=False, ml=None, fresh=True):
    """Solve to a relative residual <= tol; returns (x, residual, ml).

    `ml` is an AMG hierarchy.  With fresh=True it must match A exactly and
    its own cycle is used; a stale hierarchy (fresh=False) only
    preconditions a Krylov solve on the given A.
    """
    bn = np.linalg.norm(b)
    if bn == 0:
        return np.zeros_like(b), 0.0, ml
    if ml is None:
        ml = _amg_hierarchy(A, symmetric)
        fresh = True
    if ml is None:  # pragma: no cover
        x = spla.spsolve(sp.csc_matrix(A), b)
        res = np.linalg.norm(A @ x - b) / bn
        if res > tol:
            raise SolverDiverged(f"direct solve residual {res:g}")
        return x, res, None
    if fresh:
        accel = "cg" if symmetric else "bicgstab"
        x = ml.solve(b, tol=0.1 * tol, accel=accel, maxiter=400)
    else:
        M = ml.aspreconditioner()
        solver = spla.cg if symmetric else spla.lgmres
        x, _info = solver(A, b, rtol=0.1 * tol, maxiter=800, M=M)
    res = np.linalg.norm(A @ x - b) / bn
    if res > tol:
        # stale preconditioner or tough system: rebuild and retry once
        ml = _amg_hierarchy(A, symmetric)
        accel = "cg" if symmetric else "bicgstab"
        x = ml.solve(b, x0=x, tol=0.1 * tol, accel=accel, maxiter=600)
        res = np.linalg.norm(A @ x - b) / bn
    if res > tol:
        raise SolverDiverged(f"linear solve stalled at relative residual {res:g}")
    return x, res, ml


# ---------------------------------------------------------------------------
# Shortley-Weller Laplace solver
# ---------------------------------------------------------------------------

def _sw_system(grid: Grid, ring_bc):
    """Assemble -Laplace(psi) = 0 with SW shortened arms.

    Returns (A, b, index) with `index` mapping grid nodes to unknowns.
    """
    ny, nx = grid.shape
    cls = grid.cls
    fluid = cls == FLUID
    n = int(fluid.sum())
    if n == 0:
        raise GridError("no fluid nodes")
    index = -np.ones(grid.shape, dtype=np.int64)
    index[fluid] = np.arange(n)

    X, Y = grid.points()
    ring_vals = np.zeros(grid.shape)
    ring_mask = cls == RING
    ring_vals[ring_mask] = ring_bc(X[ring_mask], Y[ring_mask])

    jj, ii = np.nonzero(fluid)
    rows, cols, data = [], [], []
    b = np.zeros(n)
    me = index[jj, ii]
    offs = [(0, 1), (0, -1), (1, 0), (-1, 0)]  # E W N S (dj, di)
    inv_h2 = 1.0 / grid.h**2

    aE = grid.arm_frac[0, jj, ii]
    aW = grid.arm_frac[1, jj, ii]
    aN = grid.arm_frac[2, jj, ii]
    aS = grid.arm_frac[3, jj, ii]
    diag = 2.0 / (aE * aW) + 2.0 / (aN * aS)
    rows.append(me)
    cols.append(me)
    data.append(diag * inv_h2)

    pair = {0: (aE, aW), 1: (aW, aE), 2: (aN, aS), 3: (aS, aN)}
    for a, (dj, di) in enumerate(offs):
        fa, fo = pair[a]
        coef = -2.0 / (fa * (fa + fo)) * inv_h2
        nj, ni = jj + dj, ii + di
        ncls = cls[nj, ni]
        cut = fa < 1.0
        # neighbors behind a cut arm contribute the wall value
        b[me[cut]] -= coef[cut] * grid.arm_val[a, jj, ii][cut]
        free = (~cut) & (ncls == FLUID)
        rows.append(me[free])
        cols.append(index[nj[free], ni[free]])
        data.append(coef[free])
        ringn = (~cut) & (ncls == RING)
        b[me[ringn]] -= coef[ringn] * ring_vals[nj[ringn], ni[ringn]]
        solid_uncut = (~cut) & (ncls == SOLID)
        if np.any(solid_uncut):
            # containment/crossing disagreement fallback: value at full arm
            k = grid.owner[nj[solid_uncut], ni[solid_uncut]]
            vals = np.array([grid.obstacles[x][1] if x >= 0 else 0.0 for x in k])
            b[me[solid_uncut]] -= coef[solid_uncut] * vals

    A = sp.csr_matrix(
        (
            np.concatenate(data),
            (
                np.concatenate(rows).astype(np.int32),
                np.concatenate(cols).astype(np.int32),
            ),
        ),
        shape=(n, n),
    )
    return A, b, index


def sw_laplace_solve(grid: Grid, ring_bc, ml=None, tol=1e-11):
    """Laplace solve with Dirichlet data on ring and obstacle boundaries."""
    A, b, index = _sw_system(grid, ring_bc)
    x, res, ml = _linear_solve(A, b, tol=tol, symmetric=False, ml=ml)
    psi = np.zeros(grid.shape)
    fluid = grid.cls == FLUID
    psi[fluid] = x
    X, Y = grid.points()
    ring = grid.cls == RING
    psi[ring] = ring_bc(X[ring], Y[ring])
    solid = grid.cls == SOLID
    if np.any(solid) and grid.obstacles:
        vals = np.array([v for _b, v in grid.obstacles] + [0.0])
        psi[solid] = vals[grid.owner[solid]]
    return psi, {"linear_residual": res, "unknowns": int(b.size)}, ml


def solve_incompressible(body, ff: FarField, grid: Grid | None = None,
                         half_width=10.0, h=1.0 / 64, ring_bc=None):
    """Laplace pair (psi0, psi1): uniform-stream part and unit-circulation
    part; the flow at circulation G is psi0 + rho_inf*G*psi1.
    """
    if ff.mach_inf != 0.0:
        raise ValueError("incompressible solver needs mach_inf = 0")
    if grid is None:
        grid = Grid(half_width, h, obstacles=[(body, 0.0)])
    elif not grid.obstacles:
        raise GridError("grid must carry the body as an obstacle")

    ff0 = ff.with_circulation(0.0)
    bc0 = ring_bc or (lambda x, y: far_field_psi(x, y, ff0))
    psi0, meta0, ml = sw_laplace_solve(grid, bc0)

    def bc1(x, y):
        if ff.alpha != 0.0:
            ca, sa = np.cos(ff.alpha), np.sin(ff.alpha)
            x, y = ca * x + sa * y, -sa * x + ca * y
        return -np.log(np.hypot(x, y)) / (2 * np.pi)

    psi1, meta1, _ = sw_laplace_solve(grid, bc1, ml=ml)
    f0 = DiscreteField(grid, psi0, ff0, meta0)
    f1 = DiscreteField(grid, psi1, FarField.incompressible(0.0, 1.0), meta1)
    return f0, f1


def combine_superposition(f0: DiscreteField, f1: DiscreteField, ff: FarField):
    psi = f0.psi + ff.rho_inf * ff.circulation * f1.psi
    return DiscreteField(f0.grid, psi, ff, {"superposition": True})


# ---------------------------------------------------------------------------
# compressible variational solver
# ---------------------------------------------------------------------------

class _TriMesh:
    """Boundary-fitted right-triangle split of the grid cells.

    Solid nodes adjacent to fluid are snapped onto the exact body boundary
    (a staircase wall would create artificial micro-corners whose gradient
    spikes do not vanish with h and can trip the sonic guard).  Snaps that
    would squash a triangle are reverted.  Per-triangle geometry is kept
    explicitly; on unsnapped cells the assembled Laplace limit is the
    standard 5-point stencil.
    """

    def __init__(self, grid: Grid, snap=True):
        ny, nx = grid.shape
        self.grid = grid
        ids = np.arange(nx * ny).reshape(ny, nx)
        n00 = ids[:-1, :-1].ravel()
        n10 = ids[:-1, 1:].ravel()
        n01 = ids[1:, :-1].ravel()
        n11 = ids[1:, 1:].ravel()
        solid = (grid.cls == SOLID).ravel()
        t1 = np.column_stack([n00, n10, n11])
        t2 = np.column_stack([n00, n11, n01])
        tris = np.vstack([t1[~solid[t1].all(axis=1)],
                          t2[~solid[t2].all(axis=1)]])

        X, Y = grid.points()
        coords = np.column_stack([X.ravel(), Y.ravel()])
        wall = np.zeros(nx * ny, dtype=bool)
        if snap and grid.obstacles:
            coords, wall = self._fit_boundary(coords, solid, tris, grid)
        self.coords = coords
        self.wall = wall

        # keep triangles with a free vertex; drop the rare slivers left over
        # from snapping (they cover negligible area with spiky gradients)
        fluid = (grid.cls == FLUID).ravel() & ~wall
        tris = tris[fluid[tris].any(axis=1)]
        p = coords[tris]  # (M,3,2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        keep = np.abs(det) >= 0.25 * grid.h**2
        tris, p, det = tris[keep], p[keep], det[keep]
        self.tri = tris
        self.areas = 0.5 * np.abs(det)
        # P1 gradient operator rows (d/dx, d/dy) per triangle
        x, y = p[..., 0], p[..., 1]
        B = np.empty((len(tris), 2, 3))
        B[:, 0, 0] = y[:, 1] - y[:, 2]
        B[:, 0, 1] = y[:, 2] - y[:, 0]
        B[:, 0, 2] = y[:, 0] - y[:, 1]
        B[:, 1, 0] = x[:, 2] - x[:, 1]
        B[:, 1, 1] = x[:, 0] - x[:, 2]
        B[:, 1, 2] = x[:, 1] - x[:, 0]
        B /= det[:, None, None]
        self.B = B
        self.local = np.einsum("m,mia,mib->mab", self.areas, B, B)

        self.free = fluid
        self.nfree = int(self.free.sum())
        m = len(tris)
        self._rows = np.broadcast_to(tris[:, :, None], (m, 3, 3)).ravel()
        self._cols = np.broadcast_to(tris[:, None, :], (m, 3, 3)).ravel()

    def _fit_boundary(self, coords, solid, tris, grid):
        """Closest-node snapping: for every mesh edge crossed by the body
        boundary, the endpoint nearer the wall moves onto it (and becomes a
        wall node with psi = 0).  Free nodes then keep a half-cell clearance
        and no solid vertex survives in any kept triangle."""
        def project(k):
            p = coords[k]
            best = None
            for body, _v in grid.obstacles:
                bp, _tg, _cid = body.project(p)
                d = np.hypot(bp[0] - p[0], bp[1] - p[1])
                if best is None or d < best[0]:
                    best = (d, bp)
            return best

        coords = coords.copy()
        wall = np.zeros(len(coords), dtype=bool)
        dist = {}
        edges = np.vstack([tris[:, (0, 1)], tris[:, (1, 2)], tris[:, (0, 2)]])
        cut = solid[edges[:, 0]] != solid[edges[:, 1]]
        for a, b in np.unique(np.sort(edges[cut], axis=1), axis=0):
            for k in (a, b):
                if k not in dist:
                    dist[k] = project(k)
            da, db = dist[a][0], dist[b][0]
            k, d, bp = (a, da, dist[a][1]) if da <= db else (b, db, dist[b][1])
            if not wall[k]:
                coords[k] = bp
                wall[k] = True
        return coords, wall

    def gradients(self, psi_flat):
        return np.einsum("mia,ma->mi", self.B, psi_flat[self.tri])

    def mu(self, psi_flat):
        g = self.gradients(psi_flat)
        return [0.5 * (g[:, 0] ** 2 + g[:, 1] ** 2)]

    def energy(self, psi_flat, gas):
        m = self.mu(psi_flat)[0]
        return float(np.sum(self.areas * gaslib.energy_density(m, gas)))

    def residual(self, psi_flat, gas, mu_cap):
        """Exact gradient of the energy at interior nodes."""
        g = self.gradients(psi_flat)
        m = 0.5 * (g[:, 0] ** 2 + g[:, 1] ** 2)
        t = gaslib.tau_fast(np.minimum(m, mu_cap), gas)
        flux = (self.areas * t)[:, None] * g
        contrib = np.einsum("mi,mia->ma", flux, self.B)
        r = np.zeros(psi_flat.size)
        for a in range(3):
            r += np.bincount(self.tri[:, a], weights=contrib[:, a],
                             minlength=psi_flat.size)
        return r

    def assemble(self, coeffs):
        data = (coeffs[0][:, None, None] * self.local).ravel()
        n = self.free.size
        return sp.coo_matrix((data, (self._rows, self._cols)),
                             shape=(n, n)).tocsr()

    def assemble_newton(self, tau_t, tprime_t, grads):
        """Energy Hessian: tau * B^T B + tau' * (B^T g)(B^T g)^T per
        triangle; SPD as long as the state is subsonic."""
        q = np.einsum("mia,mi->ma", self.B, grads)
        data = (tau_t[:, None, None] * self.local
                + (self.areas * tprime_t)[:, None, None]
                * q[:, :, None] * q[:, None, :]).ravel()
        n = self.free.size
        return sp.coo_matrix((data, (self._rows, self._cols)),
                             shape=(n, n)).tocsr()

    def max_mu_location(self, psi_flat):
        m = self.mu(psi_flat)[0]
        k = int(np.argmax(m))
        c = self.coords[self.tri[k]].mean(axis=0)
        return float(m[k]), (float(c[0]), float(c[1]))


def solve_variational_incompressible(body, ff: FarField, grid: Grid | None = None,
                                     half_width=10.0, h=1.0 / 32):
    """Constant-coefficient solve on the same P1 mesh as the compressible
    path; the matching reference for Mach-scaling comparisons."""
    if grid is None:
        grid = Grid(half_width, h, obstacles=[(body, 0.0)])
    mesh = _TriMesh(grid)
    X, Y = grid.points()
    psi = np.zeros(grid.shape)
    ring = grid.cls == RING
    psi[ring] = far_field_psi(X[ring], Y[ring], ff)
    flat = psi.ravel()
    flat[mesh.wall] = 0.0
    coeffs = [np.full(len(mesh.tri), 1.0 / ff.rho_inf)]
    A = mesh.assemble(coeffs)
    Aff = A[mesh.free][:, mesh.free]
    rhs = -(A @ flat)[mesh.free] + Aff @ flat[mesh.free]
    sol, res, _ = _linear_solve(Aff, rhs, tol=1e-11, symmetric=True)
    flat[mesh.free] = sol
    meta = {"scheme": "p1-variational", "linear_residual": res}
    return DiscreteField(grid, flat.reshape(grid.shape), ff, meta)


def solve_compressible(body, ff: FarField, gas: gaslib.GasModel,
                       grid: Grid | None = None, half_width=10.0, h=1.0 / 32,
                       dm_max=0.05, tol=1e-8, max_picard=80,
                       psi_init=None, guard=0.995, keep_steps=False):
    """Mach continuation from 0 to ff.mach_inf; damped Picard per step.

    Each Picard direction solves the frozen-coefficient SPD system, which is
    exactly a descent direction of the discrete energy, so backtracking on
    the energy always succeeds while the iterate stays subsonic.  Raises
    SupersonicEncounter when an iterate cannot stay below the sonic
    threshold even with step damping.

    A provided psi_init is trusted as a warm start near the target Mach and
    skips the continuation ramp.  keep_steps stores each continuation
    solution in meta["step_psi"].
    """
    if grid is None:
        grid = Grid(half_width, h, obstacles=[(body, 0.0)])
    mesh = _TriMesh(grid)
    mu1 = gaslib.sonic_mu(gas)
    mu_cap = mu1 * (1.0 - 1e-10)

    target = ff.mach_inf
    if psi_init is not None:
        steps = [target]
    else:
        steps = []
        m = 0.0
        while m < target - 1e-12:
            m = min(target, m + dm_max)
            steps.append(m)
    if not steps:
        raise ValueError("target Mach must be positive; "
                         "use solve_variational_incompressible for M=0")

    X, Y = grid.points()
    ring = grid.cls == RING
    solid = grid.cls == SOLID
    if psi_init is None:
        # smooth subsonic initial iterate: far-field expansion tapered to the
        # body value inside a collar (damping cannot heal a supersonic start)
        ff0 = FarField.compressible(steps[0], gas, ff.circulation)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.hypot(X, Y)
            init = np.where(r > 0, _farfield_grid(X, Y, ff0), 0.0)
        init = np.nan_to_num(init, nan=0.0, posinf=0.0, neginf=0.0)
        cen = body.polyline.mean(axis=0)
        rb = np.max(np.hypot(*(body.polyline - cen).T))
        rc = np.hypot(X - cen[0], Y - cen[1])
        ramp = max(rb, 4 * grid.h)
        psi = init * np.clip((rc - rb) / ramp, 0.0, 1.0)
    else:
        psi = psi_init.copy()
    psi = psi.ravel()
    history = []
    prev_scale = None

    for mstep in steps:
        ffs = FarField.compressible(mstep, gas, ff.circulation)
        scale = ffs.rho_inf * ffs.vinf_x
        psi2d = psi.reshape(grid.shape)
        if prev_scale is not None:
            # carry the previous Mach solution, rescaled to the new far field
            psi2d *= scale / prev_scale
        prev_scale = scale
        psi2d[ring] = far_field_psi(X[ring], Y[ring], ffs)
        psi2d[solid] = 0.0
        psi = psi2d.ravel()
        psi[mesh.wall] = 0.0

        ml = None
        energies = []
        res = np.inf
        step_meta = {"mach_inf": mstep, "picard": 0}
        for it in range(max_picard):
            mu_t = mesh.mu(psi)
            mu_max = max(float(np.max(m_)) if m_.size else 0.0 for m_ in mu_t)
            if mu_max >= mu1:
                loc = mesh.max_mu_location(psi)[1]
                raise SupersonicEncounter(loc, mu_max / mu1, mach_inf=mstep)
            # correction form: H delta = -grad E keeps the linear right-hand
            # side at the size of the outer residual, so a relative inner
            # tolerance cannot floor the outer convergence.  The Newton
            # Hessian stays SPD while subsonic and converges quadratically
            # where the Picard contraction degrades near the sonic bound.
            r0 = mesh.residual(psi, gas, mu_cap)
            res = float(np.max(np.abs(r0[mesh.free]))) / grid.h**2
            if res <= tol:
                break
            mu_capped = np.minimum(mu_t[0], mu_cap)
            tau_t = np.asarray(gaslib.tau_fast(mu_capped, gas))
            tprime_t = np.asarray(gaslib.tau_prime(mu_capped, gas))
            H = mesh.assemble_newton(tau_t, tprime_t, mesh.gradients(psi))
            Hff = H[mesh.free][:, mesh.free]
            fresh = it % 4 == 0
            delta, _res, ml = _linear_solve(Hff, -r0[mesh.free], tol=1e-8,
                                            symmetric=True,
                                            ml=None if fresh else ml, fresh=fresh)
            d = np.zeros_like(psi)
            d[mesh.free] = delta

            e_cur = mesh.energy(psi, gas)
            omega = 1.0
            accepted = None
            mu_trial = mu_max
            guard_damps = 0
            for _ in range(60):
                trial = psi + omega * d
                mu_trial = max(float(np.max(m_)) for m_ in mesh.mu(trial))
                if mu_trial >= mu1 or (mu_trial >= guard * mu1 and guard_damps < 6):
                    guard_damps += 1
                    omega *= 0.5
                    if omega < 2.0**-30:
                        break
                    continue
                e_new = mesh.energy(trial, gas)
                if e_new <= e_cur * (1 + 1e-14) + 1e-14:
                    accepted = (trial, e_new)
                    break
                omega *= 0.5
                if omega < 2.0**-30:
                    break
            if accepted is None:
                if mu_trial >= guard * mu1:
                    loc = mesh.max_mu_location(psi + omega * d)[1]
                    raise SupersonicEncounter(loc, mu_trial / mu1, mach_inf=mstep)
                raise SolverDiverged("energy line search failed")  # not expected
            psi, e_now = accepted
            energies.append(e_now)
            step_meta["picard"] = it + 1
        else:
            raise SolverDiverged(
                f"Picard did not reach tol {tol:g} at M={mstep} (residual {res:g})"
            )
        step_meta["residual"] = res
        step_meta["energy_history"] = energies
        mu_final = max(float(np.max(m_)) for m_ in mesh.mu(psi))
        step_meta["max_mu_ratio"] = mu_final / mu1
        if keep_steps:
            step_meta["psi"] = psi.reshape(grid.shape).copy()
            step_meta["farfield"] = ffs
        history.append(step_meta)

    mu_final = max(float(np.max(m_)) for m_ in mesh.mu(psi))
    state = gaslib.FlowSample.from_momentum(min(mu_final, mu_cap), gas)
    meta = {
        "continuation": history,
        "residual": history[-1]["residual"],
        "max_mu_ratio": history[-1]["max_mu_ratio"],
        "max_mach": state.mach,
        "scheme": "p1-variational",
    }
    ff_final = FarField.compressible(target, gas, ff.circulation)
    return DiscreteField(grid, psi.reshape(grid.shape), ff_final, meta)


def field_max_mach(field: DiscreteField, gas: gaslib.GasModel):
    """Largest Mach number of the discrete solution, measured on the same
    triangle gradients the solver controls (node stencils at the wall are
    lower order and can overshoot)."""
    mesh = _TriMesh(field.grid)
    flat = field.psi.ravel().copy()
    flat[mesh.wall] = 0.0
    mu_max = float(np.max(mesh.mu(flat)[0]))
    mu1 = gaslib.sonic_mu(gas)
    if mu_max >= mu1:
        return np.inf
    return gaslib.FlowSample.from_momentum(mu_max, gas).mach


def compressible_energy(field: DiscreteField, gas: gaslib.GasModel):
    mesh = _TriMesh(field.grid)
    return mesh.energy(field.psi.ravel(), gas)


def compressible_residual(field: DiscreteField, gas: gaslib.GasModel):
    mesh = _TriMesh(field.grid)
    mu1 = gaslib.sonic_mu(gas)
    r = mesh.residual(field.psi.ravel(), gas, mu1 * (1 - 1e-10))
    return float(np.max(np.abs(r[mesh.free]))) / field.grid.h**2


# ---------------------------------------------------------------------------
# derived fields
# ---------------------------------------------------------------------------

def velocity_field(field: DiscreteField, gas: gaslib.GasModel | None = None):
    """Node velocities v = tau(mu) * (psi_y, -psi_x) and Mach numbers.

    Returns (vx, vy, mach, low_order) arrays; low_order flags nodes whose
    stencil touched the boundary classification (one-sided differences).
    """
    g = field.grid
    h = g.h
    psi = field.psi
    gx = np.gradient(psi, h, axis=1)
    gy = np.gradient(psi, h, axis=0)
    mu = 0.5 * (gx**2 + gy**2)
    if gas is None:
        rho_inf = field.farfield.rho_inf if field.farfield else 1.0
        spec_vol = np.full_like(psi, 1.0 / rho_inf)
        mach = np.zeros_like(psi)
    else:
        mu1 = gaslib.sonic_mu(gas)
        spec_vol = np.asarray(gaslib.tau_fast(np.minimum(mu, mu1 * (1 - 1e-10)), gas))
        rho = 1.0 / spec_vol
        q = spec_vol * np.sqrt(2.0 * mu)
        c = np.sqrt(gas.gamma * rho ** (gas.gamma - 1.0))
        mach = q / c
    vx = spec_vol * gy
    vy = -spec_vol * gx
    notfluid = g.cls != FLUID
    low = np.zeros_like(notfluid)
    low |= np.roll(notfluid, 1, axis=0) | np.roll(notfluid, -1, axis=0)
    low |= np.roll(notfluid, 1, axis=1) | np.roll(notfluid, -1, axis=1)
    low |= notfluid
    return vx, vy, mach, low


def fit_farfield(field: DiscreteField, r_inner, r_outer):
    """Least-squares (vinf, circulation, const) from the solved field on an
    annulus, using the asymptotic basis [y', log-term, 1]."""
    ff = field.farfield
    beta = ff.beta
    X, Y = field.grid.points()
    r = np.hypot(X, Y)
    sel = (r >= r_inner) & (r <= r_outer) & (field.grid.cls == FLUID)
    x, y = X[sel], Y[sel]
    if ff.alpha != 0.0:
        ca, sa = np.cos(ff.alpha), np.sin(ff.alpha)
        x, y = ca * x + sa * y, -sa * x + ca * y
    r2 = x**2 + y**2
    basis = np.column_stack([
        ff.rho_inf * y,
        -ff.rho_inf * beta / (2 * np.pi) * np.log(np.sqrt(x**2 + (beta * y) ** 2)),
        np.ones_like(x),
        y / r2,  # dipole terms soak up the leading o(1) remainder
        x / r2,
    ])
    coef, *_ = np.linalg.lstsq(basis, field.psi[sel], rcond=None)
    return {"vinf_x": coef[0], "circulation": coef[1], "const": coef[2]}


# ---------------------------------------------------------------------------
# channel quadrant scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelParams:
    diamond: float = 1.0      # half-diagonal of the diamond body
    half_width: float = 1.0   # channel half-width
    shoulder: float = 2.5     # wall arc center offset (arc radius shoulder-half_width)
    length: float = 6.0       # quadrant extent
    h: float = 1.0 / 64


def _channel_bodies(p: ChannelParams):
    from .geometry import polygon_body

    d, w, c, X = p.diamond, p.half_width, p.shoulder, p.length
    eps = 0.25 * p.h
    diamond = polygon_body([(d, 0.0), (0.0, d), (-eps, -eps)], name="diamond-quarter")
    phi = np.linspace(np.pi, 1.5 * np.pi, 128)
    arc = np.column_stack([c + (c - w) * np.cos(phi), c + (c - w) * np.sin(phi)])
    M = X + 1.0
    wall_pts = np.vstack([[(w, M)], [(w, c)], arc[::-1], [(c, w), (M, w), (M, M)]])
    wall = polygon_body(wall_pts, name="channel-wall")
    return diamond, wall


def channel_quadrant_flow(params: ChannelParams | None = None):
    """Laplace solve in the quarter channel of the four-channel scenario.

    psi = 1 on the curved outer wall, 0 on the diamond side and on the axes,
    linear transition profile at the outflow faces; returns the quadrant
    field (reflect with `reflect_channel_field`).
    """
    p = params or ChannelParams()
    diamond, wall = _channel_bodies(p)
    grid = Grid(None, p.h, obstacles=[(diamond, 0.0), (wall, 1.0)],
                extent=(0.0, p.length, 0.0, p.length))

    w = p.half_width

    def ring_bc(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = np.zeros_like(x)
        right = x >= p.length - 1e-12
        top = y >= p.length - 1e-12
        out[right] = np.clip(y[right] / w, 0.0, 1.0)
        out[top] = np.clip(x[top] / w, 0.0, 1.0)
        return out

    psi, meta, _ = sw_laplace_solve(grid, ring_bc)
    fld = DiscreteField(grid, psi, FarField.incompressible(0.0), meta)
    fld.meta["params"] = p
    return fld


def reflect_channel_field(fld: DiscreteField):
    """Odd reflections across both axes; discretely harmonic by construction."""
    p = fld.meta["params"]
    psi = fld.psi
    top = np.hstack([-psi[:, :0:-1], psi])
    full = np.vstack([-top[:0:-1, :], top])
    grid = Grid(None, p.h, obstacles=[], extent=(-p.length, p.length,
                                                 -p.length, p.length))
    d = p.diamond
    from .geometry import polygon_body

    diamond = polygon_body([(d, 0), (0, d), (-d, 0), (0, -d)], name="diamond")
    grid.obstacles = [(diamond, 0.0)]
    grid._classify()
    return DiscreteField(grid, full, fld.farfield, {"reflected": True, "params": p})
