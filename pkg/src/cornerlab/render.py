"""Artifact emission: hand-written SVG overlays (no plotting dependency),
matplotlib report figures, delimited dumps and the hashed run manifest.
"""

import csv
import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .solver import FLUID, velocity_field


def _fmt(x):
    return f"{x:.6f}"


def svg_overlay(path, body, graph=None, window=None, size=720, extra_curves=()):
    """Body (filled) with dashed streamline curves and attachment/vertex
    markers, written as a standalone SVG document."""
    if window is None:
        lo = body.polyline.min(axis=0)
        hi = body.polyline.max(axis=0)
        pad = 2.0 * max(hi - lo)
        window = (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
    x0, x1, y0, y1 = window
    w = x1 - x0
    hgt = y1 - y0
    scale = size / max(w, hgt)

    def tx(p):
        return (p[0] - x0) * scale, (y1 - p[1]) * scale  # y flips

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(w * scale)}" '
        f'height="{int(hgt * scale)}" viewBox="0 0 {_fmt(w * scale)} '
        f'{_fmt(hgt * scale)}">',
        f'<rect width="100%" height="100%" fill="white"/>',
    ]
    pts = " ".join(f"{_fmt(tx(p)[0])},{_fmt(tx(p)[1])}" for p in body.polyline)
    if body.closed:
        lines.append(f'<polygon points="{pts}" fill="#c8c8c8" stroke="black" '
                     f'stroke-width="1.5"/>')
    else:
        lines.append(f'<polyline points="{pts}" fill="none" stroke="black" '
                     f'stroke-width="2.5"/>')
    curves = list(extra_curves)
    attachments, vertices = [], []
    if graph is not None:
        curves += [c.points for c in graph.curves if len(c.points)]
        attachments = [a.point for a in graph.attachments]
        vertices = [v.location for v in graph.vertices]
    for arr in curves:
        arr = np.asarray(arr)
        if len(arr) > 4000:
            arr = arr[:: len(arr) // 4000 + 1]
        p = " ".join(f"{_fmt(tx(q)[0])},{_fmt(tx(q)[1])}" for q in arr)
        lines.append(f'<polyline points="{p}" fill="none" stroke="#1040c0" '
                     f'stroke-width="1.2" stroke-dasharray="6,4"/>')
    for a in attachments:
        cx, cy = tx(a)
        lines.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="5" '
                     f'fill="#d03020"/>')
    for v in vertices:
        cx, cy = tx(v)
        lines.append(f'<rect x="{_fmt(cx - 4)}" y="{_fmt(cy - 4)}" width="8" '
                     f'height="8" fill="#208040"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def streamline_figure_png(path, body, graph, window=None, title=""):
    fig, ax = plt.subplots(figsize=(6, 6))
    if body.closed:
        ax.fill(body.polyline[:, 0], body.polyline[:, 1], color="0.8",
                edgecolor="k", lw=1.2, zorder=3)
    else:
        ax.plot(body.polyline[:, 0], body.polyline[:, 1], "k-", lw=2.0, zorder=3)
    for c in graph.curves:
        if len(c.points):
            ax.plot(c.points[:, 0], c.points[:, 1], "b--", lw=1.0, zorder=2)
    for a in graph.attachments:
        ax.plot(*a.point, "ro", ms=6, zorder=4)
    for v in graph.vertices:
        ax.plot(*v.location, "gs", ms=6, zorder=4)
    if window:
        ax.set_xlim(window[0], window[1])
        ax.set_ylim(window[2], window[3])
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def field_figure_png(path, field, gas=None, title=""):
    """Filled contours of psi with the Mach field when a gas is given."""
    X, Y = field.grid.points()
    psi = np.where(field.grid.cls == FLUID, field.psi, np.nan)
    fig, axes = plt.subplots(1, 2 if gas is not None else 1,
                             figsize=(11 if gas is not None else 6, 5))
    axes = np.atleast_1d(axes)
    cs = axes[0].contourf(X, Y, psi, levels=31, cmap="RdBu_r")
    axes[0].contour(X, Y, psi, levels=[0.0], colors="k", linewidths=1.2)
    fig.colorbar(cs, ax=axes[0], shrink=0.85)
    axes[0].set_aspect("equal")
    axes[0].set_title(title or "stream function")
    if gas is not None:
        _vx, _vy, mach, _ = velocity_field(field, gas)
        mach = np.where(field.grid.cls == FLUID, mach, np.nan)
        cs2 = axes[1].contourf(X, Y, mach, levels=31, cmap="viridis")
        fig.colorbar(cs2, ax=axes[1], shrink=0.85)
        axes[1].set_aspect("equal")
        axes[1].set_title("Mach number")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def sweep_figure_png(path, sweep_result, title="circulation sweep"):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_corner = {}
    for gamma, row in sorted(sweep_result["reports"].items()):
        corners = row["corners"] if isinstance(row, dict) else row
        for rep in corners:
            if rep.exponent is not None:
                by_corner.setdefault(rep.corner_id, []).append(
                    (gamma, rep.exponent)
                )
    for cid, pts in sorted(by_corner.items()):
        arr = np.asarray(pts)
        ax.plot(arr[:, 0], arr[:, 1], "o-", ms=3, label=f"corner {cid}")
    ax.axhline(-0.05, color="0.4", ls=":", lw=1)
    ax.axhline(-0.15, color="0.4", ls="--", lw=1)
    ax.set_xlabel("circulation")
    ax.set_ylabel("fitted exponent of |grad psi|")
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def gas_table_figure_png(path, mus, taus, energies, title="specific volume"):
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    ax.plot(mus, taus, "b-", label="tau")
    ax.plot(mus, energies, "r--", label="energy density T")
    ax.set_xlabel("mu = |rho v|^2 / 2")
    ax.legend()
    ax.set_title(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# delimited dumps
# ---------------------------------------------------------------------------

FIELD_CSV_COLUMNS = ["x", "y", "psi", "vx", "vy", "mach", "node_class"]


def field_csv(path, field, gas=None, stride=1):
    X, Y = field.grid.points()
    vx, vy, mach, _low = velocity_field(field, gas)
    cls = field.grid.cls
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(FIELD_CSV_COLUMNS)
        ny, nx = field.grid.shape
        for j in range(0, ny, stride):
            for i in range(0, nx, stride):
                wr.writerow([
                    f"{X[j, i]:.9g}", f"{Y[j, i]:.9g}", f"{field.psi[j, i]:.12g}",
                    f"{vx[j, i]:.9g}", f"{vy[j, i]:.9g}", f"{mach[j, i]:.9g}",
                    int(cls[j, i]),
                ])
    return path


def conformal_field_csv(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "y", "psi", "vx", "vy"])
        for r in rows:
            wr.writerow([f"{v:.12g}" for v in r])
    return path


def sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["gamma_circ", "corner_id", "exponent", "r2", "verdict"])
        for row in rows:
            wr.writerow(row)
    return path


def body_polyline_csv(path, body):
    from .geometry import polyline_csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s", "x", "y", "is_corner"])
        for s, x, y, flag in polyline_csv(body):
            wr.writerow([f"{s:.9g}", f"{x:.12g}", f"{y:.12g}", flag])
    return path


def gas_table_csv(path, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["mu", "tau", "energy", "rho", "q", "sound_speed", "mach"])
        for r in rows:
            wr.writerow([f"{v:.12g}" for v in r])
    return path


def write_json(path, payload):
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
        encoding="utf-8",
    )
    return path


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not JSON serializable: {type(v)}")


def write_manifest(out_dir, artifact_paths, status="ok", extra=None):
    """Manifest of every artifact with content hash; written last."""
    out_dir = Path(out_dir)
    entries = []
    for p in sorted(str(Path(a)) for a in artifact_paths):
        data = Path(p).read_bytes()
        entries.append({
            "path": str(Path(p).relative_to(out_dir)),
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        })
    manifest = {"schema_version": 1, "status": status, "artifacts": entries}
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path
