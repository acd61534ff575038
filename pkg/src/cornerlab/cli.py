"""Command-line front end: scenario loading, analysis orchestration and
artifact emission.  Every run writes a manifest.json hashing its outputs.

Exit codes: 0 success (solver nonexistence signals are results, not errors),
1 internal error, 2 scenario/schema error.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, render, topology
from .conformal import (
    CirclePlaneFlow,
    ConformalFlowField,
    flow_for_profile,
    sample_field_csv,
)
from .gas import GasModel, energy_density, sonic_mu, tau
from .geometry import KarmanTrefftzProfile, body_from_json
from .presets import PRESETS, get_preset
from .solver import (
    ChannelParams,
    FarField,
    Grid,
    SupersonicEncounter,
    channel_quadrant_flow,
    combine_superposition,
    reflect_channel_field,
    solve_compressible,
    solve_incompressible,
)


class ScenarioError(ValueError):
    pass


def thread_cap():
    try:
        return max(1, int(os.environ.get("CORNERLAB_THREADS",
                                         os.cpu_count() or 1)))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# scenario handling
# ---------------------------------------------------------------------------

_MODELS = {"conformal", "incompressible", "compressible", "channel"}


def load_scenario(args):
    if getattr(args, "preset", None):
        sc = get_preset(args.preset)
    elif getattr(args, "scenario", None):
        try:
            sc = json.loads(Path(args.scenario).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read scenario: {e}")
    else:
        raise ScenarioError("provide --scenario FILE or --preset NAME")
    validate_scenario(sc)
    if getattr(args, "resolution", None):
        sc.setdefault("grid", {})["h"] = 1.0 / args.resolution
    if getattr(args, "refine_levels", None):
        sc.setdefault("grid", {})["refine_levels"] = args.refine_levels
    if getattr(args, "gamma_circ", None) is not None:
        sc.setdefault("farfield", {})["circulation"] = args.gamma_circ
    if getattr(args, "mach_inf", None) is not None:
        sc.setdefault("farfield", {})["mach_inf"] = args.mach_inf
        if sc["model"] == "incompressible" and args.mach_inf > 0:
            sc["model"] = "compressible"
    return sc


def validate_scenario(sc):
    if not isinstance(sc, dict):
        raise ScenarioError("scenario must be a JSON object")
    if sc.get("schema_version") != 1:
        raise ScenarioError("schema_version must be 1")
    model = sc.get("model")
    if model not in _MODELS:
        raise ScenarioError(f"model must be one of {sorted(_MODELS)}")
    if model != "channel":
        body = sc.get("body")
        if not isinstance(body, dict) or "type" not in body:
            raise ScenarioError("body object with a 'type' is required")
        if body["type"] not in ("polygon", "karman_trefftz", "circle", "segments"):
            raise ScenarioError(f"unknown body type {body['type']!r}")
    if model == "compressible":
        gas = sc.get("gas")
        if not isinstance(gas, dict) or "gamma" not in gas:
            raise ScenarioError("compressible model requires a gas object")
        ffield = sc.get("farfield", {})
        if not 0.0 < float(ffield.get("mach_inf", 0.0)) < 1.0:
            raise ScenarioError("compressible model requires 0 < mach_inf < 1")
    ffield = sc.get("farfield", {})
    circ = ffield.get("circulation", 0.0)
    if not (circ == "kutta" or isinstance(circ, (int, float))):
        raise ScenarioError("circulation must be a number or 'kutta'")


def build_gas(sc):
    spec = sc.get("gas")
    if spec is None or spec == "incompressible":
        return None
    b = spec.get("bernoulli", "normalized")
    if b == "normalized":
        return GasModel.normalized(float(spec["gamma"]))
    return GasModel(gamma=float(spec["gamma"]), bernoulli=float(b))


def conformal_evaluator(sc):
    """Evaluator + flow for conformal scenarios (circle or KT profile)."""
    body = sc["body"]
    ffield = sc.get("farfield", {})
    vinf = float(ffield.get("vinf", 1.0))
    alpha = np.radians(float(ffield.get("alpha_deg", 0.0)))
    circ = ffield.get("circulation", 0.0)
    if body["type"] == "circle":
        if circ == "kutta":
            raise ScenarioError("the Kutta condition is void without a corner")
        flow = CirclePlaneFlow(vinf=vinf, alpha=alpha,
                               radius=float(body.get("radius", 1.0)),
                               circulation=float(circ))
        return ConformalFlowField(flow), flow
    if body["type"] == "karman_trefftz":
        mu = body.get("center_mu", 0.0)
        mu = complex(mu[0], mu[1]) if isinstance(mu, (list, tuple)) else complex(mu)
        prof = KarmanTrefftzProfile(nu=float(body["nu"]), center_mu=mu,
                                    alpha=alpha, vinf=vinf)
        flow = flow_for_profile(prof, None if circ == "kutta" else float(circ))
        return ConformalFlowField(flow, prof), flow
    raise ScenarioError(f"conformal model cannot use body type {body['type']!r}")


def numeric_farfield(sc, gas):
    ffield = sc.get("farfield", {})
    circ = ffield.get("circulation", 0.0)
    if circ == "kutta":
        _ev, flow = conformal_evaluator({**sc, "model": "conformal"})
        circ = flow.circulation
    circ = float(circ)
    if gas is None:
        return FarField.incompressible(
            vinf=float(ffield.get("vinf", 1.0)), circulation=circ,
            alpha=np.radians(float(ffield.get("alpha_deg", 0.0))))
    return FarField.compressible(float(ffield["mach_inf"]), gas, circ)


def build_grid(sc, body):
    g = sc.get("grid", {})
    h = float(g.get("h", 1.0 / 64))
    r_far = float(g.get("r_far", max(10.0, 10.0 * body.diameter / 2.0)))
    return Grid(r_far, h, obstacles=[(body, 0.0)])


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------

def run_trace(sc, out):
    arts = []
    name = sc.get("name", "scenario")
    if sc["model"] == "conformal":
        ev, flow = conformal_evaluator(sc)
        graph = topology.trace_body_streamline(ev)
        window = 4.0 * max(1.0, ev.body.diameter)
        rows = sample_field_csv(ev, (-window, window, -window, window), 161)
        arts.append(render.conformal_field_csv(out / f"{name}_field.csv", rows))
    else:
        gas = build_gas(sc)
        body = body_from_json(sc["body"])
        ff = numeric_farfield(sc, gas)
        grid = build_grid(sc, body)
        if gas is None:
            f0, f1 = solve_incompressible(body, ff, grid=grid)
            field = combine_superposition(f0, f1, ff)
        else:
            field = solve_compressible(body, ff, gas, grid=grid)
        graph = topology.trace_body_streamline(field)
        ev = topology.as_evaluator(field)
        arts.append(render.field_csv(out / f"{name}_field.csv", field, gas))
    report = topology.check_structure(graph, ev.body, source=ev)
    payload = graph.to_json()
    payload["structure"] = _plain(report)
    arts.append(render.write_json(out / f"{name}_streamlines.json", payload))
    arts.append(render.svg_overlay(out / f"{name}.svg", ev.body, graph))
    arts.append(render.streamline_figure_png(out / f"{name}.png", ev.body, graph,
                                             title=name))
    return arts, {"structure": _plain(report)}


def run_solve(sc, out):
    arts = []
    name = sc.get("name", "scenario")
    if sc["model"] == "channel":
        params = ChannelParams(**sc.get("channel", {}))
        quadrant = channel_quadrant_flow(params)
        full = reflect_channel_field(quadrant)
        arts.append(render.field_csv(out / f"{name}_quadrant.csv", quadrant))
        arts.append(render.field_csv(out / f"{name}_full.csv", full, stride=2))
        arts.append(render.field_figure_png(out / f"{name}.png", full,
                                            title="four-channel flow"))
        info = {"model": "channel",
                "psi_range": [float(np.nanmin(full.psi)),
                              float(np.nanmax(full.psi))]}
        arts.append(render.write_json(out / f"{name}_convergence.json",
                                      {**info, **_plain(quadrant.meta)}))
        return arts, info
    gas = build_gas(sc)
    body = body_from_json(sc["body"])
    ff = numeric_farfield(sc, gas)
    grid = build_grid(sc, body)
    if sc["model"] == "incompressible" or gas is None:
        f0, f1 = solve_incompressible(body, ff, grid=grid)
        field = combine_superposition(f0, f1, ff)
        conv = {"linear_residual_psi0": f0.meta["linear_residual"],
                "linear_residual_psi1": f1.meta["linear_residual"]}
        status = "ok"
    else:
        try:
            field = solve_compressible(body, ff, gas, grid=grid)
            conv = _plain(field.meta)
            status = "ok"
        except SupersonicEncounter as enc:
            verdict = {
                "status": "supersonic_encounter",
                "location": list(enc.location),
                "mu_ratio": enc.mu_ratio,
                "mach_inf": enc.mach_inf,
                "note": "evidence of nonexistence of a uniformly subsonic "
                        "flow at these parameters; not a solver failure",
            }
            arts.append(render.write_json(out / f"{name}_verdict.json", verdict))
            return arts, verdict
    arts.append(render.field_csv(out / f"{name}_field.csv", field, gas))
    arts.append(render.write_json(out / f"{name}_convergence.json", conv))
    arts.append(render.field_figure_png(out / f"{name}.png", field, gas,
                                        title=name))
    return arts, {"status": status, "convergence": conv}


def run_sweep(sc, out, want_theorem=False):
    arts = []
    name = sc.get("name", "scenario")
    gas = build_gas(sc)
    body = body_from_json(sc["body"])
    grid_cfg = sc.get("grid", {})
    sweep_cfg = sc.get("sweep", {})
    n_gamma = int(sweep_cfg.get("n_gamma", 41))
    span = sweep_cfg.get("span")
    gammas = diagnostics.default_gamma_grid(body, n=n_gamma, span=span)
    levels = int(grid_cfg.get("refine_levels", 6))
    if gas is None:
        ff = FarField.incompressible(vinf=float(
            sc.get("farfield", {}).get("vinf", 1.0)))
        result = diagnostics.sweep_incompressible(
            body, ff, gammas,
            half_width=float(grid_cfg.get("r_far", 10.0)),
            h=float(grid_cfg.get("h", 1.0 / 64)), levels=levels,
        )
    else:
        result = diagnostics.sweep_compressible(
            body, gas, float(sc["farfield"]["mach_inf"]), gammas,
            half_width=float(grid_cfg.get("r_far", 10.0)),
            h=float(grid_cfg.get("h", 1.0 / 32)),
            levels=min(levels, 4),
        )
    rows = diagnostics.sweep_table_rows(result)
    arts.append(render.sweep_csv(out / f"{name}_sweep.csv", rows))
    arts.append(render.sweep_figure_png(out / f"{name}_sweep.png", result))
    info = {"cells": len(rows)}
    if want_theorem or "theorem" in sc.get("analyses", []):
        verdict = diagnostics.theorem_check(body, result)
        arts.append(render.write_json(out / f"{name}_theorem.json",
                                      _plain(verdict)))
        info["verdict"] = verdict["verdict"]
    return arts, info


def run_gas_table(sc_or_args, out, gamma=1.4, bernoulli="normalized", n=101):
    gas = (GasModel.normalized(gamma) if bernoulli == "normalized"
           else GasModel(gamma, float(bernoulli)))
    mu1 = sonic_mu(gas)
    mus = np.linspace(0.0, mu1, n)
    taus = tau(mus, gas)
    energies = energy_density(mus, gas)
    rho = 1.0 / taus
    q = taus * np.sqrt(2.0 * mus)
    c = np.sqrt(gas.gamma * rho ** (gas.gamma - 1.0))
    rows = np.column_stack([mus, taus, energies, rho, q, c, q / c])
    arts = [
        render.gas_table_csv(out / "gas_table.csv", rows),
        render.gas_table_figure_png(
            out / "gas_table.png", mus, taus, energies,
            title=f"gamma={gas.gamma}, B={gas.bernoulli:.6g}"),
    ]
    return arts, {"mu_sonic": mu1, "gamma": gas.gamma, "bernoulli": gas.bernoulli}


def _plain(obj):
    """JSON-safe copy of nested dicts with numpy scalars and tuples."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def run(scenario, out_dir, analyses=None):
    """Programmatic runner: returns (exit_code, manifest_path)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(scenario, (str, Path)):
        scenario = json.loads(Path(scenario).read_text())
    validate_scenario(scenario)
    analyses = analyses or scenario.get("analyses", ["solve"])
    arts = []
    extra = {"scenario": _plain(scenario), "analyses": list(analyses)}
    status = "ok"
    if "solve" in analyses or scenario["model"] == "channel":
        a, info = run_solve(scenario, out)
        arts += a
        extra["solve"] = _plain(info)
        if info.get("status") == "supersonic_encounter":
            status = "nonexistence-evidence"
    if ("trace" in analyses or "figure" in analyses) \
            and scenario["model"] != "channel":
        a, info = run_trace(scenario, out)
        arts += a
        extra["trace"] = _plain(info)
    if "sweep" in analyses or "theorem" in analyses:
        a, info = run_sweep(scenario, out, want_theorem="theorem" in analyses)
        arts += a
        extra["sweep"] = _plain(info)
    manifest = render.write_manifest(out, arts, status=status, extra=extra)
    return 0, manifest


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cornerlab",
        description="2D potential-flow workbench: conformal oracles, "
                    "stream-function solvers, body-streamline topology and "
                    "corner diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", help="scenario JSON path")
            p.add_argument("--preset", choices=sorted(PRESETS),
                           help="named built-in scenario")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--resolution", type=int,
                       help="grid resolution (nodes per unit length)")
        p.add_argument("--refine-levels", type=int, dest="refine_levels")
        p.add_argument("--gamma-circ", type=float, dest="gamma_circ")
        p.add_argument("--mach-inf", type=float, dest="mach_inf")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                       default=True)

    for cmd in ("solve", "trace", "sweep", "verify-theorem", "render"):
        common(sub.add_parser(cmd))
    pg = sub.add_parser("gas-table")
    pg.add_argument("--gamma", type=float, default=1.4)
    pg.add_argument("--bernoulli", default="normalized")
    pg.add_argument("--n", type=int, default=101)
    pg.add_argument("--out", default="out")

    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "gas-table":
            arts, info = run_gas_table(args, out, gamma=args.gamma,
                                       bernoulli=args.bernoulli, n=args.n)
            render.write_manifest(out, arts, extra={"gas": _plain(info)})
            print(f"wrote {len(arts)} artifacts to {out}")
            return 0
        sc = load_scenario(args)
        analyses = {
            "solve": ["solve"],
            "trace": ["trace"],
            "sweep": ["sweep"],
            "verify-theorem": ["sweep", "theorem"],
            "render": ["trace", "figure"],
        }[args.command]
        if args.command == "render" and sc["model"] in ("channel",):
            analyses = ["solve", "figure"]
        code, manifest = run(sc, out, analyses)
        print(f"manifest: {manifest}")
        return code
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # internal failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
