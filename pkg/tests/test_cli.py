import json

import pytest

from cornerlab.cli import main, run, validate_scenario, ScenarioError
from cornerlab.presets import PRESETS, get_preset


def test_all_presets_validate():
    for name in PRESETS:
        validate_scenario(get_preset(name))


@pytest.mark.parametrize("bad", [
    {},
    {"schema_version": 2, "model": "conformal", "body": {"type": "circle"}},
    {"schema_version": 1, "model": "bogus", "body": {"type": "circle"}},
    {"schema_version": 1, "model": "conformal", "body": {"type": "blob"}},
    {"schema_version": 1, "model": "compressible",
     "body": {"type": "circle"}, "farfield": {"mach_inf": 0.3}},
    {"schema_version": 1, "model": "conformal", "body": {"type": "circle"},
     "farfield": {"circulation": "lots"}},
])
def test_validate_rejects(bad):
    with pytest.raises(ScenarioError):
        validate_scenario(bad)


def test_schema_error_exit_code(tmp_path):
    sc = tmp_path / "bad.json"
    sc.write_text(json.dumps({"schema_version": 1, "model": "bogus"}))
    assert main(["solve", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == 2


def test_missing_scenario_exit_code(tmp_path):
    assert main(["solve", "--out", str(tmp_path / "o")]) == 2


def test_gas_table_artifacts(tmp_path):
    code = main(["gas-table", "--gamma", "1.4", "--n", "21",
                 "--out", str(tmp_path)])
    assert code == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    paths = {a["path"] for a in man["artifacts"]}
    assert paths == {"gas_table.csv", "gas_table.png"}
    header = (tmp_path / "gas_table.csv").read_text().splitlines()[0]
    assert header.split(",")[:3] == ["mu", "tau", "energy"]


def test_render_circle_preset(tmp_path):
    code = main(["render", "--preset", "fig_zerocorner_12.8",
                 "--out", str(tmp_path)])
    assert code == 0
    data = json.loads((tmp_path / "fig_zerocorner_12.8_streamlines.json").read_text())
    assert len(data["curves"]) == 1
    assert not data["attachments"]
    svg = (tmp_path / "fig_zerocorner_12.8.svg").read_text()
    assert svg.startswith("<svg")
    assert "polyline" in svg


def test_manifest_hashes_are_reproducible(tmp_path):
    sc = get_preset("fig_zerocorner_12")
    _code, man1 = run(sc, tmp_path / "a", ["trace"])
    _code, man2 = run(sc, tmp_path / "b", ["trace"])
    a1 = {e["path"]: e["sha256"]
          for e in json.loads(man1.read_text())["artifacts"]}
    a2 = {e["path"]: e["sha256"]
          for e in json.loads(man2.read_text())["artifacts"]}
    for path in (p for p in a1 if not p.endswith(".png")):
        assert a1[path] == a2[path]


def test_run_incompressible_scenario(tmp_path):
    sc = {
        "schema_version": 1,
        "name": "tiny",
        "model": "incompressible",
        "body": {"type": "circle", "radius": 1.0},
        "farfield": {"vinf": 1.0, "circulation": 0.0},
        "grid": {"h": 0.125, "r_far": 4.0},
        "analyses": ["solve"],
    }
    code, manifest = run(sc, tmp_path, ["solve"])
    assert code == 0
    man = json.loads(manifest.read_text())
    names = {a["path"] for a in man["artifacts"]}
    assert "tiny_field.csv" in names
    assert "tiny_convergence.json" in names
    header = (tmp_path / "tiny_field.csv").read_text().splitlines()[0]
    assert header == "x,y,psi,vx,vy,mach,node_class"


def test_supersonic_run_is_a_result_not_an_error(tmp_path):
    sc = {
        "schema_version": 1,
        "name": "sonic",
        "model": "compressible",
        "body": {"type": "circle", "radius": 1.0},
        "gas": {"gamma": 1.4, "bernoulli": "normalized"},
        "farfield": {"mach_inf": 0.75, "circulation": 0.0},
        "grid": {"h": 0.125, "r_far": 4.0},
        "analyses": ["solve"],
    }
    code, manifest = run(sc, tmp_path, ["solve"])
    assert code == 0
    man = json.loads(manifest.read_text())
    assert man["status"] == "nonexistence-evidence"
    verdict = json.loads((tmp_path / "sonic_verdict.json").read_text())
    assert verdict["status"] == "supersonic_encounter"


def test_channel_preset_scaled_down(tmp_path):
    sc = get_preset("channel")
    sc["channel"]["h"] = 1.0 / 24
    sc["channel"]["length"] = 5.0
    code, manifest = run(sc, tmp_path)
    assert code == 0
    man = json.loads(manifest.read_text())
    lo, hi = man["solve"]["psi_range"]
    assert lo >= -1.0 - 1e-9 and hi <= 1.0 + 1e-9
