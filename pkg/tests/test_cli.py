import json
import subprocess
import sys

import pytest

from cstardyn.cli import main
from cstardyn.presets import get_preset


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_orbit_example(capsys, tmp_path):
    code, out, _ = run(capsys, "orbit", "--map", "ex3_2.json", "--z0", "2", "--max-iter", "100", "--out", tmp_path)
    assert code == 0
    assert out.startswith("ESCAPING")
    lines = (tmp_path / "orbit.csv").read_text().splitlines()
    assert lines[0] == "k,re,im,abs,symbol"
    assert all(line.endswith(",i") for line in lines[1:])
    assert json.loads((tmp_path / "orbit.json").read_text())["verdict"] == "ESCAPING"


def test_map_file(capsys, tmp_path):
    path = tmp_path / "custom.json"
    path.write_text(get_preset("ex3_2").map.to_json())
    code, out, _ = run(capsys, "eval", "--map", path, "--z", "2", "--out", tmp_path)
    assert code == 0
    re, im = map(float, out.split())
    assert abs(re - 7.550619737) < 1e-8 and im == 0


def test_construct_pi(capsys, tmp_path):
    code, out, _ = run(capsys, "construct", "pi", "--e", "ii00i", "--out", tmp_path)
    assert code == 0 and out.strip() == "1 2 -1 -2 3"
    assert json.loads((tmp_path / "construct-pi.json").read_text())["pi"] == [1, 2, -1, -2, 3]


def test_construct_other_ops(capsys, tmp_path):
    assert run(capsys, "construct", "pq", "--e", "ii00i", "--out", tmp_path)[1].strip() == "3 2"
    code, out, _ = run(capsys, "construct", "succ", "--e", "ii00i", "--out", tmp_path)
    assert out.split() == ["1->2", "2->-1", "3->1", "-1->-2", "-2->3"]
    code, out, _ = run(capsys, "construct", "delta", "--r", "4.605170185988092", "--lam", "2", "--out", tmp_path)
    assert abs(float(out) - 0.0200093408) < 1e-9
    code, out, _ = run(capsys, "construct", "model-check", "--N", "3", "--lam", "2", "--out", tmp_path)
    assert code == 0 and out.startswith("PASS")
    code, out, _ = run(capsys, "construct", "budget-check", "--N", "1", "--lam", "2", "--d-prime", "0.1",
                       "--k-scan", "--out", tmp_path)
    assert code == 0 and out.startswith("PASS")
    assert run(capsys, "construct", "delta", "--r", "1", "--lam", "2", "--out", tmp_path)[0] == 2


def test_classify_baker_example(capsys, tmp_path):
    code, out, _ = run(capsys, "classify-baker", "--map", "ex3_4.json", "--seeds", "default", "--out", tmp_path)
    assert code == 0
    assert out.startswith("DOUBLY_PARABOLIC")
    report = json.loads((tmp_path / "classify-baker.json").read_text())
    assert {"label", "liminf_estimate", "tail_slope", "c_values", "seeds", "flags"} <= set(report)


def test_strict_undecided(capsys, tmp_path):
    args = ["classify-baker", "--map", "ex3_2", "--seeds", "3,5", "--n-max", "8", "--out", tmp_path]
    config = tmp_path / "near_one.json"
    config.write_text(json.dumps({"map": {"n": 1, "g": "log(1.0001) + exp(-z)", "h": "z"}}))
    code, out, _ = run(capsys, "classify-baker", "--config", config, "--seeds", "3,5,4+2i", "--n-max", "8",
                       "--out", tmp_path)
    assert code == 0 and out.startswith("UNDECIDED")
    code, _, _ = run(capsys, "classify-baker", "--config", config, "--seeds", "3,5,4+2i", "--n-max", "8",
                     "--out", tmp_path, "--strict")
    assert code == 1
    assert run(capsys, *args)[0] == 0


def test_orbit_strict(capsys, tmp_path):
    base = ["orbit", "--map", "ex2_1", "--z0", "3.14159", "--max-iter", "10", "--out", tmp_path]
    assert run(capsys, *base)[0] == 0
    assert run(capsys, *base, "--strict")[0] == 1


def test_itinerary(capsys, tmp_path):
    code, out, _ = run(capsys, "itinerary", "--map", "ex3_4", "--z0", "-3", "--max-iter", "500", "--out", tmp_path)
    assert code == 0 and out.strip() == "preperiod='i' period='0'"
    code, _, err = run(capsys, "itinerary", "--map", "ex2_1", "--z0", "3", "--max-iter", "5", "--out", tmp_path)
    assert code == 1 and "ESCAPING" in err


def test_index_and_lift(capsys, tmp_path):
    code, out, _ = run(capsys, "index", "--map", "ex3_4", "--out", tmp_path)
    assert code == 0 and out.split() == ["r=0.5:1", "r=1.0:1", "r=2.0:1"]
    code, out, _ = run(capsys, "verify-lift", "--map", "ex3_4", "--out", tmp_path)
    assert code == 0 and out.startswith("PASS")


def test_certify_wandering(capsys, tmp_path):
    code, out, _ = run(capsys, "certify-wandering", "--map", "ex2_1", "--out", tmp_path)
    assert code == 0 and out.strip().endswith("PASS")
    result = json.loads((tmp_path / "certify-wandering.json").read_text())
    assert result["start_generation"] == 15
    assert len(result["generations"]) == 20
    assert run(capsys, "certify-wandering", "--map", "ex3_2", "--out", tmp_path)[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["orbit", "--map", "nosuch", "--z0", "2"],
        ["orbit", "--map", "ex3_2"],
        ["orbit", "--map", "ex3_2", "--z0", "two"],
        ["eval", "--z", "1"],
        ["construct", "pi"],
        ["construct", "pi", "--e", "ix"],
        ["frobnicate"],
        ["orbit", "--map", "ex3_2", "--z0", "0"],
        ["orbit", "--map", "ex3_2", "--z0", "2", "--max-iter", "0"],
    ],
)
def test_usage_errors(capsys, tmp_path, argv):
    code, _, err = run(capsys, *argv, *(["--out", tmp_path] if argv[0] != "frobnicate" else []))
    assert code == 2
    assert err


def test_unknown_config_keys(capsys, tmp_path):
    bad_top = tmp_path / "a.json"
    bad_top.write_text(json.dumps({"map": "ex3_2", "orbitt": {}}))
    assert run(capsys, "orbit", "--config", bad_top, "--z0", "2", "--out", tmp_path)[0] == 2
    bad_block = tmp_path / "b.json"
    bad_block.write_text(json.dumps({"map": "ex3_2", "orbit": {"z0": "2", "speed": 3}}))
    assert run(capsys, "orbit", "--config", bad_block, "--out", tmp_path)[0] == 2
    bad_map = tmp_path / "c.json"
    bad_map.write_text(json.dumps({"map": {"n": 1, "g": "z", "h": "0", "x": 1}, "orbit": {"z0": "2"}}))
    assert run(capsys, "orbit", "--config", bad_map, "--out", tmp_path)[0] == 2


@pytest.mark.parametrize(
    "argv, stem, extra",
    [
        (["orbit", "--map", "ex3_2", "--z0", "2+1i", "--max-iter", "50"], "orbit", ["orbit.csv"]),
        (["classify-baker", "--map", "ex3_2", "--seeds", "3,5", "--n-max", "12"], "classify-baker", []),
        (["construct", "delta", "--r", "5", "--lam", "3", "--p", "2"], "construct-delta", []),
        (["render", "--map", "ex3_2", "--width", "40", "--height", "30", "--tile-size", "16"], "render", ["render.png"]),
        (["verify-lift", "--map", "ex2_1", "--samples", "200"], "verify-lift", []),
    ],
)
def test_config_echo_reproduces_run(capsys, tmp_path, argv, stem, extra):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run(capsys, *argv, "--out", first)[0] == 0
    command = argv[:2] if argv[0] == "construct" else argv[:1]
    echo = first / f"{stem}.config.json"
    assert run(capsys, *command, "--config", echo, "--out", second)[0] == 0
    for name in [f"{stem}.json", f"{stem}.config.json", *extra]:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_render_repeatable_and_workers_env(capsys, tmp_path, monkeypatch):
    args = ["render", "--map", "ex3_4", "--width", "48", "--height", "48", "--tile-size", "16"]
    assert run(capsys, *args, "--out", tmp_path / "a")[0] == 0
    monkeypatch.setenv("CSTARDYN_WORKERS", "2")
    assert run(capsys, *args, "--out", tmp_path / "b")[0] == 0
    assert (tmp_path / "a" / "render.png").read_bytes() == (tmp_path / "b" / "render.png").read_bytes()
    monkeypatch.setenv("CSTARDYN_WORKERS", "many")
    assert run(capsys, *args, "--out", tmp_path / "c")[0] == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cstardyn", "construct", "pq", "--e", "i0", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and proc.stdout.strip() == "1 1"
