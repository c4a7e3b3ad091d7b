import json
import math

import pytest

from ratdyn.cli import parse_complex, run


def report(tmp_path, argv, name="r.json"):
    path = tmp_path / name
    code = run(argv + ["--json", str(path)])
    return code, (json.loads(path.read_text()) if path.exists() else None)


def test_verify_ce_pass(tmp_path):
    code, rep = report(tmp_path, ["verify", "ce", "--map", "z^2-2", "--gamma", "1.386", "--gamma0", "0", "--N", "30"])
    assert code == 0 and rep["result"]["passed"]
    assert rep["schemaVersion"] == "1"
    assert rep["config"]["constants"] == {"gamma": 1.386, "gamma0": 0.0}
    assert rep["config"]["horizonN"] == 30


def test_lyapunov_within_three_sigma(tmp_path):
    code, rep = report(tmp_path, ["lyapunov", "--map", "z^2", "--depth", "50", "--count", "20000", "--seed", "7"])
    assert code == 0
    r = rep["result"]
    assert abs(r["value"] - math.log(2)) <= 3 * r["stderr"] + 1e-12


def test_validation_exit_codes(tmp_path):
    assert run(["slice", "--family", "quadratic", "--window", "-2.5,1,-1.5,1.5", "--res", "0"]) == 2
    assert run(["lyapunov", "--map", "z^2", "--depth", "-3"]) == 2
    assert run(["lyapunov", "--map", "z^^2"]) == 2
    assert run(["nonsense"]) == 2
    assert run(["tau", "--family", "quadratic"]) == 2


def test_computation_exit_code():
    assert run(["misiurewicz", "--map", "z^2"]) == 1
    assert run(["tau", "--family", "quadratic", "--lambda0", "0"]) == 1


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"map": "z^2-2", "horizonN": 10, "constants": {"gamma": 1.5}}))
    code, rep = report(tmp_path, ["verify", "ce", "--config", str(cfg)])
    assert code == 0 and not rep["result"]["passed"]
    code, rep = report(tmp_path, ["verify", "ce", "--config", str(cfg), "--gamma", "1.0"])
    assert rep["result"]["passed"] and rep["config"]["constants"]["gamma"] == 1.0


def test_subcommands_run(tmp_path):
    cases = [
        ["misiurewicz", "--map", "z^2+i"],
        ["tau", "--family", "quadratic", "--lambda0", "-2", "--N", "40"],
        ["track", "--family", "quadratic", "--z0", "2", "--path", "-2,-1.75", "--samples", "20"],
        ["kappa", "--map", "z^2"],
        ["activity", "--family", "quadratic", "--window", "-2.5,1,-1.5,1.5", "--res", "8", "--N", "10"],
        ["density", "--family", "quadratic", "--window", "-2.5,1,-1.5,1.5", "--res", "8", "--count", "500"],
        ["verify", "fa", "--map", "z^2-2", "--eta", "0.1", "--iota", "0.01", "--N", "50"],
        ["verify", "ba", "--map", "z^2-2", "--alpha", "0.01", "--N", "50"],
        ["verify", "ce2", "--map", "z^2-2", "--mu", "0.5", "--mu0", "1", "--N", "6"],
        ["verify", "fa-prime", "--map", "z^2-2", "--delta", "0.1", "--beta", "0.05", "--tau", "0.5", "--N", "50"],
    ]
    for i, argv in enumerate(cases):
        code, rep = report(tmp_path, argv, f"r{i}.json")
        assert code == 0, argv
        assert rep["command"].split()[0] == argv[0]
    code, rep = report(tmp_path, ["tau", "--family", "quadratic", "--lambda0", "-2", "--N", "40"], "t.json")
    assert rep["result"]["components"][0][0] == pytest.approx(2 / 3, abs=1e-9)


def test_byte_identical_outputs(tmp_path):
    outs = []
    for tag in "ab":
        pgm, csv, js = (tmp_path / f"{tag}.{ext}" for ext in ("pgm", "csv", "json"))
        code = run(["density", "--family", "quadratic", "--window", "-2.5,1,-1.5,1.5", "--res", "12",
                    "--count", "500", "--seed", "3", "--pgm", str(pgm), "--csv", str(csv), "--json", str(js)])
        assert code == 0
        outs.append([p.read_bytes() for p in (pgm, csv)] + [js.read_text().replace(f"/{tag}.", "/X.")])
    assert outs[0] == outs[1]


def test_parse_complex():
    assert parse_complex("0.5+0.6i") == 0.5 + 0.6j
    assert parse_complex("-2") == -2
    assert parse_complex([1, 2]) == 1 + 2j
