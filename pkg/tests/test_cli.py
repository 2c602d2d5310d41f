import json

import pytest

from apep_tool import EXIT_GUARD, EXIT_OK, EXIT_USAGE, main


def _generate(tmp_path, name="inst.json", *extra):
    out = tmp_path / name
    assert main(["generate", "--n", "6", "--k", "2", "--tau", "0", "--seed", "3", "--out", str(out), *extra]) == EXIT_OK
    return out


def _solve(tmp_path, inst, solver, name):
    out = tmp_path / name
    assert main(["solve", "--in", str(inst), "--solver", solver, "--out", str(out)]) == EXIT_OK
    return json.loads(out.read_text(encoding="utf-8"))


def test_generate_is_deterministic(tmp_path):
    first = _generate(tmp_path, "a.json")
    second = _generate(tmp_path, "b.json")
    assert first.read_bytes() == second.read_bytes()
    doc = json.loads(first.read_text(encoding="utf-8"))
    assert doc["meta"]["generator"]["seed"] == 3
    assert doc["meta"]["tau"] == 0


def test_generate_to_stdout(capsys):
    assert main(["generate", "--n", "4", "--k", "2", "--seed", "1"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["users"] == ["u1", "u2", "u3", "u4"]


def test_profile_and_brute_agree(tmp_path):
    inst = _generate(tmp_path)
    profile = _solve(tmp_path, inst, "profile", "p.json")
    brute = _solve(tmp_path, inst, "brute", "b.json")
    assert profile["total_weight"] == brute["total_weight"]
    assert profile["assignment"] == brute["assignment"]
    assert profile["meta"]["solver"] == "profile"
    assert "wall_time" not in profile


def test_wsp_solver_on_a_reducible_instance(tmp_path):
    doc = {
        "resources": ["r1", "r2"], "users": ["u1", "u2"],
        "auth": {"pairs": [["u1", "r1"], ["u1", "r2"], ["u2", "r2"]], "pair_penalty": 1},
        "constraints": [{"type": "sod_u", "scope": ["r1", "r2"], "penalty": 5}],
    }
    inst = tmp_path / "sod.json"
    inst.write_text(json.dumps(doc), encoding="utf-8")
    result = _solve(tmp_path, inst, "wsp", "w.json")
    assert result["total_weight"] == 0
    assert result["assignment"] == {"u1": ["r1"], "u2": ["r2"]}
    assert result["meta"]["solver"] == "wsp"


def test_wsp_solver_refuses_generated_instances(tmp_path):
    inst = _generate(tmp_path)
    assert main(["solve", "--in", str(inst), "--solver", "wsp"]) == EXIT_USAGE


def test_export_mip(tmp_path):
    inst = _generate(tmp_path)
    for form in ("naive", "up"):
        out = tmp_path / f"{form}.lp"
        assert main(["export-mip", "--in", str(inst), "--form", form, "--out", str(out)]) == EXIT_OK
        text = out.read_text(encoding="utf-8")
        assert text.startswith(f"\\* apep_{form} *\\")
        assert "Minimize" in text and "Subject To" in text
        assert text.endswith("End\n")


def test_check_resilience_of_a_solution(tmp_path):
    wsp = tmp_path / "flow.json"
    inst = _generate(tmp_path, "inst.json", "--wsp-out", str(wsp))
    result = tmp_path / "result.json"
    assert main(["solve", "--in", str(inst), "--out", str(result)]) == EXIT_OK
    report_path = tmp_path / "report.json"
    assert main(["check-resilience", "--wsp", str(wsp), "--plan", str(result), "--tau", "0",
                 "--out", str(report_path)]) == EXIT_OK
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["method"] == "exhaustive" and report["tau"] == 0
    assert set(report) == {"tau", "method", "resilient", "witness"}
    assert main(["check-resilience", "--wsp", str(wsp), "--plan", str(result), "--tau", "1",
                 "--sufficient", "--out", str(report_path)]) == EXIT_OK
    assert json.loads(report_path.read_text(encoding="utf-8"))["method"] == "sufficient"


def test_check_resilience_witness(tmp_path, capsys):
    flow = {"steps": ["s1", "s2"], "users": ["u1", "u2"],
            "auth": {"pairs": [["u1", "s1"], ["u1", "s2"], ["u2", "s1"], ["u2", "s2"]]},
            "constraints": [{"type": "must_differ", "scope": ["s1", "s2"]}]}
    wsp = tmp_path / "flow.json"
    wsp.write_text(json.dumps(flow), encoding="utf-8")
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"s1": ["u1", "u2"], "s2": ["u1", "u2"]}), encoding="utf-8")
    assert main(["check-resilience", "--wsp", str(wsp), "--plan", str(plan), "--tau", "1"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report == {"tau": 1, "method": "exhaustive", "resilient": False, "witness": ["u1"]}


def test_bench(tmp_path):
    csv = tmp_path / "bench.csv"
    assert main(["bench", "--grid", "n=6;k=2;tau=0;seeds=2", "--out", str(csv)]) == EXIT_OK
    assert csv.exists() and (tmp_path / "bench.summary.csv").exists()
    assert main(["bench", "--grid", "k=2", "--out", str(csv)]) == EXIT_USAGE


def test_exit_codes(tmp_path, capsys):
    assert main(["solve", "--in", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert "apep_tool: error:" in capsys.readouterr().err
    big = tmp_path / "big.json"
    assert main(["generate", "--n", "30", "--k", "3", "--out", str(big)]) == EXIT_OK
    assert main(["solve", "--in", str(big), "--solver", "brute"]) == EXIT_GUARD
    assert main(["generate", "--n", "1"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["solve", "--in", "x.json", "--ell", "0"])
