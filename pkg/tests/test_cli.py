import json
import math

import pytest

from bell_lab.cli import main
from bell_lab.hv_models import build_singlet_outcome_dependent, dump_model


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(csv_text):
    lines = csv_text.strip().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, line.split(","))) for line in lines[1:]]


def test_quantum_table(capsys):
    code, out, err = run(capsys, "quantum", "--theta", "0")
    assert code == 0 and err == ""
    table = {(r["r"], r["q"]): float(r["joint"]) for r in rows(out)}
    assert table == {("1", "1"): 0.0, ("1", "-1"): 0.5, ("-1", "1"): 0.5, ("-1", "-1"): 0.0}


def test_quantum_conditional(capsys):
    code, out, _ = run(capsys, "quantum", "--theta", "1.0471975512", "--conditional", "--r", "1", "--q", "1")
    assert code == 0
    [row] = rows(out)
    assert float(row["conditional"]) == pytest.approx(0.25, abs=1e-10)


def test_quantum_fold_warns(capsys, caplog):
    code, out, _ = run(capsys, "quantum", "--theta", "-1")
    assert code == 0
    assert any("folded" in rec.getMessage() for rec in caplog.records)
    assert {r["theta"] for r in rows(out)} == {"1"}


def test_quantum_degrees(capsys):
    _, out, _ = run(capsys, "quantum", "--theta", "90", "--degrees")
    assert {float(r["joint"]) for r in rows(out)} == {0.25}


def test_quantum_parse_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["quantum", "--theta", "abc"])
    assert exc.value.code == 2


def test_audit_od_fixture_fails_oi(capsys):
    code, out, err = run(capsys, "audit", "--fixture", "singlet-od", "--wing2", "1.0471975512",
                         "--check", "outcome-independence")
    assert code == 1 and err == ""
    [line] = out.splitlines()
    rep = json.loads(line)
    assert rep["verdict"] == "fails"
    assert rep["max_residual"] == pytest.approx(0.5 * math.cos(1.0471975512), abs=1e-9)


def test_audit_sign_model_reduction(capsys):
    code, out, _ = run(capsys, "audit", "--fixture", "sign-model:64", "--check", "deterministic-reduction")
    assert code == 0
    assert json.loads(out)["verdict"] == "holds"


def test_audit_wrong_kind_is_not_applicable(capsys):
    code, out, _ = run(capsys, "audit", "--fixture", "singlet-od", "--check", "deterministic-reduction")
    assert code == 0
    assert json.loads(out)["verdict"] == "not-applicable"


def test_audit_all_checks_on_file(capsys, tmp_path):
    path = tmp_path / "od.json"
    dump_model(build_singlet_outcome_dependent(), path)
    code, out, _ = run(capsys, "audit", str(path))
    assert code == 1
    verdicts = {json.loads(line)["condition"]: json.loads(line)["verdict"] for line in out.splitlines()}
    assert verdicts["QuantumReproduction"] == "holds"
    assert verdicts["ParameterIndependence"] == "holds"
    assert verdicts["OutcomeIndependence"] == "fails"


@pytest.mark.parametrize("argv", [
    ["audit", "/nonexistent/model.json"],
    ["audit", "--fixture", "sign-model:zero"],
    ["audit"],
    ["polytope", "/nonexistent/table.json"],
])
def test_input_errors_exit_2(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == 2 and out == ""


def test_polytope_fixtures(capsys):
    code, out, _ = run(capsys, "polytope", "--fixture", "singlet-chsh")
    assert code == 1
    doc = json.loads(out)
    assert doc["verdict"] == "nonlocal"
    assert abs(doc["witness"]["value"]) == pytest.approx(2 * math.sqrt(2), abs=1e-12)

    code, out, _ = run(capsys, "polytope", "--fixture", "zero")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "local"
    assert {c["weight"] for c in doc["certificate"]} == {1 / 16}

    code, out, _ = run(capsys, "polytope", "--fixture", "anticorrelation")
    assert code == 0 and json.loads(out)["certificate"]


def test_polytope_too_many_settings(capsys, tmp_path):
    doc = {"settings": {"wing1": [0.1 * k for k in range(13)], "wing2": [0.1 * k for k in range(12)]},
           "correlations": []}
    path = tmp_path / "big.json"
    path.write_text(json.dumps(doc))
    assert run(capsys, "polytope", str(path))[0] == 2


def write_scenario(tmp_path, name="s.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps(fields))
    return str(path)


def test_simulate_sign_model_passes(capsys, tmp_path):
    sc = write_scenario(tmp_path, model="fixture:sign-model:10000", thetas=[k * math.pi / 8 for k in range(8)],
                        trials=100_000, seed=1, checks=["eq19-consistency"])
    code, out, err = run(capsys, "simulate", sc)
    assert code == 0
    assert out.startswith("a,b,r,q,count,trials\n") and len(out.splitlines()) == 33
    reports = [json.loads(line) for line in err.splitlines() if line.startswith("{")]
    assert [r["condition"] for r in reports] == ["EmpiricalAgreement", "Eq19Consistency"]


def test_simulate_quantum_vs_uniform_fails(capsys, tmp_path):
    sc = write_scenario(tmp_path, thetas=[0.0], trials=10_000, compare_to="uniform")
    assert run(capsys, "simulate", sc)[0] == 1


@pytest.mark.parametrize("fields", [
    {"thetas": [0.0], "trials": 0},
    {"thetas": [0.0], "trials": 10, "surprise": True},
    {"trials": 10},
    {"thetas": [0.0], "trials": 10, "checks": ["nope"]},
])
def test_simulate_bad_scenario_exit_2(capsys, tmp_path, fields):
    assert run(capsys, "simulate", write_scenario(tmp_path, **fields))[0] == 2


def test_simulate_out_routes_csv_to_file(capsys, tmp_path):
    sc = write_scenario(tmp_path, thetas=[0.5], trials=1000, seed=3)
    csv_path = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", sc, "--out", str(csv_path))
    assert code == 0
    assert json.loads(out)["condition"] == "EmpiricalAgreement"
    assert csv_path.read_text().startswith("a,b,r,q,count,trials")


def test_simulate_model_path_relative_to_scenario(capsys, tmp_path):
    dump_model(build_singlet_outcome_dependent(wing2=(0.0, 1.0)), tmp_path / "od.json")
    sc = write_scenario(tmp_path, model="od.json", settings=[{"a": 0.0, "b": 1.0}], trials=5000)
    assert run(capsys, "simulate", sc)[0] == 0


def test_simulate_byte_identical(capsys, tmp_path, monkeypatch):
    sc = write_scenario(tmp_path, model="fixture:sign-model:360", thetas=[0.0, 0.7], trials=70_000, seed=42)
    first = run(capsys, "simulate", sc, "--workers", "1")[1]
    second = run(capsys, "simulate", sc, "--workers", "8")[1]
    monkeypatch.setenv("BELL_LAB_THREADS", "3")
    third = run(capsys, "simulate", sc)[1]
    assert first == second == third
    assert run(capsys, "simulate", sc, "--seed", "43")[1] != first
