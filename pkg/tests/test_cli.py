import json

import pytest

from pscub.cli import main, table1

EXPECTED_TABLE = {
    ("hex", "dob"): 0.1055, ("hex", "fp"): 0.1290, ("hex", "red"): 0.1481, ("hex", "ret"): 0.1481,
    ("line", "dob"): 0.0819, ("line", "fp"): 0.1111, ("line", "red"): 0.1055, ("line", "ret"): 0.1134,
}


def run(capsys, *argv):
    code = main(["--json", *argv])
    out = capsys.readouterr().out.strip().splitlines()
    return code, [json.loads(line) for line in out]


def test_table1_rows(capsys):
    code, rows = run(capsys, "table1")
    assert code == 0 and len(rows) == 8
    for r in rows:
        assert abs(r["rho"] - EXPECTED_TABLE[(r["lattice"], r["scub"])]) <= 5e-4


def test_table1_text(capsys):
    assert main(["table1"]) == 0
    out = capsys.readouterr().out
    assert "0.1134" in out and "(1+u)(1+u)(1+2u)" in out


def test_table1_exact_values():
    by = {(r["lattice"], r["scub"]): r["rho"] for r in table1()}
    assert by[("hex", "dob")] == pytest.approx(27 / 256, abs=1e-12)
    assert by[("line", "fp")] == pytest.approx(1 / 9, abs=1e-12)
    assert by[("line", "dob")] == pytest.approx(256 / 3125, abs=1e-12)
    assert by[("hex", "red")] == pytest.approx(4 / 27, abs=1e-12)


def test_verify(capsys):
    code, rows = run(capsys, "verify", "--scheme", "greedy", "--trials", "0")
    assert code == 0 and rows[0]["clusters"] == 0 and rows[0]["ok"]
    code, g = run(capsys, "verify", "--scheme", "greedy", "--trials", "100", "--max-len", "5", "--seed", "1")
    assert code == 0 and g[0]["failures"] == 0
    code, r = run(capsys, "verify", "--scheme", "ret", "--trials", "100", "--max-len", "5", "--seed", "1")
    assert code == 0 and r[0]["failures"] == 0


def test_ursell(capsys, tmp_path):
    path = tmp_path / "k3.json"
    path.write_text(json.dumps({"polymers": ["a", "b", "c", "d"],
                                "incompatible": [["a", "b"], ["a", "c"], ["b", "c"]]}))
    assert run(capsys, "ursell", "--graph", str(path), "--xi", "a")[1][0]["ursell"] == 1
    assert run(capsys, "ursell", "--graph", str(path), "--xi", "a,b,c")[1][0]["ursell"] == 2
    assert run(capsys, "ursell", "--graph", str(path), "--xi", "a,d")[1][0]["ursell"] == 0


def test_scub(capsys):
    code, rows = run(capsys, "scub", "--graph", "hex", "--kind", "red", "--homogeneous", "0")
    assert code == 0 and rows[0]["holds"] and set(rows[0]["limit"].values()) == {0.0}
    code, rows = run(capsys, "scub", "--graph", "hex", "--kind", "red", "--optimal")
    assert abs(rows[0]["optimal_rho"] - 0.1481) <= 5e-5
    code, rows = run(capsys, "scub", "--graph", "hex", "--kind", "dob", "--homogeneous", "0.12")
    assert code == 1 and not rows[0]["holds"]


def test_scub_rho_file_and_certify(capsys, tmp_path):
    rho = tmp_path / "rho.json"
    rho.write_text(json.dumps({str(i): 0.1 for i in range(6)}))
    code, rows = run(capsys, "scub", "--graph", "cycle-6", "--kind", "fp", "--rho", str(rho), "--certify")
    assert code == 0 and rows[0]["certified"]


def test_tree(capsys):
    _, rows = run(capsys, "tree", "--degree", "3", "--star")
    assert rows[0]["rho_star"] == pytest.approx(4 / 27) and rows[0]["alpha_star"] == pytest.approx(2 / 3)
    _, rows = run(capsys, "tree", "--degree", "2", "--star")
    assert rows[0]["rho_star"] == 0.25 and rows[0]["alpha_star"] == 0.5
    _, rows = run(capsys, "tree", "--degree", "3", "--rho", "0")
    assert rows[0]["alpha"] == 1.0


def test_errors_exit_nonzero(capsys):
    assert main(["tree", "--degree", "3", "--rho", "0.5"]) == 2
    assert main(["scub", "--graph", "nowhere", "--kind", "fp", "--homogeneous", "0.1"]) == 2


def test_scub_critical(capsys):
    code, rows = run(capsys, "scub", "--graph", "complete-3", "--kind", "dob", "--critical")
    assert code == 0
    assert rows[0]["critical_scaling"] == pytest.approx(4 / 27, abs=1e-12)
