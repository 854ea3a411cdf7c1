"""Golden outputs of the command-line tool, compared byte for byte.

Set PDB_REGEN_GOLDEN=1 to rewrite the files under tests/golden after a
deliberate output change.
"""
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import FIXTURES

GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("PDB_REGEN_GOLDEN") == "1"


def run(*args):
    proc = subprocess.run([sys.executable, "-m", "cautiouspdb", *map(str, args)],
                          capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def fixture_args(name, query=False):
    d = FIXTURES / name
    args = ["--schema", d / "schema.txt", "--data", *sorted(d.glob("*.csv")), "--constraints", d / "constraints.txt"]
    if query:
        args += ["--query", d / "query.txt"]
    return args


def golden(name, text):
    path = GOLDEN / name
    if REGEN:
        GOLDEN.mkdir(exist_ok=True)
        path.write_text(text)
    assert text == path.read_text()


ALL = sorted(p.name for p in FIXTURES.iterdir())
EXPECTED_CHECK = {"room_case1": 1, "ring_tight": 1, "cyclic": 1}


@pytest.mark.parametrize("name", ALL)
def test_check_explain(name):
    code, out, _ = run("check", *fixture_args(name), "--explain")
    assert code == EXPECTED_CHECK.get(name, 0)
    golden(f"{name}.check.txt", out)


@pytest.mark.parametrize("name", ALL)
def test_hypergraph(name):
    code, out, _ = run("hypergraph", *fixture_args(name))
    assert code == 0
    golden(f"{name}.hypergraph.txt", out)


@pytest.mark.parametrize("name", ["room_case2", "room_case3", "room_unconstrained", "person_cities"])
def test_query(name):
    code, out, _ = run("query", *fixture_args(name, query=True))
    assert code == 0
    golden(f"{name}.query.txt", out)


def test_query_on_inconsistent_instance():
    code, out, err = run("query", *fixture_args("room_case1", query=True))
    assert code == 1 and out == ""
    assert err.startswith("error: Inconsistent: hypertree rule")


def test_check_tsv_and_json_lines():
    code, out, _ = run("check", *fixture_args("person_cities"), "--format", "tsv")
    assert code == 0
    golden("person_cities.check.tsv", out)
    code, out, _ = run("check", *fixture_args("person_cities"), "--format", "json-lines")
    rows = [json.loads(line) for line in out.splitlines()]
    assert rows[-1] == {"verdict": "Consistent", "summary": "Consistent"}
    assert [r["rule"] for r in rows[:-1]] == ["fd", "fd", "fd"]


def test_query_json_lines():
    code, out, _ = run("query", *fixture_args("room_case3", query=True), "--format", "json-lines")
    assert code == 0
    assert json.loads(out) == {"answer": [], "pmin": "1/4", "pmax": "1/2", "status": "exact"}


def test_hypergraph_tsv():
    code, out, _ = run("hypergraph", *fixture_args("room_case2"), "--format", "tsv")
    assert (code, out) == (0, "t1,t2\nt2,t3\n")


def test_certificate():
    code, out, _ = run("check", *fixture_args("room_case2"), "--certificate")
    assert code == 0
    golden("room_case2.certificate.txt", out)


@pytest.mark.parametrize("k1, k2, expected", [("1/4", "1/2", "true"), ("0.3", "1/2", "false")])
def test_membership(k1, k2, expected):
    code, out, _ = run("mp", *fixture_args("room_case3", query=True), "--k1", k1, "--k2", k2)
    assert out == expected + "\n"
    assert code == (0 if expected == "true" else 1)


def test_membership_with_answer_values():
    code, out, _ = run("mp", *fixture_args("person_cities", query=True),
                       "--answer", "B. Van de Kamp,S. Delfino", "--k1", "1/4", "--k2", "1/4")
    assert (code, out) == (0, "true\n")


def test_budget_exit_codes():
    code, out, _ = run("check", *fixture_args("cyclic"), "--budget", "3")
    assert code == 2 and out.startswith("Unknown:")
    q = FIXTURES / "person_cities" / "query.txt"
    code, out, _ = run("query", *fixture_args("person_cities"), "--query", q, "--budget", "4")
    assert code == 3 and "(unknown)" in out


def test_bad_inputs_exit_64(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("![Room(x)\n")
    d = FIXTURES / "room_case2"
    code, _, err = run("check", "--schema", d / "schema.txt", "--data", d / "Room.csv", "--constraints", bad)
    assert code == 64 and err.startswith("error:")
    code, _, err = run("check", "--schema", tmp_path / "missing.txt", "--data", d / "Room.csv")
    assert code == 64 and "cannot read" in err
    code, _, _ = run("check", "--schema", d / "schema.txt")
    assert code == 64
    code, _, _ = run("mp", *fixture_args("room_case3", query=True), "--k1", "3/4", "--k2", "1/4")
    assert code == 64
    code, _, _ = run("check", *fixture_args("room_case2"), "--budget", "0")
    assert code == 64


def test_data_with_explicit_relation_name(tmp_path):
    d = FIXTURES / "room_case2"
    copy = tmp_path / "rooms.csv"
    copy.write_text((d / "Room.csv").read_text())
    code, out, _ = run("check", "--schema", d / "schema.txt", "--data", f"Room={copy}",
                       "--constraints", d / "constraints.txt")
    assert (code, out) == (0, "Consistent\n")
