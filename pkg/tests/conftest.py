from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cautiouspdb.constraint_lang import parse_constraints, parse_query  # noqa: E402
from cautiouspdb.model import load_instance  # noqa: E402

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@dataclass
class Fixture:
    name: str
    instance: object
    ics: list
    query: Optional[object]

    @property
    def dir(self) -> Path:
        return FIXTURES / self.name


def load_fixture(name: str) -> Fixture:
    d = FIXTURES / name
    schema = (d / "schema.txt").read_text()
    data = [(p.stem, p.read_text()) for p in sorted(d.glob("*.csv"))]
    instance = load_instance(schema, data)
    ics = parse_constraints((d / "constraints.txt").read_text(), instance.schemas)
    q = d / "query.txt"
    query = parse_query(q.read_text(), instance.schemas) if q.exists() else None
    return Fixture(name, instance, ics, query)


@pytest.fixture
def fixture_loader():
    return load_fixture


# one line per acceptance criterion at the end of the run

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, text = mark.args
    ok = call.excinfo is None
    prev = _criteria.get(number, (text, True))
    _criteria[number] = (text, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        text, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")
