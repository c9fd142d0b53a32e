from importlib.resources import files

import pytest

from asrcorrect.augment import read_catalog
from asrcorrect.g2p import default_lexicon
from asrcorrect.retrieval import build_index

DATA = files("asrcorrect") / "data"


@pytest.fixture(scope="session")
def lexicon():
    return default_lexicon()


@pytest.fixture(scope="session")
def catalog():
    return read_catalog(DATA / "tasks.jsonl")


@pytest.fixture(scope="session")
def index(catalog):
    return build_index(catalog)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line; call with (ok, detail)."""

    def record(ok: bool, detail: str) -> bool:
        name = request.node.name.removeprefix("test_")
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        print(_ACCEPTANCE[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
