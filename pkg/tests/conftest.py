from __future__ import annotations

import sys
from importlib.resources import files
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from calflow.frontend import parse_program, parse_xcf  # noqa: E402
from calflow.kernel import default_host_functions  # noqa: E402
from calflow.machine import build_siam  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


def topfilter_text() -> str:
    return (files("calflow") / "data" / "topfilter.cal").read_text()


def topfilter_xcf_text() -> str:
    return (files("calflow") / "data" / "topfilter.xcf").read_text()


def quiet_host(sink: list | None = None):
    return default_host_functions(printer=(sink.append if sink is not None else (lambda *a: None)))


def load(text: str, top: str, params=None, sink=None):
    return parse_program([("test.cal", text)], top, quiet_host(sink), params)


@pytest.fixture
def topfilter():
    return load(topfilter_text(), "TopFilter")


@pytest.fixture
def mixed_plan(topfilter):
    return parse_xcf(topfilter_xcf_text(), topfilter)


@pytest.fixture
def filter_am(topfilter):
    return build_siam(topfilter.actor("filter"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
