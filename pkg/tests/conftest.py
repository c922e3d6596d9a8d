from __future__ import annotations

from pathlib import Path

import pytest

from ciralkit.synthetic import make_corpus

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def sample_body() -> str:
    return (FIXTURES / "sample_response.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def synth200():
    return make_corpus(n_docs=200, seed=0)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
