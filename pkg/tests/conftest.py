from pathlib import Path

import pytest

from rolekit.corpus import parse_corpus
from rolekit.gateway import mock_gateway

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def _load(name: str, schema: str):
    report = parse_corpus(FIXTURES / name, schema)
    assert not report.rejections, f"fixture {name} must parse cleanly: {report.rejections}"
    return list(report.records)


@pytest.fixture(scope="session")
def clean_corpus():
    return _load("clean_corpus.jsonl", "dialogues")


@pytest.fixture(scope="session")
def profiles():
    return _load("profiles.jsonl", "profiles")


@pytest.fixture(scope="session")
def instructions():
    return _load("instructions.jsonl", "instructions")


@pytest.fixture(scope="session")
def raw_corpus():
    return _load("raw_dialogues.jsonl", "dialogues")


@pytest.fixture()
def gw():
    return mock_gateway(seed=42)
