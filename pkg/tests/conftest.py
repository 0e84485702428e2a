import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
if str(TESTS) not in sys.path:
    sys.path.insert(0, str(TESTS))

from ctwasm import corpus as corpus_mod  # noqa: E402
from ctwasm import text, validate  # noqa: E402


@pytest.fixture(scope="session")
def corpus_root() -> Path:
    root = corpus_mod.default_root()
    assert root.is_dir(), f"corpus directory missing: {root}"
    return root


@pytest.fixture(scope="session")
def corpus_entries(corpus_root):
    return corpus_mod.entries(corpus_root)


@pytest.fixture(scope="session")
def positive_entries(corpus_entries):
    return [e for e in corpus_entries if e.positive]


@pytest.fixture(scope="session")
def typed_corpus(positive_entries):
    """name -> (entry, validated module with stack annotations)."""
    return {
        e.name: (e, validate.validate_module(e.module, annotate=True))
        for e in positive_entries
    }


def parse(src: str):
    return text.parse_module(src)


@pytest.fixture
def parse_module():
    return parse
