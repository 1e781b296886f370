import json
from pathlib import Path

import pytest

from gas_model.models import ForkConfig, GasSchedule
from ingestion.corpus import DECLARED_FILE, TRACES_FILE, store_corpus, store_declared

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def berlin() -> GasSchedule:
    return GasSchedule()


@pytest.fixture
def fork() -> ForkConfig:
    return ForkConfig()


@pytest.fixture
def load_fixture():
    def load(name: str):
        with open(FIXTURES / name, "r") as f:
            return json.load(f)
    return load


@pytest.fixture
def make_corpus(tmp_path):
    """Write traces and declared rows into a fresh corpus directory."""
    def make(traces, declared=(), name: str = "corpus") -> Path:
        root = tmp_path / name
        root.mkdir()
        store_corpus(root / TRACES_FILE, traces)
        store_declared(root / DECLARED_FILE, declared)
        return root
    return make
