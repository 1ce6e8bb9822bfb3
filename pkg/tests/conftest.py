import json
from pathlib import Path

import pytest

from intentcache.config import load_config
from intentcache.harness.env import build_env, resolve_schema
from intentcache.harness.synth import generate_retail, retail_schema

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# small enough to keep the suite fast, large enough that every intent has rows
SMALL_ROWS = 5000


@pytest.fixture(scope="session")
def schema():
    return retail_schema()


@pytest.fixture(scope="session")
def fig2_schema():
    cfg = load_config()
    cfg.schema = "fig2"
    return resolve_schema(cfg)


@pytest.fixture(scope="session")
def data(schema):
    return generate_retail(7, SMALL_ROWS, schema)


@pytest.fixture(scope="session")
def env():
    return build_env(load_config(), fact_rows=SMALL_ROWS)


@pytest.fixture(scope="session")
def sqlite_env():
    cfg = load_config()
    cfg.backend = "sqlite"
    return build_env(cfg, fact_rows=SMALL_ROWS)


@pytest.fixture(scope="session")
def golden():
    return json.loads((FIXTURES / "signatures" / "golden.json").read_text(encoding="utf-8"))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
