"""Shared fixtures for pollwatch tests.

Provides a small three-attribute config, a simulated election built from
it, in-memory SQLite for the run ledger, and a Click CLI runner, all
isolated per test unless noted.
"""

import sqlite3
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from pollwatch.config import config_from_dict
from pollwatch.harness import simulate_election
from pollwatch.popgen import schema_from_dict

# ── Helpers ────────────────────────────────────────────


SMALL_ATTRIBUTES = [
    {
        "name": "color",
        "kind": "categorical",
        "categories": ["red", "green", "blue"],
        "probabilities": [0.5, 0.3, 0.2],
    },
    {
        "name": "size",
        "kind": "binned",
        "categories": ["small", "large"],
        "mean": 0.0,
        "std": 1.0,
        "edges": [0.25],
    },
    {
        "name": "shift",
        "kind": "categorical",
        "categories": ["day", "night"],
        "probabilities": [0.6, 0.4],
    },
]

SMALL_CONFIG = {
    "attributes": SMALL_ATTRIBUTES,
    "simulation": {
        "n_regions": 20,
        "pop_size": 4000,
        "target_share": 0.5,
        "redistribution": {"sample_fraction": 0.3, "cap_factor": 1.5},
        "mail_in": {"sample_fraction": 0.5, "bias": -0.5, "weights": {"shift": {"night": 1.0}}},
    },
    "polling": {"rate": 0.1, "target_error": 0.02},
    "fraud": {"mode": "switching", "regions": 3, "probability": 0.5},
    "detector": {"k": 2, "restarts": 3},
    "experiment": {"levels": [20], "region_fractions": [10], "seeds": 2},
}


def _load_schema(conn):
    """Load the pollwatch ledger schema into a connection."""
    schema_path = Path(__file__).parent.parent / "pollwatch" / "schema.sql"
    conn.executescript(schema_path.read_text())


# ── Model fixtures ────────────────────────────────────


@pytest.fixture
def schema():
    """color (3 categories) × size (2, binned at 0.25) × shift (2)."""
    return schema_from_dict({"attributes": SMALL_ATTRIBUTES})


@pytest.fixture(scope="session")
def small_config():
    return config_from_dict(SMALL_CONFIG, "small.yaml")


@pytest.fixture(scope="session")
def election(small_config):
    """One simulated election (seed 7) on the small config.

    Population and ballot arrays are read-only, so sharing it across
    tests is safe.
    """
    return simulate_election(small_config, seed=7)


@pytest.fixture
def config_file(tmp_path):
    """The small config written as YAML; returns its path as a string."""
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL_CONFIG, sort_keys=False))
    return str(path)


# ── Database fixtures ─────────────────────────────────


@pytest.fixture
def db_conn():
    """Fresh in-memory SQLite connection with the ledger schema loaded.

    Connection uses Row factory and has foreign keys enabled, matching
    production behavior.
    """
    conn = sqlite3.connect(":memory:")
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys=ON")
    _load_schema(conn)
    return conn


# ── CLI fixture ───────────────────────────────────────


@pytest.fixture
def cli_env(tmp_path):
    """Provides a CliRunner and temp database path for CLI tests.

    Returns (runner, db_path, env) where env is a dict suitable
    for passing to runner.invoke(env=env).
    """
    db_path = str(tmp_path / "test.db")
    env = {"POLLWATCH_DB": db_path}
    runner = CliRunner()
    return runner, db_path, env
