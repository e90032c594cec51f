"""pollwatch — run ledger.

Every CLI command records a `runs` row and append-only `activity` rows.
All SQL uses parameterized queries. Mutating functions return (ok, payload):
  Success: (True, result_data)
  Failure: (False, error_string)
"""

import json
import os
import sqlite3
from contextlib import contextmanager
from pathlib import Path

DB_PATH = os.environ.get("POLLWATCH_DB", os.path.expanduser("~/.pollwatch/runs.db"))

RUN_STATUSES = ("running", "done", "failed")


@contextmanager
def get_db():
    conn = sqlite3.connect(DB_PATH)
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA busy_timeout=5000")
    conn.execute("PRAGMA foreign_keys=ON")
    try:
        yield conn
        conn.commit()
    except Exception:
        conn.rollback()
        raise
    finally:
        conn.close()


def init_db():
    Path(DB_PATH).parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(DB_PATH)
    schema_path = Path(__file__).parent / "schema.sql"
    conn.executescript(schema_path.read_text())
    conn.execute("PRAGMA journal_mode=WAL")
    conn.execute("PRAGMA synchronous=NORMAL")
    conn.close()


def log_activity(conn, run_id, action, detail="", meta=None):
    if meta is not None and not isinstance(meta, str):
        meta = json.dumps(meta, sort_keys=True, default=str)
    conn.execute(
        "INSERT INTO activity(run_id,action,detail,meta) VALUES(?,?,?,?)",
        (run_id, action, detail, meta),
    )


# ── Runs ────────────────────────────────────────────────


def start_run(conn, command, seed=None, out_dir="", config_path=""):
    cur = conn.execute(
        "INSERT INTO runs(command,seed,out_dir,config_path) VALUES(?,?,?,?)",
        (command, seed, str(out_dir), str(config_path)),
    )
    run_id = cur.lastrowid
    log_activity(conn, run_id, "run_started", command)
    return True, run_id


def finish_run(conn, run_id, status="done", detail="", manifest=""):
    if status not in RUN_STATUSES or status == "running":
        return False, f"Invalid final status: {status}"
    row = conn.execute("SELECT status FROM runs WHERE id=?", (run_id,)).fetchone()
    if not row:
        return False, f"Run #{run_id} not found"
    if row["status"] != "running":
        return False, f"Run #{run_id} already {row['status']}"
    conn.execute(
        "UPDATE runs SET status=?, detail=?, manifest=?, finished_at=datetime('now') WHERE id=?",
        (status, detail, str(manifest), run_id),
    )
    log_activity(conn, run_id, f"run_{status}", detail)
    return True, None


def list_runs(conn, command=None, status=None, limit=20):
    clauses = []
    params = []
    if command:
        clauses.append("command=?")
        params.append(command)
    if status:
        clauses.append("status=?")
        params.append(status)
    where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
    params.append(limit)
    return conn.execute(
        f"SELECT * FROM runs {where} ORDER BY id DESC LIMIT ?", params
    ).fetchall()


def get_run(conn, run_id):
    row = conn.execute("SELECT * FROM runs WHERE id=?", (run_id,)).fetchone()
    if not row:
        return False, f"Run #{run_id} not found"
    return True, row


def get_run_activity(conn, run_id):
    return conn.execute(
        "SELECT * FROM activity WHERE run_id=? ORDER BY id", (run_id,)
    ).fetchall()
