"""DuckDB helpers for the ensemble aggregation queries."""

from __future__ import annotations

from collections.abc import Iterable
from functools import cache
from pathlib import Path

import duckdb
import polars as pl

SQL_DIR = Path(__file__).resolve().parent / "sql"


@cache
def load_sql(filename: str) -> str:
    """Read and cache a SQL file from criticality/sql/.

    Args:
        filename: Relative path within the sql/ directory,
                  e.g. "queries/ensemble_statistics.sql"
    """
    return (SQL_DIR / filename).read_text()


class _ConnectionManager:
    """Open an in-memory DuckDB connection with polars frames registered as views."""

    def __init__(self, **frames: pl.DataFrame) -> None:
        self._frames = frames
        self._conn: duckdb.DuckDBPyConnection | None = None

    def __enter__(self) -> duckdb.DuckDBPyConnection:
        self._conn = duckdb.connect(":memory:")
        # Single-threaded aggregation keeps floating-point sums in a fixed order
        self._conn.execute("SET threads TO 1")
        for name, frame in self._frames.items():
            self._conn.register(name, frame)
        return self._conn

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._conn is not None:
            self._conn.close()


def run_query(filename: str, params: list | None = None, **frames: pl.DataFrame) -> pl.DataFrame:
    """Execute a stored query against the given frames and return a polars frame."""
    with _ConnectionManager(**frames) as conn:
        return conn.execute(load_sql(filename), params or []).pl()


def open_plot_data(plot_dir: str | Path, names: Iterable[str]) -> duckdb.DuckDBPyConnection:
    """In-memory connection with one view per ``<name>.csv`` in ``plot_dir``."""
    conn = duckdb.connect(":memory:")
    for name in names:
        conn.read_csv((Path(plot_dir) / f"{name}.csv").as_posix()).create_view(name)
    return conn
