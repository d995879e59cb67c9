"""Atomic output files, content digests and the run manifest."""

from __future__ import annotations

import hashlib
import importlib.metadata
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import polars as pl

MANIFEST_NAME = "manifest.json"


def get_version() -> str:
    """Read version from package metadata, falling back to pyproject.toml."""
    try:
        return importlib.metadata.version("criticality-detection")
    except importlib.metadata.PackageNotFoundError:
        toml_path = Path(__file__).resolve().parent.parent / "pyproject.toml"
        if not toml_path.is_file():
            return "unknown"
        for line in toml_path.read_text().splitlines():
            if line.strip().startswith("version"):
                return line.split("=", 1)[1].strip().strip('"')
        return "unknown"


def _temporary(destination: Path) -> Path:
    destination.parent.mkdir(parents=True, exist_ok=True)
    return destination.with_suffix(destination.suffix + ".tmp")


def write_bytes_atomic(destination: str | Path, payload: bytes) -> Path:
    destination = Path(destination)
    destination_tmp = _temporary(destination)
    destination_tmp.write_bytes(payload)
    destination_tmp.replace(destination)
    return destination


def write_json_atomic(destination: str | Path, document: dict | list) -> Path:
    """Two-space indented JSON with a trailing newline; NaN is rejected."""
    text = json.dumps(document, indent=2, allow_nan=False) + "\n"
    return write_bytes_atomic(destination, text.encode("utf-8"))


def write_csv_atomic(destination: str | Path, frame: pl.DataFrame) -> Path:
    destination = Path(destination)
    destination_tmp = _temporary(destination)
    frame.write_csv(destination_tmp, float_precision=None)
    destination_tmp.replace(destination)
    return destination


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Provenance for one CLI invocation; lists every file it wrote."""

    command: str
    master_seed: int
    config: dict
    argv: list[str] = field(default_factory=lambda: list(sys.argv))
    version: str = field(default_factory=get_version)
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    notes: list[str] = field(default_factory=list)
    files: list[dict] = field(default_factory=list)

    def add_file(self, path: str | Path, root: str | Path) -> None:
        path = Path(path)
        self.files.append(
            {
                "path": path.relative_to(root).as_posix(),
                "sha256": file_digest(path),
                "bytes": path.stat().st_size,
            }
        )


def write_manifest(out_dir: str | Path, manifest: RunManifest) -> Path:
    return write_json_atomic(Path(out_dir) / MANIFEST_NAME, asdict(manifest))
