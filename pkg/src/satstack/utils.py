"""Utility functions shared by the command modules."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any


def format_json(data: Any, indent: int | None = 2) -> str:
    """Serialize a JSON-compatible value deterministically."""
    return json.dumps(data, indent=indent, ensure_ascii=False, sort_keys=True)


def parse_vector(text: str) -> list[float]:
    """Parse ``"v1,v2,..."`` into floats.

    Surrounding brackets and whitespace are tolerated, empty entries are not.
    """
    body = text.strip().removeprefix("[").removesuffix("]")
    if not body.strip():
        raise ValueError("Empty vector")
    values: list[float] = []
    for item in body.split(","):
        item = item.strip()
        if not item:
            raise ValueError(f"Empty entry in vector: {text!r}")
        values.append(float(item))
    return values


def format_number(value: float) -> str:
    """Shortest round-trip text for a float."""
    return repr(float(value))


def write_text_atomic(path: Path, text: str, encoding: str = "utf-8") -> Path:
    """Write ``text`` to ``path`` via a temporary file and ``os.replace``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding=encoding, newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def write_csv_atomic(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[float | int | str]],
) -> Path:
    """Write a headered CSV atomically. Floats use :func:`format_number`."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_number(v) if isinstance(v, float) else v for v in row]
        )
    return write_text_atomic(path, buffer.getvalue())


def file_digest(path: Path) -> str:
    """Return the sha256 hex digest of a file."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_json(path: Path) -> Any:
    """Load a JSON document from ``path``."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(path))
    if not p.is_file():
        raise IsADirectoryError(str(path))
    return json.loads(p.read_text(encoding="utf-8"))


__all__ = [
    "file_digest",
    "format_json",
    "format_number",
    "parse_vector",
    "read_json",
    "write_csv_atomic",
    "write_text_atomic",
]
