"""File helpers: atomic writes, CSV matrices, run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Malformed input file; the message names the file and line or field."""


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_default) + "\n"


def write_json(path, data) -> Path:
    return atomic_write_text(path, dumps(data))


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def matrix_to_csv(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in M:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_csv_matrix(path, M) -> Path:
    return atomic_write_text(path, matrix_to_csv(M))


def read_csv_matrix(path, header: bool = False) -> np.ndarray:
    """Parse a numeric CSV file; every row must have the same width."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if header and lineno == 1:
            continue
        if not row or all(not c.strip() for c in row):
            continue
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise InputError(f"{path}: line {lineno}: non-numeric field in {row!r}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise InputError(f"{path}: line {lineno}: expected {width} fields, got {len(vals)}")
        rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    M = np.array(rows)
    if not np.all(np.isfinite(M)):
        raise InputError(f"{path}: non-finite value")
    return M


def read_csv_vector(path) -> np.ndarray:
    """A vector stored as one row or one column."""
    M = read_csv_matrix(path)
    if min(M.shape) != 1:
        raise InputError(f"{path}: expected a single row or column, got shape {M.shape}")
    return M.ravel()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int | None
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def add_input(self, name: str, path) -> None:
        self.inputs[name] = {"path": str(path), "sha256": sha256_file(path)}

    def to_dict(self) -> dict:
        return asdict(self)
