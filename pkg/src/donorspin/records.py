"""Run identifiers, manifests and CSV tables shared by the command-line workflows."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence


def digest(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def make_run_id(argv: Sequence[str], config_digest: str, seed: int | None, version: str) -> str:
    """Deterministic run identifier: identical inputs give identical outputs, byte for byte."""
    return digest({"argv": list(argv), "config": config_digest, "seed": seed, "version": version})[:16]


@dataclass
class RunManifest:
    run_id: str
    command: list[str]
    config_digest: str
    seed: int | None
    version: str
    started: str = ""
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def start(self) -> None:
        self.started = _now()

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, default=_jsonable) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _jsonable(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return str(obj)


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool,)):
        return str(int(x))
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".12g")


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]],
                run_id: str | None = None) -> Path:
    """Comma-separated, header row, LF line endings, UTF-8; numbers at 12 significant digits."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header) + (["run_id"] if run_id else []))
        for row in rows:
            w.writerow([fmt(v) for v in row] + ([run_id] if run_id else []))
    return path


def read_table(path: str | os.PathLike) -> dict[str, list[str]]:
    """Columns of a CSV file keyed by header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        cols: dict[str, list[str]] = {h.strip(): [] for h in header}
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {n} has {len(row)} fields, expected {len(header)}")
            for h, v in zip(header, row):
                cols[h.strip()].append(v.strip())
    return cols


def write_json(path: Path, doc: Any) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path
