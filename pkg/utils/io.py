"""Atomic file writes: content goes to a sibling temp file, then replaces the target."""
import json
from pathlib import Path
from typing import Any

from core.errors import CorpusError


def _replace(path: Path, payload: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as f:
            f.write(payload)
            f.flush()
        tmp.replace(path)
    except OSError as exc:
        raise CorpusError(f"cannot write {path}: {exc.strerror or exc}") from exc


def safe_write_bytes(path: Path, payload: bytes) -> None:
    _replace(Path(path), payload)


def safe_write_text(path: Path, text: str) -> None:
    _replace(Path(path), text.encode("utf-8"))


def safe_write_json(path: Path, obj: Any, indent: int = 2) -> None:
    """Atomically write JSON to path."""
    _replace(Path(path), (json.dumps(obj, indent=indent, default=str) + "\n").encode("utf-8"))
