"""Structured-document helpers shared by the file-format loaders."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, FileUnreadable


def load_document(path: str | Path) -> Any:
    """Load a JSON or YAML document, choosing the parser by suffix."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc.strerror or exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            return json.loads(text)
        return yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: not a valid document ({exc})") from exc


def dump_json(obj: Any) -> str:
    # sorted keys + fixed indent: every artifact must be byte-stable
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=True) + "\n"
