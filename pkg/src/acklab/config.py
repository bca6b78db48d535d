"""Flat, typed key-value config format.

One `key = value` pair per line, `#` comments, dotted keys (model.family,
optimizer.lr, corpus.scheme, tars.verbalization_path, context.window).
Values parse as int, float, true/false booleans, or (optionally quoted)
strings. Diff-friendly on purpose.
"""

from __future__ import annotations

import re

_KEY_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


class ConfigError(Exception):
    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


def parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    low = raw.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_kv(text: str) -> dict[str, object]:
    out: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", line_no)
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"bad key {key!r}", line_no)
        if key in out:
            raise ConfigError(f"duplicate key {key!r}", line_no)
        out[key] = parse_value(raw)
    return out


def format_kv(values: dict[str, object]) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str) and (value == "" or value != value.strip()):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def load_kv(path) -> dict[str, object]:
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read())


def subtree(values: dict[str, object], prefix: str) -> dict[str, object]:
    """Keys under `prefix.` with the prefix stripped."""
    head = prefix + "."
    return {k[len(head):]: v for k, v in values.items() if k.startswith(head)}
