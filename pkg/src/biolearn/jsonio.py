"""JSON output with 17-significant-digit floats (exact float64 round trip)."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import NumericError


def _escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    return "".join(out)


def _write(obj, parts: list[str], indent: int, level: int):
    pad = " " * (indent * (level + 1))
    end_pad = " " * (indent * level)
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not np.isfinite(v):
            raise NumericError(f"cannot serialize non-finite float {v!r}")
        parts.append(format(v, ".17g"))
    elif isinstance(obj, str):
        parts.append(f'"{_escape(obj)}"')
    elif isinstance(obj, dict):
        if not obj:
            parts.append("{}")
            return
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            parts.append(("," if i else "") + ("\n" + pad if indent else ""))
            parts.append(f'"{_escape(str(key))}":' + (" " if indent else ""))
            _write(value, parts, indent, level + 1)
        parts.append(("\n" + end_pad if indent else "") + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            parts.append("[]")
            return
        parts.append("[")
        for i, value in enumerate(seq):
            parts.append(("," if i else "") + ("\n" + pad if indent else ""))
            _write(value, parts, indent, level + 1)
        parts.append(("\n" + end_pad if indent else "") + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps(obj, indent: int = 0) -> str:
    parts: list[str] = []
    _write(obj, parts, indent, 0)
    return "".join(parts)


def dump_atomic(obj, path, indent: int = 2) -> None:
    """Serialize to a temp file in the target directory, then rename."""
    text = dumps(obj, indent=indent) + "\n"
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".json.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
