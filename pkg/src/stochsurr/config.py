"""Flat ``key = value`` config files.

The format is one assignment per line, ``#`` starts a comment, blank lines
ignored.  Values are parsed as int, then float, then a comma-separated list
of numbers, falling back to a stripped string.  Keys may be dotted
(``design.sites = 50``) purely as a naming convention; the parser returns a
flat dict.
"""

from __future__ import annotations


def _parse_scalar(text: str):
    text = text.strip()
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_parse_scalar(tok) for tok in text.split(",") if tok.strip()]
    return _parse_scalar(text)


def loads(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = parse_value(value)
    return out


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())


def dumps(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, (list, tuple)):
            value = ", ".join(repr(float(v)) if isinstance(v, float) else str(v)
                              for v in value)
        elif isinstance(value, float):
            value = repr(float(value))
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def dump(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(cfg))
