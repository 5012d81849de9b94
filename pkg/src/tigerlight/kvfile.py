"""Flat ``key = value`` text files (manifests, run configs)."""

from pathlib import Path


class KeyValueError(ValueError):
    pass


def parse_kv(text, source="<string>"):
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise KeyValueError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise KeyValueError(f"{source}:{lineno}: empty key")
        if key in out:
            raise KeyValueError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path):
    path = Path(path)
    return parse_kv(path.read_text(encoding="utf-8"), source=str(path))


def format_kv(mapping):
    return "".join(f"{k} = {v}\n" for k, v in mapping.items())
