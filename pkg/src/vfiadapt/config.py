"""Flat ``key=value`` configuration files."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def _coerce(raw):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    return raw


def parse_config(text):
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(value)
    return out


def format_config(mapping):
    return "".join(f"{k}={v}\n" for k, v in mapping.items())


def load_config(path=None):
    """Package defaults, overlaid with ``path`` when given."""
    text = resources.files("vfiadapt").joinpath("defaults.cfg").read_text()
    cfg = parse_config(text)
    if path is not None:
        cfg.update(parse_config(Path(path).read_text()))
    return cfg
