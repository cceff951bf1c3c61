"""Flat ``key = value`` config files shared by FusionConfig and TrainConfig.

Blank lines and ``#`` comments are ignored. Values are parsed according to
the dataclass field type.
"""

import dataclasses
from pathlib import Path

from .errors import ConfigError, ParseError


def read_kv(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(path, lineno, f"expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(path, lineno, "empty key")
        if key in out:
            raise ParseError(path, lineno, f"duplicate key {key!r}")
        out[key] = value
    return out


def write_kv(mapping, path):
    lines = [f"{k} = {v}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(field, text):
    kind = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "bool":
            if text.lower() in ("1", "true", "yes"):
                return True
            if text.lower() in ("0", "false", "no"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"{field.name}: cannot parse {text!r} as {kind}") from None
    return text


def dataclass_from_kv(cls, mapping):
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    return cls(**{k: _coerce(known[k], v) for k, v in mapping.items()})


def dataclass_to_kv(obj):
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        out[f.name] = repr(value) if isinstance(value, float) else str(value)
    return out
