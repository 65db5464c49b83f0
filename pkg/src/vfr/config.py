"""Plain-text ``key = value`` config files mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import types
import typing
from pathlib import Path


class ConfigError(ValueError):
    pass


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if not k:
            raise ConfigError(f"{path}:{n}: empty key")
        out[k.replace("-", "_")] = v
    return out


def _strip_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def parse_value(text: str, tp, key: str = "value"):
    """Convert a config string to ``tp`` (int, float, bool, str, tuples, optionals)."""
    if not isinstance(text, str):
        return text
    tp, optional = _strip_optional(tp)
    s = text.strip()
    if optional and s.lower() in ("", "none", "null"):
        return None
    try:
        if tp is bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if tp is int:
            return int(s, 0)
        if tp is float:
            return float(s)
        if tp is str:
            return s
        if typing.get_origin(tp) is tuple:
            args = typing.get_args(tp)
            parts = [p for p in s.replace("(", "").replace(")", "").split(",") if p.strip()]
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(parse_value(p, args[0], key) for p in parts)
            if len(parts) != len(args):
                raise ValueError(f"expected {len(args)} comma-separated values")
            return tuple(parse_value(p, a, key) for p, a in zip(parts, args))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} as {getattr(tp, '__name__', tp)} ({exc})") from None
    raise ConfigError(f"{key}: unsupported field type {tp}")


def field_types(cls) -> dict[str, object]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls) if f.init}


def build(cls, values: dict, **fixed):
    """Instantiate dataclass ``cls`` from string (or already typed) values.

    Unknown keys are an error so that typos in config files surface.
    """
    types_ = field_types(cls)
    unknown = sorted(set(values) - set(types_))
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    kw = {k: parse_value(v, types_[k], k) for k, v in values.items()}
    kw.update(fixed)
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def dump(obj) -> str:
    """Inverse of :func:`read_config` for a dataclass instance."""
    lines = []
    for k, v in dataclasses.asdict(obj).items():
        if isinstance(v, (tuple, list)):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"
