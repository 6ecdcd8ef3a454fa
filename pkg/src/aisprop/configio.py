"""Strict JSON-to-dataclass conversion that reports every problem at once."""

from __future__ import annotations

import dataclasses
import enum
import types
import typing
from typing import Any, Mapping

from aisprop.errors import ConfigError


def _convert(tp: Any, value: Any, where: str, problems: list[str]) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, where, problems)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, Mapping):
            problems.append(f"{where}: expected an object")
            return None
        return _build(tp, value, where + ".", problems)
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            problems.append(f"{where}: expected a list")
            return None
        item_t = args[0] if args else Any
        items = [_convert(item_t, v, f"{where}[{i}]", problems) for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value.lower() if isinstance(value, str) else value)
        except ValueError:
            allowed = ", ".join(str(m.value) for m in tp)
            problems.append(f"{where}: {value!r} is not one of {allowed}")
            return None
    if tp is bool:
        if not isinstance(value, bool):
            problems.append(f"{where}: expected true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number")
            return value
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            problems.append(f"{where}: expected a string")
        return value
    return value


def _build(cls: type, data: Mapping[str, Any], where: str, problems: list[str]) -> Any:
    start = len(problems)
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in fields:
            problems.append(f"{where}{key}: unknown key")
    kwargs, bad = {}, set()
    for name in fields:
        if name in data:
            before = len(problems)
            kwargs[name] = _convert(hints[name], data[name], f"{where}{name}", problems)
            if len(problems) > before:
                bad.add(name)
    failed = len(problems) > start
    # still run the value checks on the well-typed fields so every problem surfaces at once
    try:
        obj = cls(**{k: v for k, v in kwargs.items() if k not in bad})
    except ConfigError as exc:
        problems.extend(f"{where}{p}" for p in exc.problems if p.split(":", 1)[0] not in bad)
        return None
    except (TypeError, ValueError):
        return None
    return None if failed else obj


def from_mapping(cls: type, data: Mapping[str, Any]) -> Any:
    """Build ``cls`` from ``data``, rejecting unknown keys and bad types.

    Raises:
        ConfigError: listing every problem found, not just the first.
    """
    if not isinstance(data, Mapping):
        raise ConfigError(["top level: expected a JSON object"])
    problems: list[str] = []
    obj = _build(cls, data, "", problems)
    if problems:
        raise ConfigError(problems)
    return obj


def to_mapping(obj: Any) -> Any:
    """JSON-ready view of a (possibly nested) config dataclass."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_mapping(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [to_mapping(v) for v in obj]
    return obj
