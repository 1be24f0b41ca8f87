"""Flat ``key = value`` configuration files with dotted keys.

    # comment
    manifold.kind = point
    wave.h_list = 0.125, 0.0625

No sections, no nesting, no quoting. Keys are compared as whole strings; the
dots only group related keys for :meth:`Config.section`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ConfigError", "Config", "parse_config"]


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass
class Config:
    values: dict[str, str] = field(default_factory=dict)
    lines: dict[str, int] = field(default_factory=dict)
    source: str = "<string>"

    def __contains__(self, key):
        return key in self.values

    def keys(self):
        return self.values.keys()

    def set(self, key: str, value: str) -> None:
        self.values[key] = str(value).strip()
        self.lines.setdefault(key, 0)

    def _err(self, key, msg):
        return ConfigError(msg, self.lines.get(key), key)

    def str(self, key: str, default=None) -> str:
        if key not in self.values:
            if default is None:
                raise ConfigError("missing required key", key=key)
            return default
        return self.values[key]

    def float(self, key: str, default=None) -> float:
        if key not in self.values and default is not None:
            return float(default)
        raw = self.str(key)
        try:
            return float(raw)
        except ValueError:
            raise self._err(key, f"expected a number, got {raw!r}") from None

    def int(self, key: str, default=None) -> int:
        v = self.float(key, default)
        if v != int(v):
            raise self._err(key, f"expected an integer, got {v}")
        return int(v)

    def vector(self, key: str, default=None) -> np.ndarray:
        if key not in self.values and default is not None:
            return np.atleast_1d(np.asarray(default, dtype=float))
        raw = self.str(key)
        try:
            return np.array([float(t) for t in raw.split(",") if t.strip()])
        except ValueError:
            raise self._err(key, f"expected comma-separated numbers, got {raw!r}") from None

    def list(self, key: str, default=None) -> list[str]:
        if key not in self.values and default is not None:
            return list(default)
        return [t.strip() for t in self.str(key).split(",") if t.strip()]

    def section(self, prefix: str) -> dict[str, str]:
        """All keys starting with ``prefix.``, with the prefix removed."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.values.items())


def parse_config(text: str | None = None, path=None) -> Config:
    if path is not None:
        text = Path(path).read_text()
    cfg = Config(source=str(path) if path is not None else "<string>")
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=no)
        key, value = (s.strip() for s in stripped.split("=", 1))
        if not key or any(c.isspace() for c in key):
            raise ConfigError("malformed key", line=no, key=key or None)
        if key in cfg.values:
            raise ConfigError(f"duplicate key (first set on line {cfg.lines[key]})", line=no, key=key)
        cfg.values[key] = value
        cfg.lines[key] = no
    return cfg
