"""Flat key-value run configuration.

Config files are plain text, one ``key = value`` pair per line; ``#`` starts
a comment.  Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Union

from .errors import ConfigError


@dataclass
class RunConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 128
    lr_encoder: float = 0.05
    lr_head: float = 0.5
    epochs: int = 30
    batch_size: int = 32
    memory_budget_bytes: int = 256 * 1024 * 1024

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        kind = float if _FIELD_TYPES[key] in (float, "float") else int
        try:
            setattr(cfg, key, kind(value))
        except ValueError as exc:
            raise ConfigError(
                f"config line {line_no}: {key} needs {kind.__name__}, got {value!r}"
            ) from exc
    return cfg


def load_config(path: Union[str, Path]) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))
