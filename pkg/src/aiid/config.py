"""Flat typed key-value experiment configs.

One entry per line::

    name: type = value

Types are int, float, str, bool, vec (floats), ints, strs and mat (rows
separated by ``;``). A value of the form ``@path`` reads a vec or mat from
a file relative to the config, one row per line. ``#`` starts a comment.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import ValidationError

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*:\s*([a-z]+)\s*=\s*(.*?)\s*$")
TYPES = ("int", "float", "str", "bool", "vec", "ints", "strs", "mat")


def _split(text: str):
    return [t for t in re.split(r"[,\s]+", text.strip()) if t]


def _floats(text: str, where: str):
    try:
        return [float(t) for t in _split(text)]
    except ValueError as e:
        raise ValidationError(f"{where}: bad number ({e})") from None


def parse_value(kind: str, raw: str, where: str = "value", base_dir: str = "."):
    if kind not in TYPES:
        raise ValidationError(f"{where}: unknown type {kind!r}")
    if raw.startswith("@") and kind in ("vec", "mat"):
        path = os.path.join(base_dir, raw[1:])
        try:
            with open(path) as fh:
                lines = [ln.split("#", 1)[0].strip() for ln in fh]
        except OSError as e:
            raise ValidationError(f"{where}: cannot read {path}: {e.strerror}") from None
        lines = [ln for ln in lines if ln]
        raw = " ".join(lines) if kind == "vec" else ";".join(lines)
    if kind == "int":
        try:
            return int(raw, 0)
        except ValueError:
            raise ValidationError(f"{where}: expected an integer, got {raw!r}") from None
    if kind == "float":
        try:
            return float(raw)
        except ValueError:
            raise ValidationError(f"{where}: expected a float, got {raw!r}") from None
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValidationError(f"{where}: expected a boolean, got {raw!r}")
    if kind == "str":
        return raw.strip("\"'")
    if kind == "vec":
        return _floats(raw, where)
    if kind == "ints":
        try:
            return [int(t, 0) for t in _split(raw)]
        except ValueError:
            raise ValidationError(f"{where}: expected integers, got {raw!r}") from None
    if kind == "strs":
        return _split(raw)
    rows = [_floats(r, where) for r in raw.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{where}: matrix rows must have equal length")
    return rows


def parse_text(text: str, source: str = "<config>", base_dir: str = ".") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0]
        if not body.strip():
            continue
        m = _LINE.match(body)
        if not m:
            raise ValidationError(f"{source}:{lineno}: expected 'name: type = value'")
        name, kind, raw = m.groups()
        if name in out:
            raise ValidationError(f"{source}:{lineno}: duplicate key {name!r}")
        out[name] = parse_value(kind, raw, f"{source}:{lineno}", base_dir)
    return out


def load_file(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    return parse_text(text, path, os.path.dirname(os.path.abspath(path)))


def preset_names() -> list[str]:
    d = resources.files("aiid") / "presets"
    return sorted(p.name[:-4] for p in d.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> dict:
    f = resources.files("aiid") / "presets" / f"{name}.cfg"
    if not f.is_file():
        raise ValidationError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return parse_text(f.read_text(), f"preset:{name}")


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"
    threads: int = 1

    def canonical(self) -> str:
        # out and threads do not change results, so they stay out of the hash
        return json.dumps({"subcommand": self.subcommand, "seed": self.seed, "params": self.params}, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()
