"""``key = value`` config files with [sampler], [segmenter], [model], [optimizer], [selection], [train]."""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any

from .training import TrainConfig

SECTIONS = ("train", "sampler", "segmenter", "model", "optimizer", "selection")


def _coerce(value: str, current: Any):
    if isinstance(current, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float) or current is None:
        try:
            return float(value)
        except ValueError:
            return value
    if isinstance(current, tuple):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if isinstance(current, dict):
        pairs = (item.split(":") for item in value.split(",") if item.strip())
        return {k.strip(): int(v) for k, v in pairs}
    return value.strip()


def _update(obj, values: dict[str, str], section: str):
    changes = {}
    names = {f.name for f in dataclasses.fields(obj)}
    for key, raw in values.items():
        if key not in names:
            raise ValueError(f"unknown key {key!r} in [{section}]")
        changes[key] = _coerce(raw, getattr(obj, key))
    return dataclasses.replace(obj, **changes)


def load_config(path: Path | str | None) -> tuple[TrainConfig, dict[str, str]]:
    """Returns the training config and the raw [selection] section."""
    cfg = TrainConfig()
    if path is None:
        return cfg, {}
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(path)
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {', '.join(sorted(unknown))}")
    if parser.has_section("train"):
        plain = {k: v for k, v in parser["train"].items()}
        cfg = _update(cfg, plain, "train")
    for section, attr in (("sampler", "sampler"), ("segmenter", "segmenter"),
                          ("optimizer", "optimizer")):
        if parser.has_section(section):
            setattr(cfg, attr, _update(getattr(cfg, attr), dict(parser[section]), section))
    if parser.has_section("model"):
        target = "coref" if cfg.model == "coref" else "empty"
        setattr(cfg, target, _update(getattr(cfg, target), dict(parser["model"]), "model"))
    selection = dict(parser["selection"]) if parser.has_section("selection") else {}
    return cfg, selection
