"""Bundled scenario presets, one per reproduced exhibit."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..errors import ConfigurationError
from .config import ScenarioConfig, dump_config, parse_config


def _dir():
    return resources.files("airlink").joinpath("presets/scenarios")


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> ScenarioConfig:
    names = list_presets()
    if name not in names:
        raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(names)}")
    return parse_config(_dir().joinpath(f"{name}.json").read_text())


def emit_preset(name: str, out_dir=".") -> Path:
    """Write the preset's canonical JSON to ``out_dir/<name>.json``."""
    cfg = load_preset(name)
    path = Path(out_dir) / f"{name}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg))
    return path
