"""Bundled example actions (JSON files under ``presets/``)."""
from importlib import resources

from .actions import load_action

NAMES = ("trivial_r2", "z2_r1", "s1_r2", "s1_r3", "so3_r3", "t2_r4", "s1w_r4")


def preset_path(name):
    return resources.files("desing") / "presets" / f"{name}.json"


def preset(name):
    if name not in NAMES:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(NAMES)}")
    with resources.as_file(preset_path(name)) as path:
        return load_action(path, name=name)
