"""Skeleton topology files.

A topology is a TOML document with a ``keypoints`` string list, a ``limbs``
list of ``[a, b]`` index pairs, and an optional ``paf_channels`` list of
``[cx, cy]`` pairs (defaulting limb ``l`` to ``(2l, 2l+1)``).
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Union

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import FormatError
from .types import SkeletonTopology

BUILTIN_TOPOLOGIES = ("coco18",)


def parse_topology(text: str) -> SkeletonTopology:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise FormatError(f"invalid topology TOML: {exc}") from exc
    if "keypoints" not in doc or "limbs" not in doc:
        raise FormatError("topology file needs 'keypoints' and 'limbs'")
    return SkeletonTopology.create(
        doc["keypoints"], doc["limbs"], doc.get("paf_channels")
    )


def load_topology(spec: Union[str, Path]) -> SkeletonTopology:
    """Load a builtin topology by name ("coco18") or a TOML file by path."""
    name = str(spec)
    if name in BUILTIN_TOPOLOGIES:
        text = resources.files("poseflow.data").joinpath(f"{name}.toml").read_text()
        return parse_topology(text)
    path = Path(spec)
    if not path.is_file():
        raise FormatError(f"topology file not found: {path}")
    return parse_topology(path.read_text())
