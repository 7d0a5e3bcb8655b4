from __future__ import annotations

from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from voxshift.backend.world import VoxelWorld, OUT_OF_BOUNDS
from voxshift.errors import ConfigError

TRANSPARENT = "transparent"
ENTERABLE = "enterable"
STANDABLE = "standable"
SECTIONS = (TRANSPARENT, ENTERABLE, STANDABLE)
DEFAULT_CLASSIFICATION = "classification.cfg"


@dataclass(frozen=True)
class BlockClassification:
    """
    The three independent block-type lists driving visibility and movement.
    Membership queries are total: unknown names are in no list.
    """
    transparent: frozenset[str] = frozenset()
    enterable: frozenset[str] = frozenset()
    standable: frozenset[str] = frozenset()

    def is_transparent(self, name: object) -> bool:
        return name is OUT_OF_BOUNDS or name in self.transparent

    def is_enterable(self, name: object) -> bool:
        return name is not OUT_OF_BOUNDS and name in self.enterable

    def is_standable(self, name: object) -> bool:
        return name is not OUT_OF_BOUNDS and name in self.standable


def parse_classification(text: str) -> BlockClassification:
    """
    Parse the `[transparent]` / `[enterable]` / `[standable]` list format.
    Raises:
        ConfigError: On unknown sections or unparsable content.
    """
    parser = ConfigParser(allow_no_value=True, delimiters=("=",), comment_prefixes=("#",),
                          inline_comment_prefixes=("#",), empty_lines_in_values=False)
    parser.optionxform = str  # block names are case-sensitive
    try:
        parser.read_string(text)
    except ConfigParserError as e:
        raise ConfigError(f"Unreadable classification: {e}") from e

    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown classification sections: {sorted(unknown)}")

    lists = {section: frozenset(parser.options(section)) if parser.has_section(section) else frozenset()
             for section in SECTIONS}
    return BlockClassification(**lists)


def load_classification(path: Path | None = None) -> BlockClassification:
    """Read a classification file, or the packaged defaults when `path` is None."""
    if path is None:
        text = resources.files("voxshift.config").joinpath(DEFAULT_CLASSIFICATION).read_text(encoding="utf-8")
        return parse_classification(text)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as f:
        raise FileNotFoundError(f"Classification file not found at: {path}") from f
    return parse_classification(text)


@dataclass(frozen=True, eq=False)
class ClassifiedWorld:
    """
    Boolean grids derived once per (world, classification) pair, shaped like the world grid
    (sy, sz, sx). `headspace[y]` is set where y, y-1 are enterable and y-2 is standable.
    """
    world: VoxelWorld
    classification: BlockClassification
    transparent: np.ndarray = field(repr=False)
    enterable: np.ndarray = field(repr=False)
    standable: np.ndarray = field(repr=False)
    headspace: np.ndarray = field(repr=False)
    open: np.ndarray = field(repr=False)
    opaque: np.ndarray = field(repr=False)


def classify_world(world: VoxelWorld, classification: BlockClassification) -> ClassifiedWorld:
    """Look up every palette entry once and broadcast the lists over the grid."""
    def lut(members: frozenset[str]) -> np.ndarray:
        return np.array([name in members for name in world.palette], dtype=bool)

    transparent = lut(classification.transparent)[world.grid]
    enterable = lut(classification.enterable)[world.grid]
    standable = lut(classification.standable)[world.grid]

    headspace = np.zeros_like(enterable)
    headspace[2:] = enterable[2:] & enterable[1:-1] & standable[:-2]

    # open blocks are air-like: rays pass and avatars fit
    open_ = transparent & enterable
    opaque = ~transparent
    for arr in (transparent, enterable, standable, headspace, open_, opaque):
        arr.setflags(write=False)
    return ClassifiedWorld(world, classification, transparent, enterable, standable, headspace, open_, opaque)
