#!/usr/bin/env python3
"""
Палитра семантических категорий: зарезервированные id + 62 категории объектов.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import InvalidInputError

RGB = Tuple[int, int, int]

VOID_ID = 0
WALL_ID = 1
DOOR_ID = 2
WINDOW_ID = 3
FLOOR_ID = 4
CEILING_ID = 5
FIRST_OBJECT_ID = 6
OBJECT_CATEGORY_COUNT = 62

RESERVED: Tuple[Tuple[str, RGB], ...] = (
    ("void", (0, 0, 0)),
    ("wall", (120, 120, 120)),
    ("door", (8, 255, 51)),
    ("window", (230, 230, 230)),
    ("floor", (80, 50, 50)),
    ("ceiling", (120, 120, 80)),
)

DEFAULT_OBJECTS: Tuple[Tuple[str, RGB], ...] = (
    ("bed", (204, 5, 255)),
    ("nightstand", (146, 111, 194)),
    ("wardrobe", (7, 255, 255)),
    ("chest_of_drawers", (6, 51, 255)),
    ("sofa", (11, 102, 255)),
    ("coffee_table", (0, 255, 112)),
    ("cabinet", (224, 5, 255)),
    ("swivel_chair", (10, 0, 255)),
    ("desk", (10, 255, 71)),
    ("crt_screen", (122, 0, 255)),
    ("screen_door", (0, 173, 255)),
    ("painting", (255, 6, 51)),
    ("curtain", (255, 51, 7)),
    ("rug", (255, 9, 92)),
    ("mirror", (220, 220, 220)),
    ("column", (255, 8, 41)),
    ("sideboard", (255, 112, 0)),
    ("bench", (194, 255, 0)),
    ("stool", (0, 214, 255)),
    ("shelf", (255, 7, 71)),
    ("hood", (0, 153, 255)),
    ("chandelier", (0, 31, 255)),
    ("sconce", (0, 41, 255)),
    ("shower", (0, 133, 255)),
    ("toilet", (0, 255, 133)),
    ("sink", (0, 163, 255)),
    ("tub", (102, 8, 255)),
    ("refrigerator", (20, 255, 0)),
    ("armchair", (8, 255, 214)),
    ("dishwasher", (214, 255, 0)),
    ("stairs", (255, 224, 0)),
    ("kitchen_island", (0, 255, 41)),
    ("plant", (204, 255, 4)),
    ("pedestal", (255, 122, 8)),
    ("fireplace", (250, 10, 15)),
    ("tv", (0, 255, 194)),
    ("computer", (0, 255, 173)),
    ("stove", (51, 255, 0)),
    ("seat", (7, 255, 224)),
    ("cushion", (255, 194, 7)),
    ("toy", (255, 0, 31)),
    ("radiator", (255, 214, 0)),
    ("fan", (0, 245, 255)),
    ("signboard", (255, 5, 153)),
    ("clock", (102, 255, 0)),
    ("bannister", (0, 122, 255)),
    ("basket", (92, 255, 0)),
    ("trash_can", (173, 0, 255)),
    ("countertop", (0, 143, 255)),
    ("book", (255, 163, 0)),
    ("fence", (255, 184, 6)),
    ("bulletin_board", (184, 255, 0)),
    ("lamp", (224, 255, 8)),
    ("chair", (204, 70, 3)),
    ("table", (255, 6, 82)),
    ("bookcase", (255, 92, 0)),
    ("pillow", (0, 235, 255)),
    ("towel", (255, 0, 102)),
    ("vase", (0, 255, 245)),
    ("speaker", (133, 0, 255)),
    ("spotlight", (255, 0, 163)),
    ("other", (100, 85, 144)),
)


@dataclass(frozen=True)
class CategoryPalette:
    """Упорядоченные пары (имя, RGB); id категории = позиция в списке."""

    entries: Tuple[Tuple[str, RGB], ...]

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise InvalidInputError("; ".join(errors))

    def validate(self) -> List[str]:
        errors = []
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            errors.append("palette names must be unique")
        if tuple(n for n, _ in self.entries[: len(RESERVED)]) != tuple(n for n, _ in RESERVED):
            errors.append("palette must start with the reserved ids " + ", ".join(n for n, _ in RESERVED))
        if len(self.entries) - len(RESERVED) != OBJECT_CATEGORY_COUNT:
            errors.append(f"palette must hold exactly {OBJECT_CATEGORY_COUNT} object categories")
        return errors

    def __len__(self) -> int:
        return len(self.entries)

    def is_valid_id(self, category: int) -> bool:
        return 0 <= int(category) < len(self.entries)

    def is_object(self, category: int) -> bool:
        return FIRST_OBJECT_ID <= int(category) < len(self.entries)

    def name(self, category: int) -> str:
        return self.entries[category][0]

    def id_of(self, name: str) -> int:
        for idx, (entry_name, _) in enumerate(self.entries):
            if entry_name == name:
                return idx
        raise InvalidInputError(f"unknown category '{name}'")

    def colors(self) -> np.ndarray:
        """(len, 3) uint8 таблица цветов."""
        return np.array([rgb for _, rgb in self.entries], dtype=np.uint8)

    def albedo(self) -> np.ndarray:
        """Цвета как альбедо в [0, 1]."""
        return self.colors().astype(np.float64) / 255.0

    def object_ids(self) -> List[int]:
        return list(range(FIRST_OBJECT_ID, len(self.entries)))

    def to_dict(self) -> Dict:
        return {"entries": [{"name": name, "rgb": list(rgb)} for name, rgb in self.entries]}

    @classmethod
    def from_dict(cls, data: Dict) -> "CategoryPalette":
        entries = tuple((item["name"], tuple(int(c) for c in item["rgb"])) for item in data["entries"])
        return cls(entries=entries)

    @classmethod
    def from_objects(cls, objects: Sequence[Tuple[str, RGB]]) -> "CategoryPalette":
        return cls(entries=tuple(RESERVED) + tuple((n, tuple(c)) for n, c in objects))


_DEFAULT: Optional[CategoryPalette] = None


def default_palette() -> CategoryPalette:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = CategoryPalette.from_objects(DEFAULT_OBJECTS)
    return _DEFAULT
