"""Map definitions: square grid size, base slots, mirrored spawn pairs."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import yaml


class MapError(ValueError):
    pass


@dataclass(frozen=True)
class MapDef:
    map_id: str
    size: int
    base_slots: tuple[tuple[int, int], ...]
    spawn_pairs: tuple[tuple[int, int], ...]  # mirrored (slot_a, slot_b) index pairs

    def validate(self) -> None:
        if self.size < 16:
            raise MapError(f"{self.map_id}: map size must be >= 16, got {self.size}")
        if not 2 <= len(self.base_slots) <= 8:
            raise MapError(f"{self.map_id}: need 2..8 base slots, got {len(self.base_slots)}")
        for x, y in self.base_slots:
            if not (0 <= x < self.size and 0 <= y < self.size):
                raise MapError(f"{self.map_id}: base slot ({x},{y}) outside map")
        if not self.spawn_pairs:
            raise MapError(f"{self.map_id}: needs at least one spawn pair")
        for a, b in self.spawn_pairs:
            if a == b or not (0 <= a < len(self.base_slots) and 0 <= b < len(self.base_slots)):
                raise MapError(f"{self.map_id}: bad spawn pair ({a},{b})")


def load_maps(path: str | None = None) -> dict[str, MapDef]:
    if path is None:
        raw = yaml.safe_load(resources.files("modrts.data").joinpath("maps.yaml").read_text())
    else:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "version" not in raw:
        raise MapError("map file needs a top-level version field")
    out: dict[str, MapDef] = {}
    for map_id, entry in raw["maps"].items():
        mdef = MapDef(
            map_id=map_id,
            size=int(entry["size"]),
            base_slots=tuple((int(x), int(y)) for x, y in entry["base_slots"]),
            spawn_pairs=tuple((int(a), int(b)) for a, b in entry["spawns"]),
        )
        mdef.validate()
        out[map_id] = mdef
    return out


_DEFAULT_MAPS: dict[str, MapDef] | None = None


def default_maps() -> dict[str, MapDef]:
    global _DEFAULT_MAPS
    if _DEFAULT_MAPS is None:
        _DEFAULT_MAPS = load_maps()
    return _DEFAULT_MAPS


def get_map(map_id: str) -> MapDef:
    maps = default_maps()
    if map_id not in maps:
        raise MapError(f"unknown map {map_id!r}; have {sorted(maps)}")
    return maps[map_id]
