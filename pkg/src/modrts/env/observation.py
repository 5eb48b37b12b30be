"""Player-side view of the game state.

An :class:`Observation` is a plain snapshot: scalar economy numbers, typed
counts, per-base worker tallies, and the enemy objects the player can see.
The 64x64 minimap bitplanes (friendly / enemy / selected-army occupancy,
values in {0, 1}) are built lazily because most consumers only want scalars.

With fog disabled every enemy object is visible. With fog enabled an enemy
object is visible iff it sits within the vision radius of at least one
friendly unit or building.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .state import GameState

MINIMAP_SIZE = 64


@dataclass(slots=True)
class BaseView:
    slot_index: int
    uid: int
    x: float
    y: float
    mineral_workers: int
    gas_workers: int
    has_extractor: bool
    larva: int
    boost_ready_in: int


@dataclass(slots=True)
class UnitView:
    uid: int
    type_name: str
    x: float
    y: float
    order: str
    role: str


@dataclass(slots=True)
class EnemySighting:
    type_name: str
    x: float
    y: float
    is_building: bool


@dataclass
class Observation:
    player: int
    tick: int
    map_size: int
    fog: bool
    minerals: float
    gas: float
    supply_used: int
    supply_cap: int
    larva_total: int
    boost_available: bool
    rally: tuple[float, float] | None
    unit_counts: dict[str, int]
    building_counts: dict[str, int]
    queue_counts: dict[str, int]
    produced: dict[str, int]
    enemy_unit_counts: dict[str, int]
    bases: list[BaseView]
    units: list[UnitView]
    enemy_sightings: list[EnemySighting]
    queue: list[tuple[str, int]]
    _minimap: np.ndarray | None = field(default=None, repr=False)
    # non-base friendly structure positions, kept for minimap rendering
    _own_structures: list[tuple[float, float]] = field(default_factory=list, repr=False)

    @property
    def supply_free(self) -> int:
        return self.supply_cap - self.supply_used

    def count(self, type_name: str) -> int:
        return (self.unit_counts.get(type_name, 0)
                + self.building_counts.get(type_name, 0)
                + self.queue_counts.get(type_name, 0))

    def minimap(self) -> np.ndarray:
        """(3, 64, 64) float32 bitplanes: friendly, enemy, selected army."""
        if self._minimap is None:
            planes = np.zeros((3, MINIMAP_SIZE, MINIMAP_SIZE), dtype=np.float32)
            scale = MINIMAP_SIZE / float(self.map_size)

            def put(plane: int, x: float, y: float) -> None:
                px = min(int(x * scale), MINIMAP_SIZE - 1)
                py = min(int(y * scale), MINIMAP_SIZE - 1)
                planes[plane, py, px] = 1.0

            for u in self.units:
                put(0, u.x, u.y)
                if u.role == "combat":
                    put(2, u.x, u.y)
            for b in self.bases:
                put(0, b.x, b.y)
            for extra in self._own_structures:
                put(0, extra[0], extra[1])
            for s in self.enemy_sightings:
                put(1, s.x, s.y)
            self._minimap = planes
        return self._minimap


def _visible_mask(state: GameState, player: int,
                  exs: np.ndarray, eys: np.ndarray) -> np.ndarray:
    """Boolean mask over enemy objects seen by the player's units/buildings."""
    ps = state.players[player]
    own = list(ps.units.values()) + list(ps.buildings.values())
    if not own or exs.size == 0:
        return np.zeros(exs.size, dtype=bool)
    ox = np.fromiter((o.x for o in own), dtype=np.float64, count=len(own))
    oy = np.fromiter((o.y for o in own), dtype=np.float64, count=len(own))
    vis = np.fromiter((state.roster.types[o.type_name].vision for o in own),
                      dtype=np.float64, count=len(own))
    d2 = (ox[:, None] - exs[None, :]) ** 2 + (oy[:, None] - eys[None, :]) ** 2
    return (d2 <= (vis[:, None] ** 2)).any(axis=0)


def observe(state: GameState, player: int) -> Observation:
    """Build the player's observation for the current tick."""
    if player not in (0, 1):
        raise ValueError(f"invalid player id {player}")
    ps = state.players[player]
    enemy = state.players[1 - player]
    roster = state.roster

    counts = _worker_tallies(state, player)
    extractors = {b.slot_index for b in ps.buildings.values()
                  if b.type_name == "extractor"}
    bases = [
        BaseView(
            slot_index=b.slot_index, uid=b.uid, x=b.x, y=b.y,
            mineral_workers=counts.get((b.slot_index, "minerals"), 0),
            gas_workers=counts.get((b.slot_index, "gas"), 0),
            has_extractor=b.slot_index in extractors,
            larva=b.larva,
            boost_ready_in=max(0, b.boost_ready - state.tick),
        )
        for b in sorted(ps.bases(), key=lambda b: b.uid)
    ]

    unit_counts: dict[str, int] = {}
    units: list[UnitView] = []
    for u in sorted(ps.units.values(), key=lambda u: u.uid):
        unit_counts[u.type_name] = unit_counts.get(u.type_name, 0) + 1
        units.append(UnitView(u.uid, u.type_name, u.x, u.y, u.order,
                              roster.types[u.type_name].role))
    building_counts: dict[str, int] = {}
    structures: list[tuple[float, float]] = []
    for b in ps.buildings.values():
        building_counts[b.type_name] = building_counts.get(b.type_name, 0) + 1
        if b.type_name != "base":
            structures.append((b.x, b.y))
    queue_counts: dict[str, int] = {}
    for q in ps.queue:
        queue_counts[q.type_name] = queue_counts.get(q.type_name, 0) + 1

    e_objs = (sorted(enemy.units.values(), key=lambda u: u.uid)
              + sorted(enemy.buildings.values(), key=lambda b: b.uid))
    n_eu = len(enemy.units)
    if state.config.fog_enabled and e_objs:
        exs = np.fromiter((o.x for o in e_objs), dtype=np.float64, count=len(e_objs))
        eys = np.fromiter((o.y for o in e_objs), dtype=np.float64, count=len(e_objs))
        mask = _visible_mask(state, player, exs, eys)
    else:
        mask = np.ones(len(e_objs), dtype=bool)

    enemy_unit_counts: dict[str, int] = {}
    sightings: list[EnemySighting] = []
    for i, o in enumerate(e_objs):
        if not mask[i]:
            continue
        is_building = i >= n_eu
        sightings.append(EnemySighting(o.type_name, o.x, o.y, is_building))
        if not is_building:
            enemy_unit_counts[o.type_name] = enemy_unit_counts.get(o.type_name, 0) + 1

    obs = Observation(
        player=player,
        tick=state.tick,
        map_size=state.config.map_size,
        fog=state.config.fog_enabled,
        minerals=ps.minerals,
        gas=ps.gas,
        supply_used=ps.supply_used,
        supply_cap=ps.supply_cap,
        larva_total=sum(b.larva for b in bases),
        boost_available=any(b.boost_ready_in == 0 for b in bases),
        rally=ps.rally,
        unit_counts=unit_counts,
        building_counts=building_counts,
        queue_counts=queue_counts,
        produced=dict(ps.produced),
        enemy_unit_counts=enemy_unit_counts,
        bases=bases,
        units=units,
        enemy_sightings=sightings,
        queue=[(q.type_name, q.done_tick) for q in ps.queue],
    )
    obs._own_structures = structures
    return obs


def _worker_tallies(state: GameState, player: int) -> dict[tuple[int, str], int]:
    ps = state.players[player]
    worker = state.roster.worker_name
    counts: dict[tuple[int, str], int] = {}
    for u in ps.units.values():
        if u.type_name == worker and u.base_index >= 0:
            key = (u.base_index, u.resource)
            counts[key] = counts.get(key, 0) + 1
    return counts
