"""Agent memory: observation bookkeeping, notifications, macro concretization.

The memory store is the hub between decision modules. Every tick it is
refreshed from the player's observation plus that player's env events; the
modules then read counters from it, post notifications to each other through
it, and the scheduler concretizes their macro proposals against it.

Under fog the enemy-unit counts come from whatever estimate the scouting
module last wrote back (sightings-based EMA); with fog off they are ground
truth straight from the observation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from ..env.observation import BaseView, EnemySighting, Observation, UnitView
from ..env.state import Event
from .macros import MacroCall, MacroInfeasible, MacroRegistry, expand

MODULES = ("worker", "build_order", "tactics", "scouting", "micro")


@dataclass(frozen=True)
class Notification:
    sender: str
    kind: str
    payload: Any
    tick: int


@dataclass
class MemoryStore:
    player: int
    map_size: int
    base_slots: tuple[tuple[int, int], ...]
    modules: tuple[str, ...] = MODULES
    fog: bool = False

    time: int = 0
    minerals: float = 0.0
    gas: float = 0.0
    supply_used: int = 0
    supply_cap: int = 0
    larva_total: int = 0
    boost_available: bool = False
    rally: tuple[float, float] | None = None

    friendly_bases: list[BaseView] = field(default_factory=list)
    friendly_units: dict[str, int] = field(default_factory=dict)
    buildings: dict[str, int] = field(default_factory=dict)
    build_queue: list[tuple[str, int]] = field(default_factory=list)
    produced: dict[str, int] = field(default_factory=dict)
    army: list[UnitView] = field(default_factory=list)
    scouts: list[UnitView] = field(default_factory=list)

    enemy_units: dict[str, int] = field(default_factory=dict)
    enemy_units_exact: bool = True
    enemy_sightings: list[EnemySighting] = field(default_factory=list)
    enemy_bases: dict[int, int] = field(default_factory=dict)  # slot -> last-seen tick

    game_over: bool = False
    minimap: Any = None  # (3, 64, 64) bitplanes from the latest observation
    notifications: list[Notification] = field(default_factory=list)
    _cursors: dict[str, int] = field(default_factory=dict)

    # ------------------------------------------------------------------ refresh

    def refresh(self, obs: Observation, events: list[Event]) -> "MemoryStore":
        """Fold one tick's observation and own-player events into memory."""
        self.time = obs.tick
        self.minerals = obs.minerals
        self.gas = obs.gas
        self.supply_used = obs.supply_used
        self.supply_cap = obs.supply_cap
        self.larva_total = obs.larva_total
        self.boost_available = obs.boost_available
        self.rally = obs.rally
        self.fog = obs.fog

        self.friendly_bases = list(obs.bases)
        self.friendly_units = dict(obs.unit_counts)
        self.buildings = dict(obs.building_counts)
        self.produced = dict(obs.produced)
        self.army = [u for u in obs.units if u.role == "combat"]
        self.scouts = [u for u in obs.units if u.role == "scout"]

        for e in events:
            if e.kind == "game-over":
                self.game_over = True
            if e.player != self.player:
                continue
            if e.kind in ("unit-produced", "building-complete"):
                self._drop_queue_entry(e.data["type"])
            elif e.kind == "unit-died" and e.data.get("reason") == "lost-in-production":
                self._drop_queue_entry(e.data["type"])
        # reconcile against ground truth (covers entries the events missed,
        # e.g. a queued base cancelled because its slot got taken)
        if sorted(self.build_queue) != sorted(obs.queue):
            self.build_queue = list(obs.queue)

        self.minimap = obs.minimap()
        self.enemy_sightings = list(obs.enemy_sightings)
        if not obs.fog:
            self.enemy_units = dict(obs.enemy_unit_counts)
            self.enemy_units_exact = True
        else:
            self.enemy_units_exact = False
        self._update_enemy_bases(obs)
        return self

    def _drop_queue_entry(self, type_name: str) -> None:
        matches = [i for i, (t, _) in enumerate(self.build_queue) if t == type_name]
        if matches:
            best = min(matches, key=lambda i: self.build_queue[i][1])
            self.build_queue.pop(best)

    def _update_enemy_bases(self, obs: Observation) -> None:
        own_slots = {b.slot_index for b in self.friendly_bases}
        seen_base_slots = set()
        for s in obs.enemy_sightings:
            if s.is_building:
                slot = self._slot_at(s.x, s.y)
                if slot is not None:
                    seen_base_slots.add(slot)
                    self.enemy_bases[slot] = obs.tick
        if not obs.fog:
            # ground truth: forget bases that no longer exist
            self.enemy_bases = {s: t for s, t in self.enemy_bases.items()
                                if s in seen_base_slots}
        else:
            # forget a remembered base if we can currently see its slot empty
            visible = self._visible_cells_hint(obs)
            for slot in list(self.enemy_bases):
                if slot in seen_base_slots or slot in own_slots:
                    continue
                sx, sy = self.base_slots[slot]
                if (sx, sy) in visible:
                    del self.enemy_bases[slot]
        for slot in own_slots:
            self.enemy_bases.pop(slot, None)

    def _slot_at(self, x: float, y: float) -> int | None:
        for i, (sx, sy) in enumerate(self.base_slots):
            if abs(sx - x) < 1.5 and abs(sy - y) < 1.5:
                return i
        return None

    def _visible_cells_hint(self, obs: Observation) -> set[tuple[int, int]]:
        """Base-slot cells currently inside some friendly unit's vision.

        Uses a conservative 8-cell radius for every unit rather than per-type
        vision; under-forgetting a dead base is harmless, over-forgetting is not.
        """
        cells = set()
        for sx, sy in self.base_slots:
            for u in obs.units:
                if math.hypot(sx - u.x, sy - u.y) <= 8.0:
                    cells.add((sx, sy))
                    break
        return cells

    # ------------------------------------------------------------ notifications

    def post_notification(self, n: Notification) -> "MemoryStore":
        if n.sender not in self.modules:
            raise ValueError(f"unknown sender module {n.sender!r}")
        self.notifications.append(n)
        return self

    def consume_notifications(self, module: str) -> list[Notification]:
        """Notifications posted since this module last consumed, excluding its own."""
        cursor = self._cursors.get(module, 0)
        out = [n for n in self.notifications[cursor:] if n.sender != module]
        self._cursors[module] = len(self.notifications)
        return out

    # ------------------------------------------------------- derived quantities

    def set_enemy_estimate(self, counts: dict[str, float]) -> None:
        self.enemy_units = dict(counts)

    def army_supply(self, supply_costs: dict[str, int]) -> int:
        return sum(supply_costs.get(u.type_name, 0) for u in self.army)

    def army_center(self) -> tuple[float, float] | None:
        if not self.army:
            return None
        x = sum(u.x for u in self.army) / len(self.army)
        y = sum(u.y for u in self.army) / len(self.army)
        return (x, y)

    def main_base(self) -> BaseView | None:
        if not self.friendly_bases:
            return None
        return min(self.friendly_bases, key=lambda b: b.uid)

    def free_slots(self) -> list[int]:
        """Base slots not occupied by us or a known enemy base.

        A base we already queued still counts as free here (its slot is not in
        the observation); a duplicate build lands as a harmless env rejection.
        """
        own = {b.slot_index for b in self.friendly_bases}
        return [i for i in range(len(self.base_slots))
                if i not in own and i not in self.enemy_bases]

    def nearest_free_slot(self) -> int | None:
        """Closest free slot to the main base; ties broken by lowest slot index."""
        main = self.main_base()
        free = self.free_slots()
        if main is None or not free:
            return None
        return min(free, key=lambda i: (math.hypot(self.base_slots[i][0] - main.x,
                                                   self.base_slots[i][1] - main.y), i))

    def nearest_enemy_base_cell(self) -> tuple[float, float] | None:
        """Closest remembered enemy base to the main base (ties: lowest slot)."""
        main = self.main_base()
        if main is None or not self.enemy_bases:
            return None
        slot = min(self.enemy_bases,
                   key=lambda i: (math.hypot(self.base_slots[i][0] - main.x,
                                             self.base_slots[i][1] - main.y), i))
        x, y = self.base_slots[slot]
        return (float(x), float(y))

    # --------------------------------------------------------------- bindings

    def resolve_binding(self, name: str) -> Any:
        if name == "main_base":
            main = self.main_base()
            if main is None:
                raise MacroInfeasible("no friendly base for @main_base")
            return (main.x, main.y)
        if name == "free_slot":
            slot = self.nearest_free_slot()
            if slot is None:
                raise MacroInfeasible("no free base slot for @free_slot")
            x, y = self.base_slots[slot]
            return (float(x), float(y))
        if name == "army_center":
            center = self.army_center()
            if center is None:
                raise MacroInfeasible("no army for @army_center")
            return center
        raise MacroInfeasible(f"unknown binding @{name}")


def concretize(registry: MacroRegistry, call: MacroCall, mem: MemoryStore):
    """Expand a macro call against memory into a flat env-action list.

    Raises MacroInfeasible when a binding cannot be resolved; the scheduler
    drops such proposals with a logged event.
    """
    return expand(registry, call, mem.resolve_binding)


def new_memory(obs: Observation, base_slots: tuple[tuple[int, int], ...],
               modules: tuple[str, ...] = MODULES) -> MemoryStore:
    mem = MemoryStore(player=obs.player, map_size=obs.map_size,
                      base_slots=base_slots, modules=modules, fog=obs.fog)
    mem.refresh(obs, [])
    return mem
