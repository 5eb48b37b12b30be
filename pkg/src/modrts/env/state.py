"""Game state containers and the canonical state hash.

Everything here is plain data; the rules live in ``engine``. All mutation goes
through the engine so that identical (config, action streams) give
bit-identical trajectories.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .maps import MapDef, get_map
from .roster import Roster, default_roster

MINIMAP_SIZE = 64


class ConfigError(ValueError):
    """Invalid environment configuration; message names the offending field."""


@dataclass(frozen=True)
class EnvConfig:
    map_id: str
    map_size: int = 64
    base_slots: tuple[tuple[int, int], ...] = ((8, 8), (56, 56), (8, 56), (56, 8))
    spawn_pairs: tuple[tuple[int, int], ...] = ((0, 1),)
    max_ticks: int = 1200
    fog_enabled: bool = False
    seed: int = 0
    income_multipliers: tuple[float, float] = (1.0, 1.0)  # per-player handicap

    def validate(self) -> None:
        if self.map_size < 16:
            raise ConfigError(f"map_size: must be >= 16, got {self.map_size}")
        if not 2 <= len(self.base_slots) <= 8:
            raise ConfigError(f"base_slots: need 2..8 slots, got {len(self.base_slots)}")
        if self.max_ticks <= 0:
            raise ConfigError(f"max_ticks: must be > 0, got {self.max_ticks}")
        for x, y in self.base_slots:
            if not (0 <= x < self.map_size and 0 <= y < self.map_size):
                raise ConfigError(f"base_slots: slot ({x},{y}) outside map")
        if not self.spawn_pairs:
            raise ConfigError("spawn_pairs: need at least one pair")
        for a, b in self.spawn_pairs:
            if a == b or not (0 <= a < len(self.base_slots) and 0 <= b < len(self.base_slots)):
                raise ConfigError(f"spawn_pairs: bad pair ({a},{b})")
        if any(m <= 0 for m in self.income_multipliers):
            raise ConfigError("income_multipliers: must be positive")

    @classmethod
    def from_map(cls, map_id: str, **overrides: Any) -> "EnvConfig":
        mdef: MapDef = get_map(map_id)
        cfg = cls(
            map_id=map_id,
            map_size=mdef.size,
            base_slots=mdef.base_slots,
            spawn_pairs=mdef.spawn_pairs,
            **overrides,
        )
        cfg.validate()
        return cfg


@dataclass(slots=True)
class Unit:
    uid: int
    type_name: str
    player: int
    x: float
    y: float
    hp: float
    # order: "idle" | "move" | "attack"; target only meaningful when not idle
    order: str = "idle"
    tx: float = 0.0
    ty: float = 0.0
    # workers only: (base_index, "minerals" | "gas")
    base_index: int = -1
    resource: str = ""

    def clone(self) -> "Unit":
        return Unit(self.uid, self.type_name, self.player, self.x, self.y, self.hp,
                    self.order, self.tx, self.ty, self.base_index, self.resource)


@dataclass(slots=True)
class Building:
    uid: int
    type_name: str
    player: int
    x: float
    y: float
    hp: float
    slot_index: int = -1      # bases: index into config.base_slots
    larva: int = 0            # bases only
    larva_next: int = 0       # tick of next natural larva
    boost_ready: int = 0      # tick when boost can fire again

    def clone(self) -> "Building":
        return Building(self.uid, self.type_name, self.player, self.x, self.y, self.hp,
                        self.slot_index, self.larva, self.larva_next, self.boost_ready)


@dataclass(slots=True)
class QueueEntry:
    type_name: str
    done_tick: int
    is_building: bool
    base_uid: int = -1        # units: producing base
    x: float = 0.0            # buildings: placement
    y: float = 0.0
    slot_index: int = -1

    def clone(self) -> "QueueEntry":
        return QueueEntry(self.type_name, self.done_tick, self.is_building,
                          self.base_uid, self.x, self.y, self.slot_index)


@dataclass(slots=True)
class PlayerState:
    minerals: float
    gas: float
    mined_minerals: float = 0.0
    mined_gas: float = 0.0
    spent_minerals: float = 0.0
    spent_gas: float = 0.0
    units: dict[int, Unit] = field(default_factory=dict)
    buildings: dict[int, Building] = field(default_factory=dict)
    queue: list[QueueEntry] = field(default_factory=list)
    supply_used: int = 0
    supply_cap: int = 0
    rally: Optional[tuple[float, float]] = None
    fortify_until: int = -1
    fortify_ready: int = 0
    produced: dict[str, int] = field(default_factory=dict)  # cumulative, by type

    def bases(self) -> list[Building]:
        return [b for b in self.buildings.values() if b.type_name == "base"]

    def queued_supply(self, roster: Roster) -> int:
        return sum(roster.types[q.type_name].supply_cost for q in self.queue if not q.is_building)

    def clone(self) -> "PlayerState":
        ps = PlayerState(self.minerals, self.gas, self.mined_minerals, self.mined_gas,
                         self.spent_minerals, self.spent_gas)
        ps.units = {k: u.clone() for k, u in self.units.items()}
        ps.buildings = {k: b.clone() for k, b in self.buildings.items()}
        ps.queue = [q.clone() for q in self.queue]
        ps.supply_used = self.supply_used
        ps.supply_cap = self.supply_cap
        ps.rally = self.rally
        ps.fortify_until = self.fortify_until
        ps.fortify_ready = self.fortify_ready
        ps.produced = dict(self.produced)
        return ps


@dataclass(slots=True)
class Event:
    kind: str                 # unit-produced | building-complete | unit-died |
    tick: int                 # base-lost | action-rejected | game-over
    player: int               # owner / acting player; -1 for global
    data: dict

    def to_record(self) -> list:
        return [self.kind, self.tick, self.player, self.data]


@dataclass(slots=True)
class GameState:
    config: EnvConfig
    roster: Roster
    tick: int
    players: list[PlayerState]
    next_uid: int
    rng: np.random.Generator
    spawn_slots: tuple[int, int]
    done: bool = False
    winner: Optional[int] = None  # 0 | 1 | None; with done=True, None means tie

    def clone(self) -> "GameState":
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = self.rng.bit_generator.state
        return GameState(
            config=self.config,
            roster=self.roster,
            tick=self.tick,
            players=[p.clone() for p in self.players],
            next_uid=self.next_uid,
            rng=rng,
            spawn_slots=self.spawn_slots,
            done=self.done,
            winner=self.winner,
        )


def _pack_floats(out: bytearray, *vals: float) -> None:
    out += struct.pack(f"<{len(vals)}d", *vals)


def canonical_bytes(state: GameState) -> bytes:
    """Deterministic byte serialization of everything that affects play."""
    out = bytearray()
    out += struct.pack("<qii", state.tick, state.next_uid, state.config.seed)
    out += struct.pack("<ii", state.spawn_slots[0], state.spawn_slots[1])
    out += struct.pack("<b", 1 if state.done else 0)
    out += struct.pack("<b", -1 if state.winner is None else state.winner)
    for ps in state.players:
        _pack_floats(out, ps.minerals, ps.gas, ps.mined_minerals, ps.mined_gas,
                     ps.spent_minerals, ps.spent_gas)
        out += struct.pack("<iii", ps.supply_used, ps.supply_cap, ps.fortify_until)
        out += struct.pack("<i", ps.fortify_ready)
        if ps.rally is not None:
            _pack_floats(out, ps.rally[0], ps.rally[1])
        for uid in sorted(ps.units):
            u = ps.units[uid]
            out += struct.pack("<i", uid) + u.type_name.encode()
            _pack_floats(out, u.x, u.y, u.hp, u.tx, u.ty)
            out += u.order.encode() + struct.pack("<i", u.base_index) + u.resource.encode()
        for uid in sorted(ps.buildings):
            b = ps.buildings[uid]
            out += struct.pack("<ii", uid, b.slot_index) + b.type_name.encode()
            _pack_floats(out, b.x, b.y, b.hp)
            out += struct.pack("<iii", b.larva, b.larva_next, b.boost_ready)
        for q in ps.queue:
            out += q.type_name.encode() + struct.pack("<iib", q.done_tick, q.base_uid, q.is_building)
            _pack_floats(out, q.x, q.y)
            out += struct.pack("<i", q.slot_index)
        for name in sorted(ps.produced):
            out += name.encode() + struct.pack("<i", ps.produced[name])
    # rng state: PCG64 state/inc integers
    st = state.rng.bit_generator.state["state"]
    out += str(st).encode()
    return bytes(out)


def state_hash(state: GameState) -> str:
    return hashlib.blake2b(canonical_bytes(state), digest_size=16).hexdigest()
