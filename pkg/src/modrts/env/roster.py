"""Unit roster: stats, counter matrix, economy constants.

A roster is loaded from a versioned YAML file (see ``data/roster.yaml`` for
the documented schema). Units and buildings share the UnitStats record;
buildings have ``speed == 0`` and ``is_building == True``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import yaml


class RosterError(ValueError):
    """Raised when a roster file violates the schema or its invariants."""


@dataclass(frozen=True)
class UnitStats:
    name: str
    mineral_cost: int
    gas_cost: int
    supply_cost: int
    hp: float
    attack: float
    speed: float
    range: float
    vision: float
    build_time: int
    is_building: bool = False
    tech_requirement: str | None = None
    supply_provided: int = 0
    role: str = "combat"  # worker | scout | combat | building
    ability: str | None = None
    counter_bonus: dict[str, float] = field(default_factory=dict)

    def bonus_against(self, target_type: str) -> float:
        return self.counter_bonus.get(target_type, 1.0)


@dataclass(frozen=True)
class AbilitySpec:
    name: str
    damage_taken_factor: float
    duration: int
    cooldown: int


@dataclass(frozen=True)
class Economy:
    mineral_rate: float
    gas_rate: float
    mineral_capacity: int
    gas_capacity: int
    larva_cap: int
    larva_interval: int
    boost_amount: int
    boost_cooldown: int
    supply_ceiling: int


@dataclass(frozen=True)
class StartSetup:
    workers: int
    watchers: int
    minerals: float
    gas: float


@dataclass(frozen=True)
class Roster:
    version: int
    types: dict[str, UnitStats]          # units and buildings, by name
    economy: Economy
    abilities: dict[str, AbilitySpec]
    start: StartSetup

    @property
    def unit_names(self) -> list[str]:
        return [n for n, t in self.types.items() if not t.is_building]

    @property
    def building_names(self) -> list[str]:
        return [n for n, t in self.types.items() if t.is_building]

    @property
    def combat_names(self) -> list[str]:
        return [n for n, t in self.types.items() if t.role == "combat" and not t.is_building]

    @property
    def worker_name(self) -> str:
        return next(n for n, t in self.types.items() if t.role == "worker")

    @property
    def scout_name(self) -> str:
        return next(n for n, t in self.types.items() if t.role == "scout")


def _unit_from_entry(name: str, raw: dict, is_building: bool) -> UnitStats:
    try:
        return UnitStats(
            name=name,
            mineral_cost=int(raw["minerals"]),
            gas_cost=int(raw.get("gas", 0)),
            supply_cost=int(raw.get("supply", 0)),
            hp=float(raw["hp"]),
            attack=float(raw.get("attack", 0.0)),
            speed=float(raw.get("speed", 0.0)),
            range=float(raw.get("range", 0.0)),
            vision=float(raw.get("vision", 8.0)),
            build_time=int(raw["build_time"]),
            is_building=is_building,
            tech_requirement=raw.get("tech"),
            supply_provided=int(raw.get("supply_provided", 0)),
            role="building" if is_building else raw.get("role", "combat"),
            ability=raw.get("ability"),
            counter_bonus={str(k): float(v) for k, v in raw.get("counters", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RosterError(f"bad roster entry {name!r}: {exc}") from exc


def _validate(roster: Roster) -> None:
    for t in roster.types.values():
        if t.mineral_cost < 0 or t.gas_cost < 0 or t.supply_cost < 0:
            raise RosterError(f"{t.name}: costs must be non-negative")
        for target, mult in t.counter_bonus.items():
            if mult <= 0:
                raise RosterError(f"{t.name}: counter multiplier vs {target} must be > 0")
            if target not in roster.types:
                raise RosterError(f"{t.name}: counter target {target!r} not in roster")
        if t.tech_requirement is not None and t.tech_requirement not in roster.types:
            raise RosterError(f"{t.name}: unknown tech requirement {t.tech_requirement!r}")
    workers = [t for t in roster.types.values() if t.role == "worker"]
    if len(workers) != 1:
        raise RosterError("roster needs exactly one worker type")
    if not roster.building_names:
        raise RosterError("roster needs at least one building type")
    combat = roster.combat_names
    if len(combat) < 4:
        raise RosterError("roster needs at least 4 combat types")
    # counter matrix must be non-symmetric: some pair with unequal bonuses
    asym = any(
        roster.types[a].bonus_against(b) != roster.types[b].bonus_against(a)
        for a in combat
        for b in combat
        if a != b
    )
    if not asym:
        raise RosterError("counter matrix is symmetric; compositions would not matter")


def load_roster(source: str | dict | None = None) -> Roster:
    """Load a roster from a YAML path, a parsed dict, or the packaged default."""
    if source is None:
        raw = yaml.safe_load(resources.files("modrts.data").joinpath("roster.yaml").read_text())
    elif isinstance(source, dict):
        raw = source
    else:
        with open(source) as fh:
            raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "version" not in raw:
        raise RosterError("roster file needs a top-level version field")

    types: dict[str, UnitStats] = {}
    for name, entry in raw.get("units", {}).items():
        types[name] = _unit_from_entry(name, entry, is_building=False)
    for name, entry in raw.get("buildings", {}).items():
        types[name] = _unit_from_entry(name, entry, is_building=True)

    eco = raw["economy"]
    abilities = {
        name: AbilitySpec(
            name=name,
            damage_taken_factor=float(spec["damage_taken_factor"]),
            duration=int(spec["duration"]),
            cooldown=int(spec["cooldown"]),
        )
        for name, spec in raw.get("abilities", {}).items()
    }
    start = raw["start"]
    roster = Roster(
        version=int(raw["version"]),
        types=types,
        economy=Economy(
            mineral_rate=float(eco["mineral_rate"]),
            gas_rate=float(eco["gas_rate"]),
            mineral_capacity=int(eco["mineral_capacity"]),
            gas_capacity=int(eco["gas_capacity"]),
            larva_cap=int(eco["larva_cap"]),
            larva_interval=int(eco["larva_interval"]),
            boost_amount=int(eco["boost_amount"]),
            boost_cooldown=int(eco["boost_cooldown"]),
            supply_ceiling=int(eco["supply_ceiling"]),
        ),
        abilities=abilities,
        start=StartSetup(
            workers=int(start["workers"]),
            watchers=int(start["watchers"]),
            minerals=float(start["minerals"]),
            gas=float(start["gas"]),
        ),
    )
    _validate(roster)
    return roster


_DEFAULT_ROSTER: Roster | None = None


def default_roster() -> Roster:
    """Packaged default roster (cached; rosters are immutable)."""
    global _DEFAULT_ROSTER
    if _DEFAULT_ROSTER is None:
        _DEFAULT_ROSTER = load_roster()
    return _DEFAULT_ROSTER
