"""Deterministic mini-RTS environment: roster, maps, engine, observations."""
from .actions import (
    ALL_KINDS,
    ATTACK,
    BOOST,
    BUILD,
    CAMERA,
    EFFECT_KINDS,
    MOVE,
    NOOP_KINDS,
    PRODUCE,
    SCOUT_MOVE,
    SELECT,
    SET_RALLY,
    USE_ABILITY,
    ASSIGN_WORKER,
    EnvAction,
    action,
)
from .engine import new_game, step, supply_difference
from .maps import MapDef, default_maps, get_map, load_maps
from .observation import MINIMAP_SIZE, BaseView, EnemySighting, Observation, UnitView, observe
from .replay import ReplayError, ReplayLog, resimulate, verify
from .roster import Roster, UnitStats, default_roster, load_roster
from .state import (
    Building,
    ConfigError,
    EnvConfig,
    Event,
    GameState,
    PlayerState,
    Unit,
    state_hash,
)

__all__ = [
    "ALL_KINDS", "ATTACK", "BOOST", "BUILD", "CAMERA", "EFFECT_KINDS", "MOVE",
    "NOOP_KINDS", "PRODUCE", "SCOUT_MOVE", "SELECT", "SET_RALLY", "USE_ABILITY",
    "ASSIGN_WORKER", "EnvAction", "action",
    "new_game", "step", "supply_difference",
    "MapDef", "default_maps", "get_map", "load_maps",
    "MINIMAP_SIZE", "BaseView", "EnemySighting", "Observation", "UnitView", "observe",
    "ReplayError", "ReplayLog", "resimulate", "verify",
    "Roster", "UnitStats", "default_roster", "load_roster",
    "Building", "ConfigError", "EnvConfig", "Event", "GameState", "PlayerState",
    "Unit", "state_hash",
]
