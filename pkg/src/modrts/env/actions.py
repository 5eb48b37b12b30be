"""Env-action vocabulary.

Actions are small tagged tuples so they serialize cleanly into replay logs.
``camera`` and ``select`` are deliberate no-ops: macro expansions keep them so
the APM budget charges the same action counts a human interface would.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

# effectful kinds
MOVE = "move"                  # (cell)            move all combat units, no engaging
ATTACK = "attack"              # (cell)            attack-move all combat units
PRODUCE = "produce"            # (unit_type)       queue one unit at a base with larva
BUILD = "build"                # (structure, cell) queue a structure
ASSIGN_WORKER = "assign_worker"  # (base_index, resource) reassign one worker
SET_RALLY = "set_rally"        # (cell)
BOOST = "boost"                # (cell)            production boost at the base nearest cell
USE_ABILITY = "use_ability"    # (ability)
SCOUT_MOVE = "scout_move"      # (unit_id, cell)

# no-op kinds (APM accounting only)
CAMERA = "camera"              # (cell)
SELECT = "select"              # (group tag)

NOOP_KINDS = frozenset({CAMERA, SELECT})
EFFECT_KINDS = frozenset(
    {MOVE, ATTACK, PRODUCE, BUILD, ASSIGN_WORKER, SET_RALLY, BOOST, USE_ABILITY, SCOUT_MOVE}
)
ALL_KINDS = NOOP_KINDS | EFFECT_KINDS


@dataclass(frozen=True)
class EnvAction:
    kind: str
    args: tuple[Any, ...] = ()

    def to_record(self) -> list:
        return [self.kind, *(list(a) if isinstance(a, tuple) else a for a in self.args)]

    @classmethod
    def from_record(cls, rec: list) -> "EnvAction":
        kind, *args = rec
        return cls(kind, tuple(tuple(a) if isinstance(a, list) else a for a in args))


def action(kind: str, *args: Any) -> EnvAction:
    if kind not in ALL_KINDS:
        raise ValueError(f"unknown env action kind {kind!r}")
    return EnvAction(kind, args)
