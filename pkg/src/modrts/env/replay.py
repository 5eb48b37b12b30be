"""Replay logs: record per-tick actions, re-simulate, verify by state hash.

A replay is JSON lines: a header with the full game config, one record per
tick that had any actions, and a footer with the final tick, winner, and the
canonical state hash. Because the engine is deterministic, re-running the
logged actions from the same config must reproduce the exact final hash;
``verify`` checks that.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .actions import EnvAction
from .engine import new_game, step
from .roster import Roster
from .state import EnvConfig, GameState, state_hash

FORMAT_VERSION = 1


class ReplayError(ValueError):
    """Raised for malformed or unverifiable replay files."""


class ReplayLog:
    """Accumulates one game's actions; write with save(), load with load()."""

    def __init__(self, config: EnvConfig):
        self.config = config
        self.ticks: dict[int, list[list[list]]] = {}
        self.final_tick: int | None = None
        self.winner: int | None = None
        self.final_hash: str | None = None

    def record(self, tick: int, per_player_actions: list[list[EnvAction]]) -> None:
        if any(per_player_actions[p] for p in (0, 1)):
            self.ticks[tick] = [[a.to_record() for a in per_player_actions[p]]
                                for p in (0, 1)]

    def finalize(self, state: GameState) -> None:
        self.final_tick = state.tick
        self.winner = state.winner
        self.final_hash = state_hash(state)

    def save(self, path: str | Path) -> None:
        if self.final_hash is None:
            raise ReplayError("replay not finalized; call finalize(state) first")
        cfg = dataclasses.asdict(self.config)
        lines = [json.dumps({"kind": "header", "version": FORMAT_VERSION,
                             "config": cfg})]
        for tick in sorted(self.ticks):
            lines.append(json.dumps({"kind": "tick", "tick": tick,
                                     "actions": self.ticks[tick]}))
        lines.append(json.dumps({"kind": "end", "tick": self.final_tick,
                                 "winner": self.winner, "hash": self.final_hash}))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ReplayLog":
        raw = Path(path).read_text().splitlines()
        if not raw:
            raise ReplayError(f"empty replay file: {path}")
        header = json.loads(raw[0])
        if header.get("kind") != "header":
            raise ReplayError("replay must start with a header record")
        if header.get("version") != FORMAT_VERSION:
            raise ReplayError(f"unsupported replay version {header.get('version')!r}")
        cfg = header["config"]
        cfg["base_slots"] = tuple(tuple(s) for s in cfg["base_slots"])
        cfg["spawn_pairs"] = tuple(tuple(p) for p in cfg["spawn_pairs"])
        cfg["income_multipliers"] = tuple(cfg["income_multipliers"])
        log = cls(EnvConfig(**cfg))
        for line in raw[1:]:
            rec = json.loads(line)
            if rec["kind"] == "tick":
                log.ticks[int(rec["tick"])] = rec["actions"]
            elif rec["kind"] == "end":
                log.final_tick = int(rec["tick"])
                log.winner = rec["winner"]
                log.final_hash = rec["hash"]
            else:
                raise ReplayError(f"unknown replay record kind {rec['kind']!r}")
        if log.final_hash is None:
            raise ReplayError("replay has no end record")
        return log


def resimulate(log: ReplayLog, roster: Roster | None = None) -> GameState:
    """Re-run the logged actions from the logged config; return final state."""
    if log.final_tick is None:
        raise ReplayError("replay has no end record")
    state = new_game(log.config, roster)
    while not state.done and state.tick < log.final_tick:
        recs = log.ticks.get(state.tick)
        if recs is None:
            acts: list[list[EnvAction]] = [[], []]
        else:
            acts = [[EnvAction.from_record(r) for r in recs[p]] for p in (0, 1)]
        step(state, acts)
    return state


def verify(log: ReplayLog, roster: Roster | None = None) -> bool:
    """True iff re-simulation reproduces the recorded final state hash."""
    final = resimulate(log, roster)
    return (state_hash(final) == log.final_hash
            and final.tick == log.final_tick
            and final.winner == log.winner)
