"""Self-play opponent pool: scripted seeds, snapshot growth, uniform sampling.

The pool is append-only and its members immutable: a random agent, scripted
agents referenced by build-script name, and learned agents referenced by
checkpoint file + content hash (never parameter copies). Training samples
opponents uniformly from here; evaluation bots are built in the evaluation
harness and never enter the pool, so the training agent cannot meet them
before test time.
"""
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .agents import (
    BuildOrderSpace,
    MacroCall,
    MemoryStore,
    MicroModule,
    ModularAgent,
    ScoutingModule,
    WorkerModule,
    build_order_mask,
    learned_agent,
    scripted_agent,
    seed_script_names,
)
from .agents.scripted import production_call
from .env.roster import Roster, default_roster
from .env.state import EnvConfig
from .nn import Params, checkpoint_hash, load_checkpoint, save_checkpoint

RANDOM_ID = "random"
MANIFEST_NAME = "pool.jsonl"


class PoolError(ValueError):
    """Duplicate member id, missing checkpoint, or integrity failure."""


@dataclass(frozen=True)
class AgentSnapshot:
    """One immutable pool member."""
    id: str
    kind: str                       # "random" | "scripted" | "learned"
    script: str | None = None       # scripted: build-script name
    checkpoint: str | None = None   # learned: checkpoint file path
    content_hash: str | None = None
    stage: str | None = None        # learned: training-stage tag
    creation_step: int = 0

    def to_record(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_record(cls, record: dict) -> "AgentSnapshot":
        return cls(**record)


class OpponentPool:
    """Append-only member list plus a JSONL manifest for resumption.

    Insertion is serialized; ``members()`` returns a consistent copy so
    concurrent samplers never see a half-updated list.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._members: list[AgentSnapshot] = []
        self._ids: set[str] = set()
        self._lock = threading.Lock()

    @property
    def manifest_path(self) -> Path:
        return self.directory / MANIFEST_NAME

    def __len__(self) -> int:
        with self._lock:
            return len(self._members)

    def members(self) -> tuple[AgentSnapshot, ...]:
        with self._lock:
            return tuple(self._members)

    def last_snapshot_step(self) -> int:
        with self._lock:
            steps = [m.creation_step for m in self._members if m.kind == "learned"]
        return max(steps, default=0)

    def add(self, snap: AgentSnapshot) -> None:
        with self._lock:
            if snap.id in self._ids:
                raise PoolError(f"duplicate pool member id {snap.id!r}")
            self._members.append(snap)
            self._ids.add(snap.id)
            with self.manifest_path.open("a") as fh:
                fh.write(json.dumps(snap.to_record(), sort_keys=True) + "\n")


def init_pool(directory: str | Path,
              scripts: tuple[str, ...] | None = None) -> OpponentPool:
    """Fresh pool seeded with the random agent plus the scripted set."""
    scripts = tuple(scripts) if scripts is not None else tuple(seed_script_names())
    if not scripts:
        raise PoolError("scripted seed set must be nonempty")
    pool = OpponentPool(directory)
    if pool.manifest_path.exists():
        pool.manifest_path.unlink()  # a fresh init discards any stale manifest
    pool.add(AgentSnapshot(id=RANDOM_ID, kind="random"))
    for name in scripts:
        pool.add(AgentSnapshot(id=f"scripted:{name}", kind="scripted", script=name))
    return pool


def load_pool(directory: str | Path) -> OpponentPool:
    """Resume a pool from its manifest, verifying checkpoint content hashes."""
    pool = OpponentPool(directory)
    path = pool.manifest_path
    if not path.exists():
        raise PoolError(f"no pool manifest at {path}")
    members = [AgentSnapshot.from_record(json.loads(line))
               for line in path.read_text().splitlines() if line.strip()]
    path.unlink()  # add() rewrites the manifest line by line
    for snap in members:
        if snap.kind == "learned":
            actual = checkpoint_hash(snap.checkpoint)
            if actual != snap.content_hash:
                raise PoolError(f"{snap.id}: checkpoint hash {actual} does not "
                                f"match manifest {snap.content_hash}")
        pool.add(snap)
    return pool


def maybe_snapshot(pool: OpponentPool, module_params: dict[str, Params],
                   policy_steps: int, interval: int, stage: str = "",
                   meta: dict | None = None) -> AgentSnapshot | None:
    """Insert a snapshot iff ``policy_steps`` crossed a multiple of ``interval``.

    Crossing several multiples between calls stores only the latest version
    (the intermediate parameters no longer exist). Returns the new member, or
    None when no boundary was crossed.
    """
    if interval <= 0:
        raise PoolError(f"snapshot interval must be positive, got {interval}")
    if policy_steps // interval <= pool.last_snapshot_step() // interval:
        return None
    snap_id = f"learned-{policy_steps:09d}"
    path = pool.directory / f"{snap_id}.ckpt"
    full_meta = {"stage": stage, "policy_steps": policy_steps, **(meta or {})}
    digest = save_checkpoint(path, merge_module_params(module_params), full_meta)
    snap = AgentSnapshot(id=snap_id, kind="learned", checkpoint=str(path),
                         content_hash=digest, stage=stage,
                         creation_step=policy_steps)
    pool.add(snap)
    return snap


def sample_opponent(pool: OpponentPool, rng: np.random.Generator) -> AgentSnapshot:
    """Uniform draw over current members; never mutates the pool."""
    members = pool.members()
    if not members:
        raise PoolError("cannot sample from an empty pool")
    return members[int(rng.integers(len(members)))]


# ------------------------------------------------- checkpoint params layout

def merge_module_params(module_params: dict[str, Params]) -> Params:
    """Flatten {"build_order": {...}, "tactics": {...}} into one tensor dict."""
    merged: Params = {}
    for module, params in sorted(module_params.items()):
        for key, value in params.items():
            merged[f"{module}.{key}"] = value
    return merged


def split_module_params(merged: Params) -> dict[str, Params]:
    """Inverse of merge_module_params."""
    out: dict[str, Params] = {}
    for key, value in merged.items():
        module, _, rest = key.partition(".")
        out.setdefault(module, {})[rest] = value
    return out


# ------------------------------------------------------- agent construction

class RandomBuildModule:
    """Uniform choice over currently valid build actions."""
    name = "build_order"
    cadence = 5

    def __init__(self, space: BuildOrderSpace, roster: Roster,
                 rng: np.random.Generator):
        self.space = space
        self.roster = roster
        self.rng = rng

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        mask = build_order_mask(mem, self.space, self.roster)
        choice = self.space.actions[int(self.rng.choice(np.flatnonzero(mask)))]
        if choice.kind == "noop":
            return []
        return [production_call(choice.target, self.roster, choice.amount)]


class RandomTacticsModule:
    """Uniform attack point anywhere on the map."""
    name = "tactics"
    cadence = 10

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        if not mem.army:
            return []
        cell = (float(self.rng.uniform(0, mem.map_size)),
                float(self.rng.uniform(0, mem.map_size)))
        return [MacroCall("attack_location", (cell,))]


def random_agent(player: int, config: EnvConfig, rng: np.random.Generator,
                 roster: Roster | None = None) -> ModularAgent:
    """Fully plumbed modular agent whose decisions are uniform-random."""
    roster = roster or default_roster()
    space = BuildOrderSpace(roster)
    modules = [
        ScoutingModule(roster),
        WorkerModule(roster),
        RandomBuildModule(space, roster, rng),
        RandomTacticsModule(rng),
        MicroModule(roster),
    ]
    return ModularAgent(player, config, modules)


def build_agent(snap: AgentSnapshot, player: int, config: EnvConfig,
                rng: np.random.Generator | None = None,
                deterministic: bool = False) -> ModularAgent:
    """Construct a playable agent from a pool snapshot."""
    rng = rng or np.random.default_rng(0)
    if snap.kind == "random":
        return random_agent(player, config, rng)
    if snap.kind == "scripted":
        return scripted_agent(player, config, snap.script)
    if snap.kind == "learned":
        merged, _ = load_checkpoint(snap.checkpoint)
        parts = split_module_params(merged)
        return learned_agent(player, config,
                             bo_params=parts.get("build_order"),
                             tactics_params=parts.get("tactics"),
                             rng=rng, deterministic=deterministic)
    raise PoolError(f"unknown snapshot kind {snap.kind!r}")
