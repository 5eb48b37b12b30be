"""Modular agent: memory refresh, module cadences, APM-budgeted scheduling.

Each tick the agent refreshes its memory from the observation, lets every
module read it (scouting first writes the enemy estimate back), collects
macro proposals from modules whose cadence boundary this tick is, and drains
the scheduler under the APM budget.

A module only submits new proposals when its previous ones have cleared the
queue; that backpressure keeps reactive modules (workers, micro) from
flooding the scheduler with duplicates while a macro is still pending.
"""
from __future__ import annotations

import numpy as np

from ..env.actions import EnvAction
from ..env.observation import Observation
from ..env.roster import Roster, default_roster
from ..env.state import EnvConfig, Event
from ..nn import Params
from .macros import MacroCall, MacroRegistry, default_registry
from .memory import MODULES, MemoryStore, new_memory
from .policies import (
    BuildOrderNet,
    BuildOrderSpace,
    PolicyStep,
    TacticsNet,
    build_order_act,
    feature_names,
    tactics_act,
)
from .scheduler import DEFAULT_APM_CAP, Scheduler
from .scouting import ScoutState, scout_manage, scout_update, write_back_estimate
from .scripted import (
    FixedBuildScript,
    default_scripts,
    fixed_build,
    micro_step,
    scripted_tactics,
    supply_failsafe,
    worker_manage,
)

MICRO_REPEAT_TICKS = 10  # re-issue an unchanged engage order at most this often


class WorkerModule:
    name = "worker"
    cadence = 1

    def __init__(self, roster: Roster):
        self.roster = roster

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        return worker_manage(mem, self.roster)


class ScriptedBuildModule:
    """fixed_build plus a supply-deadlock failsafe (lost providers only)."""
    name = "build_order"
    cadence = 5

    def __init__(self, script: FixedBuildScript, roster: Roster):
        self.script = script
        self.roster = roster

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        calls = fixed_build(self.script, mem, self.roster)
        if not calls:
            rescue = supply_failsafe(self.script, mem, self.roster)
            if rescue is not None:
                return [rescue]
        return calls


class LearnedBuildModule:
    name = "build_order"
    cadence = 5

    def __init__(self, net: BuildOrderNet, space: BuildOrderSpace, params: Params,
                 opening: FixedBuildScript, rng: np.random.Generator,
                 roster: Roster, deterministic: bool = False):
        self.net = net
        self.space = space
        self.params = params
        self.opening = opening
        self.rng = rng
        self.roster = roster
        self.deterministic = deterministic
        self.steps: list[PolicyStep] = []

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        call, step = build_order_act(mem, self.params, self.opening, self.rng,
                                     self.net, self.space, self.roster,
                                     self.deterministic)
        if step is not None:
            self.steps.append(step)
        return [call] if call is not None else []


class ScriptedTacticsModule:
    name = "tactics"
    cadence = 10

    def __init__(self, roster: Roster):
        self.roster = roster

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        return scripted_tactics(mem, self.roster)


class LearnedTacticsModule:
    name = "tactics"
    cadence = 10

    def __init__(self, net: TacticsNet, params: Params, rng: np.random.Generator,
                 deterministic: bool = False):
        self.net = net
        self.params = params
        self.rng = rng
        self.deterministic = deterministic
        self.steps: list[PolicyStep] = []

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        call, step = tactics_act(mem, self.params, self.rng, self.net,
                                 self.deterministic)
        if step is not None:
            self.steps.append(step)
        return [call] if call is not None else []


class ScoutingModule:
    """EMA estimate plus waypoint routing. Runs its estimate every tick."""
    name = "scouting"
    cadence = 5

    def __init__(self, roster: Roster):
        self.roster = roster
        self.state = ScoutState()

    def on_refresh(self, obs: Observation, mem: MemoryStore) -> None:
        scout_update(self.state, obs)
        write_back_estimate(self.state, mem)

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        if not mem.fog:
            return []  # nothing to discover without fog
        return scout_manage(mem, self.roster)


class MicroModule:
    name = "micro"
    cadence = 1

    def __init__(self, roster: Roster):
        self.roster = roster
        self._last_cell: tuple | None = None
        self._last_issue = -MICRO_REPEAT_TICKS
        self._fortify_ready = 0
        cooldowns = [a.cooldown for a in roster.abilities.values()]
        self._fortify_cooldown = max(cooldowns) if cooldowns else 0

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        calls = micro_step(mem, self.roster)
        out = []
        for call in calls:
            if call.name == "engage":
                stale = mem.time - self._last_issue >= MICRO_REPEAT_TICKS
                if call.args == self._last_cell and not stale:
                    continue
                self._last_cell = call.args
                self._last_issue = mem.time
                out.append(call)
            elif call.name == "fortify_army":
                if mem.time < self._fortify_ready:
                    continue
                self._fortify_ready = mem.time + self._fortify_cooldown
                out.append(call)
            else:
                out.append(call)
        return out


class ModularAgent:
    def __init__(self, player: int, config: EnvConfig, modules: list,
                 registry: MacroRegistry | None = None,
                 apm_cap: int = DEFAULT_APM_CAP):
        self.player = player
        self.config = config
        self.modules = modules
        self.registry = registry or default_registry()
        self.apm_cap = apm_cap
        self.scheduler = Scheduler(self.registry, apm_cap, MODULES)
        self.mem: MemoryStore | None = None

    def reset(self) -> None:
        self.scheduler = Scheduler(self.registry, self.apm_cap, MODULES)
        self.mem = None
        for m in self.modules:
            if hasattr(m, "steps"):
                m.steps.clear()

    def act(self, obs: Observation, events: list[Event]) -> list[EnvAction]:
        if self.mem is None:
            self.mem = new_memory(obs, self.config.base_slots)
        else:
            self.mem.refresh(obs, events)
        for m in self.modules:
            hook = getattr(m, "on_refresh", None)
            if hook is not None:
                hook(obs, self.mem)
        for m in self.modules:
            if obs.tick % m.cadence != 0:
                continue
            if self.scheduler.queued(m.name) > 0:
                continue  # backpressure: previous proposal still pending
            for call in m.propose(self.mem):
                self.scheduler.submit(m.name, call, obs.tick)
        return self.scheduler.drain(self.mem, obs.tick)

    def policy_steps(self) -> list[PolicyStep]:
        steps: list[PolicyStep] = []
        for m in self.modules:
            steps.extend(getattr(m, "steps", []))
        steps.sort(key=lambda s: s.tick)
        return steps


def scripted_agent(player: int, config: EnvConfig,
                   script: str | FixedBuildScript = "swarmling_flood",
                   roster: Roster | None = None,
                   registry: MacroRegistry | None = None,
                   apm_cap: int = DEFAULT_APM_CAP) -> ModularAgent:
    """Fully scripted modular agent built around one fixed build order."""
    roster = roster or default_roster()
    if isinstance(script, str):
        script = default_scripts()[script]
    modules = [
        ScoutingModule(roster),
        WorkerModule(roster),
        ScriptedBuildModule(script, roster),
        ScriptedTacticsModule(roster),
        MicroModule(roster),
    ]
    return ModularAgent(player, config, modules, registry, apm_cap)


def build_order_net(roster: Roster | None = None) -> tuple[BuildOrderNet, BuildOrderSpace]:
    roster = roster or default_roster()
    space = BuildOrderSpace(roster)
    net = BuildOrderNet(len(feature_names(roster)), space.size)
    return net, space


def learned_agent(player: int, config: EnvConfig,
                  bo_params: Params | None = None,
                  tactics_params: Params | None = None,
                  rng: np.random.Generator | None = None,
                  opening: str | FixedBuildScript = "opening",
                  roster: Roster | None = None,
                  registry: MacroRegistry | None = None,
                  apm_cap: int = DEFAULT_APM_CAP,
                  deterministic: bool = False) -> ModularAgent:
    """Modular agent with learned build order and optionally learned tactics.

    Pass ``bo_params``/``tactics_params`` from checkpoints; a module without
    params falls back to its scripted counterpart (the training schedule
    swaps modules in one at a time this way).
    """
    roster = roster or default_roster()
    rng = rng or np.random.default_rng(0)
    if isinstance(opening, str):
        opening = default_scripts()[opening]
    modules: list = [ScoutingModule(roster), WorkerModule(roster)]
    if bo_params is not None:
        net, space = build_order_net(roster)
        modules.append(LearnedBuildModule(net, space, bo_params, opening, rng,
                                          roster, deterministic))
    else:
        modules.append(ScriptedBuildModule(default_scripts()["swarmling_flood"],
                                           roster))
    if tactics_params is not None:
        modules.append(LearnedTacticsModule(TacticsNet(), tactics_params, rng,
                                            deterministic))
    else:
        modules.append(ScriptedTacticsModule(roster))
    modules.append(MicroModule(roster))
    return ModularAgent(player, config, modules, registry, apm_cap)
