"""Hand-scripted decision modules: workers, fixed builds, tactics, micro.

Each function is pure in memory: it reads the refreshed MemoryStore and
returns macro proposals. They serve double duty as parts of the modular
agent and as complete seed opponents for self-play.

Worker policy: keep every pool at saturation (2 workers per mineral patch,
3 per geyser as encoded in the roster capacities), prioritizing gas. Gas
deficits may pull workers off minerals; mineral deficits are filled only
from idle or oversaturated workers. Production boost is proposed whenever
its cooldown is ready.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import yaml

from ..env.roster import Roster, default_roster
from .macros import MacroCall
from .memory import MemoryStore

ENGAGEMENT_RADIUS = 10.0  # must exceed every attack range in the roster
ARMY_SUPPLY_ATTACK = 50
TOTAL_SUPPLY_ATTACK = 100


class ScriptError(ValueError):
    """Raised when a build script violates the schema or tech ordering."""


@dataclass(frozen=True)
class FixedBuildScript:
    name: str
    entries: tuple[tuple[str, int], ...]
    loop_tail: str | None


def _validate_script(script: FixedBuildScript, roster: Roster) -> None:
    produced_so_far: set[str] = set()
    for type_name, count in script.entries:
        stats = roster.types.get(type_name)
        if stats is None:
            raise ScriptError(f"{script.name}: unknown type {type_name!r}")
        if count < 1:
            raise ScriptError(f"{script.name}: count for {type_name} must be >= 1")
        req = stats.tech_requirement
        if req is not None and req not in produced_so_far:
            raise ScriptError(f"{script.name}: {type_name} needs {req} earlier "
                              "in the script")
        produced_so_far.add(type_name)
    if script.loop_tail is not None:
        stats = roster.types.get(script.loop_tail)
        if stats is None:
            raise ScriptError(f"{script.name}: unknown loop_tail {script.loop_tail!r}")
        req = stats.tech_requirement
        if req is not None and req not in produced_so_far:
            raise ScriptError(f"{script.name}: loop_tail {script.loop_tail} needs "
                              f"{req} in the entries")


def load_build_scripts(source: str | dict | None = None,
                       roster: Roster | None = None) -> dict[str, FixedBuildScript]:
    """Load named build scripts from YAML (packaged default when source=None)."""
    roster = roster or default_roster()
    if source is None:
        raw = yaml.safe_load(
            resources.files("modrts.data").joinpath("build_scripts.yaml").read_text())
    elif isinstance(source, dict):
        raw = source
    else:
        with open(source) as fh:
            raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "scripts" not in raw:
        raise ScriptError("script file needs a top-level scripts mapping")
    scripts = {}
    for name, body in raw["scripts"].items():
        script = FixedBuildScript(
            name=name,
            entries=tuple((str(t), int(n)) for t, n in body.get("entries", [])),
            loop_tail=body.get("loop_tail"),
        )
        _validate_script(script, roster)
        scripts[name] = script
    return scripts


_SCRIPTS: dict[str, FixedBuildScript] | None = None


def default_scripts() -> dict[str, FixedBuildScript]:
    global _SCRIPTS
    if _SCRIPTS is None:
        _SCRIPTS = load_build_scripts()
    return _SCRIPTS


def seed_script_names() -> list[str]:
    """Scripts usable as standalone seed opponents (those with a loop tail)."""
    return [n for n, s in default_scripts().items() if s.loop_tail is not None]


# --------------------------------------------------------------------- workers

def worker_pools(mem: MemoryStore, roster: Roster) -> list[dict]:
    """Per-base resource pools with assignment and capacity."""
    eco = roster.economy
    pools = []
    for b in mem.friendly_bases:
        pools.append({"slot": b.slot_index, "resource": "minerals",
                      "assigned": b.mineral_workers, "capacity": eco.mineral_capacity})
        if b.has_extractor:
            pools.append({"slot": b.slot_index, "resource": "gas",
                          "assigned": b.gas_workers, "capacity": eco.gas_capacity})
    return pools


def worker_manage(mem: MemoryStore, roster: Roster | None = None) -> list[MacroCall]:
    roster = roster or default_roster()
    pools = worker_pools(mem, roster)
    total = mem.friendly_units.get(roster.worker_name, 0)
    assigned = sum(p["assigned"] for p in pools)
    idle = max(0, total - assigned)
    overcap = sum(max(0, p["assigned"] - p["capacity"]) for p in pools)
    mineral_assigned = sum(p["assigned"] for p in pools if p["resource"] == "minerals")

    proposals: list[MacroCall] = []
    movable = idle + overcap  # what mineral deficits may draw on
    gas_movable = movable + mineral_assigned  # gas also drains mineral lines
    deficits = sorted((p for p in pools if p["assigned"] < p["capacity"]),
                      key=lambda p: (p["resource"] != "gas", p["slot"]))
    for pool in deficits:
        need = pool["capacity"] - pool["assigned"]
        budget = gas_movable if pool["resource"] == "gas" else movable
        take = min(need, budget)
        for _ in range(take):
            proposals.append(MacroCall("transfer_worker",
                                       (pool["slot"], pool["resource"])))
        if pool["resource"] == "gas":
            gas_movable -= take
            movable -= min(take, movable)
        else:
            movable -= take
            gas_movable -= take

    if mem.boost_available:
        main = mem.main_base()
        if main is not None:
            proposals.append(MacroCall("boost_production", ((main.x, main.y),)))
    return proposals


# --------------------------------------------------------------------- tactics

def _attack_target(mem: MemoryStore) -> tuple[float, float] | None:
    """Nearest remembered enemy base, else the slot farthest from our main."""
    target = mem.nearest_enemy_base_cell()
    if target is not None:
        return target
    main = mem.main_base()
    if main is None:
        return None
    own = {b.slot_index for b in mem.friendly_bases}
    candidates = [i for i in range(len(mem.base_slots)) if i not in own]
    if not candidates:
        return None
    far = max(candidates, key=lambda i: ((mem.base_slots[i][0] - main.x) ** 2
                                         + (mem.base_slots[i][1] - main.y) ** 2, -i))
    x, y = mem.base_slots[far]
    return (float(x), float(y))


def scripted_tactics(mem: MemoryStore, roster: Roster | None = None) -> list[MacroCall]:
    """Attack the nearest known enemy base once the army is large enough."""
    roster = roster or default_roster()
    costs = {n: t.supply_cost for n, t in roster.types.items()}
    army = mem.army_supply(costs)
    if army <= ARMY_SUPPLY_ATTACK and mem.supply_used <= TOTAL_SUPPLY_ATTACK:
        return []
    target = _attack_target(mem)
    if target is None or not mem.army:
        return []
    return [MacroCall("attack_location", (target,))]


# ----------------------------------------------------------------- fixed build

def _script_progress(mem: MemoryStore) -> dict[str, int]:
    """Units/structures produced in-game plus those currently in the queue."""
    progress = dict(mem.produced)
    for type_name, _ in mem.build_queue:
        progress[type_name] = progress.get(type_name, 0) + 1
    return progress


def _affordable(mem: MemoryStore, roster: Roster, type_name: str) -> bool:
    stats = roster.types[type_name]
    if mem.minerals < stats.mineral_cost or mem.gas < stats.gas_cost:
        return False
    if stats.is_building:
        if type_name == "base":
            return bool(mem.free_slots())
        if type_name == "extractor":
            return any(not b.has_extractor for b in mem.friendly_bases)
        return True
    req = stats.tech_requirement
    if req is not None and mem.buildings.get(req, 0) == 0:
        return False  # block until the tech structure is standing
    if stats.supply_cost > 0:
        queued = sum(roster.types[t].supply_cost for t, _ in mem.build_queue
                     if not roster.types[t].is_building)
        if mem.supply_used + queued + stats.supply_cost > mem.supply_cap:
            return False  # supply-free providers always pass this gate
    return mem.larva_total >= 1


def production_call(type_name: str, roster: Roster,
                    amount: int = 1) -> MacroCall:
    """Macro for producing one roster type (unit hatch or structure build)."""
    stats = roster.types[type_name]
    if not stats.is_building:
        if amount == 1:
            return MacroCall("hatch", (type_name,))
        return MacroCall("hatch_multiple", (type_name, amount))
    if type_name == "base":
        return MacroCall("build_new_base", ())
    return MacroCall("build_structure", (type_name,))


def fixed_build(script: FixedBuildScript, mem: MemoryStore,
                roster: Roster | None = None) -> list[MacroCall]:
    """Propose the next script entry, blocking (not skipping) until affordable."""
    roster = roster or default_roster()
    progress = _script_progress(mem)
    demanded: dict[str, int] = {}
    for type_name, count in script.entries:
        demanded[type_name] = demanded.get(type_name, 0) + count
        if progress.get(type_name, 0) < demanded[type_name]:
            if _affordable(mem, roster, type_name):
                return [production_call(type_name, roster)]
            return []
    if script.loop_tail is not None and _affordable(mem, roster, script.loop_tail):
        return [production_call(script.loop_tail, roster)]
    return []


def script_exhausted(script: FixedBuildScript, mem: MemoryStore) -> bool:
    """True once every entry has been produced or queued."""
    progress = _script_progress(mem)
    demanded: dict[str, int] = {}
    for type_name, count in script.entries:
        demanded[type_name] = demanded.get(type_name, 0) + count
    return all(progress.get(t, 0) >= n for t, n in demanded.items())


def _next_wanted(script: FixedBuildScript, mem: MemoryStore) -> str | None:
    """The type the script is currently trying to produce (entry or tail)."""
    progress = _script_progress(mem)
    demanded: dict[str, int] = {}
    for type_name, count in script.entries:
        demanded[type_name] = demanded.get(type_name, 0) + count
        if progress.get(type_name, 0) < demanded[type_name]:
            return type_name
    return script.loop_tail


def supply_failsafe(script: FixedBuildScript, mem: MemoryStore,
                    roster: Roster | None = None) -> MacroCall | None:
    """Break a supply deadlock by hatching a supply provider.

    Fixed scripts block on unaffordable entries by design, but a blocked
    state caused purely by lost supply (scouts shot down, bases killed) never
    resolves on its own. When the wanted entry is supply-blocked, nothing in
    the queue provides supply, and the cap has headroom, produce the cheapest
    supply-providing unit instead.
    """
    roster = roster or default_roster()
    wanted = _next_wanted(script, mem)
    if wanted is None:
        return None
    stats = roster.types[wanted]
    if stats.is_building or stats.supply_cost == 0:
        return None
    queued = sum(roster.types[t].supply_cost for t, _ in mem.build_queue
                 if not roster.types[t].is_building)
    if mem.supply_used + queued + stats.supply_cost <= mem.supply_cap:
        return None  # not supply that blocks it
    if any(roster.types[t].supply_provided > 0 for t, _ in mem.build_queue):
        return None  # help is on the way
    if mem.supply_cap >= roster.economy.supply_ceiling:
        return None
    providers = [t for t in roster.types.values()
                 if not t.is_building and t.supply_provided > 0]
    if not providers:
        return None
    provider = min(providers, key=lambda t: t.mineral_cost)
    # Order the whole deficit at once: a single provider may not lift the cap
    # above supply already in use, and one-at-a-time replacements can be lost
    # as fast as they hatch.
    deficit = mem.supply_used + queued + stats.supply_cost - mem.supply_cap
    amount = -(-deficit // provider.supply_provided)
    if provider.mineral_cost > 0:
        amount = min(amount, mem.minerals // provider.mineral_cost)
    if provider.gas_cost > 0:
        amount = min(amount, mem.gas // provider.gas_cost)
    amount = min(amount, mem.larva_total)
    if amount < 1:
        return None
    return production_call(provider.name, roster, int(amount))


# ----------------------------------------------------------------------- micro

def _armed_sightings(mem: MemoryStore, roster: Roster) -> list:
    """Remembered enemy units that can actually shoot back.

    Unarmed fliers (scouts) are not combat: chasing one would drag the army
    along its survey route, which is exactly the bait a scout provides.
    """
    return [s for s in mem.enemy_sightings
            if not s.is_building and roster.types[s.type_name].attack > 0]


def micro_trigger(mem: MemoryStore, roster: Roster | None = None,
                  radius: float = ENGAGEMENT_RADIUS) -> bool:
    """Combat detected: any friendly army unit within radius of an armed enemy."""
    roster = roster or default_roster()
    enemies = _armed_sightings(mem, roster)
    if not enemies or not mem.army:
        return False
    r2 = radius * radius
    return any((u.x - e.x) ** 2 + (u.y - e.y) ** 2 <= r2
               for u in mem.army for e in enemies)


def _engaged_enemies(mem: MemoryStore, roster: Roster, radius: float) -> list:
    """Armed enemy units inside the engagement radius of some friendly army unit.

    Micro is a local module: it only reasons about the battle in front of the
    army. Distant sightings are the tactics module's business, otherwise a
    passing scout would drag the whole army across the map.
    """
    enemies = _armed_sightings(mem, roster)
    if not enemies or not mem.army:
        return []
    r2 = radius * radius
    return [e for e in enemies
            if any((u.x - e.x) ** 2 + (u.y - e.y) ** 2 <= r2 for u in mem.army)]


def best_attack_cell(mem: MemoryStore, roster: Roster | None = None,
                     radius: float = ENGAGEMENT_RADIUS) -> tuple[int, int] | None:
    """Integer cell maximizing engaged-enemy count within radius; ties to the
    lowest row-major index (y * map_size + x)."""
    enemies = _engaged_enemies(mem, roster or default_roster(), radius)
    if not enemies:
        return None
    r2 = radius * radius
    best = None
    best_count = -1
    for y in range(mem.map_size):
        for x in range(mem.map_size):
            n = sum(1 for e in enemies if (x - e.x) ** 2 + (y - e.y) ** 2 <= r2)
            if n > best_count:
                best_count = n
                best = (x, y)
    return best


def _best_attack_cell_fast(mem: MemoryStore, roster: Roster,
                           radius: float) -> tuple[int, int] | None:
    """Vectorized twin of best_attack_cell (same result, used at runtime)."""
    import numpy as np

    enemies = _engaged_enemies(mem, roster, radius)
    if not enemies:
        return None
    ex = np.array([e.x for e in enemies])
    ey = np.array([e.y for e in enemies])
    ys, xs = np.mgrid[0:mem.map_size, 0:mem.map_size]
    d2 = ((xs[..., None] - ex) ** 2 + (ys[..., None] - ey) ** 2)
    counts = (d2 <= radius * radius).sum(axis=-1)
    flat = int(np.argmax(counts))  # first max = lowest row-major index
    return (flat % mem.map_size, flat // mem.map_size)


def micro_step(mem: MemoryStore, roster: Roster | None = None,
               radius: float = ENGAGEMENT_RADIUS) -> list[MacroCall]:
    """Group up and strike the densest enemy cell; fire abilities if carried."""
    roster = roster or default_roster()
    if not micro_trigger(mem, roster, radius):
        return []
    cell = _best_attack_cell_fast(mem, roster, radius)
    if cell is None:
        return []
    proposals = [MacroCall("engage", ((float(cell[0]), float(cell[1])),))]
    has_ability = any(roster.types[u.type_name].ability for u in mem.army)
    if has_ability:
        proposals.append(MacroCall("fortify_army", ()))
    return proposals
