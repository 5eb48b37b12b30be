"""Deterministic two-player mini-RTS engine.

One tick is one in-game second. A tick applies, in fixed order:

  1. player actions (validated; illegal actions become rejection events)
  2. resource income from assigned workers
  3. larva regeneration at bases
  4. production/construction queue completions
  5. movement (simultaneous, from pre-move positions)
  6. combat (simultaneous damage exchange), death resolution
  7. terminal check (base elimination or the tick cap)

Illegal actions are never fatal: the state advances and the caller gets an
``action-rejected`` event, mirroring how a real game client shrugs off stale
commands.
"""
from __future__ import annotations

import math

import numpy as np

from . import actions as A
from .actions import EnvAction
from .roster import Roster, default_roster
from .state import (
    Building,
    EnvConfig,
    Event,
    GameState,
    PlayerState,
    QueueEntry,
    Unit,
)

ARRIVE_EPS = 0.5
# deterministic placement ring for non-base structures around the main base
_STRUCT_OFFSETS = [(2.0, 2.0), (-2.0, 2.0), (2.0, -2.0), (-2.0, -2.0),
                   (3.0, 0.0), (-3.0, 0.0), (0.0, 3.0), (0.0, -3.0)]


def new_game(config: EnvConfig, roster: Roster | None = None) -> GameState:
    """Start a symmetric game: one base, fixed workers, zero armies."""
    config.validate()
    roster = roster or default_roster()
    rng = np.random.default_rng(config.seed)

    pair = config.spawn_pairs[int(rng.integers(len(config.spawn_pairs)))]
    # side assignment is seeded too, so neither player id owns a fixed corner
    flip = bool(rng.integers(2))
    slots = (pair[1], pair[0]) if flip else (pair[0], pair[1])

    state = GameState(
        config=config,
        roster=roster,
        tick=0,
        players=[],
        next_uid=1,
        rng=rng,
        spawn_slots=slots,
    )
    eco = roster.economy
    for player in (0, 1):
        ps = PlayerState(minerals=roster.start.minerals, gas=roster.start.gas)
        slot = config.base_slots[slots[player]]
        bx, by = float(slot[0]), float(slot[1])
        base = Building(
            uid=state.next_uid, type_name="base", player=player, x=bx, y=by,
            hp=roster.types["base"].hp, slot_index=slots[player],
            larva=eco.larva_cap, larva_next=eco.larva_interval,
        )
        state.next_uid += 1
        ps.buildings[base.uid] = base
        worker = roster.worker_name
        for _ in range(roster.start.workers):
            u = Unit(uid=state.next_uid, type_name=worker, player=player, x=bx, y=by,
                     hp=roster.types[worker].hp, base_index=base.slot_index,
                     resource="minerals")
            state.next_uid += 1
            ps.units[u.uid] = u
        scout = roster.scout_name
        for _ in range(roster.start.watchers):
            u = Unit(uid=state.next_uid, type_name=scout, player=player, x=bx, y=by,
                     hp=roster.types[scout].hp)
            state.next_uid += 1
            ps.units[u.uid] = u
        state.players.append(ps)
        _recount_supply(state, player)
    return state


def supply_difference(state: GameState, player: int) -> int:
    """supply_used(player) - supply_used(opponent); antisymmetric by definition."""
    if player not in (0, 1):
        raise ValueError(f"invalid player id {player}")
    return state.players[player].supply_used - state.players[1 - player].supply_used


def _recount_supply(state: GameState, player: int) -> None:
    ps = state.players[player]
    roster = state.roster
    used = sum(roster.types[u.type_name].supply_cost for u in ps.units.values())
    cap = sum(roster.types[u.type_name].supply_provided for u in ps.units.values())
    cap += sum(roster.types[b.type_name].supply_provided for b in ps.buildings.values())
    ps.supply_used = used
    ps.supply_cap = min(cap, roster.economy.supply_ceiling)


def _clamp(state: GameState, x: float, y: float) -> tuple[float, float]:
    hi = state.config.map_size - 1e-6
    return min(max(x, 0.0), hi), min(max(y, 0.0), hi)


def _reject(events: list[Event], state: GameState, player: int, act: EnvAction, reason: str) -> None:
    events.append(Event("action-rejected", state.tick, player,
                        {"action": act.to_record(), "reason": reason}))


def _worker_counts(ps: PlayerState, worker_name: str) -> dict[tuple[int, str], int]:
    counts: dict[tuple[int, str], int] = {}
    for u in ps.units.values():
        if u.type_name == worker_name and u.base_index >= 0:
            key = (u.base_index, u.resource)
            counts[key] = counts.get(key, 0) + 1
    return counts


def _extractor_slots(ps: PlayerState, include_queued: bool = True) -> set[int]:
    slots = {b.slot_index for b in ps.buildings.values() if b.type_name == "extractor"}
    if include_queued:
        slots |= {q.slot_index for q in ps.queue if q.is_building and q.type_name == "extractor"}
    return slots


def _base_slot_occupied(state: GameState, slot_index: int) -> bool:
    for ps in state.players:
        for b in ps.buildings.values():
            if b.type_name == "base" and b.slot_index == slot_index:
                return True
        for q in ps.queue:
            if q.is_building and q.type_name == "base" and q.slot_index == slot_index:
                return True
    return False


def _apply_action(state: GameState, player: int, act: EnvAction, events: list[Event]) -> None:
    ps = state.players[player]
    roster = state.roster
    eco = roster.economy
    kind = act.kind

    if kind in A.NOOP_KINDS:
        return

    if kind == A.PRODUCE:
        (type_name,) = act.args
        stats = roster.types.get(type_name)
        if stats is None or stats.is_building:
            return _reject(events, state, player, act, "not-a-unit")
        if stats.tech_requirement and not any(
            b.type_name == stats.tech_requirement for b in ps.buildings.values()
        ):
            return _reject(events, state, player, act, "missing-tech")
        if ps.minerals < stats.mineral_cost:
            return _reject(events, state, player, act, "insufficient-minerals")
        if ps.gas < stats.gas_cost:
            return _reject(events, state, player, act, "insufficient-gas")
        # Supply-free units (providers) always pass: being over cap after
        # provider losses must not block rebuilding the providers themselves.
        if (stats.supply_cost > 0
                and ps.supply_used + ps.queued_supply(roster)
                + stats.supply_cost > ps.supply_cap):
            return _reject(events, state, player, act, "supply-blocked")
        bases = [b for b in ps.bases() if b.larva > 0]
        if not bases:
            return _reject(events, state, player, act, "no-larva")
        bases.sort(key=lambda b: (-b.larva, b.uid))
        site = bases[0]
        site.larva -= 1
        ps.minerals -= stats.mineral_cost
        ps.gas -= stats.gas_cost
        ps.spent_minerals += stats.mineral_cost
        ps.spent_gas += stats.gas_cost
        ps.queue.append(QueueEntry(type_name, state.tick + stats.build_time,
                                   is_building=False, base_uid=site.uid))
        return

    if kind == A.BUILD:
        type_name, cell = act.args
        stats = roster.types.get(type_name)
        if stats is None or not stats.is_building:
            return _reject(events, state, player, act, "not-a-building")
        if not any(u.type_name == roster.worker_name for u in ps.units.values()):
            return _reject(events, state, player, act, "no-worker")
        if ps.minerals < stats.mineral_cost:
            return _reject(events, state, player, act, "insufficient-minerals")
        if ps.gas < stats.gas_cost:
            return _reject(events, state, player, act, "insufficient-gas")

        if type_name == "base":
            cx, cy = float(cell[0]), float(cell[1])
            slot_index = -1
            for i, (sx, sy) in enumerate(state.config.base_slots):
                if abs(sx - cx) < 1.0 and abs(sy - cy) < 1.0:
                    slot_index = i
                    break
            if slot_index < 0:
                return _reject(events, state, player, act, "not-a-base-slot")
            if _base_slot_occupied(state, slot_index):
                return _reject(events, state, player, act, "slot-occupied")
            sx, sy = state.config.base_slots[slot_index]
            entry = QueueEntry("base", state.tick + stats.build_time, is_building=True,
                               x=float(sx), y=float(sy), slot_index=slot_index)
        elif type_name == "extractor":
            have = _extractor_slots(ps)
            candidates = [b for b in ps.bases() if b.slot_index not in have]
            if not candidates:
                return _reject(events, state, player, act, "no-base-for-extractor")
            cx, cy = float(cell[0]), float(cell[1])
            candidates.sort(key=lambda b: (math.hypot(b.x - cx, b.y - cy), b.uid))
            site = candidates[0]
            x, y = _clamp(state, site.x + 2.0, site.y)
            entry = QueueEntry("extractor", state.tick + stats.build_time, is_building=True,
                               x=x, y=y, slot_index=site.slot_index)
        else:
            bases = ps.bases()
            if not bases:
                return _reject(events, state, player, act, "no-base")
            main = min(bases, key=lambda b: b.uid)
            n = sum(1 for b in ps.buildings.values() if b.type_name not in ("base", "extractor"))
            n += sum(1 for q in ps.queue
                     if q.is_building and q.type_name not in ("base", "extractor"))
            dx, dy = _STRUCT_OFFSETS[n % len(_STRUCT_OFFSETS)]
            x, y = _clamp(state, main.x + dx, main.y + dy)
            entry = QueueEntry(type_name, state.tick + stats.build_time, is_building=True,
                               x=x, y=y)
        ps.minerals -= stats.mineral_cost
        ps.gas -= stats.gas_cost
        ps.spent_minerals += stats.mineral_cost
        ps.spent_gas += stats.gas_cost
        ps.queue.append(entry)
        return

    if kind == A.ASSIGN_WORKER:
        base_index, resource = act.args
        base_index = int(base_index)
        if resource not in ("minerals", "gas"):
            return _reject(events, state, player, act, "bad-resource")
        dst = next((b for b in ps.bases() if b.slot_index == base_index), None)
        if dst is None:
            return _reject(events, state, player, act, "no-such-base")
        if resource == "gas" and base_index not in _extractor_slots(ps, include_queued=False):
            return _reject(events, state, player, act, "no-extractor")
        counts = _worker_counts(ps, roster.worker_name)
        capacity = eco.gas_capacity if resource == "gas" else eco.mineral_capacity
        if counts.get((base_index, resource), 0) >= capacity:
            return _reject(events, state, player, act, "destination-saturated")
        donor = _pick_donor(state, ps, counts, base_index, resource)
        if donor is None:
            return _reject(events, state, player, act, "no-excess-worker")
        donor.base_index = base_index
        donor.resource = resource
        donor.x, donor.y = dst.x, dst.y
        donor.order = "idle"
        return

    if kind == A.SET_RALLY:
        (cell,) = act.args
        ps.rally = _clamp(state, float(cell[0]), float(cell[1]))
        return

    if kind in (A.MOVE, A.ATTACK):
        (cell,) = act.args
        tx, ty = _clamp(state, float(cell[0]), float(cell[1]))
        order = "attack" if kind == A.ATTACK else "move"
        for u in ps.units.values():
            if roster.types[u.type_name].role == "combat":
                u.order = order
                u.tx, u.ty = tx, ty
        return

    if kind == A.SCOUT_MOVE:
        unit_id, cell = act.args
        u = ps.units.get(int(unit_id))
        if u is None or roster.types[u.type_name].role != "scout":
            return _reject(events, state, player, act, "no-such-scout")
        u.order = "move"
        u.tx, u.ty = _clamp(state, float(cell[0]), float(cell[1]))
        return

    if kind == A.BOOST:
        (cell,) = act.args
        bases = ps.bases()
        if not bases:
            return _reject(events, state, player, act, "no-base")
        cx, cy = float(cell[0]), float(cell[1])
        bases.sort(key=lambda b: (math.hypot(b.x - cx, b.y - cy), b.uid))
        site = bases[0]
        if site.boost_ready > state.tick:
            return _reject(events, state, player, act, "boost-cooldown")
        site.larva = min(site.larva + eco.boost_amount, eco.larva_cap + eco.boost_amount)
        site.boost_ready = state.tick + eco.boost_cooldown
        return

    if kind == A.USE_ABILITY:
        (name,) = act.args
        spec = roster.abilities.get(name)
        if spec is None:
            return _reject(events, state, player, act, "unknown-ability")
        if not any(roster.types[u.type_name].ability == name for u in ps.units.values()):
            return _reject(events, state, player, act, "no-ability-unit")
        if ps.fortify_ready > state.tick:
            return _reject(events, state, player, act, "ability-cooldown")
        ps.fortify_until = state.tick + spec.duration
        ps.fortify_ready = state.tick + spec.cooldown
        return

    _reject(events, state, player, act, "unknown-action")


def _pick_donor(state: GameState, ps: PlayerState, counts: dict[tuple[int, str], int],
                dst_index: int, dst_resource: str) -> Unit | None:
    """Pick the worker to reassign: idle, then most oversaturated, then largest pool.

    Which transfers are worth making is the worker module's call; the env only
    needs a deterministic donor so replays stay exact.
    """
    roster = state.roster
    eco = roster.economy
    idle = [u for u in ps.units.values()
            if u.type_name == roster.worker_name and u.base_index < 0]
    if idle:
        return min(idle, key=lambda u: u.uid)
    pools = []
    for (slot, resource), n in counts.items():
        if (slot, resource) == (dst_index, dst_resource) or n == 0:
            continue
        capacity = eco.gas_capacity if resource == "gas" else eco.mineral_capacity
        pools.append((n - capacity, n, 0 if resource == "minerals" else 1, slot, resource))
    if not pools:
        return None
    pools.sort(key=lambda p: (-p[0], -p[1], p[2], p[3]))
    _, _, _, slot, resource = pools[0]
    members = [u for u in ps.units.values()
               if u.type_name == roster.worker_name
               and u.base_index == slot and u.resource == resource]
    return min(members, key=lambda u: u.uid)


def _income(state: GameState) -> None:
    eco = state.roster.economy
    for player, ps in enumerate(state.players):
        mult = state.config.income_multipliers[player]
        counts = _worker_counts(ps, state.roster.worker_name)
        extractors = _extractor_slots(ps, include_queued=False)
        for base in ps.bases():
            n_min = min(counts.get((base.slot_index, "minerals"), 0), eco.mineral_capacity)
            gained = n_min * eco.mineral_rate * mult
            ps.minerals += gained
            ps.mined_minerals += gained
            if base.slot_index in extractors:
                n_gas = min(counts.get((base.slot_index, "gas"), 0), eco.gas_capacity)
                gained = n_gas * eco.gas_rate * mult
                ps.gas += gained
                ps.mined_gas += gained


def _larva(state: GameState) -> None:
    eco = state.roster.economy
    for ps in state.players:
        for base in ps.bases():
            if state.tick >= base.larva_next:
                if base.larva < eco.larva_cap:
                    base.larva += 1
                base.larva_next = state.tick + eco.larva_interval


def _completions(state: GameState, events: list[Event]) -> None:
    roster = state.roster
    for player, ps in enumerate(state.players):
        if not ps.queue:
            continue
        remaining: list[QueueEntry] = []
        supply_dirty = False
        for q in ps.queue:
            if q.done_tick > state.tick:
                remaining.append(q)
                continue
            if q.is_building:
                if q.type_name == "base":
                    taken = any(
                        b.type_name == "base" and b.slot_index == q.slot_index
                        for pp in state.players for b in pp.buildings.values()
                    )
                    if taken:
                        events.append(Event("action-rejected", state.tick, player,
                                            {"action": ["build", "base"],
                                             "reason": "slot-taken-at-completion"}))
                        continue
                b = Building(uid=state.next_uid, type_name=q.type_name, player=player,
                             x=q.x, y=q.y, hp=roster.types[q.type_name].hp,
                             slot_index=q.slot_index)
                if q.type_name == "base":
                    b.larva = 1
                    b.larva_next = state.tick + roster.economy.larva_interval
                state.next_uid += 1
                ps.buildings[b.uid] = b
                ps.produced[q.type_name] = ps.produced.get(q.type_name, 0) + 1
                supply_dirty = supply_dirty or roster.types[q.type_name].supply_provided > 0
                events.append(Event("building-complete", state.tick, player,
                                    {"type": q.type_name, "uid": b.uid,
                                     "cell": [q.x, q.y]}))
            else:
                site = ps.buildings.get(q.base_uid)
                if site is None:
                    bases = ps.bases()
                    if not bases:
                        events.append(Event("unit-died", state.tick, player,
                                            {"type": q.type_name, "uid": -1,
                                             "reason": "lost-in-production"}))
                        continue
                    site = min(bases, key=lambda b: b.uid)
                u = Unit(uid=state.next_uid, type_name=q.type_name, player=player,
                         x=site.x, y=site.y, hp=roster.types[q.type_name].hp)
                state.next_uid += 1
                stats = roster.types[q.type_name]
                if stats.role == "worker":
                    u.base_index = site.slot_index
                    u.resource = "minerals"
                elif stats.role == "combat" and ps.rally is not None:
                    u.order = "move"
                    u.tx, u.ty = ps.rally
                ps.units[u.uid] = u
                ps.produced[q.type_name] = ps.produced.get(q.type_name, 0) + 1
                supply_dirty = True
                events.append(Event("unit-produced", state.tick, player,
                                    {"type": q.type_name, "uid": u.uid}))
        ps.queue = remaining
        if supply_dirty:
            _recount_supply(state, player)


def _enemy_arrays(ps: PlayerState):
    """Position/uid/type arrays over a player's units then buildings."""
    units = sorted(ps.units.values(), key=lambda u: u.uid)
    buildings = sorted(ps.buildings.values(), key=lambda b: b.uid)
    n_u = len(units)
    xs = np.fromiter((o.x for o in units + buildings), dtype=np.float64, count=n_u + len(buildings))
    ys = np.fromiter((o.y for o in units + buildings), dtype=np.float64, count=n_u + len(buildings))
    uids = np.fromiter((o.uid for o in units + buildings), dtype=np.int64, count=n_u + len(buildings))
    return units, buildings, xs, ys, uids, n_u


def _nearest(xs: np.ndarray, ys: np.ndarray, uids: np.ndarray, x: float, y: float,
             limit: float, lo: int, hi: int) -> tuple[int, float]:
    """Index of the nearest object in [lo, hi) within ``limit``; ties to lowest uid."""
    if hi <= lo:
        return -1, math.inf
    dx = xs[lo:hi] - x
    dy = ys[lo:hi] - y
    d2 = dx * dx + dy * dy
    best = float(d2.min())
    if best > limit * limit:
        return -1, math.inf
    mask = d2 <= best + 1e-12
    cands = np.nonzero(mask)[0]
    idx = int(cands[np.argmin(uids[lo:hi][cands])])
    return lo + idx, math.sqrt(best)


def _movement_and_combat(state: GameState, events: list[Event]) -> None:
    roster = state.roster
    arrays = [_enemy_arrays(ps) for ps in state.players]
    damage: list[dict[int, float]] = [{}, {}]  # per target player: uid -> damage
    moves: list[tuple[Unit, float, float]] = []

    for player, ps in enumerate(state.players):
        enemy = arrays[1 - player]
        e_units, e_buildings, exs, eys, euids, e_nu = enemy
        total = len(e_units) + len(e_buildings)
        for u in ps.units.values():
            stats = roster.types[u.type_name]
            if stats.attack > 0.0:
                # prefer the nearest enemy unit in range, else nearest building
                ti, _ = _nearest(exs, eys, euids, u.x, u.y, stats.range, 0, e_nu)
                if ti < 0:
                    ti, _ = _nearest(exs, eys, euids, u.x, u.y, stats.range, e_nu, total)
                if ti >= 0:
                    target = e_units[ti] if ti < e_nu else e_buildings[ti - e_nu]
                    dmg = stats.attack * stats.bonus_against(target.type_name)
                    enemy_ps = state.players[1 - player]
                    t_stats = roster.types[target.type_name]
                    if (enemy_ps.fortify_until >= state.tick
                            and t_stats.ability is not None):
                        dmg *= roster.abilities[t_stats.ability].damage_taken_factor
                    damage[1 - player][target.uid] = damage[1 - player].get(target.uid, 0.0) + dmg
                    continue  # attacking units hold position
                if u.order == "attack":
                    ci, cd = _nearest(exs, eys, euids, u.x, u.y, stats.vision, 0, e_nu)
                    if ci < 0:
                        ci, cd = _nearest(exs, eys, euids, u.x, u.y, stats.vision, e_nu, total)
                    if ci >= 0:
                        chase = e_units[ci] if ci < e_nu else e_buildings[ci - e_nu]
                        moves.append((u, chase.x, chase.y))
                        continue
            if u.order in ("move", "attack"):
                moves.append((u, u.tx, u.ty))

    for u, tx, ty in moves:
        stats = state.roster.types[u.type_name]
        dx, dy = tx - u.x, ty - u.y
        dist = math.hypot(dx, dy)
        if dist <= max(stats.speed, ARRIVE_EPS):
            u.x, u.y = _clamp(state, tx, ty)
            if abs(u.tx - u.x) < ARRIVE_EPS and abs(u.ty - u.y) < ARRIVE_EPS:
                u.order = "idle"
        elif dist > 0:
            u.x, u.y = _clamp(state, u.x + dx / dist * stats.speed,
                              u.y + dy / dist * stats.speed)

    for player, ps in enumerate(state.players):
        if not damage[player]:
            continue
        dead_units: list[Unit] = []
        dead_buildings: list[Building] = []
        for uid, dmg in damage[player].items():
            if uid in ps.units:
                ps.units[uid].hp -= dmg
                if ps.units[uid].hp <= 0:
                    dead_units.append(ps.units[uid])
            elif uid in ps.buildings:
                ps.buildings[uid].hp -= dmg
                if ps.buildings[uid].hp <= 0:
                    dead_buildings.append(ps.buildings[uid])
        for u in sorted(dead_units, key=lambda u: u.uid):
            del ps.units[u.uid]
            events.append(Event("unit-died", state.tick, player,
                                {"type": u.type_name, "uid": u.uid}))
        for b in sorted(dead_buildings, key=lambda b: b.uid):
            del ps.buildings[b.uid]
            events.append(Event("unit-died", state.tick, player,
                                {"type": b.type_name, "uid": b.uid}))
            if b.type_name == "base":
                events.append(Event("base-lost", state.tick, player,
                                    {"cell": [b.x, b.y], "slot": b.slot_index}))
        if dead_units or dead_buildings:
            _recount_supply(state, player)


def _check_terminal(state: GameState, events: list[Event]) -> None:
    alive = []
    for ps in state.players:
        bases = sum(1 for b in ps.buildings.values() if b.type_name == "base")
        bases += sum(1 for q in ps.queue if q.is_building and q.type_name == "base")
        alive.append(bases > 0)
    winner: int | None = None
    done = False
    if not alive[0] and not alive[1]:
        done = True
    elif not alive[1]:
        done, winner = True, 0
    elif not alive[0]:
        done, winner = True, 1
    elif state.tick >= state.config.max_ticks:
        done = True  # tie at the cap
    if done:
        state.done = True
        state.winner = winner
        events.append(Event("game-over", state.tick, -1,
                            {"winner": winner, "tick": state.tick}))


def step(state: GameState, per_player_actions: list[list[EnvAction]]) -> tuple[GameState, list[Event]]:
    """Advance one tick. Mutates and returns ``state``; use clone() to snapshot."""
    if state.done:
        return state, []
    events: list[Event] = []
    for player in (0, 1):
        for act in per_player_actions[player]:
            _apply_action(state, player, act, events)
    _income(state)
    _larva(state)
    _completions(state, events)
    _movement_and_combat(state, events)
    state.tick += 1
    _check_terminal(state, events)
    return state, events
