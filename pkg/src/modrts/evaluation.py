"""Match running and reporting: win-rate tables, composition breakdowns.

A match pits two agent factories against each other under one config + seed
and distills the game into a MatchResult (winner, duration, per-player unit
production, supply curves). evaluate() runs a block of matches per opponent
per seed group and aggregates win rates as mean +- std across the groups;
composition_report() turns the same results into per-opponent production
ratios over combat units. Evaluation bots come in graded strength tiers via
per-player income multipliers.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .agents import ModularAgent, learned_agent, scripted_agent
from .env import EnvConfig, GameState, new_game, observe, step
from .env.replay import ReplayLog
from .env.roster import Roster, default_roster
from .nn import load_checkpoint
from .pool import random_agent, split_module_params

log = logging.getLogger(__name__)

AgentFactory = Callable[[int, EnvConfig], ModularAgent]

STRENGTH_TIERS = (0.8, 1.0, 1.2, 1.4)
MID_TIER_SCRIPT = "popper_pressure"


class MatchVoid(RuntimeError):
    """An agent failed mid-game; the match produced no countable result."""


class EvalError(ValueError):
    pass


@dataclass
class MatchResult:
    winner: int | None  # None is a tie
    duration: int  # ticks played
    seed: int
    map_id: str
    production: tuple[dict[str, int], dict[str, int]]
    supply_curves: tuple[tuple[int, ...], tuple[int, ...]]

    def to_record(self) -> dict:
        return {
            "winner": self.winner,
            "duration": self.duration,
            "seed": self.seed,
            "map_id": self.map_id,
            "production": [dict(self.production[0]), dict(self.production[1])],
            "supply_curves": [list(self.supply_curves[0]),
                              list(self.supply_curves[1])],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "MatchResult":
        return cls(
            winner=rec["winner"],
            duration=int(rec["duration"]),
            seed=int(rec["seed"]),
            map_id=rec["map_id"],
            production=(dict(rec["production"][0]), dict(rec["production"][1])),
            supply_curves=(tuple(rec["supply_curves"][0]),
                           tuple(rec["supply_curves"][1])),
        )


def config_hash(config: EnvConfig) -> str:
    """Stable short digest of a config; stamps every report artifact."""
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.blake2b(blob.encode(), digest_size=8).hexdigest()


def run_match(factory_a: AgentFactory, factory_b: AgentFactory,
              config: EnvConfig, seed: int,
              replay_path: str | Path | None = None) -> MatchResult:
    """Play one game between two factory-built agents; deterministic in seed.

    Raises MatchVoid if either agent throws mid-game; the engine itself is
    trusted, so engine errors propagate as-is.
    """
    cfg = replace(config, seed=int(seed))
    agents = (factory_a(0, cfg), factory_b(1, cfg))
    state = new_game(cfg)
    replay = ReplayLog(cfg) if replay_path is not None else None
    events: list = []
    curves: tuple[list[int], list[int]] = ([], [])
    for p in (0, 1):
        curves[p].append(state.players[p].supply_used)
    while not state.done:
        acts = []
        for p in (0, 1):
            try:
                acts.append(agents[p].act(observe(state, p),
                                          [e for e in events if e.player == p]))
            except Exception as exc:
                raise MatchVoid(f"agent {p} failed at tick {state.tick}: "
                                f"{exc}") from exc
        if replay is not None:
            replay.record(state.tick, acts)
        state, events = step(state, acts)
        for p in (0, 1):
            curves[p].append(state.players[p].supply_used)
    if replay is not None:
        replay.finalize(state)
        replay.save(replay_path)
    return MatchResult(
        winner=state.winner,
        duration=state.tick,
        seed=int(seed),
        map_id=cfg.map_id,
        production=(dict(state.players[0].produced),
                    dict(state.players[1].produced)),
        supply_curves=(tuple(curves[0]), tuple(curves[1])),
    )


# ---------------------------------------------------------------------------
# agent factories


def scripted_factory(script: str) -> AgentFactory:
    def build(player: int, cfg: EnvConfig) -> ModularAgent:
        return scripted_agent(player, cfg, script)

    return build


def random_factory() -> AgentFactory:
    def build(player: int, cfg: EnvConfig) -> ModularAgent:
        return random_agent(player, cfg, np.random.default_rng((cfg.seed, player)))

    return build


def params_factory(params: Mapping[str, Mapping[str, np.ndarray]],
                   deterministic: bool = False) -> AgentFactory:
    """Learned agent from in-memory per-module params (training output)."""

    def build(player: int, cfg: EnvConfig) -> ModularAgent:
        return learned_agent(
            player, cfg,
            bo_params=params.get("build_order"),
            tactics_params=params.get("tactics"),
            rng=np.random.default_rng((cfg.seed, player)),
            deterministic=deterministic)

    return build


def checkpoint_factory(path: str | Path,
                       deterministic: bool = False) -> AgentFactory:
    if not Path(path).exists():
        raise EvalError(f"checkpoint not found: {path}")
    params, _meta = load_checkpoint(path)
    return params_factory(split_module_params(params), deterministic)


@dataclass(frozen=True)
class Opponent:
    name: str
    factory: AgentFactory
    income_multiplier: float = 1.0  # applied to the opponent's income only


def graded_opponents(script: str = MID_TIER_SCRIPT,
                     tiers: Sequence[float] = STRENGTH_TIERS,
                     ) -> tuple[Opponent, ...]:
    """One scripted bot per strength tier; income scales the handicap."""
    return tuple(Opponent(f"{script}-x{tier:.1f}", scripted_factory(script), tier)
                 for tier in tiers)


def mid_tier_opponent(script: str = MID_TIER_SCRIPT) -> Opponent:
    return Opponent(script, scripted_factory(script), 1.0)


# ---------------------------------------------------------------------------
# win-rate tables


@dataclass(frozen=True)
class EvalRow:
    opponent: str
    win_rate: float  # mean over seed groups
    win_std: float  # population std over seed groups
    tie_rate: float
    loss_rate: float
    matches: int  # counted (non-void) matches
    voids: int


@dataclass
class EvalReport:
    rows: list[EvalRow]
    results: dict[str, list[list[MatchResult]]]  # opponent -> per-seed lists
    voids: dict[str, int]
    seeds: tuple[int, ...]
    n_matches: int
    config_hash: str

    def row(self, opponent: str) -> EvalRow:
        for r in self.rows:
            if r.opponent == opponent:
                return r
        raise EvalError(f"no row for opponent {opponent!r}")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["opponent", "win_rate", "win_std", "tie_rate",
                             "loss_rate", "matches", "voids", "seeds",
                             "config_hash"])
            for r in self.rows:
                writer.writerow([r.opponent, f"{r.win_rate:.6f}",
                                 f"{r.win_std:.6f}", f"{r.tie_rate:.6f}",
                                 f"{r.loss_rate:.6f}", r.matches, r.voids,
                                 " ".join(str(s) for s in self.seeds),
                                 self.config_hash])

    def save_results(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for name, groups in self.results.items():
                for gi, group in enumerate(groups):
                    for res in group:
                        fh.write(json.dumps({"opponent": name, "group": gi,
                                             **res.to_record()},
                                            sort_keys=True) + "\n")


def load_results(path: str | Path) -> dict[str, list[list[MatchResult]]]:
    out: dict[str, list[list[MatchResult]]] = {}
    for line in Path(path).read_text().splitlines():
        rec = json.loads(line)
        groups = out.setdefault(rec["opponent"], [])
        while len(groups) <= rec["group"]:
            groups.append([])
        groups[rec["group"]].append(MatchResult.from_record(rec))
    return out


def match_seeds(seed: int, n: int) -> list[int]:
    """n distinct engine seeds derived from one evaluation seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def aggregate(name: str, groups: Sequence[Sequence[MatchResult]],
              voids: int = 0) -> EvalRow:
    """Fold per-seed match lists into one row; rates sum to 1 exactly."""
    if not any(len(g) for g in groups):
        raise EvalError(f"no counted matches against {name!r}")
    rates = [sum(1 for r in g if r.winner == 0) / len(g)
             for g in groups if g]
    total = sum(len(g) for g in groups)
    wins = sum(1 for g in groups for r in g if r.winner == 0)
    ties = sum(1 for g in groups for r in g if r.winner is None)
    return EvalRow(
        opponent=name,
        win_rate=float(np.mean(rates)),
        win_std=float(np.std(rates)),
        tie_rate=ties / total,
        loss_rate=(total - wins - ties) / total,
        matches=total,
        voids=voids,
    )


def evaluate(agent: AgentFactory, opponents: Sequence[Opponent],
             config: EnvConfig, n_matches: int = 100,
             seeds: Sequence[int] = (0, 1, 2),
             csv_path: str | Path | None = None) -> EvalReport:
    """Win-rate table for one agent vs each opponent, mean +- std over seeds.

    Each evaluation seed derives its own block of n_matches engine seeds.
    Void matches (agent exceptions) are logged and excluded from the rates.
    """
    if n_matches < 1:
        raise EvalError("n_matches must be >= 1")
    if not seeds:
        raise EvalError("need at least one evaluation seed")
    rows: list[EvalRow] = []
    all_results: dict[str, list[list[MatchResult]]] = {}
    all_voids: dict[str, int] = {}
    for opp in opponents:
        cfg = replace(config,
                      income_multipliers=(config.income_multipliers[0],
                                          opp.income_multiplier))
        groups: list[list[MatchResult]] = []
        voids = 0
        for seed in seeds:
            group: list[MatchResult] = []
            for ms in match_seeds(seed, n_matches):
                try:
                    group.append(run_match(agent, opp.factory, cfg, ms))
                except MatchVoid as exc:
                    voids += 1
                    log.warning("void match vs %s (seed %d): %s",
                                opp.name, ms, exc)
            groups.append(group)
        rows.append(aggregate(opp.name, groups, voids))
        all_results[opp.name] = groups
        all_voids[opp.name] = voids
    report = EvalReport(rows=rows, results=all_results, voids=all_voids,
                        seeds=tuple(int(s) for s in seeds),
                        n_matches=n_matches, config_hash=config_hash(config))
    if csv_path is not None:
        report.write_csv(csv_path)
    return report


# ---------------------------------------------------------------------------
# composition reports


@dataclass(frozen=True)
class Composition:
    ratios: dict[str, float]  # combat unit -> share of combat production
    total: int  # combat units produced
    undefined: bool  # true when nothing combat-capable was produced

    def ratio(self, unit: str) -> float:
        return self.ratios.get(unit, 0.0)


def combat_types(roster: Roster | None = None) -> tuple[str, ...]:
    roster = roster or default_roster()
    return tuple(n for n, s in roster.types.items() if s.role == "combat")


def composition_report(results: Mapping[str, Iterable[MatchResult]] |
                       "EvalReport",
                       player: int = 0,
                       roster: Roster | None = None) -> dict[str, Composition]:
    """Per-opponent production ratios over combat units for one player.

    Accepts either an EvalReport or a mapping opponent -> MatchResults
    (nested per-seed lists are flattened).
    """
    if isinstance(results, EvalReport):
        results = {name: [r for g in groups for r in g]
                   for name, groups in results.results.items()}
    combat = combat_types(roster)
    out: dict[str, Composition] = {}
    for name, matches in results.items():
        counts: dict[str, int] = {}
        for res in matches:
            for r in (res if isinstance(res, list) else [res]):
                for unit, n in r.production[player].items():
                    if unit in combat:
                        counts[unit] = counts.get(unit, 0) + n
        total = sum(counts.values())
        if total == 0:
            out[name] = Composition({}, 0, undefined=True)
        else:
            out[name] = Composition({u: n / total for u, n in counts.items()},
                                    total, undefined=False)
    return out


def write_composition_csv(path: str | Path,
                          report: Mapping[str, Composition],
                          roster: Roster | None = None) -> None:
    units = combat_types(roster)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["opponent", *units, "total", "undefined"])
        for name, comp in report.items():
            writer.writerow([name, *(f"{comp.ratio(u):.6f}" for u in units),
                             comp.total, comp.undefined])
