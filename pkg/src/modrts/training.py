"""Advantage actor-critic training for the learned modules.

Reward is the per-tick change in supply difference, so each game's rewards
telescope to its end-game supply difference exactly. Rollout workers play
pool opponents, recording one transition per policy decision (rewards
between consecutive decisions are summed); gradients accumulate locally and
are committed to a central versioned parameter store every fixed number of
gradient steps. Schedules either train modules one at a time with the others
frozen (iterative) or all at once (joint). Behavior-cloning pretrainers
bootstrap both networks from scripted teachers; the build-order teacher
picks the counter of the dominant enemy combat unit.
"""
from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import (
    BuildOrderNet,
    BuildOrderSpace,
    LearnedBuildModule,
    LearnedTacticsModule,
    MacroCall,
    MemoryStore,
    MicroModule,
    ModularAgent,
    ScoutingModule,
    TacticsNet,
    WorkerModule,
    build_order_features,
    build_order_mask,
    build_order_net,
    learned_agent,
    scripted_agent,
)
from .agents.policies import MINIMAP_SIZE, BuildAction
from .agents.scripted import (
    FixedBuildScript,
    default_scripts,
    fixed_build,
    production_call,
    script_exhausted,
    scripted_tactics,
    seed_script_names,
)
from .env import EnvConfig, GameState, new_game, observe, step, supply_difference
from .env.roster import Roster, default_roster
from .nn import Adam, Params, save_checkpoint
from .pool import (
    OpponentPool,
    build_agent,
    maybe_snapshot,
    merge_module_params,
    random_agent,
    sample_opponent,
)

log = logging.getLogger(__name__)

LEARNED_MODULES = ("build_order", "tactics")


@dataclass
class TrainConfig:
    """Desk-scale defaults; entropy and commit cadences are per module."""
    gamma: float = 0.99
    lr: float = 1e-4
    entropy_build: float = 1e-1
    entropy_tactics: float = 1e-4
    value_coef: float = 0.5
    workers: int = 4
    commit_build: int = 40
    commit_tactics: int = 20
    snapshot_interval: int = 30_000
    epoch_steps: int = 3_000
    rollout_steps: int = 16        # finalized transitions per gradient batch

    def __post_init__(self) -> None:
        for name in ("gamma", "lr", "entropy_build", "entropy_tactics",
                     "value_coef", "workers", "commit_build", "commit_tactics",
                     "snapshot_interval", "epoch_steps", "rollout_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma > 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")

    def entropy_coef(self, module: str) -> float:
        return self.entropy_build if module == "build_order" else self.entropy_tactics

    def commit_every(self, module: str) -> int:
        return self.commit_build if module == "build_order" else self.commit_tactics


@dataclass
class Transition:
    """One policy decision with the reward accumulated until the next one."""
    module: str
    features: np.ndarray
    action: int
    mask: np.ndarray | None
    reward: float
    value: float
    terminal: bool


def reward(prev_state: GameState, state: GameState, player: int) -> float:
    """Change in supply difference; antisymmetric between the players."""
    return float(supply_difference(state, player)
                 - supply_difference(prev_state, player))


def returns_and_advantages(traj: list[Transition], gamma: float,
                           bootstrap_value: float = 0.0,
                           ) -> tuple[np.ndarray, np.ndarray]:
    """N-step discounted returns and return-minus-value advantages.

    The bootstrap value continues the last transition unless it is terminal;
    terminal transitions inside the list reset the recursion, so one call
    may span several completed games.
    """
    n = len(traj)
    returns = np.zeros(n)
    running = float(bootstrap_value)
    for i in range(n - 1, -1, -1):
        t = traj[i]
        running = t.reward + gamma * (0.0 if t.terminal else running)
        returns[i] = running
    values = np.array([t.value for t in traj])
    return returns, returns - values


@dataclass
class Batch:
    features: np.ndarray
    masks: np.ndarray | None
    actions: np.ndarray
    returns: np.ndarray
    advantages: np.ndarray

    @classmethod
    def from_transitions(cls, traj: list[Transition], gamma: float,
                         bootstrap_value: float = 0.0) -> "Batch":
        returns, advantages = returns_and_advantages(traj, gamma, bootstrap_value)
        masks = None
        if traj[0].mask is not None:
            masks = np.stack([t.mask for t in traj])
        return cls(features=np.stack([t.features for t in traj]),
                   masks=masks,
                   actions=np.array([t.action for t in traj]),
                   returns=returns, advantages=advantages)


def _a2c(net, batch: Batch, params: Params, entropy_coef: float,
         value_coef: float) -> tuple[float, Params, float]:
    """Loss, gradients, and mean policy entropy for one batch."""
    n = len(batch.actions)
    idx = np.arange(n)
    if batch.masks is not None:
        if not batch.masks[idx, batch.actions].all():
            raise ValueError("action invalid under its own mask: corrupted trajectory")
        probs, value, caches = net.forward(batch.features, batch.masks, params)
    else:
        probs, value, caches = net.forward(batch.features, params)
    p_act = probs[idx, batch.actions]
    if np.any(p_act <= 0.0):
        raise ValueError("sampled action has zero probability: corrupted trajectory")
    logs = np.where(probs > 0.0, np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
    entropy = -(probs * logs).sum(axis=1)
    adv = batch.advantages
    ret = batch.returns
    loss = float(-(adv * np.log(p_act)).sum()
                 + value_coef * ((ret - value) ** 2).sum()
                 - entropy_coef * entropy.sum())
    onehot = np.zeros_like(probs)
    onehot[idx, batch.actions] = 1.0
    dlogits = -adv[:, None] * (onehot - probs)
    dlogits += entropy_coef * probs * (logs + entropy[:, None])
    dvalue = 2.0 * value_coef * (value - ret)
    grads = net.backward(dlogits, dvalue, caches, params)
    return loss, grads, float(entropy.mean())


def a2c_loss(net, batch: Batch, params: Params, entropy_coef: float,
             value_coef: float = 0.5) -> tuple[float, Params]:
    """loss = -sum(adv * log pi(a)) + c_v * sum((R - v)^2) - c_e * sum(H)."""
    loss, grads, _ = _a2c(net, batch, params, entropy_coef, value_coef)
    return loss, grads


class ParamStore:
    """Versioned central parameters; commits apply gradients atomically."""

    def __init__(self, params: Params, optimizer: Adam):
        self._params = {k: v.copy() for k, v in params.items()}
        self._optimizer = optimizer
        self._version = 0
        self._lock = threading.Lock()

    def read(self) -> tuple[int, Params]:
        with self._lock:
            return self._version, {k: v.copy() for k, v in self._params.items()}

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def commit(self, grads: Params) -> int:
        """Apply accumulated gradients as one whole-version swap."""
        with self._lock:
            self._params = self._optimizer.apply(self._params, grads)
            self._version += 1
            return self._version


# ---------------------------------------------------------------- rollouts

@dataclass
class _LiveGame:
    state: GameState
    learner: ModularAgent
    opponent: ModularAgent
    diffs: list[float]                       # supply difference by tick
    events: list
    modules: dict[str, object]               # learner's learned modules
    cursors: dict[str, int]                  # consumed steps per module
    start_counts: dict[str, int]             # done-transition counts at game start


@dataclass
class WorkerStats:
    games: int = 0
    wins: int = 0
    ties: int = 0
    discarded: int = 0


class RolloutWorker:
    """Plays pool opponents and turns policy decisions into transitions.

    Games continue across ``collect`` boundaries; parameters refresh from the
    stores at the start of each collect call (rollout start), so gradient
    staleness is bounded by one rollout.
    """

    def __init__(self, worker_id: int, env_config: EnvConfig, pool: OpponentPool,
                 stores: dict[str, ParamStore], trainable: tuple[str, ...],
                 tcfg: TrainConfig, nets: dict[str, object],
                 seed: np.random.SeedSequence | int,
                 opening: str = "opening"):
        self.worker_id = worker_id
        self.env_config = env_config
        self.pool = pool
        self.stores = stores
        self.trainable = tuple(trainable)
        self.tcfg = tcfg
        self.nets = nets
        self.rng = np.random.default_rng(seed)
        self.opening = opening
        self.params: dict[str, Params] = {}
        self.versions: dict[str, int] = {}
        self.game: _LiveGame | None = None
        self.refresh_params()
        self.done: dict[str, list[Transition]] = {m: [] for m in self.trainable}
        self.tail: dict[str, object] = {m: None for m in self.trainable}
        self.stats = WorkerStats()
        self.grad_steps = {m: 0 for m in self.trainable}
        self.commits = {m: 0 for m in self.trainable}
        self._accum: dict[str, Params | None] = {m: None for m in self.trainable}

    def refresh_params(self) -> None:
        for module, store in self.stores.items():
            self.versions[module], self.params[module] = store.read()
        if self.game is not None:
            for name, mod in self.game.modules.items():
                mod.params = self.params[name]

    def _new_game(self) -> _LiveGame:
        cfg = replace(self.env_config, seed=int(self.rng.integers(2 ** 31 - 1)))
        snap = sample_opponent(self.pool, self.rng)
        opponent = build_agent(snap, 1, cfg, self.rng)
        learner = learned_agent(0, cfg, bo_params=self.params["build_order"],
                                tactics_params=self.params["tactics"],
                                rng=self.rng, opening=self.opening)
        modules = {m.name: m for m in learner.modules
                   if isinstance(m, (LearnedBuildModule, LearnedTacticsModule))}
        return _LiveGame(state=new_game(cfg), learner=learner, opponent=opponent,
                         diffs=[0.0], events=[], modules=modules,
                         cursors={m: 0 for m in self.trainable},
                         start_counts={m: len(self.done[m]) for m in self.trainable})

    def _harvest(self, g: _LiveGame) -> int:
        """Convert fresh policy steps into finalized transitions."""
        new = 0
        for module in self.trainable:
            steps = g.modules[module].steps
            while g.cursors[module] < len(steps):
                s = steps[g.cursors[module]]
                g.cursors[module] += 1
                prev = self.tail[module]
                if prev is not None:
                    self.done[module].append(Transition(
                        module, prev.features, prev.action, prev.mask,
                        reward=g.diffs[s.tick] - g.diffs[prev.tick],
                        value=prev.value, terminal=False))
                    new += 1
                self.tail[module] = s
        return new

    def _finish_game(self, g: _LiveGame) -> int:
        new = 0
        for module in self.trainable:
            prev = self.tail[module]
            if prev is not None:
                self.done[module].append(Transition(
                    module, prev.features, prev.action, prev.mask,
                    reward=g.diffs[-1] - g.diffs[prev.tick],
                    value=prev.value, terminal=True))
                new += 1
            self.tail[module] = None
        self.stats.games += 1
        if g.state.winner == 0:
            self.stats.wins += 1
        elif g.state.winner is None:
            self.stats.ties += 1
        return new

    def _discard_game(self, g: _LiveGame) -> None:
        for module in self.trainable:
            del self.done[module][g.start_counts[module]:]
            self.tail[module] = None
        self.stats.discarded += 1

    def collect(self, min_steps: int | None = None,
                ) -> tuple[dict[str, list[Transition]], dict[str, float]]:
        """Play until every trainable module has >= min_steps new transitions."""
        min_steps = min_steps if min_steps is not None else self.tcfg.rollout_steps
        self.refresh_params()
        while any(len(self.done[m]) < min_steps for m in self.trainable):
            if self.game is None:
                self.game = self._new_game()
            g = self.game
            try:
                acts = []
                for player, agent in ((0, g.learner), (1, g.opponent)):
                    obs = observe(g.state, player)
                    evs = [e for e in g.events if e.player == player]
                    acts.append(agent.act(obs, evs))
                g.state, g.events = step(g.state, acts)
            except Exception:
                log.exception("worker %d: game discarded after env failure",
                              self.worker_id)
                self._discard_game(g)
                self.game = None
                continue
            g.diffs.append(float(supply_difference(g.state, 0)))
            self._harvest(g)
            if g.state.done:
                self._finish_game(g)
                self.game = None
        batches = {}
        bootstraps = {}
        for module in self.trainable:
            batches[module] = self.done[module][:]
            self.done[module].clear()
            tail = self.tail[module]
            bootstraps[module] = float(tail.value) if tail is not None else 0.0
        return batches, bootstraps

    def gradient_step(self, module: str, batch: Batch) -> tuple[float, float]:
        """One a2c gradient computation; commit on the cadence boundary."""
        loss, grads, entropy = _a2c(self.nets[module], batch, self.params[module],
                                    self.tcfg.entropy_coef(module),
                                    self.tcfg.value_coef)
        if not np.isfinite(loss):
            return loss, entropy
        acc = self._accum[module]
        if acc is None:
            self._accum[module] = {k: v.copy() for k, v in grads.items()}
        else:
            for k, v in grads.items():
                acc[k] += v
        self.grad_steps[module] += 1
        if self.grad_steps[module] % self.tcfg.commit_every(module) == 0:
            self.stores[module].commit(self._accum[module])
            self.commits[module] += 1
            self._accum[module] = None
            self.versions[module], self.params[module] = self.stores[module].read()
            if self.game is not None and module in self.game.modules:
                self.game.modules[module].params = self.params[module]
        return loss, entropy


# ---------------------------------------------------------------- schedules

@dataclass
class Stage:
    name: str
    trainable: tuple[str, ...]
    steps: int
    plateau_patience: int | None = None  # epochs without win-rate gain


def make_schedule(kind: str, steps_per_stage: int, cycles: int = 1) -> list[Stage]:
    """"iterative" trains one module per stage; "joint" trains both at once."""
    if kind == "iterative":
        stages = []
        for c in range(1, cycles + 1):
            stages.append(Stage(f"build_order-{c}", ("build_order",), steps_per_stage))
            stages.append(Stage(f"tactics-{c}", ("tactics",), steps_per_stage))
        return stages
    if kind == "joint":
        return [Stage("joint", LEARNED_MODULES, 2 * steps_per_stage * cycles)]
    raise ValueError(f"unknown schedule kind {kind!r}")


def save_schedule(path: str | Path, stages: list[Stage]) -> None:
    records = [{"name": s.name, "trainable": list(s.trainable), "steps": s.steps,
                "plateau_patience": s.plateau_patience} for s in stages]
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def load_schedule(path: str | Path) -> list[Stage]:
    stages = []
    for r in json.loads(Path(path).read_text()):
        bad = set(r["trainable"]) - set(LEARNED_MODULES)
        if bad:
            raise ValueError(f"schedule stage {r['name']!r}: unknown modules {bad}")
        stages.append(Stage(r["name"], tuple(r["trainable"]), int(r["steps"]),
                            r.get("plateau_patience")))
    return stages


@dataclass
class StageResult:
    name: str
    policy_steps: int
    gradient_steps: dict[str, int]
    commits: dict[str, int]
    checkpoint: str
    aborted: bool = False


@dataclass
class TrainResult:
    stages: list[StageResult]
    metrics_path: str
    params: dict[str, Params]
    checkpoints: dict[str, str] = field(default_factory=dict)


class _Metrics:
    """Serialized line-delimited metrics channel."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        path.write_text("")

    def write(self, record: dict) -> None:
        with self._lock:
            with self.path.open("a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def _stage_epoch(metrics: _Metrics, stage: str, epoch: int, steps: int,
                 stats: WorkerStats, last: WorkerStats, losses: list,
                 entropies: list, rewards: list) -> WorkerStats:
    games = stats.games - last.games
    wins = stats.wins - last.wins
    metrics.write({
        "epoch": epoch,
        "stage": stage,
        "policy_steps": steps,
        "games": games,
        "win_rate": round(wins / games, 6) if games else 0.0,
        "mean_reward": round(float(np.mean(rewards)), 6) if rewards else 0.0,
        "entropy": round(float(np.mean(entropies)), 6) if entropies else 0.0,
        "loss": round(float(np.mean(losses)), 6) if losses else 0.0,
    })
    losses.clear()
    entropies.clear()
    rewards.clear()
    return WorkerStats(**vars(stats))


def train(tcfg: TrainConfig, schedule: list[Stage], pool: OpponentPool,
          env_config: EnvConfig, out_dir: str | Path, seed: int = 0,
          init_params: dict[str, Params] | None = None,
          sync: bool = True) -> TrainResult:
    """Run the stage schedule; returns final parameters and artifact paths.

    ``sync=True`` drives the workers round-robin on the calling thread, which
    makes single-worker runs bit-reproducible; ``sync=False`` runs one thread
    per worker against the shared stores (commit staleness permitted).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roster = default_roster()
    bo_net, space = build_order_net(roster)
    tac_net = TacticsNet()
    nets = {"build_order": bo_net, "tactics": tac_net}
    init_rng = np.random.default_rng(seed)
    params = dict(init_params or {})
    if "build_order" not in params:
        params["build_order"] = bo_net.init_params(init_rng)
    if "tactics" not in params:
        params["tactics"] = tac_net.init_params(init_rng)
    stores = {m: ParamStore(params[m], Adam(lr=tcfg.lr)) for m in LEARNED_MODULES}
    metrics = _Metrics(out / "metrics.jsonl")
    seeds = np.random.SeedSequence(seed).spawn(tcfg.workers)

    results = []
    total_steps = 0
    for stage in schedule:
        workers = [RolloutWorker(i, env_config, pool, stores, stage.trainable,
                                 tcfg, nets, seeds[i]) for i in range(tcfg.workers)]
        runner = _run_stage_sync if sync else _run_stage_threads
        result = runner(stage, workers, stores, pool, tcfg, metrics, total_steps)
        total_steps += result.policy_steps
        ckpt = out / f"{stage.name}.ckpt"
        stage_params = {m: stores[m].read()[1] for m in LEARNED_MODULES}
        save_checkpoint(ckpt, merge_module_params(stage_params),
                        {"stage": stage.name, "policy_steps": total_steps,
                         "trainable": list(stage.trainable)})
        result.checkpoint = str(ckpt)
        results.append(result)
        if result.aborted:
            log.error("stage %s aborted (non-finite loss); checkpoint retained",
                      stage.name)
    final = {m: stores[m].read()[1] for m in LEARNED_MODULES}
    return TrainResult(stages=results, metrics_path=str(metrics.path),
                       params=final,
                       checkpoints={r.name: r.checkpoint for r in results})


def _run_stage_sync(stage: Stage, workers: list[RolloutWorker],
                    stores: dict[str, ParamStore], pool: OpponentPool,
                    tcfg: TrainConfig, metrics: _Metrics,
                    global_steps: int) -> StageResult:
    steps = 0
    epoch = 0
    losses: list[float] = []
    entropies: list[float] = []
    rewards: list[float] = []
    last = WorkerStats()
    best_win = -1.0
    stale_epochs = 0
    aborted = False
    while steps < stage.steps and not aborted:
        for worker in workers:
            batches, bootstraps = worker.collect()
            for module in stage.trainable:
                traj = batches[module]
                if not traj:
                    continue
                steps += len(traj)
                rewards.extend(t.reward for t in traj)
                batch = Batch.from_transitions(traj, tcfg.gamma, bootstraps[module])
                loss, entropy = worker.gradient_step(module, batch)
                if not np.isfinite(loss):
                    aborted = True
                    break
                losses.append(loss)
                entropies.append(entropy)
            maybe_snapshot(pool, {m: stores[m].read()[1] for m in LEARNED_MODULES},
                           global_steps + steps, tcfg.snapshot_interval,
                           stage=stage.name)
            if aborted:
                break
        stats = _merge_stats(workers)
        while steps >= (epoch + 1) * tcfg.epoch_steps:
            epoch += 1
            prev_games = last.games
            last = _stage_epoch(metrics, stage.name, epoch,
                                global_steps + min(steps, epoch * tcfg.epoch_steps),
                                stats, last, losses, entropies, rewards)
            if stage.plateau_patience is not None and last.games > prev_games:
                rate = stats.wins / max(stats.games, 1)
                if rate > best_win + 1e-9:
                    best_win = rate
                    stale_epochs = 0
                else:
                    stale_epochs += 1
                    if stale_epochs >= stage.plateau_patience:
                        steps = stage.steps  # plateau: stop the stage early
                        break
    stats = _merge_stats(workers)
    if losses or stats.games > last.games:
        epoch += 1
        _stage_epoch(metrics, stage.name, epoch, global_steps + steps, stats,
                     last, losses, entropies, rewards)
    return StageResult(
        name=stage.name, policy_steps=steps,
        gradient_steps={m: sum(w.grad_steps[m] for w in workers)
                        for m in stage.trainable},
        commits={m: sum(w.commits[m] for w in workers) for m in stage.trainable},
        checkpoint="", aborted=aborted)


def _merge_stats(workers: list[RolloutWorker]) -> WorkerStats:
    out = WorkerStats()
    for w in workers:
        out.games += w.stats.games
        out.wins += w.stats.wins
        out.ties += w.stats.ties
        out.discarded += w.stats.discarded
    return out


def _run_stage_threads(stage: Stage, workers: list[RolloutWorker],
                       stores: dict[str, ParamStore], pool: OpponentPool,
                       tcfg: TrainConfig, metrics: _Metrics,
                       global_steps: int) -> StageResult:
    lock = threading.Lock()
    state = {"steps": 0, "epoch": 0, "aborted": False, "last": WorkerStats()}
    losses: list[float] = []
    entropies: list[float] = []
    rewards: list[float] = []

    def loop(worker: RolloutWorker) -> None:
        while True:
            with lock:
                if state["steps"] >= stage.steps or state["aborted"]:
                    return
            batches, bootstraps = worker.collect()
            for module in stage.trainable:
                traj = batches[module]
                if not traj:
                    continue
                batch = Batch.from_transitions(traj, tcfg.gamma, bootstraps[module])
                loss, entropy = worker.gradient_step(module, batch)
                with lock:
                    state["steps"] += len(traj)
                    rewards.extend(t.reward for t in traj)
                    if not np.isfinite(loss):
                        state["aborted"] = True
                        return
                    losses.append(loss)
                    entropies.append(entropy)
            maybe_snapshot(pool, {m: stores[m].read()[1] for m in LEARNED_MODULES},
                           global_steps + state["steps"], tcfg.snapshot_interval,
                           stage=stage.name)
            with lock:
                while state["steps"] >= (state["epoch"] + 1) * tcfg.epoch_steps:
                    state["epoch"] += 1
                    state["last"] = _stage_epoch(
                        metrics, stage.name, state["epoch"],
                        global_steps + state["epoch"] * tcfg.epoch_steps,
                        _merge_stats(workers), state["last"],
                        losses, entropies, rewards)

    threads = [threading.Thread(target=loop, args=(w,)) for w in workers]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    stats = _merge_stats(workers)
    if losses or stats.games > state["last"].games:
        state["epoch"] += 1
        _stage_epoch(metrics, stage.name, state["epoch"],
                     global_steps + state["steps"], stats, state["last"],
                     losses, entropies, rewards)
    return StageResult(
        name=stage.name, policy_steps=state["steps"],
        gradient_steps={m: sum(w.grad_steps[m] for w in workers)
                        for m in stage.trainable},
        commits={m: sum(w.commits[m] for w in workers) for m in stage.trainable},
        checkpoint="", aborted=state["aborted"])


# ------------------------------------------------------------- pretraining

def counter_map(roster: Roster) -> dict[str, str]:
    """target type -> the unit holding the largest damage bonus against it."""
    best: dict[str, tuple[float, str]] = {}
    for name, stats in roster.types.items():
        for target, mult in stats.counter_bonus.items():
            if target not in best or mult > best[target][0]:
                best[target] = (mult, name)
    return {target: name for target, (_, name) in best.items()}


def _macro_for(choice: BuildAction, mem: MemoryStore,
               roster: Roster) -> MacroCall | None:
    """Action-to-macro mapping shared with the learned module's act step."""
    if choice.kind == "noop":
        return None
    if choice.kind == "unit":
        req = roster.types[choice.target].tech_requirement
        if req is not None and mem.buildings.get(req, 0) == 0:
            if any(t == req for t, _ in mem.build_queue):
                return None
            return production_call(req, roster)
        return production_call(choice.target, roster, choice.amount)
    return production_call(choice.target, roster)


def teacher_label(mem: MemoryStore, mask: np.ndarray, space: BuildOrderSpace,
                  roster: Roster, counters: dict[str, str]) -> int:
    """Counter-picking teacher: first valid candidate wins.

    Priorities: keep supply ahead of production, saturate workers, secure gas
    for the chosen counter, produce the counter of the dominant enemy combat
    unit, expand on a mineral bank, dump spare minerals into swarmlings.
    """
    queued_supply = sum(roster.types[t].supply_cost for t, _ in mem.build_queue
                        if not roster.types[t].is_building)
    supply_free = mem.supply_cap - mem.supply_used - queued_supply
    workers = (mem.friendly_units.get(roster.worker_name, 0)
               + sum(1 for t, _ in mem.build_queue if t == roster.worker_name))
    bases = (len(mem.friendly_bases)
             + sum(1 for t, _ in mem.build_queue if t == "base"))
    combat = {t: n for t, n in mem.enemy_units.items()
              if t in roster.types and roster.types[t].role == "combat"
              and n >= 0.5}
    dominant = max(combat, key=combat.get) if combat else None
    target = counters.get(dominant, "popper") if dominant else "popper"

    candidates: list[tuple[str, str | None, int]] = []
    if supply_free < 4:
        candidates.append(("unit", roster.scout_name, 1))
    if workers < 12:
        candidates.append(("unit", roster.worker_name, 2))
        candidates.append(("unit", roster.worker_name, 1))
    needs_gas = roster.types[target].gas_cost > 0
    if needs_gas and not any(b.has_extractor for b in mem.friendly_bases):
        candidates.append(("structure", "extractor", 1))
    candidates.extend(("unit", target, n) for n in (4, 2, 1))
    if mem.minerals >= 400 and bases < 2:
        candidates.append(("structure", "base", 1))
    candidates.extend(("unit", "swarmling", n) for n in (2, 1))
    for kind, name, amount in candidates:
        idx = space.index_of(kind, name, amount)
        if mask[idx]:
            return idx
    return space.noop_index


class TeacherBuildModule:
    """Plays the counter-picking teacher while recording (x, mask, label)."""
    name = "build_order"
    cadence = 5

    def __init__(self, space: BuildOrderSpace, roster: Roster,
                 opening: FixedBuildScript, samples: list):
        self.space = space
        self.roster = roster
        self.opening = opening
        self.samples = samples
        self.counters = counter_map(roster)

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        if not script_exhausted(self.opening, mem):
            return fixed_build(self.opening, mem, self.roster)
        mask = build_order_mask(mem, self.space, self.roster)
        label = teacher_label(mem, mask, self.space, self.roster, self.counters)
        self.samples.append((build_order_features(mem, self.roster), mask, label))
        macro = _macro_for(self.space.actions[label], mem, self.roster)
        return [macro] if macro is not None else []


def map_to_cell(x: float, y: float, map_size: int,
                minimap_size: int = MINIMAP_SIZE) -> int:
    """Inverse of the tactics net's cell_to_map, clipped to the grid."""
    grid = minimap_size // 2
    scale = minimap_size / map_size
    gx = min(max(int(x * scale / 2.0), 0), grid - 1)
    gy = min(max(int(y * scale / 2.0), 0), grid - 1)
    return gy * grid + gx


class TeacherTacticsModule:
    """Scripted tactics with (minimap, target-cell) sample recording."""
    name = "tactics"
    cadence = 10

    def __init__(self, roster: Roster, samples: list):
        self.roster = roster
        self.samples = samples

    def propose(self, mem: MemoryStore) -> list[MacroCall]:
        calls = scripted_tactics(mem, self.roster)
        if mem.minimap is not None:
            for call in calls:
                if call.name == "attack_location":
                    (x, y), = call.args
                    cell = map_to_cell(x, y, mem.map_size)
                    self.samples.append((np.asarray(mem.minimap,
                                                    dtype=np.float32).copy(), cell))
        return calls


def collect_teacher_games(env_config: EnvConfig, rng: np.random.Generator,
                          opponents: tuple[str, ...] | None = None,
                          games_per_opponent: int = 2,
                          random_games: int = 2,
                          roster: Roster | None = None,
                          ) -> tuple[list, list]:
    """Teacher self-play dataset: build-order and tactics samples."""
    roster = roster or default_roster()
    space = BuildOrderSpace(roster)
    opening = default_scripts()["opening"]
    opponents = tuple(opponents) if opponents is not None else tuple(seed_script_names())
    bo_samples: list = []
    tac_samples: list = []

    def run(opponent: ModularAgent, cfg: EnvConfig) -> None:
        modules = [ScoutingModule(roster), WorkerModule(roster),
                   TeacherBuildModule(space, roster, opening, bo_samples),
                   TeacherTacticsModule(roster, tac_samples),
                   MicroModule(roster)]
        teacher = ModularAgent(0, cfg, modules)
        state = new_game(cfg)
        events: list = []
        while not state.done:
            acts = []
            for player, agent in ((0, teacher), (1, opponent)):
                obs = observe(state, player)
                acts.append(agent.act(obs, [e for e in events
                                            if e.player == player]))
            state, events = step(state, acts)

    for script in opponents:
        for _ in range(games_per_opponent):
            cfg = replace(env_config, seed=int(rng.integers(2 ** 31 - 1)))
            run(scripted_agent(1, cfg, script), cfg)
    for _ in range(random_games):
        cfg = replace(env_config, seed=int(rng.integers(2 ** 31 - 1)))
        run(random_agent(1, cfg, rng), cfg)
    return bo_samples, tac_samples


def fit_build_order(net: BuildOrderNet, samples: list,
                    rng: np.random.Generator, epochs: int = 6,
                    batch_size: int = 64, lr: float = 1e-3) -> Params:
    """Cross-entropy behavior cloning on (features, mask, label) samples."""
    params = net.init_params(rng)
    opt = Adam(lr=lr)
    xs = np.stack([s[0] for s in samples])
    masks = np.stack([s[1] for s in samples])
    labels = np.array([s[2] for s in samples])
    n = len(samples)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            sel = order[lo:lo + batch_size]
            probs, value, caches = net.forward(xs[sel], masks[sel], params)
            onehot = np.zeros_like(probs)
            onehot[np.arange(len(sel)), labels[sel]] = 1.0
            dlogits = (probs - onehot) / len(sel)
            grads = net.backward(dlogits, np.zeros_like(value), caches, params)
            params = opt.apply(params, grads)
    return params


def fit_tactics(net: TacticsNet, samples: list, rng: np.random.Generator,
                epochs: int = 2, batch_size: int = 8, lr: float = 1e-3) -> Params:
    """Cross-entropy cloning of scripted attack cells from minimap planes."""
    params = net.init_params(rng)
    opt = Adam(lr=lr)
    xs = np.stack([s[0] for s in samples])
    labels = np.array([s[1] for s in samples])
    n = len(samples)
    for _ in range(epochs):
        order = rng.permutation(n)
        for lo in range(0, n, batch_size):
            sel = order[lo:lo + batch_size]
            probs, value, caches = net.forward(xs[sel], params)
            onehot = np.zeros_like(probs)
            onehot[np.arange(len(sel)), labels[sel]] = 1.0
            dlogits = (probs - onehot) / len(sel)
            grads = net.backward(dlogits, np.zeros_like(value), caches, params)
            params = opt.apply(params, grads)
    return params


def pretrain(env_config: EnvConfig, seed: int = 0,
             games_per_opponent: int = 2, random_games: int = 2,
             bo_epochs: int = 6, tactics_epochs: int = 2,
             ) -> dict[str, Params]:
    """Behavior-clone both learned modules from scripted teachers."""
    rng = np.random.default_rng(seed)
    roster = default_roster()
    bo_net, _space = build_order_net(roster)
    tac_net = TacticsNet()
    bo_samples, tac_samples = collect_teacher_games(
        env_config, rng, games_per_opponent=games_per_opponent,
        random_games=random_games, roster=roster)
    params = {"build_order": fit_build_order(bo_net, bo_samples, rng,
                                             epochs=bo_epochs)}
    if tac_samples:
        params["tactics"] = fit_tactics(tac_net, tac_samples, rng,
                                        epochs=tactics_epochs)
    return params
