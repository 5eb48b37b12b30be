"""Proposal queue with APM budgeting.

Modules submit macro proposals; each tick the scheduler expands and executes
them under an actions-per-minute cap. Execution order cycles through modules:
every module's first queued proposal runs before any module's second, and
within a cycle older submissions go first. Macros execute atomically: either
the whole expansion fits the remaining budget this tick or the proposal stays
queued, and nothing behind it runs. That head-of-line rule is what makes
large macros starvation free: once one is at the front, the window drains
until it fits.

Infeasible proposals (unresolvable bindings) are dropped with a log entry.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from ..env.actions import EnvAction
from .macros import MacroCall, MacroError, MacroInfeasible, MacroRegistry
from .memory import MemoryStore, concretize

DEFAULT_APM_CAP = 180
WINDOW_TICKS = 60  # rolling one-minute window at one tick per second


@dataclass(frozen=True)
class Proposal:
    module: str
    call: MacroCall
    submitted_tick: int
    seq: int  # global submission counter; (submitted_tick, seq) totally orders


class ApmBudget:
    """Rolling-window action budget: at most ``cap`` actions per 60 ticks."""

    def __init__(self, cap: int = DEFAULT_APM_CAP):
        if cap < 0:
            raise ValueError(f"APM cap must be >= 0, got {cap}")
        self.cap = cap
        self._spent: deque[tuple[int, int]] = deque()  # (tick, count)

    def _evict(self, tick: int) -> None:
        while self._spent and self._spent[0][0] <= tick - WINDOW_TICKS:
            self._spent.popleft()

    def available(self, tick: int) -> int:
        self._evict(tick)
        return self.cap - sum(n for _, n in self._spent)

    def spend(self, tick: int, n: int) -> None:
        self._evict(tick)
        if n > 0:
            self._spent.append((tick, n))


class Scheduler:
    def __init__(self, registry: MacroRegistry, apm_cap: int = DEFAULT_APM_CAP,
                 module_order: tuple[str, ...] | None = None):
        self.registry = registry
        self.budget = ApmBudget(apm_cap)
        self._queues: dict[str, deque[Proposal]] = {}
        if module_order:
            for m in module_order:
                self._queues[m] = deque()
        self._seq = 0
        self.log: list[dict] = []

    @property
    def pending(self) -> int:
        return sum(len(q) for q in self._queues.values())

    def queued(self, module: str) -> int:
        return len(self._queues.get(module, ()))

    def pending_proposals(self) -> list[Proposal]:
        """Current queue contents in round-robin execution order."""
        order = []
        rank = 0
        while True:
            row = [q[rank] for q in self._queues.values() if len(q) > rank]
            if not row:
                return order
            row.sort(key=lambda p: (p.submitted_tick, p.seq))
            order.extend(row)
            rank += 1

    def submit(self, module: str, call: MacroCall, tick: int) -> Proposal:
        if call.name not in self.registry:
            raise MacroError(f"cannot submit unregistered macro {call.name!r}")
        p = Proposal(module, call, tick, self._seq)
        self._seq += 1
        self._queues.setdefault(module, deque()).append(p)
        return p

    def drain(self, mem: MemoryStore, tick: int) -> list[EnvAction]:
        """Execute queued proposals in order until the budget stops us."""
        out: list[EnvAction] = []
        if self.budget.cap == 0:
            return out  # nothing can ever run; leave the queue untouched
        for p in self.pending_proposals():
            try:
                actions = concretize(self.registry, p.call, mem)
            except MacroInfeasible as exc:
                self._queues[p.module].remove(p)
                self.log.append({"tick": tick, "module": p.module,
                                 "macro": str(p.call), "status": "infeasible",
                                 "detail": str(exc)})
                continue
            if len(actions) > self.budget.cap:
                # could never fit any window; dropping beats a wedged queue
                self._queues[p.module].remove(p)
                self.log.append({"tick": tick, "module": p.module,
                                 "macro": str(p.call), "status": "oversized",
                                 "n_actions": len(actions)})
                continue
            if len(actions) > self.budget.available(tick):
                self.log.append({"tick": tick, "module": p.module,
                                 "macro": str(p.call), "status": "deferred",
                                 "n_actions": len(actions)})
                break  # atomic execution: nothing behind a blocked macro runs
            self._queues[p.module].remove(p)
            self.budget.spend(tick, len(actions))
            out.extend(actions)
            self.log.append({"tick": tick, "module": p.module,
                             "macro": str(p.call), "status": "executed",
                             "n_actions": len(actions)})
        return out
