"""Learned decision modules: build-order policy and tactics policy.

Build order sees a flat feature vector (resources, building counts, own and
enemy unit counts) and picks (type, amount) production actions through a
four-layer fully connected network with invalid actions masked out of the
softmax. Tactics sees the three minimap bitplanes and picks an attack cell
through a small fully convolutional network whose 32x32 output grid is a
softmax over locations; a value head pools the last feature map.

Feature and action orderings are fixed and documented: names sort
alphabetically, and ``feature_manifest`` emits the exact layout so that
checkpoints remain interpretable (the manifest is stored in checkpoint
metadata).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env.observation import MINIMAP_SIZE
from ..env.roster import Roster, default_roster
from ..nn import (
    Conv2d,
    Dense,
    Params,
    Sequential,
    categorical_sample,
    masked_softmax,
    softmax,
)
from .macros import MacroCall
from .memory import MemoryStore
from .scripted import FixedBuildScript, fixed_build, production_call, script_exhausted

AMOUNTS = (1, 2, 4, 8, 16)
RESOURCE_SCALE = 0.01  # minerals/gas feature scaling
COUNT_SCALE = 0.1      # unit/building/supply count feature scaling
TACTICS_GRID = 32      # stride-2 first conv halves the 64-pixel minimap


# ---------------------------------------------------------------- action space

@dataclass(frozen=True)
class BuildAction:
    kind: str            # "unit" | "structure" | "noop"
    target: str | None
    amount: int


class BuildOrderSpace:
    """Fixed action enumeration: units x amounts, then structures, then no-op."""

    def __init__(self, roster: Roster | None = None):
        roster = roster or default_roster()
        self.unit_names = sorted(roster.unit_names)
        self.structure_names = sorted(roster.building_names)
        self.actions: list[BuildAction] = []
        for name in self.unit_names:
            for n in AMOUNTS:
                self.actions.append(BuildAction("unit", name, n))
        for name in self.structure_names:
            self.actions.append(BuildAction("structure", name, 1))
        self.actions.append(BuildAction("noop", None, 0))

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def noop_index(self) -> int:
        return len(self.actions) - 1

    def index_of(self, kind: str, target: str | None, amount: int = 1) -> int:
        for i, a in enumerate(self.actions):
            if a.kind == kind and a.target == target and (kind != "unit"
                                                          or a.amount == amount):
                return i
        raise KeyError(f"no action ({kind}, {target}, {amount})")

    def manifest(self) -> list[str]:
        return [f"{a.kind}:{a.target}:{a.amount}" if a.target else "noop"
                for a in self.actions]


# -------------------------------------------------------------------- features

def feature_names(roster: Roster | None = None) -> list[str]:
    roster = roster or default_roster()
    names = ["minerals", "gas", "larva", "supply_free", "supply_cap"]
    names += [f"building:{b}" for b in sorted(roster.building_names)]
    names += [f"own:{u}" for u in sorted(roster.unit_names)]
    names += [f"enemy:{u}" for u in sorted(roster.unit_names)]
    return names


def build_order_features(mem: MemoryStore, roster: Roster | None = None) -> np.ndarray:
    """Flat float32 feature vector in the feature_names order."""
    roster = roster or default_roster()
    out = [mem.minerals * RESOURCE_SCALE,
           mem.gas * RESOURCE_SCALE,
           mem.larva_total * COUNT_SCALE,
           (mem.supply_cap - mem.supply_used) * COUNT_SCALE,
           mem.supply_cap * COUNT_SCALE]
    out += [mem.buildings.get(b, 0) * COUNT_SCALE
            for b in sorted(roster.building_names)]
    out += [mem.friendly_units.get(u, 0) * COUNT_SCALE
            for u in sorted(roster.unit_names)]
    out += [float(mem.enemy_units.get(u, 0)) * COUNT_SCALE
            for u in sorted(roster.unit_names)]
    return np.asarray(out, dtype=np.float32)


def feature_manifest(roster: Roster | None = None) -> dict:
    """Documented input/action layout, embedded in checkpoint metadata."""
    roster = roster or default_roster()
    return {"features": feature_names(roster),
            "scales": {"resources": RESOURCE_SCALE, "counts": COUNT_SCALE},
            "actions": BuildOrderSpace(roster).manifest()}


def build_order_mask(mem: MemoryStore, space: BuildOrderSpace,
                     roster: Roster | None = None) -> np.ndarray:
    """Affordability mask. The rule, also used by the test oracle:

    - unit x n: n * mineral/gas/supply cost payable now (queued supply counts
      against the cap; supply-free providers always pass the supply gate) and
      at least one larva; tech is NOT masked, the act step substitutes the
      missing structure instead.
    - base: minerals and a free slot; extractor: minerals and a base without
      one; other structures: resources and not already built or queued.
    - no-op always valid.
    """
    roster = roster or default_roster()
    queued_supply = sum(roster.types[t].supply_cost for t, _ in mem.build_queue
                        if not roster.types[t].is_building)
    supply_free = mem.supply_cap - mem.supply_used - queued_supply
    queued_counts: dict[str, int] = {}
    for t, _ in mem.build_queue:
        queued_counts[t] = queued_counts.get(t, 0) + 1

    mask = np.zeros(space.size, dtype=bool)
    for i, a in enumerate(space.actions):
        if a.kind == "noop":
            mask[i] = True
            continue
        stats = roster.types[a.target]
        n = a.amount
        if mem.minerals < stats.mineral_cost * n or mem.gas < stats.gas_cost * n:
            continue
        if a.kind == "unit":
            # supply-free providers stay valid even when over the cap
            mask[i] = ((stats.supply_cost == 0
                        or supply_free >= stats.supply_cost * n)
                       and mem.larva_total >= 1)
        elif a.target == "base":
            mask[i] = bool(mem.free_slots())
        elif a.target == "extractor":
            mask[i] = any(not b.has_extractor for b in mem.friendly_bases)
        else:
            mask[i] = (mem.buildings.get(a.target, 0)
                       + queued_counts.get(a.target, 0)) == 0
    return mask


# ------------------------------------------------------------------- networks

def _sub(params: Params, prefix: str) -> Params:
    p = prefix + "."
    return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}


def _merge(out: Params, prefix: str, params: Params) -> None:
    for k, v in params.items():
        out[f"{prefix}.{k}"] = v


class BuildOrderNet:
    """Four 512-unit relu layers, masked softmax policy head, scalar value."""

    def __init__(self, n_features: int, n_actions: int, hidden: int = 512,
                 depth: int = 4):
        layers = []
        size = n_features
        for i in range(depth):
            layers.append((f"fc{i + 1}", Dense(size, hidden, activation="relu")))
            size = hidden
        self.trunk = Sequential(layers, input_shape=(n_features,))
        self.policy = Dense(hidden, n_actions)
        self.value = Dense(hidden, 1)
        self.n_features = n_features
        self.n_actions = n_actions

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        _merge(params, "trunk", self.trunk.init_params(rng, dtype))
        _merge(params, "policy", self.policy.init_params(rng, dtype))
        _merge(params, "value", self.value.init_params(rng, dtype))
        return params

    def forward(self, x: np.ndarray, mask: np.ndarray, params: Params):
        """(probs, value, caches) for a (batch, n_features) input."""
        h, trunk_caches, _ = self.trunk.forward(x, _sub(params, "trunk"))
        logits, pol_cache = self.policy.forward(h, _sub(params, "policy"))
        value, val_cache = self.value.forward(h, _sub(params, "value"))
        probs = masked_softmax(logits, mask)
        return probs, value[:, 0], (trunk_caches, pol_cache, val_cache)

    def backward(self, dlogits: np.ndarray, dvalue: np.ndarray, caches,
                 params: Params) -> Params:
        trunk_caches, pol_cache, val_cache = caches
        gh_p, pol_grads = self.policy.backward(dlogits, pol_cache,
                                               _sub(params, "policy"))
        gh_v, val_grads = self.value.backward(dvalue[:, None], val_cache,
                                              _sub(params, "value"))
        _, trunk_grads = self.trunk.backward(gh_p + gh_v, trunk_caches,
                                             _sub(params, "trunk"))
        grads: Params = {}
        _merge(grads, "trunk", trunk_grads)
        _merge(grads, "policy", pol_grads)
        _merge(grads, "value", val_grads)
        return grads


class TacticsNet:
    """FCN 16/32/1 filters, 5/3/1 kernels, 2/1/1 strides over the minimap.

    Output grid is 32x32 (stride-2 first layer); the softmax runs over its
    flattened cells. The value head global-average-pools the 32-channel
    feature map into a linear unit.
    """

    def __init__(self, in_planes: int = 3, size: int = MINIMAP_SIZE):
        self.conv1 = Conv2d(in_planes, 16, kernel=5, stride=2, activation="relu")
        self.conv2 = Conv2d(16, 32, kernel=3, stride=1, activation="relu")
        self.score = Conv2d(32, 1, kernel=1, stride=1)
        self.value = Dense(32, 1)
        self.grid = size // 2
        self.n_cells = self.grid * self.grid
        self.in_shape = (in_planes, size, size)

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        _merge(params, "conv1", self.conv1.init_params(rng, dtype))
        _merge(params, "conv2", self.conv2.init_params(rng, dtype))
        _merge(params, "score", self.score.init_params(rng, dtype))
        _merge(params, "value", self.value.init_params(rng, dtype))
        return params

    def forward(self, x: np.ndarray, params: Params):
        """(probs over grid cells, value, caches) for (batch, 3, 64, 64)."""
        if x.shape[1:] != self.in_shape:
            raise ValueError(f"tactics input must be {self.in_shape}, "
                             f"got {x.shape[1:]}")
        h1, c1 = self.conv1.forward(x, _sub(params, "conv1"))
        h2, c2 = self.conv2.forward(h1, _sub(params, "conv2"))
        scores, cs = self.score.forward(h2, _sub(params, "score"))
        logits = scores.reshape(x.shape[0], self.n_cells)
        pooled = h2.mean(axis=(2, 3))  # global average pool
        value, cv = self.value.forward(pooled, _sub(params, "value"))
        probs = softmax(logits)
        return probs, value[:, 0], (c1, c2, cs, cv, h2.shape)

    def backward(self, dlogits: np.ndarray, dvalue: np.ndarray, caches,
                 params: Params) -> Params:
        c1, c2, cs, cv, h2_shape = caches
        b = dlogits.shape[0]
        gscores = dlogits.reshape(b, 1, self.grid, self.grid)
        gh2_s, score_grads = self.score.backward(gscores, cs,
                                                 _sub(params, "score"))
        gpooled, val_grads = self.value.backward(dvalue[:, None], cv,
                                                 _sub(params, "value"))
        gh2_v = np.broadcast_to(
            gpooled[:, :, None, None] / (h2_shape[2] * h2_shape[3]), h2_shape)
        gh1, conv2_grads = self.conv2.backward(gh2_s + gh2_v, c2,
                                               _sub(params, "conv2"))
        _, conv1_grads = self.conv1.backward(gh1, c1, _sub(params, "conv1"))
        grads: Params = {}
        _merge(grads, "conv1", conv1_grads)
        _merge(grads, "conv2", conv2_grads)
        _merge(grads, "score", score_grads)
        _merge(grads, "value", val_grads)
        return grads

    def cell_to_map(self, index: int, map_size: int) -> tuple[float, float]:
        """Center of the 2x2 minimap block behind a flat grid index."""
        gy, gx = divmod(index, self.grid)
        scale = MINIMAP_SIZE / float(map_size)
        return ((2 * gx + 1) / scale, (2 * gy + 1) / scale)


# ------------------------------------------------------------------ decisions

@dataclass
class PolicyStep:
    """One sampled decision, kept for the on-policy training buffer."""
    module: str
    tick: int
    features: np.ndarray               # input (vector or planes)
    mask: np.ndarray | None
    action: int
    value: float
    reward: float = 0.0


def build_order_act(mem: MemoryStore, params: Params, opening: FixedBuildScript,
                    rng: np.random.Generator, net: BuildOrderNet,
                    space: BuildOrderSpace, roster: Roster | None = None,
                    deterministic: bool = False,
                    ) -> tuple[MacroCall | None, PolicyStep | None]:
    """Follow the opening script, then sample from the masked policy.

    Tech substitution: a sampled unit whose prerequisite structure is absent
    and not queued becomes a proposal for that structure instead; if the
    prerequisite is already queued the module waits (no proposal).
    """
    roster = roster or default_roster()
    if not script_exhausted(opening, mem):
        calls = fixed_build(opening, mem, roster)
        return (calls[0] if calls else None), None

    x = build_order_features(mem, roster)[None, :]
    mask = build_order_mask(mem, space, roster)
    probs, value, _ = net.forward(x, mask[None, :], params)
    if deterministic:
        action = int(np.argmax(probs[0]))
    else:
        action = categorical_sample(rng, probs[0])
    step = PolicyStep("build_order", mem.time, x[0], mask, action,
                      float(value[0]))
    chosen = space.actions[action]
    if chosen.kind == "noop":
        return None, step
    if chosen.kind == "unit":
        stats = roster.types[chosen.target]
        req = stats.tech_requirement
        if req is not None and mem.buildings.get(req, 0) == 0:
            if any(t == req for t, _ in mem.build_queue):
                return None, step  # prerequisite on the way; wait
            return production_call(req, roster), step
        return production_call(chosen.target, roster, chosen.amount), step
    return production_call(chosen.target, roster), step


def tactics_act(mem: MemoryStore, params: Params, rng: np.random.Generator,
                net: TacticsNet, deterministic: bool = False,
                ) -> tuple[MacroCall | None, PolicyStep | None]:
    """Sample an attack cell from the minimap policy; idle without an army."""
    if not mem.army or mem.minimap is None:
        return None, None
    x = np.asarray(mem.minimap, dtype=np.float32)[None, :]
    probs, value, _ = net.forward(x, params)
    if deterministic:
        action = int(np.argmax(probs[0]))
    else:
        action = categorical_sample(rng, probs[0])
    step = PolicyStep("tactics", mem.time, x[0], None, action, float(value[0]))
    cell = net.cell_to_map(action, mem.map_size)
    return MacroCall("attack_location", (cell,)), step
