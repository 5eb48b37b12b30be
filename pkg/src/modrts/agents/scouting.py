"""Scouting: EMA enemy-composition estimate, map predictor, scout routing.

Under fog the build-order network cannot see true enemy counts, so this
module maintains (a) an exponential moving average of sighted enemy unit
counts, written back into memory as the enemy estimate, and (b) optionally a
learned 64x64 enemy-presence probability map: two convolutions over the
minimap planes feed an LSTM whose hidden state is decoded through a linear
layer and a pixel-wise sigmoid. Scout units rotate through the base slots as
fixed waypoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..env.observation import MINIMAP_SIZE, Observation
from ..env.roster import Roster, default_roster
from ..nn import LSTM, Conv2d, Dense, Params, Sequential, sigmoid
from .macros import MacroCall
from .memory import MemoryStore

EMA_ALPHA = 0.3
WAYPOINT_EPS = 1.5  # "at a waypoint" tolerance, matches base footprint


@dataclass
class ScoutState:
    """EMA counts plus the predictor's recurrent state and last output."""
    ema: dict[str, float] = field(default_factory=dict)
    exact: bool = False                 # True when counts are ground truth
    lstm_state: tuple | None = None
    prob_map: np.ndarray | None = None


def scout_update(state: ScoutState, obs: Observation,
                 alpha: float = EMA_ALPHA) -> ScoutState:
    """Fold this cycle's sightings into the EMA estimate.

    Types sighted this cycle move toward the observed count by ``alpha``;
    unsighted types are held (no decay). Without fog the estimate is simply
    the ground-truth counts.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    if not obs.fog:
        state.ema = {t: float(n) for t, n in obs.enemy_unit_counts.items()}
        state.exact = True
        return state
    state.exact = False
    sighted: dict[str, int] = {}
    for s in obs.enemy_sightings:
        if not s.is_building:
            sighted[s.type_name] = sighted.get(s.type_name, 0) + 1
    for type_name, observed in sighted.items():
        prev = state.ema.get(type_name, 0.0)
        state.ema[type_name] = (1.0 - alpha) * prev + alpha * observed
    return state


class ScoutPredictor:
    """Conv(16,k5,s2) -> Conv(32,k3,s2) -> LSTM -> linear map to 64x64 logits."""

    def __init__(self, hidden: int = 128, in_planes: int = 3,
                 size: int = MINIMAP_SIZE):
        self.trunk = Sequential([
            ("conv1", Conv2d(in_planes, 16, kernel=5, stride=2, activation="relu")),
            ("conv2", Conv2d(16, 32, kernel=3, stride=2, activation="relu")),
        ], input_shape=(in_planes, size, size))
        feat = int(np.prod(self.trunk.output_shape))
        self.lstm = LSTM(feat, hidden)
        self.head = Dense(hidden, size * size)
        self.size = size
        self.hidden = hidden

    def init_params(self, rng: np.random.Generator, dtype=np.float32) -> Params:
        params: Params = {}
        for prefix, part in (("trunk", self.trunk), ("lstm", self.lstm),
                             ("head", self.head)):
            for k, v in part.init_params(rng, dtype).items():
                params[f"{prefix}.{k}"] = v
        return params

    def _sub(self, params: Params, prefix: str) -> Params:
        p = prefix + "."
        return {k[len(p):]: v for k, v in params.items() if k.startswith(p)}

    def forward(self, planes: np.ndarray, params: Params, state=None):
        """Sequence forward: (T, 3, 64, 64) -> logits (T, 64*64), new state.

        Single-step inference is T=1 with the recurrent state threaded
        through successive calls.
        """
        if planes.ndim != 4 or planes.shape[1:] != self.trunk.input_shape:
            raise ValueError(f"predictor input must be (T, {self.trunk.input_shape}),"
                             f" got {planes.shape}")
        t_len = planes.shape[0]
        feats, trunk_caches, _ = self.trunk.forward(planes,
                                                    self._sub(params, "trunk"))
        seq = feats.reshape(t_len, 1, -1)
        hs, lstm_cache, new_state = self.lstm.forward(
            seq, self._sub(params, "lstm"), state)
        logits, head_cache = self.head.forward(hs.reshape(t_len, self.hidden),
                                               self._sub(params, "head"))
        return logits, (trunk_caches, lstm_cache, head_cache), new_state

    def backward(self, dlogits: np.ndarray, caches, params: Params) -> Params:
        trunk_caches, lstm_cache, head_cache = caches
        t_len = dlogits.shape[0]
        gh, head_grads = self.head.backward(dlogits, head_cache,
                                            self._sub(params, "head"))
        gseq, lstm_grads = self.lstm.backward(gh.reshape(t_len, 1, self.hidden),
                                              lstm_cache,
                                              self._sub(params, "lstm"))
        gfeats = gseq.reshape(t_len, -1)
        _, trunk_grads = self.trunk.backward(
            gfeats.reshape((t_len,) + self.trunk.output_shape),
            trunk_caches, self._sub(params, "trunk"))
        grads: Params = {}
        for prefix, part in (("trunk", trunk_grads), ("lstm", lstm_grads),
                             ("head", head_grads)):
            for k, v in part.items():
                grads[f"{prefix}.{k}"] = v
        return grads


def scout_predict(state: ScoutState, minimap: np.ndarray, params: Params,
                  net: ScoutPredictor) -> np.ndarray:
    """Advance the predictor one step; returns the 64x64 probability map."""
    planes = np.asarray(minimap, dtype=np.float32)[None, :]
    logits, _, new_state = net.forward(planes, params, state.lstm_state)
    state.lstm_state = new_state
    state.prob_map = sigmoid(logits[0]).reshape(net.size, net.size)
    return state.prob_map


def scout_route(mem: MemoryStore) -> list[tuple[float, float]]:
    """Base-slot waypoints ordered by distance from our main (ties by index).

    Sorting by distance from the player's own main makes the tour symmetric
    across seats on a mirrored map: both players sweep their near expansions
    first and reach the far (enemy) slot last, rather than one player's
    absolute slot order pointing straight at the opponent.
    """
    slots = mem.base_slots
    main = mem.main_base()
    if main is None or not slots:
        return [(float(x), float(y)) for x, y in slots]
    order = sorted(range(len(slots)),
                   key=lambda i: ((slots[i][0] - main.x) ** 2
                                  + (slots[i][1] - main.y) ** 2, i))
    return [(float(slots[i][0]), float(slots[i][1])) for i in order]


def scout_manage(mem: MemoryStore, roster: Roster | None = None) -> list[MacroCall]:
    """Rotate the on-duty scout through the scout_route waypoints.

    Only the lowest-uid idle scout is routed (one scout on duty at a time;
    the rest stay home, since scouts double as supply providers and a lost
    one costs capacity). A scout sitting at waypoint i is sent to
    (i + 1) mod W; one idle anywhere else goes to the nearest waypoint
    (ties to lowest route position).
    """
    waypoints = scout_route(mem)
    if not waypoints:
        return []
    if any(s.order != "idle" for s in mem.scouts):
        return []  # a scout is already in transit; do not stream out the rest
    proposals = []
    idle = [s for s in mem.scouts if s.order == "idle"]
    for scout in sorted(idle, key=lambda s: s.uid)[:1]:
        at = None
        for i, (wx, wy) in enumerate(waypoints):
            if (scout.x - wx) ** 2 + (scout.y - wy) ** 2 <= WAYPOINT_EPS ** 2:
                at = i
                break
        if at is not None:
            target = (at + 1) % len(waypoints)
        else:
            target = min(range(len(waypoints)),
                         key=lambda i: ((scout.x - waypoints[i][0]) ** 2
                                        + (scout.y - waypoints[i][1]) ** 2, i))
        proposals.append(MacroCall("send_scout",
                                   (scout.uid, waypoints[target])))
    return proposals


def write_back_estimate(state: ScoutState, mem: MemoryStore) -> None:
    """Publish the EMA estimate as memory's enemy-unit counts (fog only)."""
    if mem.fog:
        mem.set_enemy_estimate(dict(state.ema))
        mem.enemy_units_exact = False
