"""Replay log round-trip and deterministic re-simulation."""
from __future__ import annotations

import json

import numpy as np
import pytest

from modrts.env import (
    EnvConfig,
    ReplayError,
    ReplayLog,
    action,
    new_game,
    resimulate,
    state_hash,
    step,
    verify,
)


def play_logged_game(seed: int, ticks: int = 120):
    cfg = EnvConfig.from_map("basin", seed=seed)
    st = new_game(cfg)
    log = ReplayLog(cfg)
    rng = np.random.default_rng(seed)
    for _ in range(ticks):
        acts = [[], []]
        for p in (0, 1):
            r = rng.random()
            if r < 0.3:
                acts[p].append(action("produce", "worker"))
            elif r < 0.4:
                cell = (float(rng.integers(32)), float(rng.integers(32)))
                acts[p].append(action("attack", cell))
        log.record(st.tick, acts)
        st, _ = step(st, acts)
        if st.done:
            break
    log.finalize(st)
    return st, log


def test_round_trip_verifies(tmp_path):
    st, log = play_logged_game(31)
    path = tmp_path / "game.jsonl"
    log.save(path)
    loaded = ReplayLog.load(path)
    assert verify(loaded)
    final = resimulate(loaded)
    assert state_hash(final) == state_hash(st)
    assert final.tick == st.tick


def test_tampered_actions_fail_verification(tmp_path):
    _, log = play_logged_game(33)
    path = tmp_path / "game.jsonl"
    log.save(path)
    lines = path.read_text().splitlines()
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec["kind"] == "tick" and any(rec["actions"][0]):
            rec["actions"][0] = []  # drop player 0's actions that tick
            lines[i] = json.dumps(rec)
            break
    path.write_text("\n".join(lines) + "\n")
    assert not verify(ReplayLog.load(path))


def test_unfinalized_save_rejected(tmp_path):
    cfg = EnvConfig.from_map("basin", seed=1)
    log = ReplayLog(cfg)
    with pytest.raises(ReplayError):
        log.save(tmp_path / "x.jsonl")


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"kind": "tick", "tick": 0, "actions": [[], []]}) + "\n")
    with pytest.raises(ReplayError):
        ReplayLog.load(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ReplayError):
        ReplayLog.load(path)
