"""CLI surface: exit codes, artifact emission, config precedence."""
from __future__ import annotations

import json
from dataclasses import replace

import pytest

from modrts.cli import _parse_opponent, main
from modrts.env import EnvConfig
from modrts.evaluation import run_match, scripted_factory

CFG = EnvConfig.from_map("basin")


class TestUsageErrors:
    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--out", "x", "--bogus-flag"])
        assert exc.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["conquer"])
        assert exc.value.code == 2

    def test_missing_checkpoint_names_path(self, tmp_path, capsys):
        code = main(["eval", "--checkpoint", str(tmp_path / "ghost.ckpt"),
                     "--out", str(tmp_path)])
        assert code == 2
        assert "ghost.ckpt" in capsys.readouterr().err

    def test_eval_requires_agent_source(self, tmp_path, capsys):
        code = main(["eval", "--out", str(tmp_path)])
        assert code == 2
        assert "--checkpoint" in capsys.readouterr().err

    def test_pool_inspect_requires_id(self, tmp_path, capsys):
        from modrts.pool import init_pool

        init_pool(tmp_path / "pool")
        code = main(["pool", "inspect", "--dir", str(tmp_path / "pool")])
        assert code == 2
        assert "--id" in capsys.readouterr().err


class TestOpponentParsing:
    def test_plain_name(self):
        opp = _parse_opponent("swarmling_flood")
        assert opp.name == "swarmling_flood"
        assert opp.income_multiplier == 1.0

    def test_name_with_tier(self):
        opp = _parse_opponent("popper_pressure:1.2")
        assert opp.name == "popper_pressure-x1.2"
        assert opp.income_multiplier == 1.2


class TestTrainEvalReport:
    def test_full_artifact_chain(self, tmp_path, capsys):
        run = tmp_path / "run"
        code = main(["train", "--out", str(run), "--steps", "40",
                     "--epoch-steps", "24", "--snapshot-interval", "1000",
                     "--workers", "1", "--schedule", "joint", "--no-pretrain",
                     "--seed", "3", "--max-ticks", "300"])
        assert code == 0
        out = capsys.readouterr().out
        assert "stage joint: done" in out
        assert (run / "metrics.jsonl").exists()
        assert (run / "joint.ckpt").exists()
        stamp = json.loads((run / "run.json").read_text())
        assert stamp["command"] == "train"
        assert stamp["seeds"] == [3]
        assert len(stamp["config_hash"]) == 16

        # report before eval: plot only
        code = main(["report", "--run", str(run)])
        assert code == 0
        assert (run / "curves.png").exists()
        assert not (run / "win_rate.csv").exists()

        # eval the trained checkpoint, then report emits all artifacts
        code = main(["eval", "--checkpoint", str(run / "joint.ckpt"),
                     "--out", str(run), "--opponents", "swarmling_flood",
                     "--matches", "2", "--seeds", "0", "--max-ticks", "300"])
        assert code == 0
        assert (run / "eval.csv").exists()
        assert (run / "results.jsonl").exists()
        code = main(["report", "--run", str(run)])
        assert code == 0
        assert (run / "win_rate.csv").exists()
        assert (run / "composition.csv").exists()

    def test_report_without_metrics_fails(self, tmp_path, capsys):
        code = main(["report", "--run", str(tmp_path)])
        assert code == 2
        assert "metrics" in capsys.readouterr().err


class TestConfigFile:
    def test_file_values_used_and_flags_win(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"map": "rift", "seed": 9,
                                        "max_ticks": 60, "matches": 1,
                                        "seeds": [0]}))
        out1 = tmp_path / "a"
        code = main(["eval", "--script", "swarmling_flood", "--out", str(out1),
                     "--config", str(cfg_file), "--opponents",
                     "swarmling_flood"])
        assert code == 0
        assert json.loads((out1 / "run.json").read_text())["map"] == "rift"

        out2 = tmp_path / "b"
        code = main(["eval", "--script", "swarmling_flood", "--out", str(out2),
                     "--config", str(cfg_file), "--opponents",
                     "swarmling_flood", "--map", "basin"])
        assert code == 0
        assert json.loads((out2 / "run.json").read_text())["map"] == "basin"

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["eval", "--script", "swarmling_flood",
                     "--out", str(tmp_path),
                     "--config", str(tmp_path / "nope.json")])
        assert code == 2
        assert "nope.json" in capsys.readouterr().err


class TestReplayCommand:
    def make_replay(self, tmp_path):
        path = tmp_path / "game.replay"
        run_match(scripted_factory("popper_pressure"),
                  scripted_factory("swarmling_flood"),
                  replace(CFG, max_ticks=150), 8, replay_path=path)
        return path

    def test_replay_verifies(self, tmp_path, capsys):
        path = self.make_replay(tmp_path)
        assert main(["replay", "--path", str(path)]) == 0
        out = capsys.readouterr().out
        assert "verified" in out

    def test_tampered_replay_detected(self, tmp_path, capsys):
        path = self.make_replay(tmp_path)
        lines = path.read_text().splitlines()
        end = json.loads(lines[-1])
        end["hash"] = "0" * len(end["hash"])
        lines[-1] = json.dumps(end)
        path.write_text("\n".join(lines) + "\n")
        assert main(["replay", "--path", str(path)]) == 1
        assert "MISMATCH" in capsys.readouterr().err

    def test_malformed_replay_is_error(self, tmp_path):
        bad = tmp_path / "bad.replay"
        bad.write_text("not a replay\n")
        assert main(["replay", "--path", str(bad)]) == 2


class TestPoolCommands:
    def test_list_and_inspect(self, tmp_path, capsys):
        from modrts.nn import save_checkpoint
        from modrts.pool import AgentSnapshot, checkpoint_hash, init_pool

        import numpy as np

        pool_dir = tmp_path / "pool"
        pool = init_pool(pool_dir)
        ckpt = pool_dir / "learned-000000001.ckpt"
        save_checkpoint(ckpt, {"w": np.zeros(3)}, {"stage": "s1"})
        pool.add(AgentSnapshot(id="learned-000000001", kind="learned",
                               checkpoint=str(ckpt),
                               content_hash=checkpoint_hash(ckpt),
                               stage="s1", creation_step=1))

        assert main(["pool", "list", "--dir", str(pool_dir)]) == 0
        out = capsys.readouterr().out
        assert "random" in out and "learned-000000001" in out
        assert "7 members" in out

        assert main(["pool", "inspect", "--dir", str(pool_dir),
                     "--id", "learned-000000001"]) == 0
        out = capsys.readouterr().out
        assert "kind: learned" in out and "tensors: 1" in out

        assert main(["pool", "inspect", "--dir", str(pool_dir),
                     "--id", "nobody"]) == 2
