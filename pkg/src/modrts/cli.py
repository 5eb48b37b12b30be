"""Command-line surface: train, eval, pool, report, replay.

Every run directory gets a run.json stamp (config hash + seeds) so any
artifact can be traced back to the exact setup that produced it. Options can
come from a JSON config file (--config); explicit flags take precedence over
file values, which take precedence over built-in defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .env import EnvConfig
from .env.maps import MapError
from .env.replay import ReplayError, ReplayLog, resimulate
from .env.state import state_hash
from .evaluation import (
    EvalError,
    Opponent,
    aggregate,
    checkpoint_factory,
    composition_report,
    config_hash,
    evaluate,
    graded_opponents,
    load_results,
    random_factory,
    scripted_factory,
    write_composition_csv,
)
from .nn import CheckpointError, load_checkpoint
from .pool import PoolError, init_pool, load_pool
from .training import TrainConfig, load_schedule, make_schedule, pretrain, train

log = logging.getLogger(__name__)

_UNSET = object()


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    file = Path(path)
    if not file.exists():
        raise EvalError(f"config file not found: {file}")
    data = json.loads(file.read_text())
    if not isinstance(data, dict):
        raise EvalError(f"config file must hold a JSON object: {file}")
    return data


def _opt(args: argparse.Namespace, file_cfg: dict, name: str, default):
    """Flag if given, else config-file value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in file_cfg:
        return file_cfg[name]
    return default


def _env_config(args: argparse.Namespace, file_cfg: dict) -> EnvConfig:
    overrides: dict = {"seed": int(_opt(args, file_cfg, "seed", 0))}
    max_ticks = _opt(args, file_cfg, "max_ticks", None)
    if max_ticks is not None:
        overrides["max_ticks"] = int(max_ticks)
    if bool(_opt(args, file_cfg, "fog", False)):
        overrides["fog_enabled"] = True
    return EnvConfig.from_map(_opt(args, file_cfg, "map", "basin"), **overrides)


def _stamp(out: Path, command: str, config: EnvConfig, seeds) -> None:
    rec = {"command": command, "config_hash": config_hash(config),
           "map": config.map_id, "seeds": [int(s) for s in seeds]}
    (out / "run.json").write_text(json.dumps(rec, indent=2, sort_keys=True)
                                  + "\n")


# ---------------------------------------------------------------------------
# train


def cmd_train(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    cfg = _env_config(args, file_cfg)
    seed = cfg.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    tcfg = TrainConfig(
        workers=int(_opt(args, file_cfg, "workers", 4)),
        snapshot_interval=int(_opt(args, file_cfg, "snapshot_interval", 30_000)),
        epoch_steps=int(_opt(args, file_cfg, "epoch_steps", 3_000)),
    )
    schedule_arg = _opt(args, file_cfg, "schedule", "iterative")
    steps = int(_opt(args, file_cfg, "steps", 3_000))
    cycles = int(_opt(args, file_cfg, "cycles", 1))
    if str(schedule_arg).endswith(".json"):
        schedule = load_schedule(schedule_arg)
    else:
        schedule = make_schedule(schedule_arg, steps, cycles=cycles)

    pool = init_pool(out / "pool")
    init_params = None
    if not args.no_pretrain:
        log.info("pretraining modules on scripted teacher games")
        init_params = pretrain(cfg, seed=seed)
    result = train(tcfg, schedule, pool, cfg, out, seed=seed,
                   init_params=init_params, sync=not args.threads)

    _stamp(out, "train", cfg, [seed])
    for stage in result.stages:
        status = "aborted" if stage.aborted else "done"
        print(f"stage {stage.name}: {status}, {stage.policy_steps} steps, "
              f"checkpoint {stage.checkpoint}")
    print(f"metrics: {result.metrics_path}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _parse_opponent(token: str) -> Opponent:
    if ":" in token:
        name, mult = token.rsplit(":", 1)
        return Opponent(f"{name}-x{float(mult):.1f}", scripted_factory(name),
                        float(mult))
    return Opponent(token, scripted_factory(token))


def cmd_eval(args: argparse.Namespace) -> int:
    file_cfg = _load_config_file(args.config)
    cfg = _env_config(args, file_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.script:
        agent = scripted_factory(args.script)
    elif args.random_agent:
        agent = random_factory()
    else:
        if args.checkpoint is None:
            raise EvalError("need --checkpoint, --script, or --random-agent")
        agent = checkpoint_factory(args.checkpoint,
                                   deterministic=args.deterministic)

    if args.opponents:
        opponents = [_parse_opponent(tok) for tok in args.opponents]
    else:
        opponents = list(graded_opponents())

    seeds = [int(s) for s in _opt(args, file_cfg, "seeds", None) or (0, 1, 2)]
    matches = int(_opt(args, file_cfg, "matches", 100))
    report = evaluate(agent, opponents, cfg, n_matches=matches, seeds=seeds,
                      csv_path=out / "eval.csv")
    report.save_results(out / "results.jsonl")
    _stamp(out, "eval", cfg, seeds)

    for row in report.rows:
        print(f"{row.opponent}: win {row.win_rate:.3f} +- {row.win_std:.3f} "
              f"(tie {row.tie_rate:.3f}, {row.matches} matches, "
              f"{row.voids} void)")
    print(f"table: {out / 'eval.csv'}")
    return 0


# ---------------------------------------------------------------------------
# pool


def cmd_pool(args: argparse.Namespace) -> int:
    pool = load_pool(Path(args.dir))
    members = pool.members()
    if args.action == "list":
        for snap in members:
            step = "" if snap.creation_step is None else f" step={snap.creation_step}"
            stage = f" stage={snap.stage}" if snap.stage else ""
            print(f"{snap.id}  kind={snap.kind}{stage}{step}")
        print(f"{len(members)} members")
        return 0
    # inspect
    if args.id is None:
        raise PoolError("pool inspect needs --id")
    matches = [m for m in members if m.id == args.id]
    if not matches:
        raise PoolError(f"no pool member with id {args.id!r}")
    snap = matches[0]
    print(f"id: {snap.id}")
    print(f"kind: {snap.kind}")
    if snap.script:
        print(f"script: {snap.script}")
    if snap.checkpoint:
        params, meta = load_checkpoint(snap.checkpoint)
        print(f"checkpoint: {snap.checkpoint}")
        print(f"hash: {snap.content_hash}")
        print(f"meta: {json.dumps(meta, sort_keys=True)}")
        print(f"tensors: {len(params)}")
    return 0


# ---------------------------------------------------------------------------
# report


def _plot_curves(metrics_path: Path, plot_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = [json.loads(line)
               for line in metrics_path.read_text().splitlines() if line]
    if not records:
        raise EvalError(f"metrics log is empty: {metrics_path}")
    stages: dict[str, list[dict]] = {}
    for rec in records:
        stages.setdefault(rec["stage"], []).append(rec)

    fields = ("win_rate", "mean_reward", "entropy", "loss")
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    for ax, field in zip(axes.flat, fields):
        for stage, recs in stages.items():
            xs = [r["policy_steps"] for r in recs]
            ys = [r[field] for r in recs]
            ax.plot(xs, ys, marker="o", markersize=3, label=stage)
        ax.set_xlabel("policy steps")
        ax.set_ylabel(field.replace("_", " "))
        ax.grid(True, alpha=0.3)
    axes.flat[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)


def cmd_report(args: argparse.Namespace) -> int:
    run = Path(args.run)
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)

    metrics_path = run / "metrics.jsonl"
    if not metrics_path.exists():
        raise EvalError(f"no metrics log at {metrics_path}")
    plot_path = out / "curves.png"
    _plot_curves(metrics_path, plot_path)
    artifacts = [plot_path]

    results_path = run / "results.jsonl"
    if results_path.exists():
        results = load_results(results_path)
        table_path = out / "win_rate.csv"
        rows = [aggregate(name, groups) for name, groups in results.items()]
        import csv as _csv

        with open(table_path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["opponent", "win_rate", "win_std", "tie_rate",
                             "loss_rate", "matches"])
            for r in rows:
                writer.writerow([r.opponent, f"{r.win_rate:.6f}",
                                 f"{r.win_std:.6f}", f"{r.tie_rate:.6f}",
                                 f"{r.loss_rate:.6f}", r.matches])
        comp_path = out / "composition.csv"
        write_composition_csv(comp_path, composition_report(
            {name: [r for g in groups for r in g]
             for name, groups in results.items()}))
        artifacts += [table_path, comp_path]
    else:
        log.info("no results.jsonl in %s; skipping win-rate/composition CSVs",
                 run)

    for path in artifacts:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# replay


def cmd_replay(args: argparse.Namespace) -> int:
    replay = ReplayLog.load(Path(args.path))
    final = resimulate(replay)
    rerun_hash = state_hash(final)
    print(f"ticks: {final.tick}  winner: {final.winner}")
    print(f"logged hash: {replay.final_hash}")
    print(f"re-run hash: {rerun_hash}")
    if rerun_hash != replay.final_hash:
        print("MISMATCH: re-simulation diverged from the logged game",
              file=sys.stderr)
        return 1
    print("verified")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modrts",
        description="Modular RTS agents: train, evaluate, inspect.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training schedule")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--config", help="JSON config file (flags win)")
    p_train.add_argument("--map", help="map id (default basin)")
    p_train.add_argument("--seed", type=int, help="training seed")
    p_train.add_argument("--schedule",
                         help="iterative | joint | path to schedule JSON")
    p_train.add_argument("--steps", type=int, help="policy steps per stage")
    p_train.add_argument("--cycles", type=int, help="schedule cycles")
    p_train.add_argument("--workers", type=int, help="rollout workers")
    p_train.add_argument("--epoch-steps", type=int, dest="epoch_steps")
    p_train.add_argument("--snapshot-interval", type=int,
                         dest="snapshot_interval")
    p_train.add_argument("--max-ticks", type=int, dest="max_ticks")
    p_train.add_argument("--threads", action="store_true",
                         help="asynchronous worker threads (default: sync)")
    p_train.add_argument("--no-pretrain", action="store_true",
                         help="skip teacher pretraining")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="win-rate table for an agent")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--config", help="JSON config file (flags win)")
    p_eval.add_argument("--checkpoint", help="agent checkpoint path")
    p_eval.add_argument("--script", help="evaluate a scripted agent instead")
    p_eval.add_argument("--random-agent", action="store_true",
                        dest="random_agent",
                        help="evaluate the uniform-random agent")
    p_eval.add_argument("--deterministic", action="store_true",
                        help="argmax instead of sampling")
    p_eval.add_argument("--opponents", nargs="+",
                        help="script names, optionally name:income_mult "
                             "(default: graded tiers)")
    p_eval.add_argument("--matches", type=int, help="matches per seed")
    p_eval.add_argument("--seeds", type=int, nargs="+", help="evaluation seeds")
    p_eval.add_argument("--map", help="map id")
    p_eval.add_argument("--seed", type=int, help="engine config seed")
    p_eval.add_argument("--max-ticks", type=int, dest="max_ticks")
    p_eval.add_argument("--fog", action="store_true",
                        help="evaluate under fog of war")
    p_eval.set_defaults(func=cmd_eval)

    p_pool = sub.add_parser("pool", help="inspect an opponent pool")
    p_pool.add_argument("action", choices=("list", "inspect"))
    p_pool.add_argument("--dir", required=True, help="pool directory")
    p_pool.add_argument("--id", help="member id (inspect)")
    p_pool.set_defaults(func=cmd_pool)

    p_report = sub.add_parser("report",
                              help="plots and tables from a finished run")
    p_report.add_argument("--run", required=True, help="run directory")
    p_report.add_argument("--out", help="artifact directory (default: run)")
    p_report.set_defaults(func=cmd_report)

    p_replay = sub.add_parser("replay", help="re-run a logged game")
    p_replay.add_argument("--path", required=True, help="replay file")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EvalError, PoolError, ReplayError, CheckpointError, MapError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
