"""Command-line front door: one subcommand per pipeline stage plus utilities.

The library is the real interface; these commands just wire configs,
checkpoints and output directories together so runs are reproducible from a
shell. Every command accepts --config (JSON) and --seed (override).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .core import (
    RunConfig,
    history_from_dict,
    load_config,
    rubric_from_dict,
)
from .policy import load_checkpoint, param_count
from .toyenv import reference_judge
from .trainer import (
    build_eval_tasks,
    evaluate_policy,
    forgetting_experiment,
    load_start,
    snapshot_id,
    train_mid,
    train_rlhf,
    train_sft,
)


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    return config


def _add_common(p: argparse.ArgumentParser, out_dir: bool = True) -> None:
    p.add_argument("--config", type=Path, default=None, help="path to a RunConfig JSON file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    if out_dir:
        p.add_argument("--out-dir", type=Path, default=None, help="write checkpoint, metrics and report here")


def _cmd_mid_train(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    _, report = train_mid(config, args.out_dir)
    print(f"mid-train done: {report.n_steps} steps, last loss {report.extra['last_loss']:.4f}")
    return 0


def _cmd_sft(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    start, stage = load_start(args.checkpoint, config)
    _, report = train_sft(config, start, stage, args.out_dir, force=args.force)
    print(f"sft done: {report.n_steps} steps, last loss {report.extra['last_loss']:.4f}")
    return 0


def _cmd_rlhf(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    start, stage = load_start(args.checkpoint, config)
    _, report = train_rlhf(config, start, stage, args.out_dir, force=args.force)
    init_eval, final_eval = report.initial_eval, report.final_eval
    print(
        f"rlhf done: {report.n_steps} steps, "
        f"satisfaction {init_eval['satisfaction']:.3f} -> {final_eval['satisfaction']:.3f}, "
        f"win rate {init_eval['win_rate']:.3f} -> {final_eval['win_rate']:.3f}"
    )
    return 0


def _cmd_forgetting(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    seeds = list(range(args.n_seeds)) if args.seeds is None else args.seeds
    report = forgetting_experiment(config, seeds, rlhf_steps=args.rlhf_steps, out_dir=args.out_dir)
    print(f"forgetting: joint wins on {report['n_joint_wins']}/{report['n_seeds']} seeds")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _load_run_config(args)
    ckpt = load_checkpoint(args.checkpoint, expected_model=config.model)
    rubric_tasks = build_eval_tasks(config, "rubric")
    pairwise_tasks = build_eval_tasks(config, "pairwise")
    result = evaluate_policy(ckpt.params, config, rubric_tasks, pairwise_tasks)
    print(json.dumps({"stage": ckpt.stage, **result.to_dict()}, indent=2, sort_keys=True))
    return 0


def _cmd_judge(args: argparse.Namespace) -> int:
    pair = json.loads(Path(args.pair).read_text())
    history = history_from_dict(pair["history"])
    rubric = rubric_from_dict(pair["rubric"]) if pair.get("rubric") is not None else None
    judgment = reference_judge(
        history, pair["reply"], pair["reference"], rubric, scale=args.scale
    )
    print(json.dumps({"level": judgment.level, "scale": judgment.scale, "reward": judgment.level / judgment.scale}))
    return 0


def _cmd_inspect_ckpt(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.path)
    m = ckpt.params.model
    print(
        json.dumps(
            {
                "stage": ckpt.stage,
                "vocab_size": m.vocab_size,
                "d_enc": m.d_enc,
                "d_model": m.d_model,
                "d_hidden": m.d_hidden,
                "max_trace": m.max_trace,
                "max_reply": m.max_reply,
                "param_count": param_count(m),
                "snapshot": snapshot_id(ckpt.params),
            },
            indent=2,
            sort_keys=True,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlhf-forge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mid-train", help="mixed audio/text mid-training from a fresh init")
    _add_common(p)
    p.set_defaults(fn=_cmd_mid_train)

    p = sub.add_parser("sft", help="supervised fine-tuning on gold traces and replies")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, default=None, help="mid-stage checkpoint to start from")
    p.add_argument("--force", action="store_true", help="accept a checkpoint from any stage")
    p.set_defaults(fn=_cmd_sft)

    p = sub.add_parser("rlhf", help="judged-rollout RLHF from an SFT checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", type=Path, default=None, help="sft-stage checkpoint to start from")
    p.add_argument("--force", action="store_true", help="accept a checkpoint from any stage")
    p.set_defaults(fn=_cmd_rlhf)

    p = sub.add_parser("forgetting", help="joint vs decoupled regime training comparison")
    _add_common(p)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="explicit seed list")
    p.add_argument("--rlhf-steps", type=int, default=None, help="steps per arm (default: config rlhf_steps)")
    p.set_defaults(fn=_cmd_forgetting)

    p = sub.add_parser("eval", help="greedy-decode evaluation of a checkpoint")
    _add_common(p, out_dir=False)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("judge", help="judge one reply/reference pair from a JSON file")
    p.add_argument("--pair", type=Path, required=True, help="JSON with history, reply, reference, optional rubric")
    p.add_argument("--scale", type=int, default=3)
    p.set_defaults(fn=_cmd_judge)

    p = sub.add_parser("inspect-ckpt", help="print a checkpoint header")
    p.add_argument("path", type=Path)
    p.set_defaults(fn=_cmd_inspect_ckpt)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
