"""Command-line interface: every subcommand exercised end to end on a tiny
configuration, in process via main(argv).
"""

import json

import pytest

from rlhf_forge import EOS, decode_latent_rubric, generate_task, load_checkpoint
from rlhf_forge.cli import main
from rlhf_forge.core import save_config
from rlhf_forge.errors import StageMismatch
from rlhf_forge.policy import param_count
from rlhf_forge.toyenv import gold_reply_content, history_to_dict, rubric_to_dict
from rlhf_forge.trainer import read_metrics


@pytest.fixture
def config_file(small_config, tmp_path):
    path = tmp_path / "config.json"
    save_config(small_config(), path)
    return path


def run(args):
    return main([str(a) for a in args])


def test_missing_subcommand_exits_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_mid_train_writes_a_checkpoint(config_file, tmp_path, capsys):
    out = tmp_path / "mid"
    assert run(["mid-train", "--config", config_file, "--out-dir", out]) == 0
    assert "mid-train done" in capsys.readouterr().out
    assert load_checkpoint(out / "checkpoint.bin").stage == "mid"
    assert (out / "metrics.csv").exists()
    assert (out / "report.json").exists()


def test_stage_chaining_through_the_cli(config_file, tmp_path, capsys):
    mid, sft, rlhf = tmp_path / "mid", tmp_path / "sft", tmp_path / "rlhf"
    run(["mid-train", "--config", config_file, "--out-dir", mid])
    assert run(["sft", "--config", config_file, "--checkpoint", mid / "checkpoint.bin", "--out-dir", sft]) == 0
    assert load_checkpoint(sft / "checkpoint.bin").stage == "sft"
    assert run(["rlhf", "--config", config_file, "--checkpoint", sft / "checkpoint.bin", "--out-dir", rlhf]) == 0
    assert load_checkpoint(rlhf / "checkpoint.bin").stage == "rlhf"
    capsys.readouterr()


def test_out_of_order_checkpoints_need_force(config_file, tmp_path, capsys):
    mid = tmp_path / "mid"
    run(["mid-train", "--config", config_file, "--out-dir", mid])
    with pytest.raises(StageMismatch):
        run(["rlhf", "--config", config_file, "--checkpoint", mid / "checkpoint.bin"])
    assert run(["rlhf", "--config", config_file, "--checkpoint", mid / "checkpoint.bin", "--force"]) == 0
    capsys.readouterr()


def test_seed_override_reaches_the_report(config_file, tmp_path, capsys):
    out = tmp_path / "mid-seeded"
    run(["mid-train", "--config", config_file, "--seed", 7, "--out-dir", out])
    report = json.loads((out / "report.json").read_text())
    assert report["seed"] == 7
    capsys.readouterr()


def test_eval_prints_the_report_as_json(config_file, tmp_path, capsys):
    mid = tmp_path / "mid"
    run(["mid-train", "--config", config_file, "--out-dir", mid])
    capsys.readouterr()
    assert run(["eval", "--config", config_file, "--checkpoint", mid / "checkpoint.bin"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["stage"] == "mid"
    for key in ("satisfaction", "win_rate", "mean_level", "n_rubric", "n_pairwise"):
        assert key in payload


def test_judge_scores_a_serialized_pair(tmp_path, capsys):
    task = generate_task(5, "pairwise", difficulty=1)
    latent = decode_latent_rubric(task.history)
    pair = {
        "history": history_to_dict(task.history),
        "rubric": None,
        "reply": list(gold_reply_content(latent) + (EOS,)),
        "reference": list(task.reference_reply),
    }
    path = tmp_path / "pair.json"
    path.write_text(json.dumps(pair))
    assert run(["judge", "--pair", path]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert set(verdict) == {"level", "scale", "reward"}
    assert verdict["scale"] == 3
    assert verdict["reward"] == verdict["level"] / 3


def test_judge_accepts_an_explicit_rubric_and_scale(tmp_path, capsys):
    task = generate_task(6, "rubric", difficulty=1)
    pair = {
        "history": history_to_dict(task.history),
        "rubric": rubric_to_dict(task.rubric),
        "reply": list(gold_reply_content(task.rubric) + (EOS,)),
        "reference": [EOS],
    }
    path = tmp_path / "pair.json"
    path.write_text(json.dumps(pair))
    assert run(["judge", "--pair", path, "--scale", 2]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["scale"] == 2
    assert verdict["level"] == 2


def test_inspect_ckpt_summarizes_the_binary(config_file, tmp_path, capsys):
    mid = tmp_path / "mid"
    run(["mid-train", "--config", config_file, "--out-dir", mid])
    capsys.readouterr()
    assert run(["inspect-ckpt", mid / "checkpoint.bin"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["stage"] == "mid"
    assert info["vocab_size"] == 64
    assert info["param_count"] == param_count(load_checkpoint(mid / "checkpoint.bin").params.model)
    assert len(info["snapshot"]) >= 8


def test_forgetting_subcommand_writes_the_report(config_file, tmp_path, capsys):
    out = tmp_path / "forgetting"
    assert (
        run(
            [
                "forgetting",
                "--config",
                config_file,
                "--n-seeds",
                1,
                "--rlhf-steps",
                2,
                "--out-dir",
                out,
            ]
        )
        == 0
    )
    assert "joint wins on" in capsys.readouterr().out
    report = json.loads((out / "forgetting_report.json").read_text())
    assert report["n_seeds"] == 1
    assert report["rlhf_steps_per_arm"] == 2


def test_rlhf_metrics_have_the_documented_columns(config_file, tmp_path):
    mid, sft, rlhf = tmp_path / "m", tmp_path / "s", tmp_path / "r"
    run(["mid-train", "--config", config_file, "--out-dir", mid])
    run(["sft", "--config", config_file, "--checkpoint", mid / "checkpoint.bin", "--out-dir", sft])
    run(["rlhf", "--config", config_file, "--checkpoint", sft / "checkpoint.bin", "--out-dir", rlhf])
    rows = read_metrics(rlhf / "metrics.csv")
    assert list(rows[0]) == [
        "step",
        "objective",
        "surrogate",
        "mean_kl",
        "clip_fraction",
        "mean_reward",
        "grad_norm",
    ]
