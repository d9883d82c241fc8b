"""Joint versus decoupled regime training: measuring what gets forgotten.

The trainer can interleave rubric-scored and pairwise-preference tasks in
every batch (joint), or spend the first half of the same step budget purely
on one regime and the second half purely on the other (decoupled). Both arms
start from the same SFT checkpoint and are scored per regime against the
same frozen references; the headline number is the minimum of the two regime
rewards, because a regime that was learned and then abandoned drags its
minimum down. That is what forgetting looks like in a two-regime world.

The archived 10-seed, 120-step run lives in reports/forgetting_report.json;
this demo reruns two seeds at a smaller budget so it finishes in about half
a minute.

Run: python demos/06_forgetting_probe.py
"""

from rlhf_forge import RunConfig, forgetting_experiment


def main() -> None:
    report = forgetting_experiment(RunConfig(), seeds=(0, 1), rlhf_steps=40)

    print(f"{report['rlhf_steps_per_arm']} RLHF steps per arm, seeds {report['seeds']}\n")
    print(f"{'seed':>4s}  {'arm':10s} {'rubric':>8s} {'pairwise':>9s} {'min':>8s}")
    for entry in report["per_seed"]:
        for arm in ("joint", "decoupled"):
            e = entry[arm]
            print(f"{entry['seed']:4d}  {arm:10s} {e['rubric_reward']:8.3f} {e['pairwise_reward']:9.3f} "
                  f"{e['min_reward']:8.3f}")
        winner = "joint" if entry["joint"]["min_reward"] >= entry["decoupled"]["min_reward"] else "decoupled"
        print(f"      -> {winner} wins on the min\n")
    print(f"joint arm wins on {report['n_joint_wins']} of {report['n_seeds']} seeds")
    print("\nthe decoupled arm finishes fresh on whichever regime it trained last,")
    print("but its abandoned regime decays, and the min exposes that.")


if __name__ == "__main__":
    main()
