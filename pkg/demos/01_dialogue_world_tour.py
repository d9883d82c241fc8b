"""Tour of the dialogue micro-world: tasks, rubrics, scoring, and the judge.

Every task is a short multi-turn dialogue whose final user request pins down a
rubric of reply constraints. The rubric is either handed to the policy
verbatim (rubric regime) or left latent in the conversation so the judge must
decode it back out of the history (pairwise regime). This script generates a
few tasks, prints them in a readable form, scores some candidate replies, and
shows that the two regimes agree about what a good reply is.

Run: python demos/01_dialogue_world_tour.py
"""

from rlhf_forge import decode_latent_rubric, generate_task, reference_judge, satisfaction_score
from rlhf_forge.toyenv import (
    CONTENT_BASE,
    NUM_BASE,
    NUM_MAX,
    PERSONA_TOKENS,
    earned_points,
    effective_rubric,
    gold_reply_content,
)

KEYWORD_NAMES = {
    0: "<bos>",
    1: "<eos>",
    2: "<trace>",
    3: "</trace>",
    12: "MUST",
    13: "FORBID",
    14: "START",
    15: "LEN",
    16: "SET_PERSONA",
    17: "REVISE",
    18: "ACK",
}


def describe(token: int) -> str:
    if token in KEYWORD_NAMES:
        return KEYWORD_NAMES[token]
    if token in PERSONA_TOKENS:
        return f"persona{token - PERSONA_TOKENS[0]}"
    if NUM_BASE <= token <= NUM_BASE + NUM_MAX:
        return str(token - NUM_BASE)
    return f"w{token - CONTENT_BASE}"


def show_task(task) -> None:
    print(f"\n=== {task.task_id} (difficulty {task.difficulty}, tags {', '.join(task.behavior_tags)}) ===")
    for turn in task.history.turns:
        text = " ".join(describe(t) for t in turn.text[:-1])
        audio = f"  [audio: {turn.audio.n_frames} frames @ {turn.audio.rate} Hz]" if turn.audio else ""
        print(f"  {turn.role:9s}| {text}{audio}")
    if task.rubric is not None:
        print("  rubric handed to the policy:")
        for c in task.rubric.constraints:
            print(f"    - {c}")
    else:
        print("  rubric: latent (pairwise regime), stored reference reply:",
              " ".join(describe(t) for t in task.reference_reply[:-1]))


def main() -> None:
    rubric_task = generate_task(7, "rubric", difficulty=2)
    pairwise_task = generate_task(7, "pairwise", difficulty=1)
    show_task(rubric_task)
    show_task(pairwise_task)

    # scoring: each constraint is worth its weight in points; satisfaction is
    # the earned fraction of the total
    rubric = effective_rubric(rubric_task)
    gold = gold_reply_content(rubric) + (1,)
    empty = (1,)
    print("\nscoring against the rubric:")
    for name, reply in (("gold reply", gold), ("empty reply", empty)):
        pts = earned_points(rubric, reply)
        print(f"  {name:12s} earns {pts}/{rubric.total_weight} points, satisfaction {satisfaction_score(rubric, reply):.2f}")

    # the judge compares two replies and emits an ordinal level in [-3, 3]
    verdict = reference_judge(rubric_task.history, gold, empty, rubric)
    print(f"\njudge(gold vs empty) level = {verdict.level:+d} on scale {verdict.scale}")
    verdict = reference_judge(rubric_task.history, empty, gold, rubric)
    print(f"judge(empty vs gold) level = {verdict.level:+d}  (antisymmetric)")

    # pairwise tasks hide the rubric, but it is recoverable from the dialogue
    latent = decode_latent_rubric(pairwise_task.history)
    print(f"\nlatent rubric decoded from the pairwise history ({len(latent.constraints)} constraints):")
    for c in latent.constraints:
        print(f"  - {c}")
    tie = reference_judge(pairwise_task.history, pairwise_task.reference_reply, pairwise_task.reference_reply, None)
    print(f"judging the stored reference against itself: level {tie.level} (a tie, as it must be)")


if __name__ == "__main__":
    main()
