"""The speech pathway: synthetic features, the halving downsampler, and
mixed audio/text mid-training.

User turns can carry a 25 Hz feature sequence instead of informative text. A
learned adaptor projects concatenated frame pairs down to the policy's
context width, halving the rate to 12.5 Hz, and mid-training teaches the
policy to name the class hidden in the audio while a parallel text stream
keeps the token pathway alive. The mixing weight trades the two streams off
against each other.

Run: python demos/03_speech_adaptor.py
"""

import dataclasses
import math

import numpy as np

from rlhf_forge import RunConfig, downsample, sample_generation, sft_loss, synth_features, train_mid
from rlhf_forge.policy import PolicyParams
from rlhf_forge.toyenv import CONTENT_BASE, make_mid_example


def main() -> None:
    # --- synthesized features carry a recoverable class ----------------------
    a0 = synth_features(seed=0, n_frames=40, class_id=0)
    a1 = synth_features(seed=1, n_frames=40, class_id=0)
    b0 = synth_features(seed=2, n_frames=40, class_id=5)
    same = np.linalg.norm(a0.frames.mean(axis=0) - a1.frames.mean(axis=0))
    cross = np.linalg.norm(a0.frames.mean(axis=0) - b0.frames.mean(axis=0))
    print(f"frame-mean distance, same class {same:.3f} vs different class {cross:.3f}")

    # --- the downsampler halves length and rate ------------------------------
    params = PolicyParams.init(RunConfig().model, seed=0)
    for n in (1, 2, 7, 40):
        out = downsample(params.adaptor, synth_features(seed=9, n_frames=n, class_id=3))
        print(f"  {n:3d} frames @ {25.0} Hz -> {out.n_frames:3d} frames @ {out.rate} Hz"
              f"  (ceil({n}/2) = {math.ceil(n / 2)})")

    # --- mid-training learns to name the audio class --------------------------
    config = dataclasses.replace(RunConfig(), mid_steps=200)
    trained, report = train_mid(config)
    audio_batch = [make_mid_example(seed=10_000 + i, with_audio=True) for i in range(64)]

    def audio_accuracy(p: PolicyParams) -> float:
        hits = 0
        for ex in audio_batch:
            gen = sample_generation(p, ex.history, greedy=True)
            hits += int(gen.reply_content == (ex.reply[0],))
        return hits / len(audio_batch)

    fresh = PolicyParams.init(config.model, config.seed, config.init_scale)
    print(f"\nmid-training for {report.n_steps} steps "
          f"(held-out audio nll {sft_loss(fresh, audio_batch):.3f} -> {sft_loss(trained, audio_batch):.3f})")
    print(f"greedy class-naming accuracy: fresh {audio_accuracy(fresh):.2f} -> trained {audio_accuracy(trained):.2f}")
    print(f"(the reply names the content token tied to the class: e.g. class 3 -> token {CONTENT_BASE + 3})")

    # --- the mixing weight trades the streams --------------------------------
    print("\nmixing weight sweep (held-out audio nll after the default 120 steps):")
    for lam in (0.0, 0.5, 1.0):
        cfg = dataclasses.replace(RunConfig(), mixing_lambda=lam)
        p, _ = train_mid(cfg)
        print(f"  lambda {lam:.1f}: audio nll {sft_loss(p, audio_batch):.3f}")


if __name__ == "__main__":
    main()
