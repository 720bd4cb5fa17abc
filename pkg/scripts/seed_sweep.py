"""Repeats the full experiment over several seeds and reports the acceptance margins per seed.

    python3 scripts/seed_sweep.py --seeds 0 1 2 3 4
"""

import argparse

from video_rts.simenv.evaluate import FixedMode, expected_accuracy
from video_rts.simenv.experiment import ExperimentConfig, prepare, run_modes, run_training
from video_rts.tts import TtsConfig

MODES = {
    "sparse": FixedMode(32, 5),
    "dense": FixedMode(128, 5),
    "tts": TtsConfig(),
    "tts1": TtsConfig(votes=1),
    "tts20": TtsConfig(votes=20),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--jobs", type=int, default=4)
    args = ap.parse_args()

    print(f"{'seed':>4} {'init':>6} {'easy':>6} {'dense':>6} {'sparse':>6} {'tts':>6} {'frames%':>7} {'m1':>6} {'m20':>6}")
    for seed in args.seeds:
        cfg = ExperimentConfig(seed=seed, heldout_seed=seed + 1000)
        exp = run_training(prepare(cfg))
        easy = expected_accuracy(exp.policy, exp.easy(exp.train_set), cfg.grpo.train_frames)
        r = run_modes(exp.policy, exp.heldout, MODES, seed=seed, jobs=args.jobs)
        frac = r["tts"].mean_frames / r["dense"].mean_frames
        print(
            f"{seed:>4} {exp.initial_expected_accuracy:>6.3f} {easy:>6.3f} {r['dense'].accuracy:>6.3f} "
            f"{r['sparse'].accuracy:>6.3f} {r['tts'].accuracy:>6.3f} {frac:>7.3f} "
            f"{r['tts1'].accuracy:>6.3f} {r['tts20'].accuracy:>6.3f}"
        )


if __name__ == "__main__":
    main()
