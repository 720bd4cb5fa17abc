"""Train the toy policy on a filtered synthetic corpus, then compare TTS with fixed budgets.

    python3 scripts/run_experiment.py --seed 0 --out runs/exp0
"""

import argparse
import json
import time
from pathlib import Path

from video_rts.core import write_atomic
from video_rts.simenv.evaluate import expected_accuracy
from video_rts.simenv.experiment import STANDARD_MODES, ExperimentConfig, format_table, prepare, run_modes, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", help="directory for summary.json")
    args = ap.parse_args()

    t0 = time.perf_counter()
    exp = prepare(ExperimentConfig(seed=args.seed))
    print(f"train set {len(exp.train_set)} samples, initial expected accuracy {exp.initial_expected_accuracy:.4f}")
    run_training(exp)
    easy = expected_accuracy(exp.policy, exp.easy(exp.train_set), exp.config.grpo.train_frames)
    print(f"trained {len(exp.report.steps)} steps in {time.perf_counter() - t0:.1f}s; easy accuracy {easy:.4f}")

    reports = run_modes(exp.policy, exp.heldout, STANDARD_MODES, seed=args.seed, jobs=args.jobs)
    print(format_table(reports))
    if args.out:
        summary = {
            "seed": args.seed,
            "initial_expected_accuracy": exp.initial_expected_accuracy,
            "easy_expected_accuracy": easy,
            "modes": {k: r.summary() for k, r in reports.items()},
            "training": [m.to_dict() for m in exp.report.steps],
        }
        write_atomic(Path(args.out) / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
