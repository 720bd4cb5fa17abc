"""Accuracy and cost of TTS as the number of votes per round grows.

    python3 scripts/vote_ablation.py --seed 0 --series runs/votes.csv
"""

import argparse
import csv
import io

from video_rts.core import write_atomic
from video_rts.simenv.experiment import VOTE_MODES, ExperimentConfig, format_table, prepare, run_modes, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--series", help="CSV with one row per vote count")
    args = ap.parse_args()

    exp = run_training(prepare(ExperimentConfig(seed=args.seed)))
    reports = run_modes(exp.policy, exp.heldout, VOTE_MODES, seed=args.seed, jobs=args.jobs)
    print(format_table(reports))
    if args.series:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["votes", "accuracy", "mean_frames", "mean_generations"])
        for name, r in reports.items():
            w.writerow([name.split("-m")[1], f"{r.accuracy:.6f}", f"{r.mean_frames:.3f}", f"{r.mean_generations:.3f}"])
        write_atomic(args.series, buf.getvalue())


if __name__ == "__main__":
    main()
