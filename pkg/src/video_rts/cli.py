"""Command-line entry point: gen-data, filter, train, infer, eval, compare, report."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from .backend.client import BackendInference, ChatClient, ConfigurationError, EndpointConfig, TransportError
from .config import ConfigError, RunConfig, load_config_file, resolve_config
from .core import DatasetError, load_dataset, read_jsonl, save_dataset, write_atomic, write_jsonl
from .datafilter import DifficultyRecord, balanced_subsample, estimate_difficulty, filter_dataset
from .grpo import train
from .simenv.corpus import InfeasibleCorpusError, generate_corpus
from .simenv.evaluate import EvalReport, FixedMode, PolicyInference, evaluate, report_from_traces
from .simenv.policy import ToyPolicy
from .tts import TtsTrace

log = logging.getLogger("video_rts")

EXIT_CONFIG, EXIT_DATA, EXIT_TRANSPORT, EXIT_OTHER = 2, 3, 4, 1


# --------------------------------------------------------------------------- helpers


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=list) + "\n"


def _write_meta(path: Path, cfg: RunConfig, command: str, extra: Optional[dict] = None) -> None:
    """Sidecar with the resolved config; the only place a wall-clock time is stored."""
    meta = {
        **cfg.provenance(),
        "command": command,
        "config": cfg.to_dict(),
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        **(extra or {}),
    }
    write_atomic(Path(str(path) + ".meta.json"), _dump(meta))


def _endpoint(cfg: RunConfig) -> EndpointConfig:
    if cfg.endpoint is not None:
        return cfg.endpoint
    base, model = os.environ.get("VRTS_API_BASE"), os.environ.get("VRTS_MODEL")
    if not base or not model:
        raise ConfigError(["endpoint: set an endpoint section or VRTS_API_BASE and VRTS_MODEL"])
    return EndpointConfig(base_url=base, model_name=model, api_key=os.environ.get("VRTS_API_KEY"))


def _load_policy(path: str) -> ToyPolicy:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return ToyPolicy.from_dict(d["policy"] if "policy" in d else d)


def _inference(args, cfg: RunConfig, n_options: int):
    if getattr(args, "backend", "toy") == "endpoint":
        return BackendInference(ChatClient(_endpoint(cfg)))
    if getattr(args, "checkpoint", None):
        return PolicyInference(_load_policy(args.checkpoint))
    return PolicyInference(ToyPolicy.random(n_options, seed=cfg.seed))


def _trace_lines(report: EvalReport, dataset, cfg: RunConfig, mode: str) -> list[dict]:
    gt = {s.id: s.gt_answer for s in dataset}
    prov = cfg.provenance()
    return [
        {**t.to_dict(), "gt_answer": gt.get(t.sample_id), "mode": mode, "provenance": prov}
        for t in report.traces
    ]


def _load_traces(path: str) -> tuple[list[TtsTrace], dict[str, Optional[str]]]:
    rows = read_jsonl(path)
    return [TtsTrace.from_dict(r) for r in rows], {r["sample_id"]: r.get("gt_answer") for r in rows}


def _series_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _trace_score(traces: Sequence[TtsTrace], gt: dict[str, Optional[str]]) -> dict[str, float]:
    if not traces:
        raise DatasetError("trace file is empty")
    return {
        "accuracy": float(np.mean([t.final_answer is not None and t.final_answer == gt.get(t.sample_id) for t in traces])),
        "mean_frames": float(np.mean([t.total_frames_processed for t in traces])),
        "mean_generations": float(np.mean([t.total_generations for t in traces])),
    }


# --------------------------------------------------------------------------- commands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    corpus = cfg.corpus
    if args.n_samples is not None:
        corpus = replace(corpus, n_samples=args.n_samples)
    if args.id_prefix is not None:
        corpus = replace(corpus, id_prefix=args.id_prefix)
    samples, _ = generate_corpus(corpus, cfg.seed)
    save_dataset(samples, args.out)
    cfg.corpus = corpus
    _write_meta(Path(args.out), cfg, "gen-data")
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def cmd_filter(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.data)
    inference = _inference(args, cfg, dataset[0].n_options)
    records = [
        estimate_difficulty(inference, s, k=cfg.filter_k, seed=cfg.seed, n_frames=cfg.grpo.train_frames,
                            frame_rule=cfg.tts.frame_rule)
        for s in dataset
    ]
    kept = filter_dataset(records, dataset)
    n_informative = len(kept)
    target = args.target_size if args.target_size is not None else None
    if target is not None:
        if target > len(kept):
            raise DatasetError(f"only {len(kept)} samples survive filtering; cannot draw {target}")
        kept = balanced_subsample(kept, target, cfg.seed)
    sidecar = args.sidecar or str(args.out) + ".difficulty.jsonl"
    write_jsonl(sidecar, (r.to_dict() for r in records))
    save_dataset(kept, args.out)
    _write_meta(Path(args.out), cfg, "filter", {"input": str(args.data), "kept": len(kept)})
    print(f"{n_informative} of {len(dataset)} samples informative, wrote {len(kept)}; difficulty records in {sidecar}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.data)
    out = Path(args.out_dir)
    policy = _load_policy(args.init) if args.init else ToyPolicy.random(dataset[0].n_options, seed=cfg.seed)
    builder = PolicyInference(policy).context_builder(cfg.grpo.train_frames, cfg.tts.frame_rule)
    steps = []

    def on_step(m):
        steps.append(m.to_dict())
        if args.verbose:
            print(f"step {m.step:4d} reward {m.mean_reward:.3f} acc {m.mean_accuracy_reward:.3f} "
                  f"kl {m.mean_kl:.4f} degenerate {m.n_degenerate}/{m.n_groups}")

    report = train(policy, dataset, builder, cfg.grpo, cfg.rewards, seed=cfg.seed, callback=on_step)
    write_jsonl(out / "metrics.jsonl", steps)
    ckpt = {"policy": policy.to_dict(), "config": cfg.to_dict(), "provenance": cfg.provenance(), "steps": len(steps)}
    write_atomic(out / "checkpoint.json", _dump(ckpt))
    _write_meta(out / "checkpoint.json", cfg, "train", {"data": str(args.data)})
    last = report.steps[-1]
    print(f"trained {len(report.steps)} steps; final mean accuracy reward {last.mean_accuracy_reward:.3f}")
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.data)
    inference = _inference(args, cfg, dataset[0].n_options)
    if args.mode == "fixed":
        mode: Any = FixedMode(args.frames or cfg.tts.n_init, args.votes or cfg.tts.votes)
        label = f"fixed(frames={mode.frames},votes={mode.votes})"
    else:
        tts = cfg.tts
        if args.votes:
            tts = replace(tts, votes=args.votes)
        if args.n_init:
            tts = replace(tts, n_init=args.n_init)
        if args.n_max:
            tts = replace(tts, n_max=args.n_max)
        mode, label = tts, f"tts(votes={tts.votes},frames={tts.n_init}->{tts.n_max})"
    report = evaluate(inference, dataset, mode, seed=cfg.seed, jobs=cfg.jobs)
    write_jsonl(args.out, _trace_lines(report, dataset, cfg, label))
    _write_meta(Path(args.out), cfg, "infer", {"mode": label, "errors": report.errors})
    print(f"{label}: accuracy {report.accuracy:.4f}, mean frames {report.mean_frames:.1f}; traces in {args.out}")
    return EXIT_TRANSPORT if report.errors and args.strict else 0


def cmd_eval(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.data)
    traces, _ = _load_traces(args.traces)
    report = report_from_traces(traces, dataset)
    summary = {**report.summary(), "traces": str(args.traces), "provenance": cfg.provenance()}
    print(report.table())
    if args.out:
        write_atomic(args.out, _dump(summary))
    if args.series:
        diff = {s.id: getattr(s.video, "difficulty", None) for s in dataset}
        gt = {s.id: s.gt_answer for s in dataset}
        rows = [
            {
                "sample_id": t.sample_id,
                "difficulty": diff.get(t.sample_id),
                "correct": int(t.final_answer == gt.get(t.sample_id)),
                "rounds": len(t.rounds),
                "final_budget": t.rounds[-1].budget if t.rounds else 0,
                "frames": t.total_frames_processed,
                "generations": t.total_generations,
            }
            for t in traces
        ]
        write_atomic(args.series, _series_csv(rows))
    return 0


def cmd_compare(args, cfg: RunConfig) -> int:
    traces_a, gt_a = _load_traces(args.a)
    traces_b, gt_b = _load_traces(args.b)
    gt = {**gt_a, **gt_b}
    if args.data:
        gt.update({s.id: s.gt_answer for s in load_dataset(args.data)})
    if any(v is None for v in gt.values()):
        raise DatasetError("traces lack gt_answer; pass --data")
    a, b = _trace_score(traces_a, gt), _trace_score(traces_b, gt)
    lines = [f"{'metric':<18} {'A':>10} {'B':>10} {'delta':>10}"]
    for k in ("accuracy", "mean_frames", "mean_generations"):
        lines.append(f"{k:<18} {a[k]:>10.4f} {b[k]:>10.4f} {b[k] - a[k]:>+10.4f}")
    table = "\n".join(lines)
    print(table)
    if args.out:
        write_atomic(args.out, _dump({"a": args.a, "b": args.b, "metrics_a": a, "metrics_b": b,
                                      "delta": {k: b[k] - a[k] for k in a}}))
    if args.series:
        by_b = {t.sample_id: t for t in traces_b}
        rows = []
        for t in traces_a:
            u = by_b.get(t.sample_id)
            if u is None:
                continue
            rows.append({
                "sample_id": t.sample_id,
                "correct_a": int(t.final_answer == gt[t.sample_id]),
                "correct_b": int(u.final_answer == gt[t.sample_id]),
                "frames_a": t.total_frames_processed,
                "frames_b": u.total_frames_processed,
                "generations_a": t.total_generations,
                "generations_b": u.total_generations,
            })
        write_atomic(args.series, _series_csv(rows))
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    rows = []
    for path in args.reports:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        rows.append({
            "name": Path(path).stem,
            "n": d["n_samples"],
            "accuracy": round(d["accuracy"], 6),
            "mean_frames": round(d["mean_frames"], 3),
            "mean_generations": round(d["mean_generations"], 3),
        })
    md = ["| run | n | accuracy | mean frames | mean generations |", "|---|---:|---:|---:|---:|"]
    md += [f"| {r['name']} | {r['n']} | {r['accuracy']:.4f} | {r['mean_frames']:.1f} | {r['mean_generations']:.2f} |"
           for r in rows]
    text = "\n".join(md) + "\n"
    print(text, end="")
    if args.out:
        write_atomic(args.out, text)
    if args.series:
        write_atomic(args.series, _series_csv(rows))
    return 0


# --------------------------------------------------------------------------- parser


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="parallel samples during inference")
    common.add_argument("--set", dest="sets", type=_kv, action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. grpo.learning_rate=5 (repeatable; flags win)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="video-rts", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--n-samples", type=int)
    g.add_argument("--id-prefix")
    g.set_defaults(func=cmd_gen_data)

    f = sub.add_parser("filter", parents=[common], help="difficulty-filter a dataset")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--sidecar")
    f.add_argument("--target-size", type=int)
    f.add_argument("--checkpoint")
    f.add_argument("--backend", choices=("toy", "endpoint"), default="toy")
    f.set_defaults(func=cmd_filter)

    t = sub.add_parser("train", parents=[common], help="GRPO-train the toy policy")
    t.add_argument("--data", required=True)
    t.add_argument("--out-dir", required=True)
    t.add_argument("--init", help="start from this checkpoint instead of a random policy")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", parents=[common], help="run TTS or a fixed-budget baseline")
    i.add_argument("--data", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--mode", choices=("tts", "fixed"), default="tts")
    i.add_argument("--frames", type=int, help="budget for --mode fixed")
    i.add_argument("--votes", type=int, help="samples per round (m)")
    i.add_argument("--n-init", type=int)
    i.add_argument("--n-max", type=int)
    i.add_argument("--checkpoint")
    i.add_argument("--backend", choices=("toy", "endpoint"), default="toy")
    i.add_argument("--strict", action="store_true", help="nonzero exit if any sample failed")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", parents=[common], help="score a trace file")
    e.add_argument("--traces", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.add_argument("--series")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", parents=[common], help="delta table between two trace files")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--data")
    c.add_argument("--out")
    c.add_argument("--series")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", parents=[common], help="tabulate eval reports")
    r.add_argument("reports", nargs="+")
    r.add_argument("--out")
    r.add_argument("--series")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        file_values = load_config_file(args.config) if args.config else {}
        overrides = dict(args.sets)
        overrides.update({k: v for k, v in (("seed", args.seed), ("jobs", args.jobs)) if v is not None})
        cfg = resolve_config(file_values, overrides)
        return args.func(args, cfg)
    except (ConfigError, ConfigurationError, InfeasibleCorpusError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, KeyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


if __name__ == "__main__":
    sys.exit(main())
