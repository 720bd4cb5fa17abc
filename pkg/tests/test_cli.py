import json

import pytest

from video_rts.cli import main
from video_rts.core import load_dataset, read_jsonl


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    small = ["--set", "corpus.n_samples=64", "--set", "grpo.max_steps=4", "--set", "grpo.batch_size=8"]
    assert main(["gen-data", "--out", str(d / "data.jsonl"), *small]) == 0
    assert main(["filter", "--data", str(d / "data.jsonl"), "--out", str(d / "train.jsonl"), *small]) == 0
    assert main(["train", "--data", str(d / "train.jsonl"), "--out-dir", str(d / "run"), *small]) == 0
    return d, small


def test_pipeline_outputs(workdir):
    d, _ = workdir
    assert len(load_dataset(d / "data.jsonl")) == 64
    recs = read_jsonl(str(d / "train.jsonl") + ".difficulty.jsonl")
    assert len(recs) == 64 and all(r["k"] == 8 for r in recs)
    kept = {s.id for s in load_dataset(d / "train.jsonl")}
    assert kept == {r["sample_id"] for r in recs if 0 < r["correct"] < 8}
    ckpt = json.loads((d / "run" / "checkpoint.json").read_text())
    assert ckpt["steps"] == 4 and set(ckpt["provenance"]) == {"config_hash", "seed", "code_version"}
    meta = json.loads((d / "run" / "checkpoint.json.meta.json").read_text())
    assert meta["config_hash"] == ckpt["provenance"]["config_hash"] and "created_at" in meta
    assert len(read_jsonl(d / "run" / "metrics.jsonl")) == 4


def test_infer_is_byte_identical(workdir):
    d, small = workdir
    ck = str(d / "run" / "checkpoint.json")
    args = ["infer", "--data", str(d / "data.jsonl"), "--checkpoint", ck, *small]
    assert main([*args, "--out", str(d / "a.jsonl")]) == 0
    assert main([*args, "--out", str(d / "b.jsonl"), "--jobs", "3"]) == 0
    assert (d / "a.jsonl").read_bytes() == (d / "b.jsonl").read_bytes()
    line = read_jsonl(d / "a.jsonl")[0]
    assert {"gt_answer", "provenance", "mode", "rounds"} <= set(line)


def test_fixed_single_pass(workdir):
    d, small = workdir
    out = d / "fixed.jsonl"
    ck = str(d / "run" / "checkpoint.json")
    assert main(["infer", "--mode", "fixed", "--frames", "32", "--votes", "1", "--data", str(d / "data.jsonl"),
                 "--checkpoint", ck, "--out", str(out), *small]) == 0
    for t in read_jsonl(out):
        assert len(t["rounds"]) == 1 and t["rounds"][0]["budget"] == 32 and t["total_generations"] == 1


def test_eval_compare_report(workdir, capsys):
    d, small = workdir
    data = str(d / "data.jsonl")
    assert main(["eval", "--traces", str(d / "a.jsonl"), "--data", data, "--out", str(d / "a.report.json"),
                 "--series", str(d / "a.csv")]) == 0
    rep = json.loads((d / "a.report.json").read_text())
    assert rep["n_samples"] == 64 and "provenance" in rep
    assert (d / "a.csv").read_text().splitlines()[0].startswith("sample_id,difficulty,correct")
    capsys.readouterr()
    assert main(["compare", str(d / "fixed.jsonl"), str(d / "a.jsonl"), "--series", str(d / "cmp.csv")]) == 0
    out = capsys.readouterr().out
    assert "accuracy" in out and "mean_frames" in out and "delta" in out
    assert main(["report", str(d / "a.report.json"), "--out", str(d / "table.md")]) == 0
    assert "| a.report |" in (d / "table.md").read_text()


def test_exit_codes(tmp_path, capsys):
    assert main(["gen-data", "--out", str(tmp_path / "x.jsonl"), "--set", "grpo.lr=1", "--set", "jobs=-1"]) == 2
    err = capsys.readouterr().err
    assert "grpo.lr" in err and "jobs" in err
    assert main(["eval", "--traces", str(tmp_path / "none.jsonl"), "--data", str(tmp_path / "none.jsonl")]) == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"id": "a"}\n')
    assert main(["train", "--data", str(bad), "--out-dir", str(tmp_path / "r")]) == 3


def test_endpoint_transport_failure(tmp_path, workdir):
    from video_rts.backend import MockChatServer, MockReply

    d, _ = workdir
    cfg = tmp_path / "c.json"
    with MockChatServer(default=MockReply(status=503)) as srv:
        cfg.write_text(json.dumps({"endpoint": {"base_url": srv.base_url, "model_name": "m", "max_retries": 0}}))
        code = main(["infer", "--backend", "endpoint", "--config", str(cfg), "--data", str(d / "data.jsonl"),
                     "--out", str(tmp_path / "t.jsonl"), "--strict", "--set", "tts.votes=1"])
    assert code == 4
