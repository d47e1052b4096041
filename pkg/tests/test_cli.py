from __future__ import annotations

import json

from restokit.cli import bench_main, datagen_main


def test_datagen_prompts_cli(tmp_path):
    assert datagen_main(["prompts", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "prompts.jsonl").read_text().splitlines()
    assert len(lines) == 220


def test_datagen_slow_cli(tmp_path, capsys):
    assert datagen_main(["slow", "--scale", "0.0002", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "slowagent.jsonl").exists()
    assert "wrote" in capsys.readouterr().out


def test_datagen_feedback_cli(tmp_path):
    assert datagen_main(["feedback", "--scale", "0.0002", "--seed", "3", "--out", str(tmp_path)]) == 0
    records = [json.loads(l) for l in (tmp_path / "feedback.jsonl").read_text().splitlines()]
    assert records


def test_bench_testset_cli(tmp_path):
    assert bench_main(["testset", "--seed", "2", "--out", str(tmp_path), "--pool-side", "64"]) == 0
    assert len((tmp_path / "testset.jsonl").read_text().splitlines()) == 200


def test_bench_success_rate_cli(tmp_path):
    assert bench_main(["success-rate", "--backends", "oracle", "--n-per-kind", "5", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "success_rate.json").read_text())
    assert all(row["slow_rate"] == 1.0 for row in report["rows"])
