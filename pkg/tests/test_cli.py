from __future__ import annotations

import csv
import io
import json
import re

import pytest

from conftest import scripted_config
from debatebench.cli import main
from debatebench.store import RunStore


@pytest.fixture
def topics_file(tmp_path):
    path = tmp_path / "topics.txt"
    path.write_text("Is tea better than coffee?\nShould homework be banned? | Yes | No\n", encoding="utf-8")
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_smallest_run(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path)
    code, out, _ = run(capsys, "run", "--config", config, "--run-dir", tmp_path / "r", "--topics", topics_file)
    assert code == 0
    store = RunStore.in_dir(tmp_path / "r")
    assert len(store.debates) == 4 and len(store.verdicts) == 4
    cells = re.findall(r"\b\d+-\d+\b", out)
    assert len(cells) == 1
    for name in ("matrix.md", "matrix.csv", "ranking.md", "pairs/m1_vs_m2.md"):
        assert (tmp_path / "r" / name).is_file()


def test_odd_rounds_is_a_config_error(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path)
    code, _, err = run(
        capsys, "run", "--config", config, "--run-dir", tmp_path / "r", "--topics", topics_file, "--rounds", 3
    )
    assert code == 2 and "even" in err
    assert not (tmp_path / "r" / "store.jsonl").exists()


@pytest.mark.parametrize(
    "extra",
    [
        ["--judge", "nobody"],
        ["--roster", "m1,ghost"],
        ["--templates", "/nonexistent/templates"],
        ["--topics", "/nonexistent/topics.txt"],
    ],
)
def test_config_errors_exit_2(tmp_path, capsys, extra):
    config = scripted_config(tmp_path)
    code, _, err = run(capsys, "run", "--config", config, "--run-dir", tmp_path / "r", *extra)
    assert code == 2 and err.startswith("error:")


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(capsys, "run", "--config", tmp_path / "nope.json", "--run-dir", tmp_path / "r")
    assert code == 2 and "not found" in err


def test_existing_run_needs_resume(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path)
    args = ["run", "--config", config, "--run-dir", tmp_path / "r", "--topics", topics_file]
    assert run(capsys, *args)[0] == 0
    code, _, err = run(capsys, *args)
    assert code == 2 and "--resume" in err
    assert run(capsys, *args, "--resume")[0] == 0


def test_interrupted_run_resumes_to_the_same_store(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path, models=("m1", "m2", "m3"))
    base = ["run", "--config", config, "--topics", topics_file]
    assert run(capsys, *base, "--run-dir", tmp_path / "whole")[0] == 0

    part = [*base, "--run-dir", tmp_path / "part"]
    code, _, err = run(capsys, *part, "--max-debates", 5)
    assert code == 1 and "7 of 12" in err
    assert run(capsys, *part, "--resume", "--max-debates", 5)[0] == 1
    assert run(capsys, *part, "--resume", "--workers", 3)[0] == 0
    whole = (tmp_path / "whole" / "store.jsonl").read_bytes()
    assert (tmp_path / "part" / "store.jsonl").read_bytes() == whole
    for name in ("matrix.md", "matrix.csv", "ranking.md"):
        assert (tmp_path / "part" / name).read_bytes() == (tmp_path / "whole" / name).read_bytes()


def test_resume_with_changed_inputs_is_rejected(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path, models=("m1", "m2", "m3"))
    base = ["run", "--config", config, "--topics", topics_file, "--run-dir", tmp_path / "r"]
    run(capsys, *base, "--max-debates", 2)
    code, _, err = run(capsys, *base, "--resume", "--roster", "m1,m2")
    assert code == 2 and "roster" in err


def test_rejudge_rank_and_report(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path, models=("m1", "m2", "m3"), judges=("J", "J2"))
    rd = tmp_path / "r"
    assert run(capsys, "run", "--config", config, "--run-dir", rd, "--topics", topics_file)[0] == 0
    code, out, _ = run(capsys, "rejudge", "--config", config, "--run-dir", rd, "--judge", "J2", "--pair", "m1:m2")
    assert code == 0
    assert "re-judged 4 of 4" in out and "agreement with J: 4/4" in out
    code, out, _ = run(capsys, "rank", "--run-dir", rd)
    assert code == 0 and out.startswith("| Rank | Model |")
    code, out, _ = run(capsys, "report", "--run-dir", rd, "--judge", "J2")
    assert code == 0 and "judges/J2/matrix.md" in out
    assert (rd / "judges" / "J2" / "pairs" / "m1_vs_m2.md").is_file()
    code, _, err = run(capsys, "rejudge", "--config", config, "--run-dir", rd, "--judge", "J2", "--pair", "m1")
    assert code == 2


def _md_cells(text):
    rows = [line.strip("|").split("|") for line in text.splitlines() if line.startswith("|") and "---" not in line]
    return [[c.strip() for c in row] for row in rows]


def test_markdown_and_csv_matrices_agree(tmp_path, topics_file, capsys):
    config = scripted_config(tmp_path, models=("m1", "m2", "m3"))
    rd = tmp_path / "r"
    run(capsys, "run", "--config", config, "--run-dir", rd, "--topics", topics_file, "--self-play")
    md = _md_cells((rd / "matrix.md").read_text())
    rows = list(csv.reader(io.StringIO((rd / "matrix.csv").read_text())))
    assert [r[1:] for r in rows] == [r[1:] for r in md]
    assert [r[0] for r in rows[1:]] == [r[0] for r in md[1:]]
    assert all(re.fullmatch(r"\d+-\d+", rows[i][i]) for i in range(1, 4))


def test_manual_verdict_completes_a_run(tmp_path, topics_file, capsys):
    config_path = tmp_path / "config.json"
    config = {
        "backends": {
            "d": {"type": "scripted", "synthetic": "debater"},
            "j": {"type": "scripted", "script_file": str(tmp_path / "script.json")},
        },
        "models": {"m1": "d", "m2": "d", "J": "j"},
        "roster": ["m1", "m2"],
        "judge": "J",
        "fixed_clock": "2024-05-01T00:00:00+00:00",
    }
    (tmp_path / "script.json").write_text("{}")
    config_path.write_text(json.dumps(config))
    topics_file.write_text("Only topic?\n")
    rd = tmp_path / "r"
    code, _, err = run(capsys, "run", "--config", config_path, "--run-dir", rd, "--topics", topics_file)
    assert code == 1 and "judge failed" in err
    store = RunStore.in_dir(rd)
    assert len(store.debates) == 2 and not store.verdicts
    assert {f.stage for f in store.failures} == {"judge"}

    ids = sorted(store.debates)
    code, _, _ = run(capsys, "verdict", "set", "nope", "--run-dir", rd, "--s1", 8, "--s2", 7, "--winner", 1)
    assert code == 2
    code, _, _ = run(capsys, "verdict", "set", ids[0], "--run-dir", rd, "--s1", 11, "--s2", 7, "--winner", 1)
    assert code == 2
    for debate_id in ids:
        code, out, _ = run(
            capsys, "verdict", "set", debate_id, "--run-dir", rd, "--s1", 8, "--s2", 7, "--winner", 1,
            "--note", "judge script missing",
        )
        assert code == 0 and "manual verdict" in out
    code, out, _ = run(capsys, "run", "--config", config_path, "--run-dir", rd, "--topics", topics_file, "--resume")
    assert code == 0
    assert "| m1 |  | 0-0 |" in out
    assert "0 strict, 0 recovered, 2 manual" in (rd / "ranking.md").read_text()
    assert (rd / "store.jsonl").read_text().count('"kind":"verdict"') == 0
