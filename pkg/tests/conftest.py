from __future__ import annotations

import json
from pathlib import Path

import pytest

from debatebench.gateway import FixedClock, Gateway, synthetic_debater, synthetic_judge
from debatebench.judge import JudgeVerdict, ParseMode, Winner
from debatebench.prompts import Topic

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
GOLDEN = TESTS / "golden"
STAMP = "2024-05-01T00:00:00+00:00"


def load_fixture(name: str):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


def golden(name: str) -> str:
    text = (GOLDEN / name).read_text(encoding="utf-8")
    assert text.endswith("\n")
    return text[:-1]


def verdict(winner: Winner | str, s1: int = 80, s2: int = 70, judge: str = "J") -> JudgeVerdict:
    return JudgeVerdict(s1, s2, Winner(winner), ParseMode.STRICT, judge, "")


def make_topics(n: int) -> list[Topic]:
    return [Topic(i, f"Question number {i}?") for i in range(1, n + 1)]


def scripted_gateway(models=("m1", "m2", "m3"), judges=("J",), cap: int = 4) -> Gateway:
    """Debaters share one synthetic backend, judges another."""
    gw = Gateway(clock=FixedClock(STAMP), sleep=lambda _s: None)
    gw.register_script("debaters", {}, synthetic_debater, concurrency_cap=cap)
    gw.register_script("judges", {}, synthetic_judge, concurrency_cap=cap)
    for m in models:
        gw.add_model(m, "debaters")
    for j in judges:
        gw.add_model(j, "judges")
    return gw


def scripted_config(tmp_path: Path, models=("m1", "m2"), judges=("J",), **extra) -> Path:
    config = {
        "backends": {
            "debaters": {"type": "scripted", "synthetic": "debater"},
            "judges": {"type": "scripted", "synthetic": "judge"},
        },
        "models": {**{m: "debaters" for m in models}, **{j: "judges" for j in judges}},
        "roster": list(models),
        "judge": judges[0],
        "fixed_clock": STAMP,
        **extra,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config), encoding="utf-8")
    return path


@pytest.fixture
def topics5() -> list[Topic]:
    return make_topics(5)


def table_outcomes(table: dict):
    """Rule outcomes for one transcribed per-topic table.

    Each row carries the home and away winner tokens relative to that
    debate's own sides; model A is the home first mover.
    """
    from debatebench.tournament import TopicOutcome

    a, b = table["home_first"], table["home_second"]
    return [
        TopicOutcome.decide(a, b, Topic(r["topic"], f"Topic {r['topic']}"), r["home"][0], r["away"][0])
        for r in table["rows"]
    ]


def find_table(tables: list, a: str, b: str) -> dict:
    for t in tables:
        if {t["home_first"], t["home_second"]} == {a, b}:
            return t
    raise KeyError((a, b))
