from __future__ import annotations

import json
import shutil

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import GOLDEN, golden
from debatebench.errors import (
    ConfigError,
    IncompatibleStage,
    IncompleteTranscript,
    PerspectiveMismatch,
    TemplateError,
)
from debatebench.prompts import (
    SideRole,
    Stage,
    TemplateSet,
    Topic,
    default_templates,
    fill,
    load_topics,
    parse_topics,
    render_debater_prompt,
    render_debater_system,
    render_judge_prompt,
    render_judge_system,
    topics_digest,
)

GOLF = "Is golf a sport and are golfers athletes?"


@pytest.fixture
def golf() -> Topic:
    return load_topics()[14]


@pytest.fixture
def history() -> list[str]:
    return json.loads((GOLDEN / "history4_responses.json").read_text(encoding="utf-8"))


def test_bundled_topics():
    topics = load_topics()
    assert len(topics) == 25
    assert [t.index for t in topics] == list(range(1, 26))
    assert topics[14].question == GOLF
    assert all((t.side1_label, t.side2_label) == ("Pro", "Con") for t in topics)


def test_topic15_system_prompts(golf):
    assert render_debater_system(golf, SideRole.FIRST, Stage.OPENING) == golden("topic15_opening_system.txt")
    assert render_debater_system(golf, SideRole.SECOND, Stage.FIRST_RESPONSE) == golden(
        "topic15_responder_system.txt"
    )
    assert render_debater_system(golf, SideRole.FIRST, Stage.CONTINUATION) == golden(
        "topic15_continuation_system_first.txt"
    )
    assert render_debater_system(golf, SideRole.SECOND, Stage.CONTINUATION) == golden(
        "topic15_continuation_system_second.txt"
    )
    assert render_judge_system(golf) == golden("topic15_judge_system.txt")


def test_four_turn_history_prompts(history):
    sides = [SideRole.FIRST, SideRole.SECOND, SideRole.FIRST, SideRole.SECOND]
    for k, side in enumerate(sides):
        assert render_debater_prompt(history[:k], side) == golden(f"history4_turn{k + 1}_prompt.txt")
    assert render_judge_prompt(history) == golden("history4_judge_prompt.txt")


def test_wrong_stage_for_side(golf):
    with pytest.raises(IncompatibleStage):
        render_debater_system(golf, SideRole.SECOND, Stage.OPENING)
    with pytest.raises(IncompatibleStage):
        render_debater_system(golf, SideRole.FIRST, Stage.FIRST_RESPONSE)


def test_perspective_must_match_turn_parity(history):
    with pytest.raises(PerspectiveMismatch):
        render_debater_prompt([], SideRole.SECOND)
    with pytest.raises(PerspectiveMismatch):
        render_debater_prompt(history[:1], SideRole.FIRST)


@pytest.mark.parametrize("responses", [[], ["only one"], ["a", "b", "c"], ["a", "  "]])
def test_judge_prompt_needs_complete_transcript(responses):
    with pytest.raises(IncompleteTranscript):
        render_judge_prompt(responses)


def test_long_history_repeats_last_two_lines():
    responses = [f"r{k}" for k in range(1, 7)]
    first = render_debater_prompt(responses, SideRole.FIRST)
    assert first == (
        'You initially said: "r1". You the other side responded: "r2". Then you said: "r3". '
        'The other side responded: "r4". Then you said: "r5". The other side responded: "r6".'
    )
    judge = render_judge_prompt(responses)
    assert judge.endswith('Side 1: "r5". Side 2: "r6".')
    assert judge.count("Side 1:") == 3


def test_fill_is_single_pass():
    out = fill("{TOPIC} / {SIDE}", {"TOPIC": "about {SIDE}", "SIDE": "Pro"})
    assert out == "about {SIDE} / Pro"
    with pytest.raises(TemplateError):
        fill("{MISSING}", {})


def test_responses_with_placeholder_text_are_not_expanded():
    prompt = render_debater_prompt(["{RESPONSE_2} and {TOPIC}"], SideRole.SECOND)
    assert prompt == 'The other side said: "{RESPONSE_2} and {TOPIC}".'


@given(st.lists(st.text(min_size=1).filter(lambda s: s.strip()), min_size=1, max_size=4).map(
    lambda xs: xs if len(xs) % 2 == 0 else xs + ["tail"]
))
def test_judge_prompt_embeds_every_response_in_order(responses):
    prompt = render_judge_prompt(responses)
    pos = 0
    for k, r in enumerate(responses):
        label = f'Side {1 + k % 2}: "{r}".'
        found = prompt.find(label, pos)
        assert found >= 0
        pos = found + len(label)


@given(st.text(min_size=1).filter(lambda s: s.strip() and "|" not in s and "\n" not in s and "\r" not in s))
def test_question_round_trips_through_system_prompt(question):
    topic = Topic(1, question.strip())
    rendered = render_debater_system(topic, SideRole.FIRST, Stage.CONTINUATION)
    prefix = 'We are having a debate and the topic is "'
    assert rendered.startswith(prefix + topic.question + '". You are representing "Pro"')


def test_parse_topics_formats():
    text = "# comment\n\nFirst?\nSecond? | Yes | No\n"
    topics = parse_topics(text)
    assert [(t.index, t.question, t.side1_label, t.side2_label) for t in topics] == [
        (1, "First?", "Pro", "Con"),
        (2, "Second?", "Yes", "No"),
    ]
    with pytest.raises(ConfigError):
        parse_topics("Bad | only two")
    with pytest.raises(ConfigError):
        parse_topics("Same | X | X")


def test_custom_side_labels_reach_the_prompt():
    topic = parse_topics("Tabs or spaces? | Tabs | Spaces")[0]
    assert 'representing "Spaces"' in render_debater_system(topic, SideRole.SECOND, Stage.FIRST_RESPONSE)


def test_topics_digest_changes_with_content():
    a = parse_topics("One?\nTwo?")
    b = parse_topics("One?\nTwo? | A | B")
    assert topics_digest(a) == topics_digest(parse_topics("One?\nTwo?"))
    assert topics_digest(a) != topics_digest(b)


def test_template_directory_round_trip(tmp_path):
    src = default_templates()
    for name in TemplateSet.field_names():
        (tmp_path / f"{name}.txt").write_text(getattr(src, name) + "\n", encoding="utf-8")
    loaded = TemplateSet.from_directory(tmp_path)
    assert loaded == src
    assert loaded.digest() == src.digest()


def test_template_directory_errors(tmp_path):
    with pytest.raises(TemplateError):
        TemplateSet.from_directory(tmp_path)
    src = default_templates()
    for name in TemplateSet.field_names():
        (tmp_path / f"{name}.txt").write_text(getattr(src, name), encoding="utf-8")
    (tmp_path / "judge_prompt.txt").write_text("no placeholders here", encoding="utf-8")
    with pytest.raises(TemplateError):
        TemplateSet.from_directory(tmp_path)


def test_edited_template_changes_digest(tmp_path):
    root = tmp_path / "t"
    root.mkdir()
    src = default_templates()
    for name in TemplateSet.field_names():
        (root / f"{name}.txt").write_text(getattr(src, name), encoding="utf-8")
    (root / "debater_opening_prompt.txt").write_text("Begin.", encoding="utf-8")
    edited = TemplateSet.from_directory(root)
    assert edited.digest() != src.digest()
    assert render_debater_prompt([], SideRole.FIRST, edited) == "Begin."
    shutil.rmtree(root)


def test_topic_validation():
    with pytest.raises(ConfigError):
        Topic(0, "Q?")
    with pytest.raises(ConfigError):
        Topic(1, "  ")
