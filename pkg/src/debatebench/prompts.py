"""Debate and judge prompt templates.

The bundled template set reproduces the debate/judge prompts word for word,
including the original wording quirks ("This the first round", "You the
other side responded").  Templates use ``{TOPIC}``, ``{SIDE}`` and
``{RESPONSE_k}`` placeholders and are loaded from a directory holding one
UTF-8 ``<field>.txt`` file per template.

Multi-line templates (the history prompts and the judge prompt) describe a
sequence: every line that carries a ``{RESPONSE_k}`` placeholder renders one
prior response, lines without one form a header, and the rendered lines are
joined by a single space.  Histories longer than the template extend by
repeating the last two response lines, matched on parity.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    IncompatibleStage,
    IncompleteTranscript,
    PerspectiveMismatch,
    TemplateError,
)

DEFAULT_SIDE1_LABEL = "Pro"
DEFAULT_SIDE2_LABEL = "Con"

_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")
_RESPONSE = re.compile(r"\{RESPONSE_(\d+)\}")


class SideRole(str, enum.Enum):
    FIRST = "first"
    SECOND = "second"


class Stage(str, enum.Enum):
    OPENING = "opening"
    FIRST_RESPONSE = "first_response"
    CONTINUATION = "continuation"


@dataclass(frozen=True)
class Topic:
    index: int
    question: str
    side1_label: str = DEFAULT_SIDE1_LABEL
    side2_label: str = DEFAULT_SIDE2_LABEL

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ConfigError(f"topic index must be positive, got {self.index}")
        if not self.question.strip():
            raise ConfigError(f"topic {self.index} has an empty question")
        if not self.side1_label.strip() or not self.side2_label.strip():
            raise ConfigError(f"topic {self.index} has an empty side label")
        if self.side1_label == self.side2_label:
            raise ConfigError(f"topic {self.index} uses the same label for both sides")

    def label(self, side: SideRole) -> str:
        return self.side1_label if side is SideRole.FIRST else self.side2_label

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "question": self.question,
            "side1_label": self.side1_label,
            "side2_label": self.side2_label,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Topic":
        return cls(int(data["index"]), data["question"], data["side1_label"], data["side2_label"])


def parse_topics(text: str) -> list[Topic]:
    """Parse a topic file: one question per line, optionally ``question | side1 | side2``.

    Blank lines and lines starting with ``#`` are skipped.  Indices are the
    1-based positions among the remaining lines.
    """
    topics: list[Topic] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) == 1:
            question, side1, side2 = parts[0], DEFAULT_SIDE1_LABEL, DEFAULT_SIDE2_LABEL
        elif len(parts) == 3:
            question, side1, side2 = parts
        else:
            raise ConfigError(f"line {lineno}: expected 'question' or 'question | side1 | side2'")
        topics.append(Topic(len(topics) + 1, question, side1, side2))
    return topics


def load_topics(path: str | Path | None = None) -> list[Topic]:
    """Load topics from ``path``, or the 25 bundled default topics when omitted."""
    if path is None:
        text = resources.files("debatebench").joinpath("data/topics.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_topics(text)


def topics_digest(topics: Iterable[Topic]) -> str:
    h = hashlib.sha256()
    for t in topics:
        h.update("\x1f".join([str(t.index), t.question, t.side1_label, t.side2_label]).encode())
        h.update(b"\x1e")
    return h.hexdigest()


def fill(template: str, values: Mapping[str, str]) -> str:
    """Substitute ``{NAME}`` placeholders in a single pass.

    Substituted text is never rescanned, so responses that happen to contain
    ``{TOPIC}`` come through untouched.
    """

    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in values:
            raise TemplateError(f"no value supplied for placeholder {{{name}}}")
        return values[name]

    return _PLACEHOLDER.sub(sub, template)


@dataclass(frozen=True)
class TemplateSet:
    opening_system: str
    responder_system: str
    continuation_system: str
    judge_system: str
    debater_opening_prompt: str
    responder_prompt: str
    history_prompt_first_person: str
    history_prompt_second_person: str
    judge_prompt: str

    def __post_init__(self) -> None:
        for name in ("history_prompt_first_person", "history_prompt_second_person", "judge_prompt"):
            _split_sequence(getattr(self, name), name)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_directory(cls, path: str | Path) -> "TemplateSet":
        root = Path(path)
        values = {}
        for name in cls.field_names():
            file = root / f"{name}.txt"
            if not file.is_file():
                raise TemplateError(f"template file missing: {file}")
            values[name] = _strip_final_newline(file.read_text(encoding="utf-8"))
        return cls(**values)

    @classmethod
    def default(cls) -> "TemplateSet":
        root = resources.files("debatebench").joinpath("templates")
        values = {
            name: _strip_final_newline(root.joinpath(f"{name}.txt").read_text("utf-8"))
            for name in cls.field_names()
        }
        return cls(**values)

    def digest(self) -> str:
        h = hashlib.sha256()
        for name in self.field_names():
            h.update(name.encode())
            h.update(b"\x1f")
            h.update(getattr(self, name).encode())
            h.update(b"\x1e")
        return h.hexdigest()


def _strip_final_newline(text: str) -> str:
    return text[:-1] if text.endswith("\n") else text


def _split_sequence(template: str, name: str) -> tuple[list[str], list[str]]:
    header: list[str] = []
    lines: list[str] = []
    for line in template.splitlines():
        found = _RESPONSE.findall(line)
        if not found:
            if lines:
                raise TemplateError(f"{name}: header line after response lines: {line!r}")
            header.append(line)
        elif len(found) > 1:
            raise TemplateError(f"{name}: more than one response placeholder in {line!r}")
        else:
            lines.append(line)
    if not lines:
        raise TemplateError(f"{name}: no {{RESPONSE_k}} lines")
    return header, lines


def _render_sequence(template: str, responses: Sequence[str], name: str) -> str:
    header, lines = _split_sequence(template, name)
    out = list(header)
    n = len(lines)
    for k, response in enumerate(responses, start=1):
        if k <= n:
            line = lines[k - 1]
        elif n == 1:
            line = lines[0]
        else:
            line = lines[n - 1] if (k - n) % 2 == 0 else lines[n - 2]
        out.append(_RESPONSE.sub(lambda _m: response, line))
    return " ".join(out)


_DEFAULT: TemplateSet | None = None


def default_templates() -> TemplateSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateSet.default()
    return _DEFAULT


def render_debater_system(
    topic: Topic, side: SideRole, stage: Stage, templates: TemplateSet | None = None
) -> str:
    t = templates or default_templates()
    side, stage = SideRole(side), Stage(stage)
    if stage is Stage.OPENING:
        if side is not SideRole.FIRST:
            raise IncompatibleStage("only the first mover opens the debate")
        template = t.opening_system
    elif stage is Stage.FIRST_RESPONSE:
        if side is not SideRole.SECOND:
            raise IncompatibleStage("only the second mover gives the first response")
        template = t.responder_system
    else:
        template = t.continuation_system
    return fill(template, {"TOPIC": topic.question, "SIDE": topic.label(side)})


def render_debater_prompt(
    history: Sequence[str], perspective: SideRole, templates: TemplateSet | None = None
) -> str:
    """User prompt for the side about to speak, given every prior response in order."""
    t = templates or default_templates()
    perspective = SideRole(perspective)
    n = len(history)
    expected_first = n % 2 == 0
    if expected_first != (perspective is SideRole.FIRST):
        raise PerspectiveMismatch(
            f"{perspective.value} side cannot speak after {n} turn(s)"
        )
    if n == 0:
        return fill(t.debater_opening_prompt, {})
    if n == 1:
        return fill(t.responder_prompt, {"RESPONSE_1": history[0]})
    if perspective is SideRole.FIRST:
        return _render_sequence(t.history_prompt_first_person, history, "history_prompt_first_person")
    return _render_sequence(t.history_prompt_second_person, history, "history_prompt_second_person")


def render_judge_system(topic: Topic, templates: TemplateSet | None = None) -> str:
    t = templates or default_templates()
    return fill(t.judge_system, {"TOPIC": topic.question})


def render_judge_prompt(transcript, templates: TemplateSet | None = None) -> str:
    """Judge user prompt; accepts a Transcript or a plain sequence of responses."""
    t = templates or default_templates()
    responses = list(getattr(transcript, "responses", transcript))
    if not responses or len(responses) % 2:
        raise IncompleteTranscript(
            f"a complete debate has an even, non-zero number of turns (got {len(responses)})"
        )
    if any(not r.strip() for r in responses):
        raise IncompleteTranscript("transcript contains an empty response")
    return _render_sequence(t.judge_prompt, responses, "judge_prompt")
