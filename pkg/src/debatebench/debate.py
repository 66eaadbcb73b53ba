"""Run one multi-round debate between two models on a single topic."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigError, GatewayError, IncompleteTranscript, TurnFailed
from .gateway import Clock, CompletionRequest, Gateway
from .prompts import (
    SideRole,
    Stage,
    TemplateSet,
    Topic,
    default_templates,
    render_debater_prompt,
    render_debater_system,
)

DEFAULT_ROUNDS = 4


@dataclass(frozen=True)
class DebateSpec:
    topic: Topic
    first_mover: str
    second_mover: str
    rounds: int = DEFAULT_ROUNDS
    templates: TemplateSet = field(default_factory=default_templates, compare=False, repr=False)

    def __post_init__(self) -> None:
        validate_rounds(self.rounds)

    def model_for(self, side: SideRole) -> str:
        return self.first_mover if side is SideRole.FIRST else self.second_mover

    def to_dict(self) -> dict:
        return {
            "topic": self.topic.to_dict(),
            "first_mover": self.first_mover,
            "second_mover": self.second_mover,
            "rounds": self.rounds,
        }

    @classmethod
    def from_dict(cls, data: Mapping, templates: TemplateSet | None = None) -> "DebateSpec":
        return cls(
            Topic.from_dict(data["topic"]),
            data["first_mover"],
            data["second_mover"],
            int(data["rounds"]),
            templates or default_templates(),
        )


def validate_rounds(rounds: int) -> None:
    # The second mover always speaks last, so T must be even.
    if rounds < 2 or rounds % 2:
        raise ConfigError(f"rounds must be an even number >= 2, got {rounds}")


def speaker_for(index: int) -> SideRole:
    return SideRole.FIRST if index % 2 == 1 else SideRole.SECOND


def stage_for(index: int) -> Stage:
    if index == 1:
        return Stage.OPENING
    if index == 2:
        return Stage.FIRST_RESPONSE
    return Stage.CONTINUATION


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: SideRole
    model: str
    system_prompt: str
    user_prompt: str
    response: str
    latency: float = 0.0
    attempts: int = 1

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("turn index starts at 1")
        if speaker_for(self.index) is not SideRole(self.speaker):
            raise ValueError(f"turn {self.index} must be spoken by the {speaker_for(self.index).value} side")
        if not self.response.strip():
            raise ValueError(f"turn {self.index} has an empty response")

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "speaker": SideRole(self.speaker).value,
            "model": self.model,
            "system_prompt": self.system_prompt,
            "user_prompt": self.user_prompt,
            "response": self.response,
            "latency": self.latency,
            "attempts": self.attempts,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Turn":
        return cls(
            int(data["index"]),
            SideRole(data["speaker"]),
            data["model"],
            data["system_prompt"],
            data["user_prompt"],
            data["response"],
            float(data.get("latency", 0.0)),
            int(data.get("attempts", 1)),
        )


@dataclass(frozen=True)
class Transcript:
    spec: DebateSpec
    turns: tuple[Turn, ...]
    started_at: str = ""
    finished_at: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        if len(self.turns) != self.spec.rounds:
            raise IncompleteTranscript(f"expected {self.spec.rounds} turns, got {len(self.turns)}")
        for expected, turn in enumerate(self.turns, start=1):
            if turn.index != expected:
                raise IncompleteTranscript(f"turn indices are not contiguous at {expected}")
            if turn.model != self.spec.model_for(turn.speaker):
                raise IncompleteTranscript(f"turn {expected} was spoken by the wrong model")

    @property
    def responses(self) -> list[str]:
        return [t.response for t in self.turns]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    @classmethod
    def from_dict(cls, data: Mapping, templates: TemplateSet | None = None) -> "Transcript":
        return cls(
            DebateSpec.from_dict(data["spec"], templates),
            tuple(Turn.from_dict(t) for t in data["turns"]),
            data.get("started_at", ""),
            data.get("finished_at", ""),
        )


def turn_prompts(spec: DebateSpec, index: int, history: list[str]) -> tuple[str, str]:
    """System and user prompt for turn ``index`` given the responses so far."""
    side = speaker_for(index)
    system = render_debater_system(spec.topic, side, stage_for(index), spec.templates)
    user = render_debater_prompt(history, side, spec.templates)
    return system, user


def run_debate(spec: DebateSpec, gateway: Gateway, clock: Clock | None = None) -> Transcript:
    """Play all ``spec.rounds`` turns in order; a failed turn aborts the debate."""
    clock = clock or gateway.clock
    started = clock.now()
    history: list[str] = []
    turns: list[Turn] = []
    for index in range(1, spec.rounds + 1):
        side = speaker_for(index)
        model = spec.model_for(side)
        system, user = turn_prompts(spec, index, history)
        try:
            result = gateway.complete(CompletionRequest(model, system, user))
        except GatewayError as exc:
            raise TurnFailed(index, exc) from exc
        turns.append(Turn(index, side, model, system, user, result.text, result.latency, result.attempts))
        history.append(result.text)
    return Transcript(spec, tuple(turns), started, clock.now())
