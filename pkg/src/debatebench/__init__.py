"""Benchmark language models by debating them in pairs and judging the transcripts."""

from __future__ import annotations

from .debate import DebateSpec, Transcript, Turn, run_debate
from .gateway import CompletionRequest, FixedClock, Gateway, RetryPolicy, ScriptedBackend
from .judge import JudgeVerdict, ParseMode, Winner, evaluate, parse_verdict_lenient, parse_verdict_strict
from .prompts import TemplateSet, Topic, load_topics
from .tournament import (
    Order,
    Outcome,
    Pairing,
    Ranking,
    SeriesResult,
    TopicOutcome,
    aggregate_series,
    compute_ranking,
    decide_topic_outcome,
    schedule,
)

__version__ = "0.1.0"

__all__ = [
    "CompletionRequest",
    "DebateSpec",
    "FixedClock",
    "Gateway",
    "JudgeVerdict",
    "Order",
    "Outcome",
    "Pairing",
    "ParseMode",
    "Ranking",
    "RetryPolicy",
    "ScriptedBackend",
    "SeriesResult",
    "TemplateSet",
    "Topic",
    "TopicOutcome",
    "Transcript",
    "Turn",
    "Winner",
    "aggregate_series",
    "compute_ranking",
    "decide_topic_outcome",
    "evaluate",
    "load_topics",
    "parse_verdict_lenient",
    "parse_verdict_strict",
    "run_debate",
    "schedule",
]
